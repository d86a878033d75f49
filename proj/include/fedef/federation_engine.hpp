#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <vector>

#include "fedef/local_trainer.hpp"
#include "fedef/metrics.hpp"
#include "fedef/problems.hpp"
#include "fedef/server.hpp"

namespace fedef {

struct RunConfig {
  std::size_t n = 1;  // clients
  std::size_t m = 0;  // participants per round; 0 means all n
  int rounds = 1;     // T
  Hyperparams hp;
  GlobalOptimizer optimizer = GlobalOptimizer::Sgd;
  CompressorSpec upload = CompressorSpec::identity();
  std::optional<CompressorSpec> download;  // two-way mode when set
  bool ef_enabled = true;
  std::optional<int> restart_threshold;  // S
  int restart_start_round = 1;
  std::uint64_t master_seed = 42;
  int metrics_every = 1;

  std::size_t participants() const { return m == 0 ? n : m; }
  void validate() const;  // throws config_error
};

struct RunSummary {
  int rounds = 0;
  double final_grad_norm_sq = 0.0;
  double final_train_loss = 0.0;
  std::int64_t bits_up_cum = 0;
  std::int64_t bits_down_cum = 0;
  int restarts_total = 0;
  double max_virtual_iterate_rel_err = 0.0;
  bool virtual_iterate_monitored = false;
  // Participation lag observed at each upload: lag 1 means the accumulator
  // was updated last round, lag 0 that it was restarted this round.
  std::map<int, std::int64_t> staleness_histogram;
};

// m distinct indices, uniform over size-m subsets of [0, n), ascending.
std::vector<std::size_t> sample_participants(std::size_t n, std::size_t m,
                                             RngStream& rng);

// Zeroes every accumulator whose last update is more than `threshold` rounds
// before t and stamps it with t (so it is not re-restarted immediately).
// Returns how many clients were restarted.
int maybe_restart_errors(std::vector<ClientState>& clients, int t,
                         int threshold, const LayoutPtr& layout);

// Orchestrates rounds of compressed federated training with error feedback.
// Per-round randomness is derived from (master_seed, purpose, id, round), so
// a client's draws in a round are independent of who else participates.
class FederationEngine {
 public:
  FederationEngine(Problem problem, RunConfig config);

  // Advances one round. The returned record always carries round, bit and
  // participation fields; the gradient metrics are measured (and the record
  // kept in records()) on metrics-cadence rounds and the final round.
  RoundRecord run_round();
  std::vector<RoundRecord> run_all();

  int round() const { return round_; }
  const Problem& problem() const { return problem_; }
  const RunConfig& config() const { return config_; }
  const ServerOptimizerState& server() const { return server_; }
  const std::vector<ClientState>& clients() const { return clients_; }
  const std::vector<RoundRecord>& records() const { return records_; }

  // Max staleness (rounds since last error update) among clients holding a
  // nonzero accumulator; 0 when all accumulators are zero.
  int max_nonzero_error_staleness() const;

  // Participation-lag histogram: staleness observed at each upload.
  const std::map<int, std::int64_t>& staleness_histogram() const {
    return staleness_histogram_;
  }

  double max_virtual_iterate_rel_err() const { return max_virtual_rel_err_; }
  bool virtual_iterate_monitored() const { return monitor_enabled_; }

  RunSummary summary() const;

 private:
  int restart_stale_errors();

  Problem problem_;
  RunConfig config_;
  ServerOptimizerState server_;
  std::vector<ClientState> clients_;
  std::optional<TwoWayServerState> two_way_;
  int round_ = 0;
  std::int64_t bits_up_cum_ = 0;
  std::int64_t bits_down_cum_ = 0;
  int restarts_total_ = 0;
  std::vector<RoundRecord> records_;
  std::map<int, std::int64_t> staleness_histogram_;

  // Virtual-iterate monitor (SGD + full participation + EF).
  bool monitor_enabled_ = false;
  ParamVector virtual_iterate_;
  double max_virtual_rel_err_ = 0.0;
};

// Convenience wrapper: build the engine, run T rounds, return the records.
std::vector<RoundRecord> run_experiment(Problem problem, const RunConfig& config,
                                        RunSummary* summary = nullptr);

}  // namespace fedef
