#include "fedef/federation_engine.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "fedef/errors.hpp"

namespace fedef {

void RunConfig::validate() const {
  if (n < 1) throw config_error("config: n must be >= 1");
  if (m > n) {
    throw config_error("config: m = " + std::to_string(m) +
                       " exceeds n = " + std::to_string(n));
  }
  if (rounds < 1) throw config_error("config: T must be >= 1");
  hp.validate();
  upload.validate();
  if (download) download->validate();
  if (restart_threshold && *restart_threshold < 1) {
    throw config_error("config: restart threshold S must be >= 1");
  }
  if (restart_start_round < 1) {
    throw config_error("config: restart_start must be >= 1");
  }
  if (metrics_every < 1) throw config_error("config: metrics cadence must be >= 1");
}

std::vector<std::size_t> sample_participants(std::size_t n, std::size_t m,
                                             RngStream& rng) {
  if (m > n) {
    throw config_error("sample_participants: m > n");
  }
  // Partial Fisher-Yates: the first m slots are a uniform m-subset.
  std::vector<std::size_t> pool(n);
  for (std::size_t i = 0; i < n; ++i) pool[i] = i;
  for (std::size_t i = 0; i < m; ++i) {
    std::size_t j = i + rng.uniform_int(n - i);
    std::swap(pool[i], pool[j]);
  }
  pool.resize(m);
  std::sort(pool.begin(), pool.end());
  return pool;
}

namespace {

// The EF residual update is exact by construction up to rounding of the two
// additions involved; anything beyond a few ulps of the operand scale is a
// real bookkeeping bug.
void check_ef_identity(const ParamVector& materialized,
                       const ParamVector& error_after,
                       const ParamVector& adjusted_before, const char* where) {
  auto mv = materialized.values();
  auto ev = error_after.values();
  auto av = adjusted_before.values();
  for (std::size_t i = 0; i < mv.size(); ++i) {
    double lhs = mv[i] + ev[i];
    double rhs = av[i];
    double scale = std::max({std::fabs(mv[i]), std::fabs(ev[i]),
                             std::fabs(rhs), 1e-300});
    if (std::fabs(lhs - rhs) >
        4.0 * std::numeric_limits<double>::epsilon() * scale) {
      throw numeric_error(std::string(where) + ": error-feedback identity "
                          "violated at coordinate " + std::to_string(i));
    }
  }
}

}  // namespace

FederationEngine::FederationEngine(Problem problem, RunConfig config)
    : problem_(std::move(problem)),
      config_(std::move(config)),
      server_(ServerOptimizerState::sgd(ParamVector(problem_.layout()))),
      virtual_iterate_(ParamVector(problem_.layout())) {
  config_.validate();
  if (config_.n != problem_.client_count()) {
    throw config_error("config: n = " + std::to_string(config_.n) +
                       " but problem has " +
                       std::to_string(problem_.client_count()) + " clients");
  }
  RngStream init_rng =
      derive_stream(config_.master_seed, stream_tag::kInit);
  ParamVector theta0 = problem_.initial_theta(init_rng);
  server_ = config_.optimizer == GlobalOptimizer::Ams
                ? ServerOptimizerState::ams(theta0)
                : ServerOptimizerState::sgd(theta0);
  clients_.reserve(config_.n);
  for (std::size_t i = 0; i < config_.n; ++i) {
    clients_.emplace_back(i, problem_.layout());
  }
  if (config_.download) {
    two_way_.emplace(problem_.layout(), *config_.download);
  }
  monitor_enabled_ = config_.optimizer == GlobalOptimizer::Sgd &&
                     config_.participants() == config_.n && config_.ef_enabled;
  virtual_iterate_ = theta0;
}

int maybe_restart_errors(std::vector<ClientState>& clients, int t,
                         int threshold, const LayoutPtr& layout) {
  if (threshold < 1) {
    throw config_error("maybe_restart_errors: threshold must be >= 1");
  }
  int restarted = 0;
  for (ClientState& c : clients) {
    if (t - c.last_error_update_round > threshold) {
      c.error_acc = ParamVector(layout);
      c.last_error_update_round = t;
      ++restarted;
    }
  }
  return restarted;
}

int FederationEngine::restart_stale_errors() {
  if (!config_.restart_threshold || round_ < config_.restart_start_round) {
    return 0;
  }
  return maybe_restart_errors(clients_, round_, *config_.restart_threshold,
                              problem_.layout());
}

RoundRecord FederationEngine::run_round() {
  if (round_ >= config_.rounds) {
    throw config_error("run_round: all " + std::to_string(config_.rounds) +
                       " rounds already executed");
  }
  ++round_;
  const int t = round_;
  const std::size_t m = config_.participants();

  int restarts = restart_stale_errors();
  restarts_total_ += restarts;

  RngStream sampler =
      derive_stream(config_.master_seed, stream_tag::kSampler, 0,
                    static_cast<std::uint64_t>(t));
  std::vector<std::size_t> participants =
      sample_participants(config_.n, m, sampler);

  const double inv_m = 1.0 / static_cast<double>(m);
  ParamVector sum_materialized(problem_.layout());
  ParamVector sum_adjusted(problem_.layout());
  ParamVector sum_raw(problem_.layout());

  for (std::size_t i : participants) {
    ClientState& client = clients_[i];
    // Participation lag: full participation gives 1 every round.
    staleness_histogram_[t - client.last_error_update_round]++;

    RngStream rng = derive_stream(config_.master_seed, stream_tag::kClient, i,
                                  static_cast<std::uint64_t>(t));
    ParamVector delta =
        run_local_round(problem_, i, server_.theta, config_.hp, rng, t);
    // The wire update is start-minus-end, i.e. eta_l times the summed local
    // gradients; the global step subtracts it.
    ParamVector update = scaled(-1.0, delta);

    ParamVector adjusted = config_.ef_enabled
                               ? add_scaled(1.0, client.error_acc, update)
                               : update;
    CompressedUpdate sent =
        ef_upload(client, update, config_.upload, config_.ef_enabled, t, rng);
    ParamVector materialized = materialize(sent);
    if (config_.ef_enabled) {
      check_ef_identity(materialized, client.error_acc, adjusted, "upload");
    }

    bits_up_cum_ += sent.bit_cost();
    sum_materialized = add_scaled(1.0, materialized, sum_materialized);
    sum_adjusted = add_scaled(1.0, adjusted, sum_adjusted);
    sum_raw = add_scaled(1.0, update, sum_raw);
  }

  ParamVector avg_update = scaled(inv_m, sum_materialized);
  std::optional<double> q_a =
      q_a_from_parts(avg_update, scaled(inv_m, sum_adjusted));

  if (!two_way_) {
    if (config_.optimizer == GlobalOptimizer::Sgd) {
      sgd_global_step(server_, avg_update, config_.hp.eta);
    } else {
      ams_global_step(server_, avg_update, config_.hp);
    }
    // Full-precision broadcast of the model.
    bits_down_cum_ += 32 * static_cast<std::int64_t>(problem_.layout()->dim());
  } else {
    ParamVector direction =
        config_.optimizer == GlobalOptimizer::Sgd
            ? avg_update
            : ams_update_moments(server_, avg_update, config_.hp);
    ParamVector adjusted_dir = add_scaled(1.0, two_way_->error_acc, direction);
    RngStream rng = derive_stream(config_.master_seed, stream_tag::kServer, 0,
                                  static_cast<std::uint64_t>(t));
    CompressedUpdate sent = two_way_emit(*two_way_, direction, rng);
    ParamVector materialized = materialize(sent);
    check_ef_identity(materialized, two_way_->error_acc, adjusted_dir,
                      "download");
    apply_global_step(server_, materialized, config_.hp.eta);
    bits_down_cum_ += sent.bit_cost();
  }

  if (!all_finite(server_.theta)) {
    throw divergence_error(
        "global model diverged (round " + std::to_string(t) + ")", t, -1);
  }

  if (monitor_enabled_) {
    virtual_iterate_ =
        add_scaled(-config_.hp.eta * inv_m, sum_raw, virtual_iterate_);
    // reference: theta - eta * (mean error + server error)
    ParamVector err_sum(problem_.layout());
    for (const ClientState& c : clients_) {
      err_sum = add_scaled(1.0, c.error_acc, err_sum);
    }
    ParamVector reference = add_scaled(-config_.hp.eta / static_cast<double>(config_.n),
                                       err_sum, server_.theta);
    if (two_way_) {
      reference =
          add_scaled(-config_.hp.eta, two_way_->error_acc, reference);
    }
    double rel =
        std::sqrt(sq_norm(add_scaled(-1.0, virtual_iterate_, reference))) /
        (1.0 + std::sqrt(sq_norm(virtual_iterate_)));
    max_virtual_rel_err_ = std::max(max_virtual_rel_err_, rel);
  }

  RoundRecord record;
  record.round = t;
  record.bits_up_cum = bits_up_cum_;
  record.bits_down_cum = bits_down_cum_;
  record.q_a_sq = q_a;
  record.participants = static_cast<int>(m);
  record.restarts = restarts;
  if (t % config_.metrics_every == 0 || t == config_.rounds) {
    auto [gns, loss] = grad_metrics(problem_, server_.theta);
    record.grad_norm_sq = gns;
    record.train_loss = loss;
    records_.push_back(record);
  }
  return record;
}

std::vector<RoundRecord> FederationEngine::run_all() {
  while (round_ < config_.rounds) {
    run_round();
  }
  return records_;
}

int FederationEngine::max_nonzero_error_staleness() const {
  int worst = 0;
  for (const ClientState& c : clients_) {
    if (sq_norm(c.error_acc) > 0.0) {
      worst = std::max(worst, round_ - c.last_error_update_round);
    }
  }
  return worst;
}

RunSummary FederationEngine::summary() const {
  RunSummary s;
  s.rounds = round_;
  if (!records_.empty()) {
    s.final_grad_norm_sq = records_.back().grad_norm_sq;
    s.final_train_loss = records_.back().train_loss;
  }
  s.bits_up_cum = bits_up_cum_;
  s.bits_down_cum = bits_down_cum_;
  s.restarts_total = restarts_total_;
  s.max_virtual_iterate_rel_err = max_virtual_rel_err_;
  s.virtual_iterate_monitored = monitor_enabled_;
  s.staleness_histogram = staleness_histogram_;
  return s;
}

std::vector<RoundRecord> run_experiment(Problem problem, const RunConfig& config,
                                        RunSummary* summary) {
  FederationEngine engine(std::move(problem), config);
  std::vector<RoundRecord> records = engine.run_all();
  if (summary) {
    *summary = engine.summary();
  }
  return records;
}

}  // namespace fedef
