#pragma once

#include <cstdint>

#include "fedef/compressors.hpp"
#include "fedef/param_space.hpp"
#include "fedef/problems.hpp"
#include "fedef/rng.hpp"

namespace fedef {

struct Hyperparams {
  double eta = 1.0;    // global learning rate
  double eta_l = 0.1;  // local learning rate
  int local_steps = 1; // K
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::size_t batch_size = 0;  // 0 = full batch

  void validate() const;  // throws config_error
};

// Per-client persistent state across rounds.
struct ClientState {
  std::size_t id = 0;
  ParamVector error_acc;              // e_{t,i}, zero at round 1
  int last_error_update_round = 0;    // 0 = never updated

  ClientState(std::size_t id, LayoutPtr layout)
      : id(id), error_acc(std::move(layout)) {}
};

// Runs K local SGD steps from theta and returns the local model displacement
// (end minus start). Does not touch the error accumulator. Throws
// divergence_error with round/client context on a non-finite gradient.
ParamVector run_local_round(const Problem& problem, std::size_t client,
                            const ParamVector& theta, const Hyperparams& hp,
                            RngStream& rng, int round);

// Compresses the outgoing update. With error feedback on, compresses
// update + e, then folds the residual back into e and stamps the round;
// with it off, compresses the raw update and leaves e alone.
CompressedUpdate ef_upload(ClientState& client, const ParamVector& update,
                           const CompressorSpec& spec, bool ef_enabled,
                           int round, RngStream& rng);

}  // namespace fedef
