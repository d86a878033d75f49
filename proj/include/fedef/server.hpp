#pragma once

#include <optional>

#include "fedef/compressors.hpp"
#include "fedef/local_trainer.hpp"
#include "fedef/param_space.hpp"

namespace fedef {

enum class GlobalOptimizer { Sgd, Ams };

// Global model plus optimizer moments. The AMS moments follow the max-variant
// recurrences, so v_hat is elementwise nondecreasing across steps.
struct ServerOptimizerState {
  GlobalOptimizer optimizer = GlobalOptimizer::Sgd;
  ParamVector theta;
  ParamVector m;      // first moment (AMS)
  ParamVector v;      // second moment (AMS)
  ParamVector v_hat;  // running max of v (AMS)

  static ServerOptimizerState sgd(ParamVector theta0);
  static ServerOptimizerState ams(ParamVector theta0);
};

// theta <- theta - eta * avg_update
void sgd_global_step(ServerOptimizerState& state, const ParamVector& avg_update,
                     double eta);

// Advances m, v, v_hat from the aggregated update and returns the step
// direction m / sqrt(v_hat + eps) without touching theta. Two-way mode
// compresses this direction before applying it.
ParamVector ams_update_moments(ServerOptimizerState& state,
                               const ParamVector& avg_update,
                               const Hyperparams& hp);

// Full AMS step: moments plus theta <- theta - eta * direction.
void ams_global_step(ServerOptimizerState& state, const ParamVector& avg_update,
                     const Hyperparams& hp);

// theta <- theta - eta * direction (used after download compression).
void apply_global_step(ServerOptimizerState& state, const ParamVector& direction,
                       double eta);

// Server-side error feedback for the download channel.
struct TwoWayServerState {
  ParamVector error_acc;  // phi, zero at round 1
  CompressorSpec download_spec;

  TwoWayServerState(LayoutPtr layout, CompressorSpec spec)
      : error_acc(std::move(layout)), download_spec(spec) {}
};

// H = C(direction + phi); phi <- (direction + phi) - materialize(H).
CompressedUpdate two_way_emit(TwoWayServerState& state,
                              const ParamVector& direction, RngStream& rng);

}  // namespace fedef
