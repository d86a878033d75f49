#include "fedef/server.hpp"

#include <cmath>

#include "fedef/errors.hpp"

namespace fedef {

ServerOptimizerState ServerOptimizerState::sgd(ParamVector theta0) {
  ServerOptimizerState s{GlobalOptimizer::Sgd, theta0, ParamVector(theta0.layout_ptr()),
                         ParamVector(theta0.layout_ptr()),
                         ParamVector(theta0.layout_ptr())};
  return s;
}

ServerOptimizerState ServerOptimizerState::ams(ParamVector theta0) {
  ServerOptimizerState s = sgd(std::move(theta0));
  s.optimizer = GlobalOptimizer::Ams;
  return s;
}

void sgd_global_step(ServerOptimizerState& state, const ParamVector& avg_update,
                     double eta) {
  state.theta = add_scaled(-eta, avg_update, state.theta);
}

ParamVector ams_update_moments(ServerOptimizerState& state,
                               const ParamVector& avg_update,
                               const Hyperparams& hp) {
  if (state.optimizer != GlobalOptimizer::Ams) {
    throw structural_error("ams_update_moments: SGD state");
  }
  state.m = add_scaled(1.0 - hp.beta1, avg_update, scaled(hp.beta1, state.m));
  state.v = add_scaled(1.0 - hp.beta2, elementwise_square(avg_update),
                       scaled(hp.beta2, state.v));
  state.v_hat = elementwise_max(state.v, state.v_hat);

  // direction = m / sqrt(v_hat + eps), epsilon inside the root
  std::vector<double> dir(state.m.dim());
  auto mv = state.m.values();
  auto vh = state.v_hat.values();
  for (std::size_t i = 0; i < dir.size(); ++i) {
    dir[i] = mv[i] / std::sqrt(vh[i] + hp.epsilon);
  }
  return ParamVector(state.m.layout_ptr(), std::move(dir));
}

void ams_global_step(ServerOptimizerState& state, const ParamVector& avg_update,
                     const Hyperparams& hp) {
  ParamVector direction = ams_update_moments(state, avg_update, hp);
  apply_global_step(state, direction, hp.eta);
}

void apply_global_step(ServerOptimizerState& state, const ParamVector& direction,
                       double eta) {
  state.theta = add_scaled(-eta, direction, state.theta);
}

CompressedUpdate two_way_emit(TwoWayServerState& state,
                              const ParamVector& direction, RngStream& rng) {
  ParamVector adjusted = add_scaled(1.0, state.error_acc, direction);
  CompressedUpdate sent = compress(state.download_spec, adjusted, rng);
  state.error_acc = add_scaled(-1.0, materialize(sent), adjusted);
  return sent;
}

}  // namespace fedef
