#include "fedef/local_trainer.hpp"

#include <string>

#include "fedef/errors.hpp"

namespace fedef {

void Hyperparams::validate() const {
  if (!(eta > 0.0)) throw config_error("hp: eta must be > 0");
  if (!(eta_l > 0.0)) throw config_error("hp: eta_l must be > 0");
  if (local_steps < 1) throw config_error("hp: K must be >= 1");
  if (!(beta1 >= 0.0 && beta1 < 1.0)) {
    throw config_error("hp: beta1 must be in [0, 1)");
  }
  if (!(beta2 >= 0.0 && beta2 < 1.0)) {
    throw config_error("hp: beta2 must be in [0, 1)");
  }
  if (!(epsilon > 0.0)) throw config_error("hp: epsilon must be > 0");
}

ParamVector run_local_round(const Problem& problem, std::size_t client,
                            const ParamVector& theta, const Hyperparams& hp,
                            RngStream& rng, int round) {
  ParamVector local = theta;
  for (int k = 0; k < hp.local_steps; ++k) {
    ParamVector g =
        problem.stochastic_gradient(client, local, hp.batch_size, rng);
    if (!all_finite(g)) {
      throw divergence_error("non-finite local gradient (round " +
                                 std::to_string(round) + ", client " +
                                 std::to_string(client) + ", local step " +
                                 std::to_string(k + 1) + ")",
                             round, static_cast<int>(client));
    }
    local = add_scaled(-hp.eta_l, g, local);
  }
  return add_scaled(-1.0, theta, local);
}

CompressedUpdate ef_upload(ClientState& client, const ParamVector& update,
                           const CompressorSpec& spec, bool ef_enabled,
                           int round, RngStream& rng) {
  if (!ef_enabled) {
    return compress(spec, update, rng);
  }
  ParamVector adjusted = add_scaled(1.0, client.error_acc, update);
  CompressedUpdate sent = compress(spec, adjusted, rng);
  client.error_acc = add_scaled(-1.0, materialize(sent), adjusted);
  client.last_error_update_round = round;
  return sent;
}

}  // namespace fedef
