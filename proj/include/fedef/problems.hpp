#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fedef/param_space.hpp"
#include "fedef/rng.hpp"

namespace fedef {

// In-memory classification dataset; features row-major.
struct Dataset {
  std::size_t n_samples = 0;
  std::size_t n_features = 0;
  std::size_t n_classes = 0;
  std::vector<double> features;  // n_samples * n_features
  std::vector<int> labels;       // in [0, n_classes)

  std::span<const double> row(std::size_t i) const {
    return {features.data() + i * n_features, n_features};
  }
};

// Gaussian blobs, one cluster per class, classes balanced.
Dataset make_blobs(std::size_t samples, std::size_t features,
                   std::size_t classes, double center_spread, double noise_std,
                   RngStream& rng);

// CSV with header `label,f0,f1,...`, one sample per row, all numeric.
Dataset load_csv_dataset(const std::string& path);

struct ClientPartition {
  std::vector<std::vector<std::size_t>> client_samples;
};

// Label-sorted shard partition: 2n contiguous shards over the sorted sample
// order, two shards dealt to each client uniformly at random without
// replacement.
ClientPartition shard_partition(const std::vector<int>& labels,
                                std::size_t n_clients, RngStream& rng);

// Split samples evenly across clients in index order (iid-ish baseline).
ClientPartition even_partition(std::size_t n_samples, std::size_t n_clients);

// A desk-scale federated objective f(theta) = (1/n) sum_i f_i(theta).
class Problem {
 public:
  enum class Kind { Quadratic, Logistic, Mlp };

  // f_i(theta) = 1/2 ||theta - c_i||^2; stochastic gradients add isotropic
  // noise with E||noise||^2 = noise_sigma^2.
  static Problem quadratic(std::vector<std::vector<double>> centers,
                           double noise_sigma = 0.0);
  // Centers scaled so E||c_i|| is about `spread`.
  static Problem make_quadratic(std::size_t n, std::size_t d, double spread,
                                double noise_sigma, RngStream& rng);

  static Problem logistic(Dataset data, ClientPartition partition,
                          double l2_reg);
  static Problem mlp(Dataset data, ClientPartition partition,
                     std::vector<std::size_t> hidden_sizes, double l2_reg);

  Kind kind() const { return kind_; }
  std::size_t client_count() const;
  const LayoutPtr& layout() const { return layout_; }

  ParamVector initial_theta(RngStream& rng) const;

  // Exact local gradient/loss over the client's full data.
  ParamVector client_gradient(std::size_t client,
                              const ParamVector& theta) const;
  double client_loss(std::size_t client, const ParamVector& theta) const;

  // Mean gradient over explicit sample rows (data problems only).
  ParamVector batch_gradient(std::size_t client, const ParamVector& theta,
                             std::span<const std::size_t> samples) const;

  // One stochastic gradient: mini-batch sampled uniformly with replacement
  // for data problems, exact-plus-noise for quadratics. batch_size 0 means
  // full batch.
  ParamVector stochastic_gradient(std::size_t client, const ParamVector& theta,
                                  std::size_t batch_size, RngStream& rng) const;

  ParamVector global_gradient(const ParamVector& theta) const;
  double global_loss(const ParamVector& theta) const;

  // Quadratic-only exact quantities.
  const std::vector<std::vector<double>>& centers() const { return centers_; }
  ParamVector minimizer() const;

 private:
  Problem() = default;

  ParamVector data_gradient(std::size_t client, const ParamVector& theta,
                            std::span<const std::size_t> samples) const;
  double data_loss(const ParamVector& theta,
                   std::span<const std::size_t> samples) const;

  Kind kind_ = Kind::Quadratic;
  LayoutPtr layout_;

  // quadratic
  std::vector<std::vector<double>> centers_;
  double noise_sigma_ = 0.0;

  // data problems
  Dataset data_;
  ClientPartition partition_;
  double l2_reg_ = 0.0;
  std::vector<std::size_t> mlp_dims_;  // [features, hidden..., classes]
};

enum class SynthDist { Gaussian, Laplace };

// Heterogeneous synthetic gradients: n clients, iid entries from the chosen
// distribution; client i's i-th contiguous block of d/n coordinates is scaled
// by s (its "strong signal").
std::vector<ParamVector> synth_client_gradients(SynthDist dist,
                                                double scale_param,
                                                std::size_t n, std::size_t d,
                                                double s, RngStream& rng);

}  // namespace fedef
