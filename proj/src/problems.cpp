#include "fedef/problems.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "fedef/errors.hpp"

namespace fedef {

Dataset make_blobs(std::size_t samples, std::size_t features,
                   std::size_t classes, double center_spread, double noise_std,
                   RngStream& rng) {
  if (samples == 0 || features == 0 || classes == 0) {
    throw config_error("make_blobs: samples, features, classes must be >= 1");
  }
  std::vector<double> means(classes * features);
  for (double& m : means) m = center_spread * rng.normal();

  Dataset ds;
  ds.n_samples = samples;
  ds.n_features = features;
  ds.n_classes = classes;
  ds.features.resize(samples * features);
  ds.labels.resize(samples);
  for (std::size_t i = 0; i < samples; ++i) {
    int label = static_cast<int>(i % classes);  // balanced classes
    ds.labels[i] = label;
    for (std::size_t f = 0; f < features; ++f) {
      ds.features[i * features + f] =
          means[static_cast<std::size_t>(label) * features + f] +
          noise_std * rng.normal();
    }
  }
  return ds;
}

Dataset load_csv_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw io_error("cannot open dataset: " + path);
  }
  std::string line;
  if (!std::getline(in, line)) {
    throw io_error("empty dataset file: " + path);
  }
  // header: label,f0,f1,...
  std::size_t n_features = static_cast<std::size_t>(
      std::count(line.begin(), line.end(), ','));
  if (n_features == 0) {
    throw io_error("dataset header needs `label,f0,...`: " + path);
  }
  Dataset ds;
  ds.n_features = n_features;
  int max_label = 0;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    ++row;
    std::stringstream ss(line);
    std::string cell;
    if (!std::getline(ss, cell, ',')) {
      throw io_error("dataset row " + std::to_string(row) + " malformed: " +
                     path);
    }
    int label = 0;
    try {
      label = std::stoi(cell);
    } catch (const std::exception&) {
      throw io_error("dataset row " + std::to_string(row) +
                     ": bad label '" + cell + "': " + path);
    }
    if (label < 0) {
      throw io_error("dataset row " + std::to_string(row) +
                     ": negative label: " + path);
    }
    max_label = std::max(max_label, label);
    ds.labels.push_back(label);
    std::size_t got = 0;
    while (std::getline(ss, cell, ',')) {
      try {
        ds.features.push_back(std::stod(cell));
      } catch (const std::exception&) {
        throw io_error("dataset row " + std::to_string(row) +
                       ": bad value '" + cell + "': " + path);
      }
      ++got;
    }
    if (got != n_features) {
      throw io_error("dataset row " + std::to_string(row) + ": expected " +
                     std::to_string(n_features) + " features, got " +
                     std::to_string(got) + ": " + path);
    }
  }
  ds.n_samples = ds.labels.size();
  ds.n_classes = static_cast<std::size_t>(max_label) + 1;
  if (ds.n_samples == 0) {
    throw io_error("dataset has no rows: " + path);
  }
  return ds;
}

ClientPartition shard_partition(const std::vector<int>& labels,
                                std::size_t n_clients, RngStream& rng) {
  if (n_clients == 0) {
    throw config_error("shard_partition: need at least one client");
  }
  std::size_t n_samples = labels.size();
  std::size_t n_shards = 2 * n_clients;
  if (n_samples < n_shards) {
    throw config_error("shard_partition: " + std::to_string(n_samples) +
                       " samples cannot fill " + std::to_string(n_shards) +
                       " shards");
  }

  // Stable label sort keeps sample order deterministic within a class.
  std::vector<std::size_t> order(n_samples);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) {
                     return labels[a] < labels[b];
                   });

  // Contiguous shards; the first (n_samples mod n_shards) shards take one
  // extra sample.
  std::size_t base = n_samples / n_shards;
  std::size_t extra = n_samples % n_shards;
  std::vector<std::vector<std::size_t>> shards(n_shards);
  std::size_t pos = 0;
  for (std::size_t s = 0; s < n_shards; ++s) {
    std::size_t len = base + (s < extra ? 1 : 0);
    shards[s].assign(order.begin() + pos, order.begin() + pos + len);
    pos += len;
  }

  // Deal two random shards to each client (Fisher-Yates over shard ids).
  std::vector<std::size_t> deck(n_shards);
  std::iota(deck.begin(), deck.end(), 0);
  for (std::size_t i = n_shards - 1; i > 0; --i) {
    std::size_t j = rng.uniform_int(i + 1);
    std::swap(deck[i], deck[j]);
  }
  ClientPartition part;
  part.client_samples.resize(n_clients);
  for (std::size_t c = 0; c < n_clients; ++c) {
    for (std::size_t pick : {deck[2 * c], deck[2 * c + 1]}) {
      auto& dst = part.client_samples[c];
      dst.insert(dst.end(), shards[pick].begin(), shards[pick].end());
    }
    std::sort(part.client_samples[c].begin(), part.client_samples[c].end());
  }
  return part;
}

ClientPartition even_partition(std::size_t n_samples, std::size_t n_clients) {
  if (n_clients == 0 || n_samples < n_clients) {
    throw config_error("even_partition: need at least one sample per client");
  }
  ClientPartition part;
  part.client_samples.resize(n_clients);
  for (std::size_t i = 0; i < n_samples; ++i) {
    part.client_samples[i % n_clients].push_back(i);
  }
  return part;
}

Problem Problem::quadratic(std::vector<std::vector<double>> centers,
                           double noise_sigma) {
  if (centers.empty()) {
    throw config_error("quadratic: need at least one center");
  }
  std::size_t d = centers.front().size();
  if (d == 0) {
    throw config_error("quadratic: zero-dimensional center");
  }
  for (const auto& c : centers) {
    if (c.size() != d) {
      throw config_error("quadratic: centers must share one dimension");
    }
  }
  Problem p;
  p.kind_ = Kind::Quadratic;
  p.layout_ = make_layout({d});
  p.centers_ = std::move(centers);
  p.noise_sigma_ = noise_sigma;
  return p;
}

Problem Problem::make_quadratic(std::size_t n, std::size_t d, double spread,
                                double noise_sigma, RngStream& rng) {
  if (n == 0 || d == 0) {
    throw config_error("make_quadratic: n and d must be >= 1");
  }
  if (spread < 0.0) {
    throw config_error("make_quadratic: spread must be >= 0");
  }
  double unit = spread / std::sqrt(static_cast<double>(d));
  std::vector<std::vector<double>> centers(n, std::vector<double>(d));
  for (auto& c : centers) {
    for (double& v : c) v = unit * rng.normal();
  }
  return quadratic(std::move(centers), noise_sigma);
}

namespace {

void check_partition(const Dataset& data, const ClientPartition& partition) {
  if (partition.client_samples.empty()) {
    throw config_error("problem: empty partition");
  }
  for (std::size_t c = 0; c < partition.client_samples.size(); ++c) {
    if (partition.client_samples[c].empty()) {
      throw config_error("problem: client " + std::to_string(c) +
                         " has no local data");
    }
    for (std::size_t i : partition.client_samples[c]) {
      if (i >= data.n_samples) {
        throw config_error("problem: sample index out of range");
      }
    }
  }
}

}  // namespace

Problem Problem::logistic(Dataset data, ClientPartition partition,
                          double l2_reg) {
  check_partition(data, partition);
  Problem p;
  p.kind_ = Kind::Logistic;
  std::size_t F = data.n_features;
  std::size_t C = data.n_classes;
  p.layout_ = make_layout({C * F, C});  // weights, biases
  p.data_ = std::move(data);
  p.partition_ = std::move(partition);
  p.l2_reg_ = l2_reg;
  p.mlp_dims_ = {F, C};
  return p;
}

Problem Problem::mlp(Dataset data, ClientPartition partition,
                     std::vector<std::size_t> hidden_sizes, double l2_reg) {
  check_partition(data, partition);
  if (hidden_sizes.empty()) {
    throw config_error("mlp: need at least one hidden layer");
  }
  for (std::size_t h : hidden_sizes) {
    if (h == 0) throw config_error("mlp: zero-width hidden layer");
  }
  Problem p;
  p.kind_ = Kind::Mlp;
  p.mlp_dims_.push_back(data.n_features);
  for (std::size_t h : hidden_sizes) p.mlp_dims_.push_back(h);
  p.mlp_dims_.push_back(data.n_classes);
  std::vector<std::size_t> groups;
  for (std::size_t l = 0; l + 1 < p.mlp_dims_.size(); ++l) {
    groups.push_back(p.mlp_dims_[l + 1] * p.mlp_dims_[l]);  // W_l
    groups.push_back(p.mlp_dims_[l + 1]);                   // b_l
  }
  p.layout_ = make_layout(std::move(groups));
  p.data_ = std::move(data);
  p.partition_ = std::move(partition);
  p.l2_reg_ = l2_reg;
  return p;
}

std::size_t Problem::client_count() const {
  return kind_ == Kind::Quadratic ? centers_.size()
                                  : partition_.client_samples.size();
}

ParamVector Problem::initial_theta(RngStream& rng) const {
  if (kind_ != Kind::Mlp) {
    return ParamVector(layout_);
  }
  // Small random init; identically-zero tanh hidden units never separate.
  std::vector<double> values(layout_->dim());
  std::size_t pos = 0;
  for (std::size_t l = 0; l + 1 < mlp_dims_.size(); ++l) {
    std::size_t fan_in = mlp_dims_[l];
    std::size_t fan_out = mlp_dims_[l + 1];
    double scale = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (std::size_t i = 0; i < fan_out * fan_in; ++i) {
      values[pos++] = scale * rng.normal();
    }
    pos += fan_out;  // biases start at zero
  }
  return ParamVector(layout_, std::move(values));
}

// ---- quadratic ----

namespace {

ParamVector quadratic_gradient(const LayoutPtr& layout,
                               const std::vector<double>& center,
                               const ParamVector& theta) {
  std::vector<double> g(theta.dim());
  auto tv = theta.values();
  for (std::size_t i = 0; i < g.size(); ++i) {
    g[i] = tv[i] - center[i];
  }
  return ParamVector(layout, std::move(g));
}

}  // namespace

// ---- softmax models (logistic is the zero-hidden-layer case) ----

namespace {

// Forward pass caches per-layer activations; input layer activation is the
// raw feature row.
struct Forward {
  std::vector<std::vector<double>> activations;  // per layer, post-nonlinearity
  std::vector<double> probs;                     // softmax output
};

Forward forward_pass(const std::vector<std::size_t>& dims,
                     std::span<const double> theta, std::span<const double> x) {
  Forward fw;
  std::vector<double> cur(x.begin(), x.end());
  std::size_t pos = 0;
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    std::size_t in = dims[l];
    std::size_t out = dims[l + 1];
    const double* W = theta.data() + pos;
    const double* b = theta.data() + pos + out * in;
    pos += out * in + out;
    std::vector<double> next(out);
    for (std::size_t o = 0; o < out; ++o) {
      double z = b[o];
      for (std::size_t i = 0; i < in; ++i) z += W[o * in + i] * cur[i];
      next[o] = z;
    }
    bool last = (l + 2 == dims.size());
    if (!last) {
      for (double& z : next) z = std::tanh(z);
    }
    fw.activations.push_back(cur);
    cur = std::move(next);
  }
  // stable softmax
  double zmax = *std::max_element(cur.begin(), cur.end());
  double sum = 0.0;
  fw.probs.resize(cur.size());
  for (std::size_t c = 0; c < cur.size(); ++c) {
    fw.probs[c] = std::exp(cur[c] - zmax);
    sum += fw.probs[c];
  }
  for (double& p : fw.probs) p /= sum;
  fw.activations.push_back(cur);  // pre-softmax logits slot (unused values ok)
  return fw;
}

}  // namespace

ParamVector Problem::data_gradient(std::size_t client, const ParamVector& theta,
                                   std::span<const std::size_t> samples) const {
  const auto& dims = mlp_dims_;
  auto tv = theta.values();
  std::vector<double> grad(theta.dim(), 0.0);
  const double inv_batch = 1.0 / static_cast<double>(samples.size());

  // Per-layer parameter offsets.
  std::vector<std::size_t> offsets;
  std::size_t pos = 0;
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    offsets.push_back(pos);
    pos += dims[l + 1] * dims[l] + dims[l + 1];
  }

  std::vector<double> delta, prev_delta;
  for (std::size_t s : samples) {
    Forward fw = forward_pass(dims, tv, data_.row(s));
    int label = data_.labels[s];
    std::size_t n_layers = dims.size() - 1;

    // Output delta: softmax cross-entropy.
    delta.assign(fw.probs.begin(), fw.probs.end());
    delta[static_cast<std::size_t>(label)] -= 1.0;

    for (std::size_t l = n_layers; l-- > 0;) {
      std::size_t in = dims[l];
      std::size_t out = dims[l + 1];
      const double* W = tv.data() + offsets[l];
      double* gW = grad.data() + offsets[l];
      double* gb = grad.data() + offsets[l] + out * in;
      const std::vector<double>& a_in = fw.activations[l];
      for (std::size_t o = 0; o < out; ++o) {
        double dz = delta[o] * inv_batch;
        for (std::size_t i = 0; i < in; ++i) gW[o * in + i] += dz * a_in[i];
        gb[o] += dz;
      }
      if (l == 0) break;
      prev_delta.assign(in, 0.0);
      for (std::size_t i = 0; i < in; ++i) {
        double acc = 0.0;
        for (std::size_t o = 0; o < out; ++o) acc += W[o * in + i] * delta[o];
        // d/dz tanh(z) = 1 - tanh(z)^2, and a_in holds tanh(z)
        prev_delta[i] = acc * (1.0 - a_in[i] * a_in[i]);
      }
      delta = prev_delta;
    }
  }

  if (l2_reg_ > 0.0) {
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
      std::size_t count = dims[l + 1] * dims[l];  // weights only
      for (std::size_t i = 0; i < count; ++i) {
        grad[offsets[l] + i] += l2_reg_ * tv[offsets[l] + i];
      }
    }
  }
  (void)client;
  return ParamVector(layout_, std::move(grad));
}

double Problem::data_loss(const ParamVector& theta,
                          std::span<const std::size_t> samples) const {
  auto tv = theta.values();
  double loss = 0.0;
  for (std::size_t s : samples) {
    Forward fw = forward_pass(mlp_dims_, tv, data_.row(s));
    double p = fw.probs[static_cast<std::size_t>(data_.labels[s])];
    loss -= std::log(std::max(p, 1e-300));
  }
  loss /= static_cast<double>(samples.size());
  if (l2_reg_ > 0.0) {
    // l2 on weight blocks only
    double reg = 0.0;
    std::size_t pos = 0;
    for (std::size_t l = 0; l + 1 < mlp_dims_.size(); ++l) {
      std::size_t count = mlp_dims_[l + 1] * mlp_dims_[l];
      for (std::size_t i = 0; i < count; ++i) {
        reg += tv[pos + i] * tv[pos + i];
      }
      pos += count + mlp_dims_[l + 1];
    }
    loss += 0.5 * l2_reg_ * reg;
  }
  return loss;
}

ParamVector Problem::client_gradient(std::size_t client,
                                     const ParamVector& theta) const {
  if (client >= client_count()) {
    throw config_error("client index out of range");
  }
  if (kind_ == Kind::Quadratic) {
    return quadratic_gradient(layout_, centers_[client], theta);
  }
  return data_gradient(client, theta, partition_.client_samples[client]);
}

double Problem::client_loss(std::size_t client, const ParamVector& theta) const {
  if (client >= client_count()) {
    throw config_error("client index out of range");
  }
  if (kind_ == Kind::Quadratic) {
    return 0.5 * sq_norm(quadratic_gradient(layout_, centers_[client], theta));
  }
  return data_loss(theta, partition_.client_samples[client]);
}

ParamVector Problem::batch_gradient(std::size_t client,
                                    const ParamVector& theta,
                                    std::span<const std::size_t> samples) const {
  if (kind_ == Kind::Quadratic) {
    throw config_error("batch_gradient: quadratic has no samples");
  }
  if (samples.empty()) {
    throw config_error("batch_gradient: empty batch");
  }
  return data_gradient(client, theta, samples);
}

ParamVector Problem::stochastic_gradient(std::size_t client,
                                         const ParamVector& theta,
                                         std::size_t batch_size,
                                         RngStream& rng) const {
  if (kind_ == Kind::Quadratic) {
    ParamVector g = client_gradient(client, theta);
    if (batch_size == 0 || noise_sigma_ == 0.0) {
      return g;
    }
    // Isotropic noise with E||noise||^2 = sigma^2.
    double unit = noise_sigma_ / std::sqrt(static_cast<double>(g.dim()));
    std::vector<double> out(g.values().begin(), g.values().end());
    for (double& v : out) v += unit * rng.normal();
    return ParamVector(layout_, std::move(out));
  }
  if (client >= client_count()) {
    throw config_error("client index out of range");
  }
  const auto& local = partition_.client_samples[client];
  if (batch_size == 0) {
    return client_gradient(client, theta);
  }
  // Uniform sampling with replacement.
  std::vector<std::size_t> batch(batch_size);
  for (std::size_t& b : batch) {
    b = local[rng.uniform_int(local.size())];
  }
  return data_gradient(client, theta, batch);
}

ParamVector Problem::global_gradient(const ParamVector& theta) const {
  ParamVector sum(layout_);
  for (std::size_t c = 0; c < client_count(); ++c) {
    sum = add_scaled(1.0, client_gradient(c, theta), sum);
  }
  return scaled(1.0 / static_cast<double>(client_count()), sum);
}

double Problem::global_loss(const ParamVector& theta) const {
  double s = 0.0;
  for (std::size_t c = 0; c < client_count(); ++c) {
    s += client_loss(c, theta);
  }
  return s / static_cast<double>(client_count());
}

ParamVector Problem::minimizer() const {
  if (kind_ != Kind::Quadratic) {
    throw config_error("minimizer: only exact for quadratics");
  }
  std::vector<double> m(layout_->dim(), 0.0);
  for (const auto& c : centers_) {
    for (std::size_t i = 0; i < m.size(); ++i) m[i] += c[i];
  }
  for (double& v : m) v /= static_cast<double>(centers_.size());
  return ParamVector(layout_, std::move(m));
}

std::vector<ParamVector> synth_client_gradients(SynthDist dist,
                                                double scale_param,
                                                std::size_t n, std::size_t d,
                                                double s, RngStream& rng) {
  if (n == 0 || d == 0) {
    throw config_error("synth_client_gradients: n and d must be >= 1");
  }
  if (s < 1.0) {
    throw config_error("synth_client_gradients: scale factor s must be >= 1");
  }
  LayoutPtr layout = make_layout({d});
  std::size_t block = d / n;  // client i's strong-signal block
  std::vector<ParamVector> out;
  out.reserve(n);
  for (std::size_t c = 0; c < n; ++c) {
    std::vector<double> v(d);
    for (double& x : v) {
      x = dist == SynthDist::Gaussian ? scale_param * rng.normal()
                                      : rng.laplace(scale_param);
    }
    if (block > 0) {
      std::size_t lo = c * block;
      std::size_t hi = std::min(lo + block, d);
      for (std::size_t i = lo; i < hi; ++i) v[i] *= s;
    }
    out.emplace_back(layout, std::move(v));
  }
  return out;
}

}  // namespace fedef
