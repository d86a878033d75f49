#include "fedef/compressors.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "fedef/errors.hpp"

namespace fedef {

CompressorSpec CompressorSpec::topk(double k) {
  CompressorSpec s;
  s.kind = CompressorKind::TopK;
  s.k = k;
  s.validate();
  return s;
}

CompressorSpec CompressorSpec::grouped_sign() {
  CompressorSpec s;
  s.kind = CompressorKind::GroupedSign;
  return s;
}

CompressorSpec CompressorSpec::heavy_sign(double k) {
  CompressorSpec s;
  s.kind = CompressorKind::HeavySign;
  s.k = k;
  s.validate();
  return s;
}

CompressorSpec CompressorSpec::stoc_quant(int bits) {
  CompressorSpec s;
  s.kind = CompressorKind::StocQuant;
  s.bits = bits;
  s.validate();
  return s;
}

void CompressorSpec::validate() const {
  if (kind == CompressorKind::TopK || kind == CompressorKind::HeavySign) {
    if (!(k > 0.0 && k <= 1.0)) {
      throw config_error("compressor: k must be in (0, 1], got " +
                         std::to_string(k));
    }
  }
  if (kind == CompressorKind::StocQuant && (bits < 1 || bits > 24)) {
    throw config_error("compressor: stoc bits must be in [1, 24], got " +
                       std::to_string(bits));
  }
}

std::string CompressorSpec::to_string() const {
  switch (kind) {
    case CompressorKind::Identity:
      return "identity";
    case CompressorKind::TopK:
      return "topk:" + std::to_string(k);
    case CompressorKind::GroupedSign:
      return "sign";
    case CompressorKind::HeavySign:
      return "heavysign:" + std::to_string(k);
    case CompressorKind::StocQuant:
      return "stoc:" + std::to_string(bits);
  }
  return "identity";
}

CompressorSpec parse_compressor_spec(std::string_view text) {
  auto colon = text.find(':');
  std::string name(text.substr(0, colon));
  std::string arg =
      colon == std::string_view::npos ? "" : std::string(text.substr(colon + 1));
  try {
    if (name == "identity" || name == "none" || name == "full") {
      return CompressorSpec::identity();
    }
    if (name == "sign" || name == "groupedsign" || name == "grouped_sign") {
      return CompressorSpec::grouped_sign();
    }
    if (name == "topk") {
      return CompressorSpec::topk(std::stod(arg));
    }
    if (name == "heavysign" || name == "hvsign" || name == "heavy_sign") {
      return CompressorSpec::heavy_sign(std::stod(arg));
    }
    if (name == "stoc" || name == "stocquant" || name == "qsgd") {
      return CompressorSpec::stoc_quant(std::stoi(arg));
    }
  } catch (const config_error&) {
    throw;
  } catch (const std::exception&) {
    throw config_error("compressor: bad parameter in '" + std::string(text) +
                       "'");
  }
  throw config_error("compressor: unknown kind '" + std::string(text) + "'");
}

CompressedUpdate::CompressedUpdate(LayoutPtr layout, Payload payload,
                                   std::int64_t bit_cost)
    : layout_(std::move(layout)),
      payload_(std::move(payload)),
      bit_cost_(bit_cost) {}

int index_bits(std::size_t d) {
  int b = 0;
  while ((std::size_t{1} << b) < d) ++b;
  return b;
}

namespace {

constexpr std::int64_t kValueBits = 32;  // full-precision accounting unit

// Indices of the K largest-magnitude entries of span [lo, hi), ties broken
// by lower index; result sorted ascending.
std::vector<std::size_t> topk_indices(std::span<const double> v, std::size_t lo,
                                      std::size_t hi, std::size_t keep) {
  std::vector<std::size_t> idx(hi - lo);
  std::iota(idx.begin(), idx.end(), lo);
  std::partial_sort(idx.begin(), idx.begin() + keep, idx.end(),
                    [&](std::size_t a, std::size_t b) {
                      double ma = std::fabs(v[a]);
                      double mb = std::fabs(v[b]);
                      if (ma != mb) return ma > mb;
                      return a < b;
                    });
  idx.resize(keep);
  std::sort(idx.begin(), idx.end());
  return idx;
}

// Kept coordinates per group: at least one, and never fewer than the k
// fraction, so the 1-k deviation certificate holds on every group size (a
// floor would under-keep on small groups, e.g. 1 of 5 at k = 0.25). The tiny
// slack absorbs decimal-to-binary error in k * d.
std::size_t keep_count(double k, std::size_t group_size) {
  auto kept = static_cast<std::size_t>(
      std::ceil(k * static_cast<double>(group_size) - 1e-9));
  return std::max<std::size_t>(1, std::min(kept, group_size));
}

CompressedUpdate compress_identity(const ParamVector& x) {
  auto d = static_cast<std::int64_t>(x.dim());
  DensePayload payload{std::vector<double>(x.values().begin(), x.values().end())};
  return CompressedUpdate(x.layout_ptr(), std::move(payload), kValueBits * d);
}

CompressedUpdate compress_topk(const CompressorSpec& spec,
                               const ParamVector& x) {
  const GroupLayout& layout = x.layout();
  auto v = x.values();
  SparsePayload payload;
  for (std::size_t g = 0; g < layout.group_count(); ++g) {
    std::size_t lo = layout.group_offset(g);
    std::size_t hi = lo + layout.group_size(g);
    for (std::size_t i : topk_indices(v, lo, hi, keep_count(spec.k, hi - lo))) {
      payload.indices.push_back(i);
      payload.values.push_back(v[i]);
    }
  }
  auto nnz = static_cast<std::int64_t>(payload.indices.size());
  std::int64_t cost = (kValueBits + index_bits(layout.dim())) * nnz;
  return CompressedUpdate(x.layout_ptr(), std::move(payload), cost);
}

// Grouped sign of x restricted to the given per-group supports (full groups
// for plain Sign, the TopK picks for heavy-Sign). The scale always divides by
// the full group size and sign(0) = 0, so zeros never enter the support.
CompressedUpdate compress_sign_on(
    const ParamVector& x, const std::vector<std::vector<std::size_t>>& supports) {
  const GroupLayout& layout = x.layout();
  auto v = x.values();
  GroupSignPayload payload;
  payload.scales.reserve(layout.group_count());
  for (std::size_t g = 0; g < layout.group_count(); ++g) {
    double l1 = 0.0;
    for (std::size_t i : supports[g]) l1 += std::fabs(v[i]);
    payload.scales.push_back(l1 / static_cast<double>(layout.group_size(g)));
    for (std::size_t i : supports[g]) {
      if (v[i] > 0.0) {
        payload.indices.push_back(i);
        payload.signs.push_back(+1);
      } else if (v[i] < 0.0) {
        payload.indices.push_back(i);
        payload.signs.push_back(-1);
      }
    }
  }
  auto m = static_cast<std::int64_t>(layout.group_count());
  auto support = static_cast<std::int64_t>(payload.indices.size());
  return CompressedUpdate(x.layout_ptr(), std::move(payload),
                          kValueBits * m + support);
}

CompressedUpdate compress_grouped_sign(const ParamVector& x) {
  const GroupLayout& layout = x.layout();
  std::vector<std::vector<std::size_t>> supports(layout.group_count());
  for (std::size_t g = 0; g < layout.group_count(); ++g) {
    std::size_t lo = layout.group_offset(g);
    supports[g].resize(layout.group_size(g));
    std::iota(supports[g].begin(), supports[g].end(), lo);
  }
  return compress_sign_on(x, supports);
}

CompressedUpdate compress_heavy_sign(const CompressorSpec& spec,
                                     const ParamVector& x) {
  const GroupLayout& layout = x.layout();
  auto v = x.values();
  std::vector<std::vector<std::size_t>> supports(layout.group_count());
  for (std::size_t g = 0; g < layout.group_count(); ++g) {
    std::size_t lo = layout.group_offset(g);
    std::size_t hi = lo + layout.group_size(g);
    supports[g] = topk_indices(v, lo, hi, keep_count(spec.k, hi - lo));
  }
  return compress_sign_on(x, supports);
}

CompressedUpdate compress_stoc_quant(const CompressorSpec& spec,
                                     const ParamVector& x, RngStream& rng) {
  QuantPayload payload;
  payload.bits = spec.bits;
  double norm = std::sqrt(sq_norm(x));
  payload.norm = norm;
  auto v = x.values();
  if (norm > 0.0) {
    const double s = std::ldexp(1.0, spec.bits - 1);  // 2^(b-1) levels
    const int max_level = static_cast<int>(s);
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (v[i] == 0.0) continue;  // 0 is always quantized to 0
      double a = std::fabs(v[i]) / norm;
      int l = std::min(static_cast<int>(std::floor(a * s)), max_level - 1);
      double round_up_prob = a * s - static_cast<double>(l);
      int level = l + (rng.uniform() < round_up_prob ? 1 : 0);
      if (level == 0) continue;
      payload.indices.push_back(i);
      payload.levels.push_back(v[i] > 0.0 ? level : -level);
    }
  }
  auto nnz = static_cast<std::int64_t>(payload.indices.size());
  std::int64_t cost = kValueBits + (spec.bits + 1) * nnz +
                      index_bits(x.dim()) * nnz;
  return CompressedUpdate(x.layout_ptr(), std::move(payload), cost);
}

void check_indices(const std::vector<std::size_t>& indices, std::size_t d) {
  std::size_t prev = 0;
  bool first = true;
  for (std::size_t i : indices) {
    if (i >= d || (!first && i <= prev)) {
      throw structural_error("CompressedUpdate: corrupt index");
    }
    prev = i;
    first = false;
  }
}

}  // namespace

CompressedUpdate compress(const CompressorSpec& spec, const ParamVector& x,
                          RngStream& rng) {
  spec.validate();
  if (!all_finite(x)) {
    throw numeric_error("compress: non-finite input");
  }
  switch (spec.kind) {
    case CompressorKind::Identity:
      return compress_identity(x);
    case CompressorKind::TopK:
      return compress_topk(spec, x);
    case CompressorKind::GroupedSign:
      return compress_grouped_sign(x);
    case CompressorKind::HeavySign:
      return compress_heavy_sign(spec, x);
    case CompressorKind::StocQuant:
      return compress_stoc_quant(spec, x, rng);
  }
  throw structural_error("compress: unknown kind");
}

ParamVector materialize(const CompressedUpdate& c) {
  std::size_t d = c.layout().dim();
  std::vector<double> out(d, 0.0);
  const auto& payload = c.payload();
  if (const auto* dense = std::get_if<DensePayload>(&payload)) {
    if (dense->values.size() != d) {
      throw structural_error("CompressedUpdate: dense size mismatch");
    }
    out = dense->values;
  } else if (const auto* sparse = std::get_if<SparsePayload>(&payload)) {
    check_indices(sparse->indices, d);
    for (std::size_t j = 0; j < sparse->indices.size(); ++j) {
      out[sparse->indices[j]] = sparse->values[j];
    }
  } else if (const auto* gs = std::get_if<GroupSignPayload>(&payload)) {
    const GroupLayout& layout = c.layout();
    if (gs->scales.size() != layout.group_count()) {
      throw structural_error("CompressedUpdate: scale count mismatch");
    }
    check_indices(gs->indices, d);
    std::size_t g = 0;
    for (std::size_t j = 0; j < gs->indices.size(); ++j) {
      std::size_t i = gs->indices[j];
      while (i >= layout.group_offset(g) + layout.group_size(g)) ++g;
      out[i] = gs->scales[g] * static_cast<double>(gs->signs[j]);
    }
  } else if (const auto* q = std::get_if<QuantPayload>(&payload)) {
    check_indices(q->indices, d);
    const double s = std::ldexp(1.0, q->bits - 1);
    for (std::size_t j = 0; j < q->indices.size(); ++j) {
      out[q->indices[j]] = q->norm * static_cast<double>(q->levels[j]) / s;
    }
  }
  return ParamVector(c.layout_ptr(), std::move(out));
}

std::optional<double> deviation_bound(const CompressorSpec& spec,
                                      const GroupLayout& layout) {
  switch (spec.kind) {
    case CompressorKind::Identity:
      return 0.0;
    case CompressorKind::TopK:
      return 1.0 - spec.k;
    case CompressorKind::GroupedSign: {
      std::size_t dmax = *std::max_element(layout.group_sizes().begin(),
                                           layout.group_sizes().end());
      return 1.0 - 1.0 / static_cast<double>(dmax);
    }
    case CompressorKind::HeavySign: {
      std::size_t dmax = *std::max_element(layout.group_sizes().begin(),
                                           layout.group_sizes().end());
      return 1.0 - spec.k / static_cast<double>(dmax);
    }
    case CompressorKind::StocQuant:
      return std::nullopt;
  }
  return std::nullopt;
}

double measure_deviation(const CompressorSpec& spec, const ParamVector& x,
                         RngStream& rng) {
  double denom = sq_norm(x);
  if (denom == 0.0) {
    throw numeric_error("measure_deviation: zero vector");
  }
  ParamVector back = materialize(compress(spec, x, rng));
  return sq_norm(add_scaled(-1.0, x, back)) / denom;
}

}  // namespace fedef
