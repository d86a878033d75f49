#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "fedef/param_space.hpp"
#include "fedef/rng.hpp"

namespace fedef {

enum class CompressorKind { Identity, TopK, GroupedSign, HeavySign, StocQuant };

struct CompressorSpec {
  CompressorKind kind = CompressorKind::Identity;
  double k = 1.0;  // kept fraction for TopK / HeavySign, in (0, 1]
  int bits = 1;    // quantization bits for StocQuant, >= 1

  static CompressorSpec identity() { return {}; }
  static CompressorSpec topk(double k);
  static CompressorSpec grouped_sign();
  static CompressorSpec heavy_sign(double k);
  static CompressorSpec stoc_quant(int bits);

  void validate() const;  // throws config_error
  bool is_deterministic() const { return kind != CompressorKind::StocQuant; }
  std::string to_string() const;
};

// "identity", "topk:0.1", "sign", "heavysign:0.05", "stoc:2"
CompressorSpec parse_compressor_spec(std::string_view text);

// Encoded payloads. Indices are global (into the flat vector) and strictly
// increasing.
struct DensePayload {
  std::vector<double> values;
};
struct SparsePayload {
  std::vector<std::size_t> indices;
  std::vector<double> values;
};
struct GroupSignPayload {
  std::vector<double> scales;          // one per group
  std::vector<std::size_t> indices;    // signed support
  std::vector<signed char> signs;      // +1 / -1, parallel to indices
};
struct QuantPayload {
  double norm = 0.0;
  std::vector<std::size_t> indices;  // entries with nonzero level
  std::vector<int> levels;           // signed, |level| in [1, 2^(b-1)]
  int bits = 1;
};

class CompressedUpdate {
 public:
  using Payload =
      std::variant<DensePayload, SparsePayload, GroupSignPayload, QuantPayload>;

  CompressedUpdate(LayoutPtr layout, Payload payload, std::int64_t bit_cost);

  const GroupLayout& layout() const { return *layout_; }
  const LayoutPtr& layout_ptr() const { return layout_; }
  const Payload& payload() const { return payload_; }
  std::int64_t bit_cost() const { return bit_cost_; }

 private:
  LayoutPtr layout_;
  Payload payload_;
  std::int64_t bit_cost_;
};

inline std::int64_t bit_cost(const CompressedUpdate& c) { return c.bit_cost(); }

// Number of index bits charged per transmitted coordinate: smallest b with
// 2^b >= d.
int index_bits(std::size_t d);

// Applies the compressor. rng is consumed only by StocQuant. Throws
// numeric_error on non-finite input.
CompressedUpdate compress(const CompressorSpec& spec, const ParamVector& x,
                          RngStream& rng);

// Dense vector denoted by the encoding. Throws structural_error on corrupt
// indices.
ParamVector materialize(const CompressedUpdate& c);

// Certified q_C^2 for the deterministic compressors; nullopt for StocQuant
// (unbiased, not covered by the deviation definition).
std::optional<double> deviation_bound(const CompressorSpec& spec,
                                      const GroupLayout& layout);

// ||materialize(compress(x)) - x||^2 / ||x||^2. Throws numeric_error on a
// zero vector.
double measure_deviation(const CompressorSpec& spec, const ParamVector& x,
                         RngStream& rng);

}  // namespace fedef
