#pragma once

#include <cstdint>
#include <random>

namespace fedef {

// Deterministic random stream. All distribution sampling is implemented by
// hand on top of mt19937_64 so a given seed yields the same draws on every
// platform and standard library.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed) : gen_(seed) {}

  std::uint64_t next_u64() { return gen_(); }

  // Uniform double in [0, 1) with 53 random bits.
  double uniform();

  // Uniform integer in [0, n). n must be positive.
  std::uint64_t uniform_int(std::uint64_t n);

  // Standard normal via Marsaglia polar; one spare value is cached.
  double normal();

  // Laplace(0, scale) via inverse CDF.
  double laplace(double scale);

 private:
  std::mt19937_64 gen_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// Stream-id derivation for the simulation. Streams are keyed on
// (seed, purpose tag, id, round) so that, e.g., a client's draws in a round
// do not depend on which other clients participate.
namespace stream_tag {
inline constexpr std::uint64_t kClient = 0x636c69656e740001ULL;
inline constexpr std::uint64_t kSampler = 0x73616d706c650001ULL;
inline constexpr std::uint64_t kServer = 0x7365727665720001ULL;
inline constexpr std::uint64_t kProblem = 0x70726f626c650001ULL;
inline constexpr std::uint64_t kInit = 0x696e69745f5f0001ULL;
}  // namespace stream_tag

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t tag,
                          std::uint64_t id = 0, std::uint64_t round = 0);

inline RngStream derive_stream(std::uint64_t master, std::uint64_t tag,
                               std::uint64_t id = 0, std::uint64_t round = 0) {
  return RngStream(derive_seed(master, tag, id, round));
}

}  // namespace fedef
