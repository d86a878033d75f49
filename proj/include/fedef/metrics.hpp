#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "fedef/compressors.hpp"
#include "fedef/param_space.hpp"
#include "fedef/problems.hpp"

namespace fedef {

struct RoundRecord {
  int round = 0;
  double grad_norm_sq = 0.0;
  double train_loss = 0.0;
  std::int64_t bits_up_cum = 0;
  std::int64_t bits_down_cum = 0;
  std::optional<double> q_a_sq;  // missing when the round mean was zero
  int participants = 0;
  int restarts = 0;
};

// Assumption-3 discrepancy on a set of adjusted updates u_i:
// ||mean C(u_i) - mean u_i||^2 / ||mean u_i||^2.
// Throws numeric_error when the mean is the zero vector.
double measure_q_a(const std::vector<ParamVector>& adjusted_updates,
                   const CompressorSpec& spec, RngStream& rng);

// Same ratio from already-materialized compressions (the engine reuses the
// realized uploads instead of re-compressing). nullopt when the mean is zero.
std::optional<double> q_a_from_parts(const ParamVector& mean_compressed,
                                     const ParamVector& mean_adjusted);

// (||grad f(theta)||^2, f(theta)) over the full data.
std::pair<double, double> grad_metrics(const Problem& problem,
                                       const ParamVector& theta);

// 17 significant digits, enough for a lossless double round-trip.
std::string format_float(double v);

// Header: round,grad_norm_sq,train_loss,bits_up_cum,bits_down_cum,q_a_sq,
// participants,restarts. Missing q_a_sq renders as an empty field.
void write_csv(const std::vector<RoundRecord>& records,
               const std::string& path);
std::string render_csv(const std::vector<RoundRecord>& records);

void write_text_file(const std::string& text, const std::string& path);

}  // namespace fedef
