#include "fedef/metrics.hpp"

#include <cstdio>
#include <fstream>

#include "fedef/errors.hpp"

namespace fedef {

double measure_q_a(const std::vector<ParamVector>& adjusted_updates,
                   const CompressorSpec& spec, RngStream& rng) {
  if (adjusted_updates.empty()) {
    throw config_error("measure_q_a: no updates");
  }
  const double inv_n = 1.0 / static_cast<double>(adjusted_updates.size());
  ParamVector mean_adjusted(adjusted_updates.front().layout_ptr());
  ParamVector mean_compressed(adjusted_updates.front().layout_ptr());
  for (const ParamVector& u : adjusted_updates) {
    mean_adjusted = add_scaled(inv_n, u, mean_adjusted);
    mean_compressed =
        add_scaled(inv_n, materialize(compress(spec, u, rng)), mean_compressed);
  }
  auto ratio = q_a_from_parts(mean_compressed, mean_adjusted);
  if (!ratio) {
    throw numeric_error("measure_q_a: zero mean update");
  }
  return *ratio;
}

std::optional<double> q_a_from_parts(const ParamVector& mean_compressed,
                                     const ParamVector& mean_adjusted) {
  double denom = sq_norm(mean_adjusted);
  if (denom == 0.0) {
    return std::nullopt;
  }
  return sq_norm(add_scaled(-1.0, mean_adjusted, mean_compressed)) / denom;
}

std::pair<double, double> grad_metrics(const Problem& problem,
                                       const ParamVector& theta) {
  return {sq_norm(problem.global_gradient(theta)), problem.global_loss(theta)};
}

std::string format_float(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string render_csv(const std::vector<RoundRecord>& records) {
  std::string out =
      "round,grad_norm_sq,train_loss,bits_up_cum,bits_down_cum,q_a_sq,"
      "participants,restarts\n";
  for (const RoundRecord& r : records) {
    out += std::to_string(r.round);
    out += ',';
    out += format_float(r.grad_norm_sq);
    out += ',';
    out += format_float(r.train_loss);
    out += ',';
    out += std::to_string(r.bits_up_cum);
    out += ',';
    out += std::to_string(r.bits_down_cum);
    out += ',';
    if (r.q_a_sq) out += format_float(*r.q_a_sq);
    out += ',';
    out += std::to_string(r.participants);
    out += ',';
    out += std::to_string(r.restarts);
    out += '\n';
  }
  return out;
}

void write_text_file(const std::string& text, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw io_error("cannot open for writing: " + path);
  }
  out << text;
  if (!out) {
    throw io_error("write failed: " + path);
  }
}

void write_csv(const std::vector<RoundRecord>& records,
               const std::string& path) {
  write_text_file(render_csv(records), path);
}

}  // namespace fedef
