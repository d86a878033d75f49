#include "fedef/param_space.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "fedef/errors.hpp"

namespace fedef {

GroupLayout::GroupLayout(std::vector<std::size_t> group_sizes)
    : sizes_(std::move(group_sizes)) {
  if (sizes_.empty()) {
    throw structural_error("GroupLayout: at least one group required");
  }
  offsets_.reserve(sizes_.size() + 1);
  offsets_.push_back(0);
  for (std::size_t s : sizes_) {
    if (s == 0) {
      throw structural_error("GroupLayout: empty group");
    }
    offsets_.push_back(offsets_.back() + s);
  }
}

LayoutPtr make_layout(std::vector<std::size_t> group_sizes) {
  return std::make_shared<const GroupLayout>(std::move(group_sizes));
}

ParamVector::ParamVector(LayoutPtr layout)
    : layout_(std::move(layout)), values_(layout_->dim(), 0.0) {}

ParamVector::ParamVector(LayoutPtr layout, std::vector<double> values)
    : layout_(std::move(layout)), values_(std::move(values)) {
  if (values_.size() != layout_->dim()) {
    throw structural_error("ParamVector: " + std::to_string(values_.size()) +
                           " values for layout of dim " +
                           std::to_string(layout_->dim()));
  }
}

void require_same_layout(const ParamVector& x, const ParamVector& y,
                         const char* where) {
  if (x.layout_ptr() != y.layout_ptr() && !(x.layout() == y.layout())) {
    throw structural_error(std::string(where) + ": layout mismatch");
  }
}

ParamVector add_scaled(double a, const ParamVector& x, const ParamVector& y) {
  require_same_layout(x, y, "add_scaled");
  std::vector<double> out(y.dim());
  auto xv = x.values();
  auto yv = y.values();
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = yv[i] + a * xv[i];
  }
  return ParamVector(y.layout_ptr(), std::move(out));
}

ParamVector scaled(double a, const ParamVector& x) {
  std::vector<double> out(x.dim());
  auto xv = x.values();
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = a * xv[i];
  }
  return ParamVector(x.layout_ptr(), std::move(out));
}

double sq_norm(const ParamVector& x) {
  double s = 0.0;
  for (double v : x.values()) {
    s += v * v;
  }
  return s;
}

std::vector<double> group_l1_norms(const ParamVector& x) {
  const GroupLayout& layout = x.layout();
  std::vector<double> norms(layout.group_count(), 0.0);
  auto xv = x.values();
  for (std::size_t g = 0; g < layout.group_count(); ++g) {
    double s = 0.0;
    std::size_t lo = layout.group_offset(g);
    std::size_t hi = lo + layout.group_size(g);
    for (std::size_t i = lo; i < hi; ++i) {
      s += std::fabs(xv[i]);
    }
    norms[g] = s;
  }
  return norms;
}

ParamVector elementwise_square(const ParamVector& x) {
  std::vector<double> out(x.dim());
  auto xv = x.values();
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = xv[i] * xv[i];
  }
  return ParamVector(x.layout_ptr(), std::move(out));
}

ParamVector elementwise_max(const ParamVector& x, const ParamVector& y) {
  require_same_layout(x, y, "elementwise_max");
  std::vector<double> out(x.dim());
  auto xv = x.values();
  auto yv = y.values();
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = std::max(xv[i], yv[i]);
  }
  return ParamVector(x.layout_ptr(), std::move(out));
}

bool all_finite(const ParamVector& x) {
  for (double v : x.values()) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

}  // namespace fedef
