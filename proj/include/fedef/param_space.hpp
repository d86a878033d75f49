#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <vector>

namespace fedef {

// Partition of a flat parameter vector into contiguous groups (e.g. one per
// model layer). Immutable after construction.
class GroupLayout {
 public:
  explicit GroupLayout(std::vector<std::size_t> group_sizes);

  std::size_t dim() const { return offsets_.back(); }
  std::size_t group_count() const { return sizes_.size(); }
  std::size_t group_size(std::size_t g) const { return sizes_[g]; }
  std::size_t group_offset(std::size_t g) const { return offsets_[g]; }
  const std::vector<std::size_t>& group_sizes() const { return sizes_; }

  friend bool operator==(const GroupLayout& a, const GroupLayout& b) {
    return a.sizes_ == b.sizes_;
  }

 private:
  std::vector<std::size_t> sizes_;
  std::vector<std::size_t> offsets_;  // group_count()+1 entries, last is dim
};

using LayoutPtr = std::shared_ptr<const GroupLayout>;

LayoutPtr make_layout(std::vector<std::size_t> group_sizes);

// Flat grouped vector of doubles; the one representation used for model
// parameters, gradients, updates and error accumulators. Treated as an
// immutable value: operations return new vectors.
class ParamVector {
 public:
  explicit ParamVector(LayoutPtr layout);  // zeros
  ParamVector(LayoutPtr layout, std::vector<double> values);

  const GroupLayout& layout() const { return *layout_; }
  const LayoutPtr& layout_ptr() const { return layout_; }
  std::size_t dim() const { return values_.size(); }
  std::span<const double> values() const { return values_; }
  double operator[](std::size_t i) const { return values_[i]; }

 private:
  LayoutPtr layout_;
  std::vector<double> values_;
};

// Returns y + a*x, accumulating in index-ascending order.
ParamVector add_scaled(double a, const ParamVector& x, const ParamVector& y);

ParamVector scaled(double a, const ParamVector& x);

double sq_norm(const ParamVector& x);

// Per-group l1 norms, in layout order.
std::vector<double> group_l1_norms(const ParamVector& x);

// Elementwise helpers used by the adaptive global optimizer.
ParamVector elementwise_square(const ParamVector& x);
ParamVector elementwise_max(const ParamVector& x, const ParamVector& y);

bool all_finite(const ParamVector& x);

// Throws structural_error unless both vectors share one layout.
void require_same_layout(const ParamVector& x, const ParamVector& y,
                         const char* where);

}  // namespace fedef
