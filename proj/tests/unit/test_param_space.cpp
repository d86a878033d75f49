#include <doctest.h>

#include "fedef/errors.hpp"
#include "fedef/param_space.hpp"
#include "fedef/rng.hpp"

using namespace fedef;

namespace {
ParamVector vec(LayoutPtr layout, std::vector<double> v) {
  return ParamVector(std::move(layout), std::move(v));
}
}  // namespace

TEST_CASE("layout validation") {
  CHECK_THROWS_AS(GroupLayout({}), structural_error);
  CHECK_THROWS_AS(GroupLayout({3, 0, 2}), structural_error);
  GroupLayout layout({3, 5, 8});
  CHECK(layout.dim() == 16);
  CHECK(layout.group_count() == 3);
  CHECK(layout.group_offset(2) == 8);
}

TEST_CASE("param vector checks length and layout") {
  auto layout = make_layout({2});
  CHECK_THROWS_AS(vec(layout, {1.0, 2.0, 3.0}), structural_error);
  auto other = make_layout({3});
  CHECK_THROWS_AS(
      add_scaled(1.0, vec(layout, {1, 2}), ParamVector(other)),
      structural_error);
}

TEST_CASE("add_scaled examples") {
  auto layout = make_layout({2});
  ParamVector y = vec(layout, {1, 2});

  // zero scale is the identity on y
  ParamVector r0 = add_scaled(0.0, vec(layout, {9, -3}), y);
  CHECK(r0[0] == 1.0);
  CHECK(r0[1] == 2.0);

  // a = -1 with x = y cancels exactly
  ParamVector rc = add_scaled(-1.0, y, y);
  CHECK(rc[0] == 0.0);
  CHECK(rc[1] == 0.0);

  ParamVector r2 = add_scaled(2.0, vec(layout, {1, -1}), vec(layout, {0, 3}));
  CHECK(r2[0] == 2.0);
  CHECK(r2[1] == 1.0);
}

TEST_CASE("sq_norm examples") {
  auto l3 = make_layout({3});
  CHECK(sq_norm(ParamVector(l3)) == 0.0);
  CHECK(sq_norm(vec(make_layout({2}), {3, 4})) == 25.0);
  CHECK(sq_norm(vec(l3, {1, -2, 3})) == 14.0);
}

TEST_CASE("group_l1_norms examples") {
  CHECK(group_l1_norms(vec(make_layout({3}), {1, -2, 3})) ==
        std::vector<double>{6.0});
  CHECK(group_l1_norms(vec(make_layout({1, 2}), {1, -1, 1})) ==
        std::vector<double>{1.0, 2.0});
  CHECK(group_l1_norms(ParamVector(make_layout({2, 5}))) ==
        std::vector<double>{0.0, 0.0});
}

TEST_CASE("per-group l1 dominates l2 on random vectors") {
  auto layout = make_layout({3, 5, 8});
  RngStream rng(7);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> v(layout->dim());
    for (double& x : v) x = rng.normal();
    ParamVector p = vec(layout, v);
    auto l1 = group_l1_norms(p);
    for (std::size_t g = 0; g < layout->group_count(); ++g) {
      double group_sq = 0.0;
      for (std::size_t i = layout->group_offset(g);
           i < layout->group_offset(g) + layout->group_size(g); ++i) {
        group_sq += p[i] * p[i];
      }
      CHECK(l1[g] * l1[g] >= group_sq);
    }
  }
}

TEST_CASE("add_scaled is deterministic across repetitions") {
  auto layout = make_layout({4, 4});
  RngStream rng(11);
  std::vector<double> a(8), b(8);
  for (double& x : a) x = rng.normal();
  for (double& x : b) x = rng.normal();
  ParamVector x = vec(layout, a), y = vec(layout, b);
  ParamVector first = add_scaled(0.37, x, y);
  for (int i = 0; i < 10; ++i) {
    ParamVector again = add_scaled(0.37, x, y);
    for (std::size_t j = 0; j < 8; ++j) CHECK(again[j] == first[j]);
  }
}

TEST_CASE("all_finite flags NaN and infinity") {
  auto layout = make_layout({2});
  CHECK(all_finite(vec(layout, {1.0, -2.0})));
  CHECK_FALSE(all_finite(vec(layout, {1.0, std::nan("")})));
  CHECK_FALSE(all_finite(vec(layout, {1.0, 1.0 / 0.0})));
}
