#include <doctest.h>

#include <cmath>

#include "c2far/hbin.hpp"
#include "c2far/rng.hpp"

using namespace c2far;
using namespace c2far::hbin;

namespace {

// Oracle: enumerate every full path in lexicographic order and compute its
// interval by naive nested subdivision, independent of the library's
// digit-walk implementation.
struct LeafTable {
  std::vector<BinPath> paths;
  std::vector<double> lo, hi;
};

void enumerate_rec(const BinningSpec& spec, int level, double lo, double hi, BinPath& prefix,
                   LeafTable& out) {
  if (level == spec.depth()) {
    out.paths.push_back(prefix);
    out.lo.push_back(lo);
    out.hi.push_back(hi);
    return;
  }
  const int k = spec.levels[static_cast<std::size_t>(level)];
  for (int i = 0; i < k; ++i) {
    const double w = hi - lo;
    prefix.push_back(i);
    enumerate_rec(spec, level + 1, lo + w * i / k, lo + w * (i + 1) / k, prefix, out);
    prefix.pop_back();
  }
}

LeafTable enumerate_leaves(const BinningSpec& spec) {
  LeafTable t;
  BinPath prefix;
  enumerate_rec(spec, 0, spec.extent_lo, spec.extent_hi, prefix, t);
  return t;
}

// Oracle discretization: scan the enumerated leaves.
BinPath oracle_discretize(const LeafTable& t, const BinningSpec& spec, double v) {
  if (v < spec.extent_lo) return t.paths.front();
  if (v >= spec.extent_hi) return t.paths.back();
  for (std::size_t i = 0; i < t.paths.size(); ++i) {
    if (v >= t.lo[i] && v < t.hi[i]) return t.paths[i];
  }
  return t.paths.back();
}

// Geometry-only specs in some examples use non-negative extent starts; build
// the raw struct directly since the validating factory requires lo < 0 < hi.
BinningSpec raw_spec(std::vector<int> levels, double lo, double hi) {
  return BinningSpec{std::move(levels), lo, hi};
}

}  // namespace

TEST_CASE("build_spec validates and counts intervals") {
  CHECK(build_spec({6, 6}, -0.5, 0.5).total_intervals() == 36);
  CHECK(build_spec({4, 4, 4}, -0.01, 1.01).total_intervals() == 64);
  CHECK(build_spec({6, 6}, -0.5, 0.5).total_bins() == 12);

  const BinningSpec two = build_spec({2}, -0.5, 0.5);
  const auto edges = child_edges(two, {});
  REQUIRE(edges.size() == 3);
  CHECK(edges[1] == doctest::Approx(0.0));

  CHECK_THROWS_AS(build_spec({2}, 0.5, 1.0), ConfigError);   // lo must be < 0
  CHECK_THROWS_AS(build_spec({2}, -1.0, -0.5), ConfigError); // hi must be > 0
  CHECK_THROWS_AS(build_spec({1, 4}, -0.5, 0.5), ConfigError);
  CHECK_THROWS_AS(build_spec({}, -0.5, 0.5), ConfigError);
}

TEST_CASE("discretize matches the enumeration oracle on the unit square spec") {
  const BinningSpec spec = raw_spec({2, 2}, 0.0, 1.0);
  CHECK(discretize(spec, 0.6) == BinPath{1, 0});
  const Interval iv = interval_of(spec, BinPath{1, 0});
  CHECK(iv.lo == doctest::Approx(0.5));
  CHECK(iv.hi == doctest::Approx(0.75));
  CHECK_FALSE(iv.lo_open_ended);
  CHECK_FALSE(iv.hi_open_ended);

  CHECK(discretize(spec, 1.5) == BinPath{1, 1});
  CHECK(discretize(spec, -0.3) == BinPath{0, 0});

  const LeafTable t = enumerate_leaves(spec);
  REQUIRE(t.paths.size() == 4);
  RandomStream rng(7);
  for (int i = 0; i < 2000; ++i) {
    const double v = rng.uniform(-0.5, 1.5);
    CHECK(discretize(spec, v) == oracle_discretize(t, spec, v));
  }
}

TEST_CASE("interval_of open-endedness and errors") {
  const BinningSpec spec = raw_spec({2, 2}, 0.0, 1.0);
  const Interval lo_iv = interval_of(spec, BinPath{0, 0});
  CHECK(lo_iv.lo_open_ended);
  CHECK(lo_iv.hi == doctest::Approx(0.25));
  const Interval hi_iv = interval_of(spec, BinPath{1, 1});
  CHECK(hi_iv.hi_open_ended);
  CHECK(hi_iv.lo == doctest::Approx(0.75));
  // Interior composite bins are finite even when extreme at one level.
  CHECK_FALSE(interval_of(spec, BinPath{0, 1}).lo_open_ended);
  CHECK_FALSE(interval_of(spec, BinPath{1, 0}).hi_open_ended);

  CHECK_THROWS_AS(interval_of(spec, BinPath{2, 0}), InputError);
  CHECK_THROWS_AS(interval_of(spec, BinPath{0}), InputError);
  CHECK_THROWS_AS(discretize(spec, std::nan("")), InputError);
}

TEST_CASE("child_edges subdivides the selected parent") {
  const BinningSpec spec = raw_spec({2, 2}, 0.0, 1.0);
  const auto top = child_edges(spec, {});
  CHECK(top == std::vector<double>{0.0, 0.5, 1.0});
  const int prefix1[] = {1};
  const auto sub = child_edges(spec, prefix1);
  REQUIRE(sub.size() == 3);
  CHECK(sub[0] == doctest::Approx(0.5));
  CHECK(sub[1] == doctest::Approx(0.75));
  CHECK(sub[2] == doctest::Approx(1.0));

  const BinningSpec flat = build_spec({4}, -0.5, 0.5);
  const int full[] = {0};
  CHECK_THROWS_AS(child_edges(flat, full), InputError);
}

TEST_CASE("round trip: every value lies in the interval of its path") {
  const BinningSpec spec = build_spec({5, 3, 4}, -0.25, 1.75);
  RandomStream rng(123);
  for (int i = 0; i < 20000; ++i) {
    const double v = rng.uniform(-3.0, 4.0);
    const BinPath p = discretize(spec, v);
    CHECK(interval_of(spec, p).contains(v));
  }
}

TEST_CASE("partition: leaves tile the extent exactly once") {
  const BinningSpec spec = build_spec({3, 4}, -0.5, 1.0);
  const LeafTable t = enumerate_leaves(spec);
  CHECK(static_cast<std::int64_t>(t.paths.size()) == spec.total_intervals());
  for (std::size_t i = 0; i < t.paths.size(); ++i) {
    const Interval iv = interval_of(spec, t.paths[i]);
    CHECK(iv.lo == doctest::Approx(t.lo[i]).epsilon(1e-12));
    CHECK(iv.hi == doctest::Approx(t.hi[i]).epsilon(1e-12));
    if (i > 0) CHECK(t.lo[i] == doctest::Approx(t.hi[i - 1]).epsilon(1e-12));
  }
}

TEST_CASE("monotonicity: lexicographic path order equals midpoint order") {
  const BinningSpec spec = build_spec({4, 3}, -1.0, 2.0);
  const LeafTable t = enumerate_leaves(spec);
  double prev = -1e300;
  for (std::size_t i = 0; i < t.paths.size(); ++i) {
    const Interval iv = interval_of(spec, t.paths[i]);
    const double mid = 0.5 * (iv.lo + iv.hi);
    CHECK(mid > prev);
    prev = mid;
  }
}
