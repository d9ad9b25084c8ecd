#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>

#include "c2far/dist.hpp"

using namespace c2far;
using namespace c2far::dist;
using c2far::hbin::BinningSpec;
using c2far::hbin::BinPath;

namespace {

Conditionals table(std::vector<VecD> per_level) {
  return [per_level](int level, std::span<const int>) {
    return per_level[static_cast<std::size_t>(level)];
  };
}

VecD vec(std::initializer_list<double> v) {
  VecD out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out(i++) = x;
  return out;
}

double path_prob(const BinningSpec& spec, const Conditionals& cond, const BinPath& path) {
  double p = 1.0;
  for (int i = 0; i < spec.depth(); ++i) {
    p *= cond(i, std::span<const int>(path.data(), static_cast<std::size_t>(i)))(
        path[static_cast<std::size_t>(i)]);
  }
  return p;
}

}  // namespace

TEST_CASE("log_prob: interior uniform leaf density is path prob over width") {
  const BinningSpec spec = hbin::build_spec({4}, -0.5, 0.5);
  const Conditionals cond = table({vec({0.25, 0.25, 0.25, 0.25})});
  const Tails tails{2.0, 2.0};
  // Interior bin [0, 0.25): density 0.25 / 0.25 = 1.
  CHECK(log_prob(spec, cond, tails, 0.125) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("log_prob: high-tail density follows the fixed-scale Pareto") {
  const BinningSpec spec = hbin::build_spec({2}, -0.01, 1.01);
  const Conditionals cond = table({vec({0.9, 0.1})});
  const Tails tails{2.0, 1.0};
  const double expected = 0.1 * 2.0 * 1.01 * 1.01 / (2.02 * 2.02 * 2.02);
  CHECK(std::exp(log_prob(spec, cond, tails, 2.02)) == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("log_prob: zero-probability bin gives -inf, not an error") {
  const BinningSpec spec = hbin::build_spec({4}, -0.5, 0.5);
  const Conditionals cond = table({vec({0.5, 0.0, 0.25, 0.25})});
  CHECK(log_prob(spec, cond, Tails{1, 1}, -0.1) == -std::numeric_limits<double>::infinity());
}

TEST_CASE("sample: degenerate conditionals stay inside the forced leaf") {
  const BinningSpec spec = hbin::build_spec({3, 2}, -0.5, 1.0);
  const Conditionals cond = table({vec({0, 1, 0}), vec({1, 0})});
  RandomStream rng(5);
  for (int i = 0; i < 200; ++i) {
    const auto [path, v] = sample(spec, cond, Tails{2, 2}, rng);
    CHECK(path == BinPath{1, 0});
    CHECK(hbin::interval_of(spec, path).contains(v));
    CHECK(hbin::discretize(spec, v) == path);
  }
}

TEST_CASE("sample: leaf frequencies match path probabilities within 4 SE") {
  const BinningSpec spec = hbin::build_spec({3, 2}, -0.5, 1.0);
  const Conditionals cond = table({vec({0.5, 0.3, 0.2}), vec({0.4, 0.6})});
  const int n = 100000;
  RandomStream rng(11);
  std::map<BinPath, int> counts;
  for (int i = 0; i < n; ++i) {
    counts[sample(spec, cond, Tails{2, 2}, rng).first] += 1;
  }
  for (const auto& [path, count] : counts) {
    const double p = path_prob(spec, cond, path);
    const double se = std::sqrt(p * (1 - p) / n);
    CHECK(std::abs(static_cast<double>(count) / n - p) <= 4 * se);
  }
}

TEST_CASE("sample: forced high tail has median scale * 2^(1/alpha)") {
  const BinningSpec spec = hbin::build_spec({2}, -1.0, 1.0);
  const Conditionals cond = table({vec({0.0, 1.0})});
  const Tails tails{2.0, 1.0};
  RandomStream rng(17);
  const int n = 100001;
  std::vector<double> vals(n);
  for (int i = 0; i < n; ++i) vals[static_cast<std::size_t>(i)] = sample(spec, cond, tails, rng).second;
  std::nth_element(vals.begin(), vals.begin() + n / 2, vals.end());
  CHECK(vals[static_cast<std::size_t>(n / 2)] == doctest::Approx(std::sqrt(2.0)).epsilon(0.02));
  // Every tail sample discretizes back to the forced path.
  CHECK(*std::min_element(vals.begin(), vals.end()) >= 1.0);
}

TEST_CASE("cdf basics") {
  const BinningSpec raw{{2}, 0.0, 1.0};  // geometry-only extent from the examples
  const Conditionals cond = table({vec({0.5, 0.5})});
  const Tails tails{2.0, 2.0};
  CHECK(cdf(raw, cond, tails, 1e12) == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(cdf(raw, cond, tails, 0.5) == doctest::Approx(0.5).epsilon(1e-12));

  const BinningSpec spec = hbin::build_spec({5, 4}, -0.01, 1.01);
  std::vector<VecD> tbl;
  tbl.push_back(vec({0.1, 0.3, 0.2, 0.25, 0.15}));
  tbl.push_back(vec({0.4, 0.1, 0.3, 0.2}));
  const Conditionals cond2 = table(tbl);
  const double p_top = 0.15 * 0.2;
  // All mass of the extreme-high path lies beyond the extent.
  CHECK(cdf(spec, cond2, tails, spec.extent_hi) == doctest::Approx(1.0 - p_top).epsilon(1e-12));
  CHECK(cdf(spec, cond2, tails, std::numeric_limits<double>::infinity()) == 1.0);
  CHECK(cdf(spec, cond2, tails, -std::numeric_limits<double>::infinity()) == 0.0);
}

TEST_CASE("cdf is non-decreasing") {
  const BinningSpec spec = hbin::build_spec({4, 3}, -0.2, 1.2);
  std::vector<VecD> tbl = {vec({0.4, 0.1, 0.2, 0.3}), vec({0.2, 0.5, 0.3})};
  const Conditionals cond = table(tbl);
  const Tails tails{1.5, 2.5};
  RandomStream rng(3);
  std::vector<double> grid(500);
  for (double& g : grid) g = rng.uniform(-3.0, 4.0);
  std::sort(grid.begin(), grid.end());
  double prev = -0.1;
  for (double x : grid) {
    const double c = cdf(spec, cond, tails, x);
    CHECK(c >= prev - 1e-15);
    CHECK(c <= 1.0 + 1e-12);
    prev = c;
  }
}

TEST_CASE("pdf_grid matches log_prob and validates the grid") {
  const BinningSpec spec = hbin::build_spec({4}, -0.5, 0.5);
  const Conditionals cond = table({vec({0.25, 0.25, 0.25, 0.25})});
  const Tails tails{2, 2};
  const double xs[] = {0.1};
  const auto vals = pdf_grid(spec, cond, tails, xs);
  CHECK(vals[0] == doctest::Approx(std::exp(log_prob(spec, cond, tails, 0.1))));
  const double bad[] = {0.2, 0.1};
  CHECK_THROWS_AS(pdf_grid(spec, cond, tails, bad), InputError);
}

namespace {

// Grid over the extent containing both sides of every leaf edge, padded with
// uniform fill, for near-exact trapezoid integration of the piecewise
// density.
std::vector<double> edge_aware_grid(const BinningSpec& spec, int n_fill) {
  std::vector<double> xs;
  const double eps = spec.span() * 1e-10;
  std::vector<BinPath> stack;
  // collect leaf edges by walking all leaves via discretize of edge midpoints:
  // simpler: recursive enumeration of edges at the finest level.
  std::function<void(int, double, double)> rec = [&](int level, double lo, double hi) {
    if (level == spec.depth()) {
      xs.push_back(lo + eps);
      xs.push_back(hi - eps);
      return;
    }
    const int k = spec.levels[static_cast<std::size_t>(level)];
    for (int i = 0; i < k; ++i) {
      rec(level + 1, lo + (hi - lo) * i / k, lo + (hi - lo) * (i + 1) / k);
    }
  };
  rec(0, spec.extent_lo, spec.extent_hi);
  for (int i = 0; i <= n_fill; ++i) {
    xs.push_back(spec.extent_lo + eps + spec.span() * (1.0 - 3e-10) * i / n_fill);
  }
  std::sort(xs.begin(), xs.end());
  xs.erase(std::unique(xs.begin(), xs.end()), xs.end());
  return xs;
}

double trapezoid(std::span<const double> xs, std::span<const double> ys) {
  double area = 0.0;
  for (std::size_t i = 1; i < xs.size(); ++i) {
    area += 0.5 * (ys[i] + ys[i - 1]) * (xs[i] - xs[i - 1]);
  }
  return area;
}

}  // namespace

TEST_CASE("normalization: interior integral plus analytic tail masses is 1") {
  const BinningSpec spec = hbin::build_spec({20, 20}, -0.01, 1.01);
  RandomStream rng(29);
  VecD l1(20), l2(20);
  for (int i = 0; i < 20; ++i) l1(i) = 0.5 + rng.u01();
  for (int i = 0; i < 20; ++i) l2(i) = 0.5 + rng.u01();
  l1 /= l1.sum();
  l2 /= l2.sum();
  const Conditionals cond = table({l1, l2});
  const Tails tails{1.7, 2.3};

  const auto xs = edge_aware_grid(spec, 10000);
  const auto ys = pdf_grid(spec, cond, tails, xs);
  const double interior = trapezoid(xs, ys);
  const double tail_mass = l1(19) * l2(19) + l1(0) * l2(0);
  CHECK(interior + tail_mass == doctest::Approx(1.0).epsilon(1e-3));
}

TEST_CASE("chain rule: log_prob decomposes into the conditional product") {
  const BinningSpec spec = hbin::build_spec({3, 4}, -0.3, 0.9);
  // Prefix-dependent second level.
  std::vector<VecD> coarse = {vec({0.2, 0.5, 0.3})};
  const Conditionals cond = [coarse](int level, std::span<const int> prefix) {
    if (level == 0) return coarse[0];
    VecD p(4);
    const int shift = prefix[0];
    for (int i = 0; i < 4; ++i) p(i) = 1.0 + ((i + shift) % 4);
    p /= p.sum();
    return p;
  };
  const Tails tails{2, 2};
  const double v = 0.41;
  const BinPath path = hbin::discretize(spec, v);
  const hbin::Interval leaf = hbin::interval_of(spec, path);
  const double expected =
      std::log(path_prob(spec, cond, path)) - std::log(leaf.hi - leaf.lo);
  CHECK(log_prob(spec, cond, tails, v) == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("sampling agrees with the analytic distribution in total variation") {
  const BinningSpec spec = hbin::build_spec({6, 5}, -0.2, 1.2);
  RandomStream wrng(41);
  VecD l1(6), l2(5);
  for (int i = 0; i < 6; ++i) l1(i) = 0.2 + wrng.u01();
  for (int i = 0; i < 5; ++i) l2(i) = 0.2 + wrng.u01();
  l1 /= l1.sum();
  l2 /= l2.sum();
  const Conditionals cond = table({l1, l2});
  const Tails tails{2.5, 2.5};

  const int n = 200000;
  RandomStream rng(43);
  std::vector<double> samples(n);
  for (int i = 0; i < n; ++i) samples[static_cast<std::size_t>(i)] = sample(spec, cond, tails, rng).second;

  // 50 equal bins across a range wide enough to hold nearly all tail mass,
  // plus two out-of-range cells.
  const double lo = -2.0, hi = 3.0;
  const int bins = 50;
  std::vector<double> emp(bins + 2, 0.0);
  for (double s : samples) {
    if (s < lo) {
      emp[0] += 1.0;
    } else if (s >= hi) {
      emp[static_cast<std::size_t>(bins + 1)] += 1.0;
    } else {
      emp[1 + static_cast<std::size_t>((s - lo) / (hi - lo) * bins)] += 1.0;
    }
  }
  double tv = 0.0;
  double prev_cdf = cdf(spec, cond, tails, lo);
  tv += std::abs(emp[0] / n - prev_cdf);
  for (int b = 0; b < bins; ++b) {
    const double right = cdf(spec, cond, tails, lo + (hi - lo) * (b + 1) / bins);
    tv += std::abs(emp[static_cast<std::size_t>(b + 1)] / n - (right - prev_cdf));
    prev_cdf = right;
  }
  tv += std::abs(emp[static_cast<std::size_t>(bins + 1)] / n - (1.0 - prev_cdf));
  CHECK(tv / 2.0 <= 0.02);
}

TEST_CASE("density spikes are bounded by max path probability over leaf width") {
  const BinningSpec spec = hbin::build_spec({8, 4}, -0.1, 1.1);
  RandomStream rng(53);
  VecD l1(8), l2(4);
  for (int i = 0; i < 8; ++i) l1(i) = rng.u01() + 0.05;
  for (int i = 0; i < 4; ++i) l2(i) = rng.u01() + 0.05;
  l1 /= l1.sum();
  l2 /= l2.sum();
  const Conditionals cond = table({l1, l2});
  const Tails tails{3, 3};
  const double bound = l1.maxCoeff() * l2.maxCoeff() / spec.leaf_width();
  RandomStream grng(57);
  for (int i = 0; i < 5000; ++i) {
    const double x = grng.uniform(-0.5, 1.5);
    CHECK(std::exp(log_prob(spec, cond, tails, x)) <= bound * (1.0 + 1e-9));
  }
}

TEST_CASE("StepDensity validation") {
  const BinningSpec spec = hbin::build_spec({3, 2}, -0.5, 0.5);
  StepDensity sd;
  sd.level_probs = {vec({0.2, 0.3, 0.5}), vec({0.6, 0.4})};
  sd.alpha_hi = 1.0;
  sd.alpha_lo = 2.0;
  CHECK_NOTHROW(sd.validate(spec));
  sd.level_probs[0](0) = 0.3;  // sums to 1.1
  CHECK_THROWS_AS(sd.validate(spec), InputError);
  sd.level_probs[0](0) = 0.2;
  sd.alpha_lo = 0.0;
  CHECK_THROWS_AS(sd.validate(spec), InputError);
}
