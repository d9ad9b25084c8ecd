#include "c2far/hbin.hpp"

#include <algorithm>
#include <cmath>

namespace c2far::hbin {

namespace {

// Sub-interval k of [lo, hi] split into n equal parts.
inline void subdivide(double lo, double hi, int n, int k, double& out_lo, double& out_hi) {
  const double w = hi - lo;
  out_lo = lo + w * (static_cast<double>(k) / n);
  out_hi = lo + w * (static_cast<double>(k + 1) / n);
}

inline int locate(double lo, double hi, int n, double v) {
  // Index via comparison against exact edges so discretize and interval_of
  // can never disagree about a boundary.
  int lo_idx = 0, hi_idx = n;  // invariant: edge(lo_idx) <= v < edge(hi_idx) (clamped)
  while (hi_idx - lo_idx > 1) {
    int mid = (lo_idx + hi_idx) / 2;
    double edge = lo + (hi - lo) * (static_cast<double>(mid) / n);
    if (v < edge) {
      hi_idx = mid;
    } else {
      lo_idx = mid;
    }
  }
  return lo_idx;
}

}  // namespace

std::int64_t BinningSpec::total_intervals() const {
  std::int64_t n = 1;
  for (int k : levels) n *= k;
  return n;
}

int BinningSpec::total_bins() const {
  int n = 0;
  for (int k : levels) n += k;
  return n;
}

double BinningSpec::leaf_width() const {
  return span() / static_cast<double>(total_intervals());
}

BinningSpec build_spec(std::vector<int> levels, double extent_lo, double extent_hi) {
  if (levels.empty()) throw ConfigError("binning needs at least one level");
  for (int k : levels) {
    if (k < 2) throw ConfigError("every binning level needs at least 2 bins");
  }
  if (!(std::isfinite(extent_lo) && std::isfinite(extent_hi))) {
    throw ConfigError("binning extent must be finite");
  }
  if (!(extent_lo < 0.0 && 0.0 < extent_hi)) {
    throw ConfigError("binning extent must satisfy extent_lo < 0 < extent_hi");
  }
  return BinningSpec{std::move(levels), extent_lo, extent_hi};
}

BinPath discretize(const BinningSpec& spec, double value) {
  if (!std::isfinite(value)) throw InputError("cannot discretize non-finite value");
  const int b = spec.depth();
  BinPath path(static_cast<std::size_t>(b));
  if (value < spec.extent_lo) {
    std::fill(path.begin(), path.end(), 0);
    return path;
  }
  if (value >= spec.extent_hi) {
    for (int i = 0; i < b; ++i) path[static_cast<std::size_t>(i)] = spec.levels[static_cast<std::size_t>(i)] - 1;
    return path;
  }
  double lo = spec.extent_lo, hi = spec.extent_hi;
  for (int i = 0; i < b; ++i) {
    const int n = spec.levels[static_cast<std::size_t>(i)];
    const int k = locate(lo, hi, n, value);
    path[static_cast<std::size_t>(i)] = k;
    double nlo, nhi;
    subdivide(lo, hi, n, k, nlo, nhi);
    lo = nlo;
    hi = nhi;
  }
  return path;
}

Interval interval_of(const BinningSpec& spec, std::span<const int> path) {
  const int b = spec.depth();
  if (static_cast<int>(path.size()) != b) {
    throw InputError("path length does not match binning depth");
  }
  double lo = spec.extent_lo, hi = spec.extent_hi;
  bool all_zero = true, all_max = true;
  for (int i = 0; i < b; ++i) {
    const int n = spec.levels[static_cast<std::size_t>(i)];
    const int k = path[static_cast<std::size_t>(i)];
    if (k < 0 || k >= n) throw InputError("bin index out of range");
    all_zero = all_zero && k == 0;
    all_max = all_max && k == n - 1;
    double nlo, nhi;
    subdivide(lo, hi, n, k, nlo, nhi);
    lo = nlo;
    hi = nhi;
  }
  Interval iv;
  iv.lo = lo;
  iv.hi = hi;
  iv.lo_open_ended = all_zero;
  iv.hi_open_ended = all_max;
  return iv;
}

std::vector<double> child_edges(const BinningSpec& spec, std::span<const int> prefix) {
  const int b = spec.depth();
  if (static_cast<int>(prefix.size()) >= b) {
    throw InputError("prefix as long as the full path");
  }
  double lo = spec.extent_lo, hi = spec.extent_hi;
  for (std::size_t i = 0; i < prefix.size(); ++i) {
    const int n = spec.levels[i];
    const int k = prefix[i];
    if (k < 0 || k >= n) throw InputError("bin index out of range");
    double nlo, nhi;
    subdivide(lo, hi, n, k, nlo, nhi);
    lo = nlo;
    hi = nhi;
  }
  const int n = spec.levels[prefix.size()];
  std::vector<double> edges(static_cast<std::size_t>(n) + 1);
  for (int k = 0; k <= n; ++k) {
    edges[static_cast<std::size_t>(k)] = lo + (hi - lo) * (static_cast<double>(k) / n);
  }
  return edges;
}

}  // namespace c2far::hbin
