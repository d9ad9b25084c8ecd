#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "c2far/common.hpp"

namespace c2far::hbin {

// One value's discretization: a bin index per level, coarse to fine.
using BinPath = std::vector<int>;

// Hierarchical coarse-to-fine binning over [extent_lo, extent_hi].
// Level 0 splits the extent into levels[0] equal bins; each deeper level
// splits its parent bin into levels[i] equal sub-bins. Bin edges are computed
// by exact subdivision of the parent interval (never cumulative addition).
//
// Interval convention is half-open [lo, hi) with the topmost finite edge
// closed. Only the all-lowest and all-highest full paths are open-ended
// (they absorb values beyond the extent).
struct BinningSpec {
  std::vector<int> levels;
  double extent_lo = 0.0;
  double extent_hi = 0.0;

  int depth() const { return static_cast<int>(levels.size()); }
  // Number of distinct full paths (product of per-level counts).
  std::int64_t total_intervals() const;
  int total_bins() const;  // sum of per-level counts
  double span() const { return extent_hi - extent_lo; }
  // Width of a finest-level leaf.
  double leaf_width() const;

  bool operator==(const BinningSpec&) const = default;
};

// Validating factory. Requires every level count >= 2, at least one level,
// and extent_lo < 0 < extent_hi (the tail scales must be strictly positive).
BinningSpec build_spec(std::vector<int> levels, double extent_lo, double extent_hi);

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
  bool lo_open_ended = false;  // extends to -inf
  bool hi_open_ended = false;  // extends to +inf

  bool contains(double v) const {
    if (lo_open_ended && v < hi) return true;
    if (hi_open_ended && v >= lo) return true;
    return v >= lo && v < hi;
  }
};

// Map a finite value to its bin path. Values below extent_lo map to the
// all-lowest path, values above extent_hi to the all-highest path.
BinPath discretize(const BinningSpec& spec, double value);

// Inverse of discretize: the real interval selected by a full path.
// lo_open_ended iff path is all-zeros, hi_open_ended iff all-max; the finite
// edge of an open-ended interval is the interior boundary.
Interval interval_of(const BinningSpec& spec, std::span<const int> path);

// Edges of the next level's bins inside the composite bin selected by
// `prefix` (empty prefix = level-0 edges over the whole extent).
// Returns levels[prefix.size()] + 1 edges.
std::vector<double> child_edges(const BinningSpec& spec, std::span<const int> prefix);

}  // namespace c2far::hbin
