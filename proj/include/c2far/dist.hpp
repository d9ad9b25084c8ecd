#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <span>
#include <utility>
#include <vector>

#include "c2far/common.hpp"
#include "c2far/hbin.hpp"
#include "c2far/rng.hpp"

namespace c2far::dist {

// Dynamic shape parameters of the two tail distributions.
struct Tails {
  double alpha_hi = 1.0;  // shape above the extent
  double alpha_lo = 1.0;  // shape below the extent
};

// Per-level conditional bin probabilities, possibly depending on the
// already-chosen coarser prefix. Level is 0-based; prefix has `level` entries.
using Conditionals = std::function<VecD(int level, std::span<const int> prefix)>;

// One timestep's realized output distribution: the per-level categorical
// probabilities manifested along one path plus the tail shapes.
struct StepDensity {
  std::vector<VecD> level_probs;
  double alpha_hi = 1.0;
  double alpha_lo = 1.0;

  // Checks probability vectors are non-negative and sum to one within 1e-6,
  // and that shapes are strictly positive. Throws InputError otherwise.
  void validate(const hbin::BinningSpec& spec) const;

  Tails tails() const { return Tails{alpha_hi, alpha_lo}; }
  // Treats the stored vectors as prefix-independent conditionals.
  Conditionals as_conditionals() const;
};

// ---------------------------------------------------------------------------
// Tail densities. The high tail is a Type I Pareto with scale = extent_hi;
// the low tail is the reflection of a Type I Pareto with scale = |extent_lo|.
// Their mass lives entirely beyond the extent, so the mass of an extreme
// path equals its categorical path probability.
// ---------------------------------------------------------------------------

template <typename T>
T pareto_log_pdf(T scale, T alpha, T x) {
  if (!(scale > T(0)) || !(x >= scale)) return -std::numeric_limits<T>::infinity();
  return std::log(alpha) + alpha * std::log(scale) - (alpha + T(1)) * std::log(x);
}

// log density of the level-(B+1) distribution of `leaf` evaluated at v.
template <typename T>
T leaf_log_density(const hbin::BinningSpec& spec, const hbin::Interval& leaf, T alpha_hi,
                   T alpha_lo, double v) {
  if (leaf.hi_open_ended) {
    return pareto_log_pdf<T>(static_cast<T>(spec.extent_hi), alpha_hi, static_cast<T>(v));
  }
  if (leaf.lo_open_ended) {
    return pareto_log_pdf<T>(static_cast<T>(-spec.extent_lo), alpha_lo, static_cast<T>(-v));
  }
  if (v >= leaf.lo && v < leaf.hi) {
    return -std::log(static_cast<T>(leaf.hi - leaf.lo));
  }
  return -std::numeric_limits<T>::infinity();
}

// CDF of the level-(B+1) distribution of `leaf` evaluated at v, in [0, 1].
double leaf_cdf(const hbin::BinningSpec& spec, const hbin::Interval& leaf, const Tails& tails,
                double v);

// Inverse-CDF sample from the leaf distribution.
double sample_leaf(const hbin::BinningSpec& spec, const hbin::Interval& leaf,
                   const Tails& tails, RandomStream& rng);

// ---------------------------------------------------------------------------
// Full-distribution queries.
// ---------------------------------------------------------------------------

// Exact log density at a finite value: sum of per-level categorical log
// probabilities along the value's path plus the leaf term. Returns -inf when
// the realized path has zero probability (not an error).
double log_prob(const hbin::BinningSpec& spec, const Conditionals& cond, const Tails& tails,
                double value);

// Level-by-level ancestral sample; the returned value always discretizes
// back to the returned path.
std::pair<hbin::BinPath, double> sample(const hbin::BinningSpec& spec, const Conditionals& cond,
                                        const Tails& tails, RandomStream& rng);

// P(Z <= value). Computed by walking the hierarchy: mass of bins strictly
// below the path at each level plus the partial mass inside the containing
// leaf. Accepts +/-inf.
double cdf(const hbin::BinningSpec& spec, const Conditionals& cond, const Tails& tails,
           double value);

// Pointwise density over a strictly increasing grid.
std::vector<double> pdf_grid(const hbin::BinningSpec& spec, const Conditionals& cond,
                             const Tails& tails, std::span<const double> grid);

}  // namespace c2far::dist
