#include "c2far/dist.hpp"

#include <algorithm>

namespace c2far::dist {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
}

void StepDensity::validate(const hbin::BinningSpec& spec) const {
  if (static_cast<int>(level_probs.size()) != spec.depth()) {
    throw InputError("level_probs count does not match binning depth");
  }
  for (int i = 0; i < spec.depth(); ++i) {
    const VecD& p = level_probs[static_cast<std::size_t>(i)];
    if (p.size() != spec.levels[static_cast<std::size_t>(i)]) {
      throw InputError("probability vector length does not match level bin count");
    }
    if ((p.array() < 0.0).any()) throw InputError("negative bin probability");
    if (std::abs(p.sum() - 1.0) > 1e-6) throw InputError("bin probabilities do not sum to 1");
  }
  if (!(alpha_hi > 0.0) || !(alpha_lo > 0.0)) throw InputError("tail shapes must be positive");
}

Conditionals StepDensity::as_conditionals() const {
  std::vector<VecD> probs = level_probs;
  return [probs](int level, std::span<const int>) { return probs[static_cast<std::size_t>(level)]; };
}

double leaf_cdf(const hbin::BinningSpec& spec, const hbin::Interval& leaf, const Tails& tails,
                double v) {
  if (leaf.hi_open_ended) {
    const double s = spec.extent_hi;
    if (v < s) return 0.0;
    return 1.0 - std::pow(s / v, tails.alpha_hi);
  }
  if (leaf.lo_open_ended) {
    const double s = -spec.extent_lo;  // may be 0 for degenerate extents
    if (v >= spec.extent_lo) return 1.0;
    return std::pow(s / (-v), tails.alpha_lo);
  }
  const double w = leaf.hi - leaf.lo;
  return std::clamp((v - leaf.lo) / w, 0.0, 1.0);
}

double sample_leaf(const hbin::BinningSpec& spec, const hbin::Interval& leaf,
                   const Tails& tails, RandomStream& rng) {
  if (leaf.hi_open_ended) {
    const double u = 1.0 - rng.u01();  // (0, 1]
    return spec.extent_hi / std::pow(u, 1.0 / tails.alpha_hi);
  }
  if (leaf.lo_open_ended) {
    const double u = 1.0 - rng.u01();
    return -((-spec.extent_lo) / std::pow(u, 1.0 / tails.alpha_lo));
  }
  double v = leaf.lo + rng.u01() * (leaf.hi - leaf.lo);
  if (v >= leaf.hi) v = std::nextafter(leaf.hi, leaf.lo);
  return v;
}

double log_prob(const hbin::BinningSpec& spec, const Conditionals& cond, const Tails& tails,
                double value) {
  if (!std::isfinite(value)) throw InputError("log_prob requires a finite value");
  const hbin::BinPath path = hbin::discretize(spec, value);
  double logp = 0.0;
  for (int i = 0; i < spec.depth(); ++i) {
    const VecD p = cond(i, std::span<const int>(path.data(), static_cast<std::size_t>(i)));
    const double pi = p(path[static_cast<std::size_t>(i)]);
    if (!(pi > 0.0)) return -kInf;
    logp += std::log(pi);
  }
  const hbin::Interval leaf = hbin::interval_of(spec, path);
  return logp + leaf_log_density<double>(spec, leaf, tails.alpha_hi, tails.alpha_lo, value);
}

std::pair<hbin::BinPath, double> sample(const hbin::BinningSpec& spec, const Conditionals& cond,
                                        const Tails& tails, RandomStream& rng) {
  hbin::BinPath path;
  path.reserve(static_cast<std::size_t>(spec.depth()));
  for (int i = 0; i < spec.depth(); ++i) {
    const VecD p = cond(i, std::span<const int>(path.data(), path.size()));
    path.push_back(rng.categorical(p));
  }
  const hbin::Interval leaf = hbin::interval_of(spec, path);
  return {path, sample_leaf(spec, leaf, tails, rng)};
}

double cdf(const hbin::BinningSpec& spec, const Conditionals& cond, const Tails& tails,
           double value) {
  if (std::isnan(value)) throw InputError("cdf of NaN");
  if (value == kInf) return 1.0;
  if (value == -kInf) return 0.0;
  const hbin::BinPath path = hbin::discretize(spec, value);
  double mass_below = 0.0;
  double path_prob = 1.0;
  for (int i = 0; i < spec.depth(); ++i) {
    const VecD p = cond(i, std::span<const int>(path.data(), static_cast<std::size_t>(i)));
    const int k = path[static_cast<std::size_t>(i)];
    mass_below += path_prob * p.head(k).sum();
    path_prob *= p(k);
  }
  const hbin::Interval leaf = hbin::interval_of(spec, path);
  return mass_below + path_prob * leaf_cdf(spec, leaf, tails, value);
}

std::vector<double> pdf_grid(const hbin::BinningSpec& spec, const Conditionals& cond,
                             const Tails& tails, std::span<const double> grid) {
  for (std::size_t i = 1; i < grid.size(); ++i) {
    if (!(grid[i] > grid[i - 1])) throw InputError("pdf grid must be strictly increasing");
  }
  std::vector<double> out(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) {
    out[i] = std::exp(log_prob(spec, cond, tails, grid[i]));
  }
  return out;
}

}  // namespace c2far::dist
