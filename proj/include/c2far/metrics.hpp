#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <ostream>
#include <span>
#include <utility>
#include <vector>

#include "c2far/common.hpp"
#include "c2far/model.hpp"

namespace c2far::metrics {

// Pinball loss: (alpha - 1{z < q}) * (z - q), with q the forecast quantile
// value and z the truth.
inline double pinball(double alpha, double q, double z) {
  return (alpha - (z < q ? 1.0 : 0.0)) * (z - q);
}

// Normalized doubled pinball sum: sum 2*pinball / sum |z|.
double quantile_loss(double alpha, std::span<const double> forecasts,
                     std::span<const double> truths);

// Normalized deviation: sum |z - zhat| / sum |z|.
double nd(std::span<const double> forecasts, std::span<const double> truths);

struct BandScore {
  double q_lo = 0.0;
  double q_hi = 0.0;
  double coverage = 0.0;   // fraction of truths with zhat(q_lo) < z <= zhat(q_hi)
  double sharpness = 0.0;  // sum |zhat(q_hi) - zhat(q_lo)| / sum |z|
};

// CovX pair for one quantile band.
BandScore coverage_sharpness(double q_lo, double q_hi, std::span<const double> lo_forecasts,
                             std::span<const double> hi_forecasts,
                             std::span<const double> truths);

struct MetricReport {
  double nd = std::numeric_limits<double>::quiet_NaN();
  double wql = std::numeric_limits<double>::quiet_NaN();
  std::vector<std::pair<double, double>> ql;  // (alpha, QL)
  std::vector<BandScore> bands;
  std::vector<double> nd_per_horizon;   // optional
  std::vector<double> wql_per_horizon;  // optional
  double mean_nll = std::numeric_limits<double>::quiet_NaN();
  bool has_nll = false;
  std::int64_t n_points = 0;

  // CSV with header metric,scope,horizon,value.
  void write_csv(std::ostream& out) const;
};

// The nine wQL quantile levels 0.1 ... 0.9.
std::span<const double> wql_alphas();

// Mean of the nine quantile losses. `forecasts_by_alpha` must supply one
// forecast series per wql alpha, in order.
double wql(std::span<const std::vector<double>> forecasts_by_alpha,
           std::span<const double> truths);

// Teacher-forced mean NLL per prediction-range point, in the normalized
// domain, pooled over all windows. Exact (unfloored); may be -inf.
template <typename Model>
double nll_eval(const Model& mdl, std::span<const model::ModelWindow> windows,
                int batch_size = 64) {
  if (windows.empty()) throw InputError("nll_eval needs at least one window");
  double total = 0.0;
  std::int64_t points = 0;
  std::size_t i = 0;
  while (i < windows.size()) {
    const std::size_t n = std::min<std::size_t>(batch_size, windows.size() - i);
    const std::span<const model::ModelWindow> batch = windows.subspan(i, n);
    const double mean_nll = mdl.forward(batch, /*train=*/false, /*dropout_seed=*/0, nullptr);
    const std::int64_t batch_points =
        static_cast<std::int64_t>(n) * batch[0].n_prediction();
    total += mean_nll * static_cast<double>(batch_points);
    points += batch_points;
    i += n;
  }
  return total / static_cast<double>(points);
}

}  // namespace c2far::metrics
