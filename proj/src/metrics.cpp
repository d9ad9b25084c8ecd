#include "c2far/metrics.hpp"

#include <array>

namespace c2far::metrics {

namespace {
const std::array<double, 9> kWqlAlphas = {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
}

std::span<const double> wql_alphas() { return kWqlAlphas; }

double quantile_loss(double alpha, std::span<const double> forecasts,
                     std::span<const double> truths) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw InputError("alpha must lie in (0, 1)");
  if (forecasts.size() != truths.size()) throw InputError("length mismatch");
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < truths.size(); ++i) {
    num += 2.0 * pinball(alpha, forecasts[i], truths[i]);
    den += std::abs(truths[i]);
  }
  if (den == 0.0) throw InputError("quantile loss denominator is zero (all-zero truths)");
  return num / den;
}

double nd(std::span<const double> forecasts, std::span<const double> truths) {
  if (forecasts.size() != truths.size()) throw InputError("length mismatch");
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < truths.size(); ++i) {
    num += std::abs(truths[i] - forecasts[i]);
    den += std::abs(truths[i]);
  }
  if (den == 0.0) throw InputError("normalized deviation denominator is zero");
  return num / den;
}

BandScore coverage_sharpness(double q_lo, double q_hi, std::span<const double> lo_forecasts,
                             std::span<const double> hi_forecasts,
                             std::span<const double> truths) {
  if (!(q_lo < q_hi)) throw InputError("band requires q_lo < q_hi");
  if (lo_forecasts.size() != truths.size() || hi_forecasts.size() != truths.size()) {
    throw InputError("length mismatch");
  }
  if (truths.empty()) throw InputError("empty inputs");
  double covered = 0.0, width = 0.0, den = 0.0;
  for (std::size_t i = 0; i < truths.size(); ++i) {
    const double z = truths[i];
    if (lo_forecasts[i] < z && z <= hi_forecasts[i]) covered += 1.0;
    width += std::abs(hi_forecasts[i] - lo_forecasts[i]);
    den += std::abs(z);
  }
  BandScore b;
  b.q_lo = q_lo;
  b.q_hi = q_hi;
  b.coverage = covered / static_cast<double>(truths.size());
  b.sharpness = den == 0.0 ? std::numeric_limits<double>::quiet_NaN() : width / den;
  return b;
}

double wql(std::span<const std::vector<double>> forecasts_by_alpha,
           std::span<const double> truths) {
  if (forecasts_by_alpha.size() != kWqlAlphas.size()) {
    throw InputError("wql needs forecasts for all nine quantiles 0.1..0.9");
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < kWqlAlphas.size(); ++i) {
    sum += quantile_loss(kWqlAlphas[i], forecasts_by_alpha[i], truths);
  }
  return sum / static_cast<double>(kWqlAlphas.size());
}

void MetricReport::write_csv(std::ostream& out) const {
  out << "metric,scope,horizon,value\n";
  auto row = [&out](const std::string& metric, const std::string& scope, const std::string& h,
                    double v) { out << metric << "," << scope << "," << h << "," << format_double(v) << "\n"; };
  row("nd", "overall", "", nd);
  row("wql", "overall", "", wql);
  for (const auto& [alpha, v] : ql) row("ql_" + format_double(alpha), "overall", "", v);
  for (const BandScore& b : bands) {
    const std::string tag = format_double((b.q_hi - b.q_lo) * 100.0);
    row("coverage_" + tag, "overall", "", b.coverage);
    row("sharpness_" + tag, "overall", "", b.sharpness);
  }
  if (has_nll) row("nll", "overall", "", mean_nll);
  for (std::size_t h = 0; h < nd_per_horizon.size(); ++h) {
    row("nd", "horizon", std::to_string(h + 1), nd_per_horizon[h]);
  }
  for (std::size_t h = 0; h < wql_per_horizon.size(); ++h) {
    row("wql", "horizon", std::to_string(h + 1), wql_per_horizon[h]);
  }
  row("n_points", "overall", "", static_cast<double>(n_points));
}

}  // namespace c2far::metrics
