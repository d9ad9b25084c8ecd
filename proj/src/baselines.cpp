#include "c2far/baselines.hpp"

namespace c2far::baselines {

pipeline::ForecastGrid naive_forecast(const pipeline::SeriesWindow& window, int n_horizons) {
  if (window.conditioning.empty()) throw InputError("naive forecast needs conditioning values");
  if (n_horizons < 0) throw InputError("negative horizon count");
  std::vector<double> point(static_cast<std::size_t>(n_horizons), window.conditioning.back());
  return pipeline::degenerate_grid(point, pipeline::default_quantiles());
}

pipeline::ForecastGrid seasonal_naive_forecast(const pipeline::SeriesWindow& window,
                                               int n_horizons, int season_length) {
  const int T = window.n_conditioning();
  if (season_length < 1) throw InputError("season length must be positive");
  if (T < season_length) {
    throw InputError("conditioning range shorter than one season");
  }
  std::vector<double> point(static_cast<std::size_t>(n_horizons));
  for (int h = 1; h <= n_horizons; ++h) {
    const int lag = season_length * ((h + season_length - 1) / season_length);
    const int src = T + h - 1 - lag;  // index into the conditioning range
    point[static_cast<std::size_t>(h - 1)] = window.conditioning[static_cast<std::size_t>(src)];
  }
  return pipeline::degenerate_grid(point, pipeline::default_quantiles());
}

int default_season_length(Freq freq) { return freq == Freq::Hourly ? 24 : 7; }

pipeline::Forecaster make_naive_forecaster() {
  return [](const pipeline::SeriesWindow& w, int, std::uint64_t) {
    return naive_forecast(w, static_cast<int>(w.covariates.cols()) - w.n_conditioning());
  };
}

pipeline::Forecaster make_seasonal_naive_forecaster(int season_length) {
  return [season_length](const pipeline::SeriesWindow& w, int, std::uint64_t) {
    return seasonal_naive_forecast(w, static_cast<int>(w.covariates.cols()) - w.n_conditioning(),
                                   season_length);
  };
}

}  // namespace c2far::baselines
