#pragma once

#include "c2far/pipeline.hpp"
#include "c2far/timeutil.hpp"

namespace c2far::baselines {

// Point forecast = last conditioning value at every horizon; all quantiles
// collapse to the point (degenerate grid).
pipeline::ForecastGrid naive_forecast(const pipeline::SeriesWindow& window, int n_horizons);

// Horizon h repeats the most recent conditioning value whose seasonal phase
// matches, i.e. the value season_length * ceil(h / season_length) steps back
// from T + h. Requires conditioning length >= season_length.
pipeline::ForecastGrid seasonal_naive_forecast(const pipeline::SeriesWindow& window,
                                               int n_horizons, int season_length);

// Season length used throughout: 24 for hourly data, 7 for daily.
int default_season_length(Freq freq);

pipeline::Forecaster make_naive_forecaster();
pipeline::Forecaster make_seasonal_naive_forecaster(int season_length);

}  // namespace c2far::baselines
