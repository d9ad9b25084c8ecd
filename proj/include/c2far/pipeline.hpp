#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "c2far/common.hpp"
#include "c2far/data.hpp"
#include "c2far/metrics.hpp"
#include "c2far/model.hpp"
#include "c2far/neural.hpp"
#include "c2far/rng.hpp"

namespace c2far::pipeline {

// ---------------------------------------------------------------------------
// Windows.
// ---------------------------------------------------------------------------

// One training/forecast instance, in the raw (unnormalized) domain. The
// scaler is the min/max of the conditioning range.
struct SeriesWindow {
  std::string window_id;  // "<series_id>#<offset>"
  int series_index = -1;
  int offset = 0;  // index of the first conditioning point within the series
  std::vector<double> conditioning;
  std::vector<double> prediction;  // empty at pure forecast time
  MatD covariates;                 // covariate_dim x (T + N)
  double scale_min = 0.0;
  double scale_max = 0.0;

  int n_conditioning() const { return static_cast<int>(conditioning.size()); }

  double normalize(double v) const { return (v - scale_min) / (scale_max - scale_min); }
  double unnormalize(double v) const { return v * (scale_max - scale_min) + scale_min; }
};

struct WindowSet {
  std::vector<SeriesWindow> windows;
  int skipped_short_series = 0;   // series shorter than T + N
  int filtered_constant = 0;      // windows dropped for constant conditioning
};

// All windows of length T+N at the given stride, over full series.
// Windows with constant conditioning ranges are dropped.
WindowSet make_windows(const data::SeriesSet& set, int T, int N, int stride);

// One window whose conditioning range starts at `offset`. Prediction truths
// are clipped to the available data; covariates always span T + N steps.
SeriesWindow window_at(const data::Series& s, int series_index, int offset, int T, int N);

enum class Segment { Validation, Test };

// Windows whose prediction range lies fully inside the chosen split segment
// (conditioning may reach into earlier data), stride 1.
WindowSet segment_windows(const data::SeriesSet& set, const std::vector<data::SeriesSplit>& splits,
                          Segment segment, int T, int N);

// Windows whose full span lies inside the training region, at the given stride.
WindowSet training_windows(const data::SeriesSet& set,
                           const std::vector<data::SeriesSplit>& splits, int T, int N,
                           int stride = 1);

// Min-max normalization into the model-facing form. Throws when the
// conditioning range is constant (should have been filtered upstream).
model::ModelWindow normalize_window(const SeriesWindow& w);

// Evenly subsample `windows` down to at most `cap` entries (deterministic).
std::vector<SeriesWindow> cap_windows(std::vector<SeriesWindow> windows, int cap);

// ---------------------------------------------------------------------------
// Forecast grids.
// ---------------------------------------------------------------------------

// Default forecast quantiles: extremes for Cov99, the nine wQL levels
// (including the median), i.e. {0.005, 0.1, ..., 0.9, 0.995}.
std::span<const double> default_quantiles();

struct ForecastGrid {
  std::vector<double> quantiles;  // ascending
  MatD values;                    // n_horizons x n_quantiles, per-row non-decreasing
  int n_rollouts = 0;

  int horizons() const { return static_cast<int>(values.rows()); }
  bool has(double q) const;
  // Value at an exact quantile level; throws InputError when missing.
  double at(int horizon, double q) const;
};

// Empirical per-horizon quantiles of `samples` (horizons x rollouts), linear
// interpolation between order statistics.
ForecastGrid grid_from_samples(const MatD& samples, std::span<const double> quantiles);

// Grid whose every quantile equals the given per-horizon point forecast.
ForecastGrid degenerate_grid(std::span<const double> point, std::span<const double> quantiles);

// A forecaster maps a window to a quantile grid. Rollout randomness must be
// keyed by (seed, window id, rollout index) so results are independent of
// scheduling.
using Forecaster =
    std::function<ForecastGrid(const SeriesWindow&, int n_rollouts, std::uint64_t seed)>;

// Monte Carlo forecast: encode the conditioning range, draw n_rollouts
// independent trajectories, unnormalize with the window scaler, and reduce to
// quantiles.
template <typename Model>
ForecastGrid forecast(const Model& mdl, const SeriesWindow& window, int n_rollouts,
                      std::uint64_t seed, std::span<const double> quantiles = {}) {
  if (n_rollouts < 1) throw InputError("n_rollouts must be >= 1");
  if (quantiles.empty()) quantiles = default_quantiles();
  const model::ModelWindow mw = normalize_window(window);
  const int T = mw.n_conditioning;
  const int N = static_cast<int>(window.covariates.cols()) - T;
  if (N <= 0) throw InputError("window has no horizon to forecast");

  auto st = mdl.encode(mw, n_rollouts);
  std::vector<RandomStream> rngs;
  rngs.reserve(static_cast<std::size_t>(n_rollouts));
  const std::uint64_t wkey = hash_string(window.window_id);
  for (int r = 0; r < n_rollouts; ++r) {
    rngs.emplace_back(mix_seed({seed, wkey, static_cast<std::uint64_t>(r)}));
  }
  MatD samples(N, n_rollouts);
  std::vector<double> vals;
  for (int h = 0; h < N; ++h) {
    const VecD cov = window.covariates.col(T + h);
    mdl.sample_step(st, cov, std::span<RandomStream>(rngs), vals);
    for (int r = 0; r < n_rollouts; ++r) {
      samples(h, r) = window.unnormalize(vals[static_cast<std::size_t>(r)]);
    }
  }
  ForecastGrid g = grid_from_samples(samples, quantiles);
  g.n_rollouts = n_rollouts;
  return g;
}

template <typename Model>
Forecaster make_forecaster(const Model& mdl) {
  return [&mdl](const SeriesWindow& w, int n_rollouts, std::uint64_t seed) {
    return forecast(mdl, w, n_rollouts, seed);
  };
}

// ---------------------------------------------------------------------------
// Training.
// ---------------------------------------------------------------------------

// Fixed training/evaluation schedule. Defaults follow the reference study;
// override for desk-scale runs.
struct TrainSchedule {
  int train_batch_size = 1024;
  int ranges_per_checkpoint = 32768;
  int validation_eval_period = 2;  // checkpoints per validation evaluation
  int validation_warmup = 11;      // checkpoints before the first evaluation
  int stop_evals_no_improve = 37;
  int max_checkpoints = 750;
  int validation_rollouts = 25;
  int test_rollouts = 500;
  int max_validation_windows = 32768;
  int n_workers = 1;
};

class TrainingDiverged : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct CheckpointRecord {
  int index = 0;
  double train_nll = 0.0;
  bool evaluated = false;
  double validation_nd = std::numeric_limits<double>::quiet_NaN();
};

struct TrainResult {
  nn::ParamSet<float> best_params;
  int best_checkpoint = -1;
  double best_validation_nd = std::numeric_limits<double>::quiet_NaN();
  std::vector<CheckpointRecord> log;
  std::vector<std::pair<int, double>> validation_history;  // (checkpoint, nd)
  int checkpoints_run = 0;
  int evals_run = 0;
  bool stopped_by_observer = false;
};

// Called after each validation evaluation; returning false stops the run
// (used for trial pruning).
using EvalObserver = std::function<bool(int eval_index, double validation_nd)>;

namespace detail {

// Deterministic multi-worker forward/backward over fixed column chunks.
// Gradients are reduced in chunk order, so results do not depend on the
// worker count or scheduling.
template <typename Model>
double batch_forward_backward(const Model& mdl, std::span<const model::ModelWindow> batch,
                              std::uint64_t dropout_seed, int n_workers,
                              nn::ParamSet<float>& grads);

// Pooled validation ND over capped stride-1 validation windows.
template <typename Model>
double validation_nd(const Model& mdl, const std::vector<SeriesWindow>& val_windows,
                     int n_rollouts, std::uint64_t seed, int n_workers);

}  // namespace detail

template <typename Model>
TrainResult train(Model& mdl, const data::SeriesSet& set,
                  const std::vector<data::SeriesSplit>& splits, int T, int N,
                  const TrainSchedule& sched, double learning_rate, double weight_decay,
                  std::uint64_t seed, const EvalObserver& observer = {});

// ---------------------------------------------------------------------------
// Rolling evaluation.
// ---------------------------------------------------------------------------

struct EvalConfig {
  int n_rollouts = 500;
  std::vector<std::pair<double, double>> bands = {{0.1, 0.9}, {0.005, 0.995}};
  bool per_horizon = true;
  std::uint64_t seed = 0;
  int n_workers = 1;
};

// Stride-1 rolling evaluation over a split segment: prediction ranges slide
// one step at a time, starting early enough that every in-segment point is
// forecast once at every horizon (history permitting); only in-segment
// points enter the sums.
metrics::MetricReport rolling_evaluate(const Forecaster& forecaster, const data::SeriesSet& set,
                                       const std::vector<data::SeriesSplit>& splits,
                                       Segment segment, int T, int N, const EvalConfig& cfg);

// ---------------------------------------------------------------------------
// Checkpoints.
//
// Single-file format: 8-byte magic "C2FCKPT1", a little-endian u64 JSON
// manifest length, the manifest (format version, model kind, configuration,
// schedule position, validation history, parameter table of name/rows/cols),
// then each parameter array as little-endian float32 in column-major order,
// in manifest order.
// ---------------------------------------------------------------------------

struct Checkpoint {
  int format_version = 1;
  std::string model_kind;       // "c2far-b<B>" or "deepar-gaussian"
  std::vector<int> bin_levels;  // empty for gaussian
  double extent_lo = 0.0;
  double extent_hi = 0.0;
  int n_hidden = 0;
  double lstm_dropout = 0.0;
  int covariate_dim = 2;
  std::string freq = "H";
  int n_conditioning = 0;
  int n_prediction = 0;
  int checkpoint_index = -1;
  double best_validation_nd = std::numeric_limits<double>::quiet_NaN();
  std::vector<std::pair<int, double>> validation_history;
  nn::ParamSet<float> params;
};

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace c2far::pipeline

#include "c2far/pipeline_impl.hpp"
