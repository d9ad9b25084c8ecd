#include "c2far/pipeline.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <cstring>
#include <fstream>
#include <thread>

#include <json.hpp>

namespace c2far::pipeline {

namespace {

const std::array<double, 11> kDefaultQuantiles = {0.005, 0.1, 0.2, 0.3, 0.4, 0.5,
                                                  0.6,   0.7, 0.8, 0.9, 0.995};

bool is_constant(std::span<const double> v) {
  for (std::size_t i = 1; i < v.size(); ++i) {
    if (v[i] != v[0]) return false;
  }
  return true;
}

}  // namespace

SeriesWindow window_at(const data::Series& s, int series_index, int offset, int T, int N) {
  if (offset < 0 || offset + T > static_cast<int>(s.values.size())) {
    throw InputError("window conditioning range out of bounds for series '" + s.id + "'");
  }
  SeriesWindow w;
  w.window_id = s.id + "#" + std::to_string(offset);
  w.series_index = series_index;
  w.offset = offset;
  w.conditioning.assign(s.values.begin() + offset, s.values.begin() + offset + T);
  const int len = static_cast<int>(s.values.size());
  const int pred_avail = std::min(N, len - (offset + T));
  if (pred_avail > 0) {
    w.prediction.assign(s.values.begin() + offset + T,
                        s.values.begin() + offset + T + pred_avail);
  }
  const int dim = data::covariate_dim(s.freq);
  w.covariates.resize(dim, T + N);
  for (int t = 0; t < T + N; ++t) {
    w.covariates.col(t) = data::time_features(advance(s.start, s.freq, offset + t), s.freq);
  }
  auto [mn, mx] = std::minmax_element(w.conditioning.begin(), w.conditioning.end());
  w.scale_min = *mn;
  w.scale_max = *mx;
  return w;
}

namespace {

SeriesWindow build_window(const data::Series& s, int series_index, int offset, int T, int N) {
  return window_at(s, series_index, offset, T, N);
}

void segment_bounds(const data::SeriesSplit& sp, int series_len, Segment seg, int& begin,
                    int& end) {
  if (seg == Segment::Validation) {
    begin = sp.train_end;
    end = sp.validation_end;
  } else {
    begin = sp.validation_end;
    end = series_len;
  }
}

}  // namespace

WindowSet make_windows(const data::SeriesSet& set, int T, int N, int stride) {
  if (T < 1 || N < 0 || stride < 1) throw ConfigError("invalid windowing parameters");
  WindowSet out;
  for (std::size_t i = 0; i < set.size(); ++i) {
    const data::Series& s = set[i];
    const int len = static_cast<int>(s.values.size());
    if (len < T + N) {
      ++out.skipped_short_series;
      continue;
    }
    for (int offset = 0; offset + T + N <= len; offset += stride) {
      SeriesWindow w = build_window(s, static_cast<int>(i), offset, T, N);
      if (is_constant(w.conditioning)) {
        ++out.filtered_constant;
        continue;
      }
      out.windows.push_back(std::move(w));
    }
  }
  return out;
}

WindowSet training_windows(const data::SeriesSet& set,
                           const std::vector<data::SeriesSplit>& splits, int T, int N,
                           int stride) {
  if (set.size() != splits.size()) throw InputError("split table does not match series set");
  WindowSet out;
  for (std::size_t i = 0; i < set.size(); ++i) {
    const data::Series& s = set[i];
    const int train_len = splits[i].train_end;
    if (train_len < T + N) {
      ++out.skipped_short_series;
      continue;
    }
    for (int offset = 0; offset + T + N <= train_len; offset += stride) {
      SeriesWindow w = build_window(s, static_cast<int>(i), offset, T, N);
      if (is_constant(w.conditioning)) {
        ++out.filtered_constant;
        continue;
      }
      out.windows.push_back(std::move(w));
    }
  }
  return out;
}

WindowSet segment_windows(const data::SeriesSet& set, const std::vector<data::SeriesSplit>& splits,
                          Segment segment, int T, int N) {
  if (set.size() != splits.size()) throw InputError("split table does not match series set");
  WindowSet out;
  for (std::size_t i = 0; i < set.size(); ++i) {
    const data::Series& s = set[i];
    const int len = static_cast<int>(s.values.size());
    int seg_begin = 0, seg_end = 0;
    segment_bounds(splits[i], len, segment, seg_begin, seg_end);
    // Prediction range fully inside the segment; conditioning may reach back.
    for (int p = std::max(T, seg_begin); p + N <= seg_end; ++p) {
      SeriesWindow w = build_window(s, static_cast<int>(i), p - T, T, N);
      if (is_constant(w.conditioning)) {
        ++out.filtered_constant;
        continue;
      }
      out.windows.push_back(std::move(w));
    }
  }
  return out;
}

model::ModelWindow normalize_window(const SeriesWindow& w) {
  if (w.scale_max == w.scale_min) {
    throw InputError("constant conditioning range cannot be normalized: " + w.window_id);
  }
  model::ModelWindow mw;
  mw.n_conditioning = w.n_conditioning();
  mw.values.reserve(w.conditioning.size() + w.prediction.size());
  for (double v : w.conditioning) mw.values.push_back(w.normalize(v));
  for (double v : w.prediction) mw.values.push_back(w.normalize(v));
  mw.covariates = w.covariates;
  return mw;
}

std::vector<SeriesWindow> cap_windows(std::vector<SeriesWindow> windows, int cap) {
  if (cap <= 0 || static_cast<int>(windows.size()) <= cap) return windows;
  std::vector<SeriesWindow> out;
  out.reserve(static_cast<std::size_t>(cap));
  const std::size_t n = windows.size();
  for (int i = 0; i < cap; ++i) {
    out.push_back(std::move(windows[static_cast<std::size_t>(i) * n / static_cast<std::size_t>(cap)]));
  }
  return out;
}

std::span<const double> default_quantiles() { return kDefaultQuantiles; }

bool ForecastGrid::has(double q) const {
  for (double x : quantiles) {
    if (std::abs(x - q) < 1e-12) return true;
  }
  return false;
}

double ForecastGrid::at(int horizon, double q) const {
  for (std::size_t i = 0; i < quantiles.size(); ++i) {
    if (std::abs(quantiles[i] - q) < 1e-12) return values(horizon, static_cast<Eigen::Index>(i));
  }
  throw InputError("quantile " + format_double(q) + " not present in forecast grid");
}

ForecastGrid grid_from_samples(const MatD& samples, std::span<const double> quantiles) {
  ForecastGrid g;
  g.quantiles.assign(quantiles.begin(), quantiles.end());
  g.n_rollouts = static_cast<int>(samples.cols());
  g.values.resize(samples.rows(), static_cast<Eigen::Index>(quantiles.size()));
  std::vector<double> row(static_cast<std::size_t>(samples.cols()));
  for (Eigen::Index h = 0; h < samples.rows(); ++h) {
    for (Eigen::Index r = 0; r < samples.cols(); ++r) row[static_cast<std::size_t>(r)] = samples(h, r);
    std::sort(row.begin(), row.end());
    for (std::size_t qi = 0; qi < quantiles.size(); ++qi) {
      const double pos = quantiles[qi] * static_cast<double>(row.size() - 1);
      const std::size_t lo = static_cast<std::size_t>(pos);
      const std::size_t hi = std::min(lo + 1, row.size() - 1);
      const double frac = pos - static_cast<double>(lo);
      g.values(h, static_cast<Eigen::Index>(qi)) = row[lo] + frac * (row[hi] - row[lo]);
    }
  }
  return g;
}

ForecastGrid degenerate_grid(std::span<const double> point, std::span<const double> quantiles) {
  ForecastGrid g;
  g.quantiles.assign(quantiles.begin(), quantiles.end());
  g.n_rollouts = 0;
  g.values.resize(static_cast<Eigen::Index>(point.size()),
                  static_cast<Eigen::Index>(quantiles.size()));
  for (std::size_t h = 0; h < point.size(); ++h) {
    g.values.row(static_cast<Eigen::Index>(h)).setConstant(point[h]);
  }
  return g;
}

// ---------------------------------------------------------------------------
// Rolling evaluation.
// ---------------------------------------------------------------------------

namespace {

struct WindowTask {
  SeriesWindow window;
  int seg_begin = 0;
  int seg_end = 0;
};

struct Sums {
  double abs_err = 0.0;
  double abs_truth = 0.0;
  std::array<double, 9> pinball_sum{};
  std::vector<double> band_width;
  std::vector<double> band_cover;
  std::int64_t points = 0;
  // optional per-horizon
  std::vector<double> h_abs_err, h_abs_truth;
  std::vector<std::array<double, 9>> h_pinball;

  void init(int n_bands, int horizons, bool per_horizon) {
    band_width.assign(static_cast<std::size_t>(n_bands), 0.0);
    band_cover.assign(static_cast<std::size_t>(n_bands), 0.0);
    if (per_horizon) {
      h_abs_err.assign(static_cast<std::size_t>(horizons), 0.0);
      h_abs_truth.assign(static_cast<std::size_t>(horizons), 0.0);
      h_pinball.assign(static_cast<std::size_t>(horizons), {});
    }
  }
};

}  // namespace

metrics::MetricReport rolling_evaluate(const Forecaster& forecaster, const data::SeriesSet& set,
                                       const std::vector<data::SeriesSplit>& splits,
                                       Segment segment, int T, int N, const EvalConfig& cfg) {
  if (set.size() != splits.size()) throw InputError("split table does not match series set");
  const auto alphas = metrics::wql_alphas();

  std::vector<WindowTask> tasks;
  for (std::size_t i = 0; i < set.size(); ++i) {
    const data::Series& s = set[i];
    const int len = static_cast<int>(s.values.size());
    int seg_begin = 0, seg_end = 0;
    segment_bounds(splits[i], len, segment, seg_begin, seg_end);
    if (seg_end <= seg_begin) continue;
    // Prediction starts early enough that every in-segment point is covered
    // at every horizon (history permitting); late windows may have ragged
    // truth tails which simply contribute fewer points.
    const int p_min = std::max(T, seg_begin - N + 1);
    const int p_max = seg_end - 1;
    for (int p = p_min; p <= p_max; ++p) {
      WindowTask task;
      task.window = build_window(s, static_cast<int>(i), p - T, T, N);
      if (is_constant(task.window.conditioning)) continue;
      task.seg_begin = seg_begin;
      task.seg_end = seg_end;
      tasks.push_back(std::move(task));
    }
  }
  if (tasks.empty()) throw InputError("no evaluation windows in segment");

  const int n_bands = static_cast<int>(cfg.bands.size());
  std::vector<Sums> sums(tasks.size());

  auto run_task = [&](std::size_t i) {
    const WindowTask& task = tasks[i];
    const SeriesWindow& w = task.window;
    Sums& s = sums[i];
    s.init(n_bands, N, cfg.per_horizon);
    const ForecastGrid grid = forecaster(w, cfg.n_rollouts, cfg.seed);
    const int p = w.offset + T;
    for (int h = 1; h <= N; ++h) {
      const int q = p + h - 1;
      if (q < task.seg_begin || q >= task.seg_end) continue;
      if (h - 1 >= static_cast<int>(w.prediction.size())) continue;
      const double truth = w.prediction[static_cast<std::size_t>(h - 1)];
      const double median = grid.at(h - 1, 0.5);
      s.abs_err += std::abs(truth - median);
      s.abs_truth += std::abs(truth);
      ++s.points;
      for (std::size_t a = 0; a < alphas.size(); ++a) {
        s.pinball_sum[a] += 2.0 * metrics::pinball(alphas[a], grid.at(h - 1, alphas[a]), truth);
      }
      for (int b = 0; b < n_bands; ++b) {
        const double lo = grid.at(h - 1, cfg.bands[static_cast<std::size_t>(b)].first);
        const double hi = grid.at(h - 1, cfg.bands[static_cast<std::size_t>(b)].second);
        if (lo < truth && truth <= hi) s.band_cover[static_cast<std::size_t>(b)] += 1.0;
        s.band_width[static_cast<std::size_t>(b)] += std::abs(hi - lo);
      }
      if (cfg.per_horizon) {
        s.h_abs_err[static_cast<std::size_t>(h - 1)] += std::abs(truth - median);
        s.h_abs_truth[static_cast<std::size_t>(h - 1)] += std::abs(truth);
        for (std::size_t a = 0; a < alphas.size(); ++a) {
          s.h_pinball[static_cast<std::size_t>(h - 1)][a] +=
              2.0 * metrics::pinball(alphas[a], grid.at(h - 1, alphas[a]), truth);
        }
      }
    }
  };

  const int workers = std::max(1, std::min<int>(cfg.n_workers, static_cast<int>(tasks.size())));
  if (workers == 1) {
    for (std::size_t i = 0; i < tasks.size(); ++i) run_task(i);
  } else {
    std::vector<std::thread> pool;
    std::atomic<std::size_t> next{0};
    for (int w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t i = next.fetch_add(1); i < tasks.size(); i = next.fetch_add(1)) {
          run_task(i);
        }
      });
    }
    for (auto& t : pool) t.join();
  }

  // Ordered reduction.
  Sums total;
  total.init(n_bands, N, cfg.per_horizon);
  for (const Sums& s : sums) {
    total.abs_err += s.abs_err;
    total.abs_truth += s.abs_truth;
    total.points += s.points;
    for (std::size_t a = 0; a < alphas.size(); ++a) total.pinball_sum[a] += s.pinball_sum[a];
    for (int b = 0; b < n_bands; ++b) {
      total.band_width[static_cast<std::size_t>(b)] += s.band_width[static_cast<std::size_t>(b)];
      total.band_cover[static_cast<std::size_t>(b)] += s.band_cover[static_cast<std::size_t>(b)];
    }
    if (cfg.per_horizon) {
      for (int h = 0; h < N; ++h) {
        total.h_abs_err[static_cast<std::size_t>(h)] += s.h_abs_err[static_cast<std::size_t>(h)];
        total.h_abs_truth[static_cast<std::size_t>(h)] += s.h_abs_truth[static_cast<std::size_t>(h)];
        for (std::size_t a = 0; a < alphas.size(); ++a) {
          total.h_pinball[static_cast<std::size_t>(h)][a] +=
              s.h_pinball[static_cast<std::size_t>(h)][a];
        }
      }
    }
  }
  if (total.abs_truth == 0.0) throw InputError("evaluation denominator is zero");

  metrics::MetricReport report;
  report.n_points = total.points;
  report.nd = total.abs_err / total.abs_truth;
  double wql_sum = 0.0;
  for (std::size_t a = 0; a < alphas.size(); ++a) {
    const double ql = total.pinball_sum[a] / total.abs_truth;
    report.ql.emplace_back(alphas[a], ql);
    wql_sum += ql;
  }
  report.wql = wql_sum / static_cast<double>(alphas.size());
  for (int b = 0; b < n_bands; ++b) {
    metrics::BandScore bs;
    bs.q_lo = cfg.bands[static_cast<std::size_t>(b)].first;
    bs.q_hi = cfg.bands[static_cast<std::size_t>(b)].second;
    bs.coverage = total.band_cover[static_cast<std::size_t>(b)] / static_cast<double>(total.points);
    bs.sharpness = total.band_width[static_cast<std::size_t>(b)] / total.abs_truth;
    report.bands.push_back(bs);
  }
  if (cfg.per_horizon) {
    report.nd_per_horizon.resize(static_cast<std::size_t>(N));
    report.wql_per_horizon.resize(static_cast<std::size_t>(N));
    for (int h = 0; h < N; ++h) {
      const double den = total.h_abs_truth[static_cast<std::size_t>(h)];
      double nd_h = std::numeric_limits<double>::quiet_NaN();
      double wql_h = std::numeric_limits<double>::quiet_NaN();
      if (den > 0.0) {
        nd_h = total.h_abs_err[static_cast<std::size_t>(h)] / den;
        double acc = 0.0;
        for (std::size_t a = 0; a < alphas.size(); ++a) {
          acc += total.h_pinball[static_cast<std::size_t>(h)][a] / den;
        }
        wql_h = acc / static_cast<double>(alphas.size());
      }
      report.nd_per_horizon[static_cast<std::size_t>(h)] = nd_h;
      report.wql_per_horizon[static_cast<std::size_t>(h)] = wql_h;
    }
  }
  return report;
}

// ---------------------------------------------------------------------------
// Checkpoints.
// ---------------------------------------------------------------------------

namespace {
constexpr char kMagic[8] = {'C', '2', 'F', 'C', 'K', 'P', 'T', '1'};
}

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  nlohmann::json j;
  j["format_version"] = ckpt.format_version;
  j["model_kind"] = ckpt.model_kind;
  j["bin_levels"] = ckpt.bin_levels;
  j["extent_lo"] = ckpt.extent_lo;
  j["extent_hi"] = ckpt.extent_hi;
  j["n_hidden"] = ckpt.n_hidden;
  j["lstm_dropout"] = ckpt.lstm_dropout;
  j["covariate_dim"] = ckpt.covariate_dim;
  j["freq"] = ckpt.freq;
  j["n_conditioning"] = ckpt.n_conditioning;
  j["n_prediction"] = ckpt.n_prediction;
  j["checkpoint_index"] = ckpt.checkpoint_index;
  j["best_validation_nd"] = ckpt.best_validation_nd;
  nlohmann::json hist = nlohmann::json::array();
  for (const auto& [c, nd] : ckpt.validation_history) hist.push_back({{"checkpoint", c}, {"nd", nd}});
  j["validation_history"] = hist;
  nlohmann::json params = nlohmann::json::array();
  for (const auto& name : ckpt.params.names()) {
    const MatF& m = ckpt.params.at(name);
    params.push_back({{"name", name}, {"rows", m.rows()}, {"cols", m.cols()}});
  }
  j["params"] = params;

  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path + " for writing");
  const std::string manifest = j.dump();
  out.write(kMagic, sizeof(kMagic));
  const std::uint64_t len = manifest.size();
  out.write(reinterpret_cast<const char*>(&len), sizeof(len));
  out.write(manifest.data(), static_cast<std::streamsize>(manifest.size()));
  for (const auto& name : ckpt.params.names()) {
    const MatF& m = ckpt.params.at(name);
    out.write(reinterpret_cast<const char*>(m.data()),
              static_cast<std::streamsize>(sizeof(float) * static_cast<std::size_t>(m.size())));
  }
  if (!out) throw IoError("write failed: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw IoError(path + " is not a checkpoint file");
  }
  std::uint64_t len = 0;
  in.read(reinterpret_cast<char*>(&len), sizeof(len));
  std::string manifest(len, '\0');
  in.read(manifest.data(), static_cast<std::streamsize>(len));
  if (!in) throw IoError("truncated checkpoint manifest: " + path);
  nlohmann::json j = nlohmann::json::parse(manifest);

  Checkpoint ckpt;
  ckpt.format_version = j.at("format_version").get<int>();
  if (ckpt.format_version != 1) throw IoError("unsupported checkpoint format version");
  ckpt.model_kind = j.at("model_kind").get<std::string>();
  ckpt.bin_levels = j.at("bin_levels").get<std::vector<int>>();
  ckpt.extent_lo = j.at("extent_lo").get<double>();
  ckpt.extent_hi = j.at("extent_hi").get<double>();
  ckpt.n_hidden = j.at("n_hidden").get<int>();
  ckpt.lstm_dropout = j.at("lstm_dropout").get<double>();
  ckpt.covariate_dim = j.at("covariate_dim").get<int>();
  ckpt.freq = j.at("freq").get<std::string>();
  ckpt.n_conditioning = j.at("n_conditioning").get<int>();
  ckpt.n_prediction = j.at("n_prediction").get<int>();
  ckpt.checkpoint_index = j.at("checkpoint_index").get<int>();
  ckpt.best_validation_nd = j.at("best_validation_nd").is_null()
                                ? std::numeric_limits<double>::quiet_NaN()
                                : j.at("best_validation_nd").get<double>();
  for (const auto& h : j.at("validation_history")) {
    ckpt.validation_history.emplace_back(h.at("checkpoint").get<int>(), h.at("nd").get<double>());
  }
  for (const auto& p : j.at("params")) {
    MatF& m = ckpt.params.add(p.at("name").get<std::string>(), p.at("rows").get<Eigen::Index>(),
                              p.at("cols").get<Eigen::Index>());
    in.read(reinterpret_cast<char*>(m.data()),
            static_cast<std::streamsize>(sizeof(float) * static_cast<std::size_t>(m.size())));
  }
  if (!in) throw IoError("truncated checkpoint parameters: " + path);
  return ckpt;
}

}  // namespace c2far::pipeline
