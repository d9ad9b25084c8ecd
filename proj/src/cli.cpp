#include "c2far/cli.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>

#include <CLI11.hpp>

#include "c2far/baselines.hpp"
#include "c2far/data.hpp"
#include "c2far/metrics.hpp"
#include "c2far/model.hpp"
#include "c2far/tune.hpp"

namespace c2far::cli {

namespace {

std::vector<double> parse_csv_doubles(const std::string& s, const std::string& flag) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t pos = 0;
      out.push_back(std::stod(item, &pos));
      if (pos != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw UsageError("cannot parse " + flag + " value '" + item + "'");
    }
  }
  if (out.empty()) throw UsageError(flag + " needs at least one value");
  return out;
}

std::vector<int> parse_csv_ints(const std::string& s, const std::string& flag) {
  std::vector<int> out;
  for (double v : parse_csv_doubles(s, flag)) {
    if (v != static_cast<int>(v)) throw UsageError(flag + " expects integers");
    out.push_back(static_cast<int>(v));
  }
  return out;
}

void default_window_lengths(Freq freq, int& T, int& N) {
  if (T < 0) T = freq == Freq::Hourly ? 168 : 30;
  if (N < 0) N = freq == Freq::Hourly ? 24 : 30;
}

struct Dataset {
  data::SeriesSet set;
  std::vector<data::SeriesSplit> splits;
  Freq freq = Freq::Hourly;
  int T = 0;
  int N = 0;
};

Dataset load_dataset(const CommandConfig& cfg, int T_override = -1, int N_override = -1) {
  Dataset d;
  d.set = data::load_jsonl(cfg.data_path);
  if (d.set.empty()) throw InputError("dataset is empty: " + cfg.data_path);
  d.freq = d.set[0].freq;
  for (const data::Series& s : d.set) {
    if (s.freq != d.freq) throw InputError("mixed frequencies in dataset");
  }
  d.splits = data::split(d.set, {cfg.val_points, cfg.test_points});
  d.T = cfg.cond >= 0 ? cfg.cond : T_override;
  d.N = cfg.horizon >= 0 ? cfg.horizon : N_override;
  default_window_lengths(d.freq, d.T, d.N);
  return d;
}

pipeline::Segment parse_segment(const std::string& s) {
  if (s == "test") return pipeline::Segment::Test;
  if (s == "validation") return pipeline::Segment::Validation;
  throw UsageError("unknown segment '" + s + "' (expected test|validation)");
}

void adopt_params(nn::ParamSet<float>& dst, const nn::ParamSet<float>& src) {
  if (dst.names() != src.names()) throw IoError("checkpoint parameters do not match the model");
  for (const auto& name : dst.names()) {
    if (dst.at(name).rows() != src.at(name).rows() || dst.at(name).cols() != src.at(name).cols()) {
      throw IoError("checkpoint parameter shape mismatch: " + name);
    }
    dst.at(name) = src.at(name);
  }
}

model::C2farRnnConfig c2far_config_from(const pipeline::Checkpoint& ck) {
  model::C2farRnnConfig mc;
  mc.binning = hbin::build_spec(ck.bin_levels, ck.extent_lo, ck.extent_hi);
  mc.n_hidden = ck.n_hidden;
  mc.lstm_dropout = ck.lstm_dropout;
  mc.covariate_dim = ck.covariate_dim;
  return mc;
}

model::GaussianRnnConfig gaussian_config_from(const pipeline::Checkpoint& ck) {
  model::GaussianRnnConfig mc;
  mc.n_hidden = ck.n_hidden;
  mc.lstm_dropout = ck.lstm_dropout;
  mc.covariate_dim = ck.covariate_dim;
  return mc;
}

// Builds the checkpointed model and invokes fn(model).
template <typename Fn>
void with_model(const pipeline::Checkpoint& ck, Fn&& fn) {
  if (ck.model_kind == "deepar-gaussian") {
    model::GaussianRnn<float> mdl(gaussian_config_from(ck));
    adopt_params(mdl.params(), ck.params);
    fn(mdl);
  } else {
    model::C2farRnn<float> mdl(c2far_config_from(ck));
    adopt_params(mdl.params(), ck.params);
    fn(mdl);
  }
}

std::filesystem::path out_path(const CommandConfig& cfg, const std::string& file) {
  std::filesystem::create_directories(cfg.out_dir);
  return std::filesystem::path(cfg.out_dir) / file;
}

std::ofstream open_out(const std::filesystem::path& p) {
  std::ofstream out(p);
  if (!out) throw IoError("cannot open " + p.string() + " for writing");
  return out;
}

// ---------------------------------------------------------------------------
// Subcommands.
// ---------------------------------------------------------------------------

int cmd_gen(const CommandConfig& cfg) {
  const Freq freq = parse_freq(cfg.freq);
  const Timestamp start = parse_iso8601(cfg.start);
  data::SeriesSet set;
  if (cfg.gen_kind == "gmm") {
    set = data::gen_gmm(cfg.n_series, cfg.length, cfg.weights, cfg.means, cfg.std_dev, cfg.seed,
                        freq, start);
  } else if (cfg.gen_kind == "discrete-uniform") {
    set = data::gen_discrete_uniform(cfg.n_series, cfg.length, cfg.du_lo, cfg.du_hi, cfg.seed,
                                     freq, start);
  } else {
    throw UsageError("unknown synthetic kind '" + cfg.gen_kind + "'");
  }
  data::save_jsonl(set, cfg.data_path);
  std::cout << "wrote " << set.size() << " series x " << cfg.length << " values to "
            << cfg.data_path << "\n";
  return 0;
}

void write_train_log(const pipeline::TrainResult& result, const std::filesystem::path& p) {
  std::ofstream out = open_out(p);
  out << "checkpoint,train_nll,evaluated,validation_nd\n";
  for (const pipeline::CheckpointRecord& r : result.log) {
    out << r.index << "," << format_double(r.train_nll) << "," << (r.evaluated ? 1 : 0) << ","
        << (r.evaluated ? format_double(r.validation_nd) : "") << "\n";
  }
}

pipeline::Checkpoint make_checkpoint(const std::string& kind, const std::vector<int>& bins,
                                     double extent_lo, double extent_hi, int hidden,
                                     double dropout, int covariate_dim, Freq freq, int T, int N,
                                     const pipeline::TrainResult& result) {
  pipeline::Checkpoint ck;
  ck.model_kind = kind;
  ck.bin_levels = bins;
  ck.extent_lo = extent_lo;
  ck.extent_hi = extent_hi;
  ck.n_hidden = hidden;
  ck.lstm_dropout = dropout;
  ck.covariate_dim = covariate_dim;
  ck.freq = freq_to_string(freq);
  ck.n_conditioning = T;
  ck.n_prediction = N;
  ck.checkpoint_index = result.best_checkpoint;
  ck.best_validation_nd = result.best_validation_nd;
  ck.validation_history = result.validation_history;
  ck.params = result.best_params;
  return ck;
}

int cmd_train(const CommandConfig& cfg) {
  Dataset d = load_dataset(cfg);
  pipeline::TrainSchedule sched = cfg.schedule;
  sched.n_workers = cfg.workers;
  const int cov_dim = data::covariate_dim(d.freq);

  pipeline::TrainResult result;
  if (cfg.model_kind == "deepar-gaussian") {
    model::GaussianRnnConfig mc;
    mc.n_hidden = cfg.hidden;
    mc.lstm_dropout = cfg.dropout;
    mc.covariate_dim = cov_dim;
    model::GaussianRnn<float> mdl(mc);
    mdl.init(cfg.seed);
    result = pipeline::train(mdl, d.set, d.splits, d.T, d.N, sched, cfg.learning_rate,
                             cfg.weight_decay, cfg.seed);
  } else {
    model::C2farRnnConfig mc;
    mc.binning = hbin::build_spec(cfg.bins, cfg.extent_lo, cfg.extent_hi);
    mc.n_hidden = cfg.hidden;
    mc.lstm_dropout = cfg.dropout;
    mc.covariate_dim = cov_dim;
    model::C2farRnn<float> mdl(mc);
    mdl.init(cfg.seed);
    result = pipeline::train(mdl, d.set, d.splits, d.T, d.N, sched, cfg.learning_rate,
                             cfg.weight_decay, cfg.seed);
  }

  const pipeline::Checkpoint ck =
      make_checkpoint(cfg.model_kind, cfg.bins, cfg.extent_lo, cfg.extent_hi, cfg.hidden,
                      cfg.dropout, cov_dim, d.freq, d.T, d.N, result);
  const auto ckpt_path = out_path(cfg, "checkpoint.c2f");
  pipeline::save_checkpoint(ck, ckpt_path.string());
  write_train_log(result, out_path(cfg, "train_log.csv"));
  std::cout << "checkpoints: " << result.checkpoints_run << "  best: " << result.best_checkpoint
            << "  best validation nd: " << format_double(result.best_validation_nd) << "\n"
            << "saved " << ckpt_path.string() << "\n";
  return 0;
}

int cmd_tune(const CommandConfig& cfg) {
  Dataset d = load_dataset(cfg);
  pipeline::TrainSchedule sched = cfg.schedule;
  sched.n_workers = cfg.workers;

  tune::SearchSpace space;
  tune::StudyConfig study;
  study.n_trials = cfg.trials;
  study.seed = cfg.seed;
  study.pruning_warmup_trials = cfg.prune_warmup;
  study.enable_pruning = !cfg.no_prune;
  study.extent_lo = cfg.extent_lo;
  study.extent_hi = cfg.extent_hi;
  study.lstm_dropout = cfg.dropout;

  const tune::ModelKind kind = tune::parse_model_kind(cfg.model_kind);
  const tune::StudyResult result =
      tune::run_study(space, kind, d.set, d.splits, d.T, d.N, sched, study);

  {
    std::ofstream out = open_out(out_path(cfg, "study.jsonl"));
    out << result.log_jsonl();
  }
  const pipeline::Checkpoint ck = make_checkpoint(
      cfg.model_kind, result.best_config.bin_levels, cfg.extent_lo, cfg.extent_hi,
      result.best_config.n_hidden, cfg.dropout, data::covariate_dim(d.freq), d.freq, d.T, d.N,
      result.best_train_result);
  pipeline::save_checkpoint(ck, out_path(cfg, "checkpoint.c2f").string());

  std::cout << "best trial: " << result.best_trial
            << "  nd: " << format_double(result.best_train_result.best_validation_nd) << "\n";
  return 0;
}

pipeline::Forecaster forecaster_for(const CommandConfig& cfg, const Dataset& d,
                                    std::optional<pipeline::Checkpoint>& ck_storage,
                                    std::shared_ptr<void>& model_storage) {
  if (!cfg.checkpoint_path.empty()) {
    if (!ck_storage.has_value()) ck_storage = pipeline::load_checkpoint(cfg.checkpoint_path);
    if (ck_storage->model_kind == "deepar-gaussian") {
      auto mdl = std::make_shared<model::GaussianRnn<float>>(gaussian_config_from(*ck_storage));
      adopt_params(mdl->params(), ck_storage->params);
      model_storage = mdl;
      return pipeline::make_forecaster(*mdl);
    }
    auto mdl = std::make_shared<model::C2farRnn<float>>(c2far_config_from(*ck_storage));
    adopt_params(mdl->params(), ck_storage->params);
    model_storage = mdl;
    return pipeline::make_forecaster(*mdl);
  }
  if (cfg.model_kind == "naive") return baselines::make_naive_forecaster();
  if (cfg.model_kind == "seasonal-naive") {
    const int season = cfg.season > 0 ? cfg.season : baselines::default_season_length(d.freq);
    return baselines::make_seasonal_naive_forecaster(season);
  }
  throw UsageError("evaluate needs --checkpoint or --model naive|seasonal-naive");
}

int cmd_evaluate(const CommandConfig& cfg) {
  std::optional<pipeline::Checkpoint> ck;
  // T/N default to the checkpoint's training geometry when present.
  Dataset d;
  std::shared_ptr<void> model_storage;
  pipeline::Forecaster forecaster;
  if (!cfg.checkpoint_path.empty()) {
    ck = pipeline::load_checkpoint(cfg.checkpoint_path);
    d = load_dataset(cfg, ck->n_conditioning, ck->n_prediction);
  } else {
    d = load_dataset(cfg);
  }
  forecaster = forecaster_for(cfg, d, ck, model_storage);

  pipeline::EvalConfig ec;
  ec.n_rollouts = cfg.rollouts;
  ec.seed = cfg.seed;
  ec.n_workers = cfg.workers;
  metrics::MetricReport report = pipeline::rolling_evaluate(
      forecaster, d.set, d.splits, parse_segment(cfg.segment), d.T, d.N, ec);

  if (cfg.with_nll) {
    if (!ck.has_value()) throw UsageError("--with-nll needs a learned model checkpoint");
    pipeline::WindowSet ws =
        pipeline::segment_windows(d.set, d.splits, parse_segment(cfg.segment), d.T, d.N);
    std::vector<model::ModelWindow> mws;
    mws.reserve(ws.windows.size());
    for (const auto& w : ws.windows) mws.push_back(pipeline::normalize_window(w));
    with_model(*ck, [&](const auto& mdl) {
      report.mean_nll = metrics::nll_eval(mdl, std::span<const model::ModelWindow>(mws));
      report.has_nll = true;
    });
  }

  std::ofstream out = open_out(out_path(cfg, "report.csv"));
  report.write_csv(out);
  std::cout << "nd: " << format_double(report.nd) << "  wql: " << format_double(report.wql)
            << "  points: " << report.n_points << "\n";
  return 0;
}

int cmd_forecast(const CommandConfig& cfg) {
  if (cfg.checkpoint_path.empty()) throw UsageError("forecast needs --checkpoint");
  const pipeline::Checkpoint ck = pipeline::load_checkpoint(cfg.checkpoint_path);
  Dataset d = load_dataset(cfg, ck.n_conditioning, ck.n_prediction);
  pipeline::WindowSet ws =
      pipeline::segment_windows(d.set, d.splits, parse_segment(cfg.segment), d.T, d.N);
  if (ws.windows.empty()) throw InputError("no forecastable windows in segment");

  std::ofstream out = open_out(out_path(cfg, "forecast.csv"));
  out << "window_id,horizon,quantile,value\n";
  with_model(ck, [&](const auto& mdl) {
    for (const pipeline::SeriesWindow& w : ws.windows) {
      const pipeline::ForecastGrid g = pipeline::forecast(mdl, w, cfg.rollouts, cfg.seed);
      for (int h = 0; h < g.horizons(); ++h) {
        for (std::size_t q = 0; q < g.quantiles.size(); ++q) {
          out << w.window_id << "," << (h + 1) << "," << format_double(g.quantiles[q]) << ","
              << format_double(g.values(h, static_cast<Eigen::Index>(q))) << "\n";
        }
      }
    }
  });
  std::cout << "forecast " << ws.windows.size() << " windows x " << d.N << " horizons\n";
  return 0;
}

int cmd_nll_eval(const CommandConfig& cfg) {
  if (cfg.checkpoint_path.empty()) throw UsageError("nll-eval needs --checkpoint");
  const pipeline::Checkpoint ck = pipeline::load_checkpoint(cfg.checkpoint_path);
  Dataset d = load_dataset(cfg, ck.n_conditioning, ck.n_prediction);
  pipeline::WindowSet ws =
      pipeline::segment_windows(d.set, d.splits, parse_segment(cfg.segment), d.T, d.N);
  if (ws.windows.empty()) throw InputError("no evaluation windows in segment");
  std::vector<model::ModelWindow> mws;
  mws.reserve(ws.windows.size());
  for (const auto& w : ws.windows) mws.push_back(pipeline::normalize_window(w));

  double nll = 0.0;
  with_model(ck, [&](const auto& mdl) {
    nll = metrics::nll_eval(mdl, std::span<const model::ModelWindow>(mws));
  });
  std::ofstream out = open_out(out_path(cfg, "nll.csv"));
  out << "metric,scope,horizon,value\nnll,overall,," << format_double(nll) << "\n";
  std::cout << "nll: " << format_double(nll) << " over " << mws.size() << " windows\n";
  return 0;
}

int cmd_plot_data(const CommandConfig& cfg) {
  if (cfg.checkpoint_path.empty()) throw UsageError("plot-data needs --checkpoint");
  const pipeline::Checkpoint ck = pipeline::load_checkpoint(cfg.checkpoint_path);
  if (ck.model_kind == "deepar-gaussian") {
    throw UsageError("plot-data supports binned models only");
  }
  Dataset d = load_dataset(cfg, ck.n_conditioning, ck.n_prediction);
  if (cfg.grid_points < 2) throw UsageError("plot-data needs --grid lo,hi,points");

  int series_index = 0;
  if (!cfg.series_id.empty()) {
    series_index = -1;
    for (std::size_t i = 0; i < d.set.size(); ++i) {
      if (d.set[i].id == cfg.series_id) series_index = static_cast<int>(i);
    }
    if (series_index < 0) throw InputError("series not found: " + cfg.series_id);
  }
  const data::Series& s = d.set[static_cast<std::size_t>(series_index)];
  // Default plotting position: the first test prediction start.
  const int p = cfg.plot_offset >= 0 ? cfg.plot_offset
                                     : d.splits[static_cast<std::size_t>(series_index)].validation_end;
  if (p < d.T) throw InputError("not enough history before the requested offset");
  const pipeline::SeriesWindow w = pipeline::window_at(s, series_index, p - d.T, d.T, d.N);
  const model::ModelWindow mw = pipeline::normalize_window(w);

  model::C2farRnn<float> mdl(c2far_config_from(ck));
  adopt_params(mdl.params(), ck.params);
  const auto st = mdl.encode(mw, 1);
  const VecD cov = w.covariates.col(d.T);

  // Memoized prefix-dependent conditionals over the next-step distribution.
  auto memo = std::make_shared<std::map<std::vector<int>, VecD>>();
  dist::Conditionals cond = [&mdl, &st, &cov, memo](int level, std::span<const int> prefix) {
    std::vector<int> key(prefix.begin(), prefix.end());
    key.push_back(level);
    auto it = memo->find(key);
    if (it != memo->end()) return it->second;
    VecD probs = mdl.peek_level_probs(st, level, prefix, cov);
    memo->emplace(std::move(key), probs);
    return probs;
  };
  const dist::Tails tails = mdl.peek_tails(st, cov);
  const hbin::BinningSpec& spec = mdl.config().binning;

  const double scale = w.scale_max - w.scale_min;
  std::ofstream out = open_out(out_path(cfg, "plot.csv"));
  out << "x,pdf,cdf\n";
  for (int i = 0; i < cfg.grid_points; ++i) {
    const double x =
        cfg.grid_lo + (cfg.grid_hi - cfg.grid_lo) * i / static_cast<double>(cfg.grid_points - 1);
    const double xn = w.normalize(x);
    const double pdf = std::exp(dist::log_prob(spec, cond, tails, xn)) / scale;
    const double cdfv = dist::cdf(spec, cond, tails, xn);
    out << format_double(x) << "," << format_double(pdf) << "," << format_double(cdfv) << "\n";
  }
  std::cout << "wrote distribution grid for " << s.id << " at offset " << p << "\n";
  return 0;
}

}  // namespace

CommandConfig parse(const std::vector<std::string>& args) {
  CommandConfig cfg;
  if (const char* env = std::getenv("C2FAR_OUTPUT_DIR")) cfg.out_dir = env;

  CLI::App app{"coarse-to-fine autoregressive probabilistic forecasting"};
  app.require_subcommand(1);
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  app.set_config("--config");

  std::string bins_str, extent_str, weights_str, means_str, grid_str;

  auto add_common = [&](CLI::App* sub) {
    sub->option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
    sub->add_option("--data", cfg.data_path, "JSON-lines dataset path")->required();
    sub->add_option("--out", cfg.out_dir, "output directory (env C2FAR_OUTPUT_DIR)");
    sub->add_option("--seed", cfg.seed, "random seed (repeated flag: last wins)");
    sub->add_option("--workers", cfg.workers, "worker threads");
  };
  auto add_split = [&](CLI::App* sub) {
    sub->add_option("--val-points", cfg.val_points, "validation points per series");
    sub->add_option("--test-points", cfg.test_points, "test points per series");
    sub->add_option("--cond", cfg.cond, "conditioning range length");
    sub->add_option("--horizon", cfg.horizon, "prediction range length");
  };
  auto add_schedule = [&](CLI::App* sub) {
    sub->add_option("--batch-size", cfg.schedule.train_batch_size, "training batch size");
    sub->add_option("--ranges-per-checkpoint", cfg.schedule.ranges_per_checkpoint,
                    "training windows per checkpoint");
    sub->add_option("--eval-period", cfg.schedule.validation_eval_period,
                    "checkpoints per validation evaluation");
    sub->add_option("--eval-warmup", cfg.schedule.validation_warmup,
                    "checkpoints before the first evaluation");
    sub->add_option("--stop-evals", cfg.schedule.stop_evals_no_improve,
                    "evaluations without improvement before stopping");
    sub->add_option("--max-checkpoints", cfg.schedule.max_checkpoints, "checkpoint cap");
    sub->add_option("--val-rollouts", cfg.schedule.validation_rollouts,
                    "rollouts per validation forecast");
    sub->add_option("--max-val-windows", cfg.schedule.max_validation_windows,
                    "validation window cap");
  };

  CLI::App* gen = app.add_subcommand("gen-synthetic", "generate a synthetic dataset");
  add_common(gen);
  gen->add_option("--kind", cfg.gen_kind, "gmm | discrete-uniform");
  gen->add_option("--n-series", cfg.n_series, "number of series");
  gen->add_option("--length", cfg.length, "values per series");
  gen->add_option("--weights", weights_str, "mixture weights w1,w2,...");
  gen->add_option("--means", means_str, "mixture means m1,m2,...");
  gen->add_option("--std", cfg.std_dev, "mixture component std");
  gen->add_option("--lo", cfg.du_lo, "discrete uniform lower bound");
  gen->add_option("--hi", cfg.du_hi, "discrete uniform upper bound");
  gen->add_option("--freq", cfg.freq, "H | D");
  gen->add_option("--start", cfg.start, "first timestamp (ISO-8601)");

  CLI::App* train = app.add_subcommand("train", "train a forecaster");
  add_common(train);
  add_split(train);
  add_schedule(train);
  train->add_option("--model", cfg.model_kind, "c2far-b1|c2far-b2|c2far-b3|deepar-gaussian")
      ->required();
  train->add_option("--bins", bins_str, "bins per level, e.g. 12,35");
  train->add_option("--extent", extent_str, "binning extent lo,hi (normalized domain)");
  train->add_option("--hidden", cfg.hidden, "LSTM hidden units");
  train->add_option("--lr", cfg.learning_rate, "learning rate");
  train->add_option("--wd", cfg.weight_decay, "weight decay");
  train->add_option("--dropout", cfg.dropout, "intra-layer LSTM dropout");

  CLI::App* tune_cmd = app.add_subcommand("tune", "random hyperparameter search");
  add_common(tune_cmd);
  add_split(tune_cmd);
  add_schedule(tune_cmd);
  tune_cmd->add_option("--model", cfg.model_kind, "model kind to tune")->required();
  tune_cmd->add_option("--trials", cfg.trials, "number of tuning trials");
  tune_cmd->add_option("--extent", extent_str, "binning extent lo,hi");
  tune_cmd->add_option("--dropout", cfg.dropout, "intra-layer LSTM dropout");
  tune_cmd->add_option("--prune-warmup", cfg.prune_warmup, "trials before pruning activates");
  tune_cmd->add_flag("--no-prune", cfg.no_prune, "disable median pruning");

  CLI::App* fc = app.add_subcommand("forecast", "write forecast quantile grids");
  add_common(fc);
  add_split(fc);
  fc->add_option("--checkpoint", cfg.checkpoint_path, "model checkpoint")->required();
  fc->add_option("--rollouts", cfg.rollouts, "Monte Carlo rollouts");
  fc->add_option("--segment", cfg.segment, "test | validation");

  CLI::App* ev = app.add_subcommand("evaluate", "rolling evaluation with the metric suite");
  add_common(ev);
  add_split(ev);
  ev->add_option("--model", cfg.model_kind, "naive | seasonal-naive (or use --checkpoint)");
  ev->add_option("--checkpoint", cfg.checkpoint_path, "learned model checkpoint");
  ev->add_option("--rollouts", cfg.rollouts, "Monte Carlo rollouts");
  ev->add_option("--segment", cfg.segment, "test | validation");
  ev->add_option("--season", cfg.season, "seasonal-naive season length");
  ev->add_flag("--with-nll", cfg.with_nll, "also report teacher-forced NLL");

  CLI::App* nll = app.add_subcommand("nll-eval", "teacher-forced NLL on a segment");
  add_common(nll);
  add_split(nll);
  nll->add_option("--checkpoint", cfg.checkpoint_path, "model checkpoint")->required();
  nll->add_option("--segment", cfg.segment, "test | validation");

  CLI::App* plot = app.add_subcommand("plot-data", "emit pdf/cdf grid for one step");
  add_common(plot);
  add_split(plot);
  plot->add_option("--checkpoint", cfg.checkpoint_path, "model checkpoint")->required();
  plot->add_option("--series", cfg.series_id, "series id (default: first)");
  plot->add_option("--offset", cfg.plot_offset, "prediction start index");
  plot->add_option("--grid", grid_str, "lo,hi,points (raw domain)")->required();

  std::vector<std::string> argv(args.rbegin(), args.rend());  // CLI11 wants reversed
  try {
    app.parse(argv);
  } catch (const CLI::CallForHelp& e) {
    std::cout << app.help() << "\n";
    cfg.subcommand = "help";
    return cfg;
  } catch (const CLI::ParseError& e) {
    throw UsageError(e.what());
  }

  cfg.subcommand = app.get_subcommands().front()->get_name();

  if (!bins_str.empty()) cfg.bins = parse_csv_ints(bins_str, "--bins");
  if (!extent_str.empty()) {
    const auto v = parse_csv_doubles(extent_str, "--extent");
    if (v.size() != 2) throw UsageError("--extent expects lo,hi");
    cfg.extent_lo = v[0];
    cfg.extent_hi = v[1];
  }
  if (!weights_str.empty()) cfg.weights = parse_csv_doubles(weights_str, "--weights");
  if (!means_str.empty()) cfg.means = parse_csv_doubles(means_str, "--means");
  if (!grid_str.empty()) {
    const auto v = parse_csv_doubles(grid_str, "--grid");
    if (v.size() != 3) throw UsageError("--grid expects lo,hi,points");
    cfg.grid_lo = v[0];
    cfg.grid_hi = v[1];
    cfg.grid_points = static_cast<int>(v[2]);
  }

  // Cross-flag consistency.
  if (cfg.subcommand == "train") {
    if (cfg.model_kind == "deepar-gaussian") {
      if (!cfg.bins.empty()) throw UsageError("--bins is not valid for deepar-gaussian");
    } else {
      const int depth = tune::model_depth(tune::parse_model_kind(cfg.model_kind));
      if (static_cast<int>(cfg.bins.size()) != depth) {
        throw UsageError("--bins must list exactly " + std::to_string(depth) +
                         " level counts for " + cfg.model_kind);
      }
    }
  }
  if (cfg.subcommand == "tune") {
    tune::parse_model_kind(cfg.model_kind);  // validates
    if (!cfg.bins.empty()) throw UsageError("tune samples bin counts; --bins is not valid");
  }
  if (cfg.subcommand == "evaluate") {
    if (!cfg.model_kind.empty() && !cfg.checkpoint_path.empty()) {
      throw UsageError("pass either --model <baseline> or --checkpoint, not both");
    }
    if (!cfg.model_kind.empty() && cfg.model_kind != "naive" &&
        cfg.model_kind != "seasonal-naive") {
      throw UsageError("evaluate --model supports naive|seasonal-naive; use --checkpoint for "
                       "learned models");
    }
  }
  return cfg;
}

int run(const CommandConfig& cfg) {
  if (cfg.subcommand == "help") return 0;
  if (cfg.subcommand == "gen-synthetic") return cmd_gen(cfg);
  if (cfg.subcommand == "train") return cmd_train(cfg);
  if (cfg.subcommand == "tune") return cmd_tune(cfg);
  if (cfg.subcommand == "forecast") return cmd_forecast(cfg);
  if (cfg.subcommand == "evaluate") return cmd_evaluate(cfg);
  if (cfg.subcommand == "nll-eval") return cmd_nll_eval(cfg);
  if (cfg.subcommand == "plot-data") return cmd_plot_data(cfg);
  throw UsageError("unknown subcommand: " + cfg.subcommand);
}

}  // namespace c2far::cli
