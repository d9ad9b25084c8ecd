#include "c2far/tune.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <json.hpp>

namespace c2far::tune {

ModelKind parse_model_kind(const std::string& s) {
  if (s == "c2far-b1") return ModelKind::C2farB1;
  if (s == "c2far-b2") return ModelKind::C2farB2;
  if (s == "c2far-b3") return ModelKind::C2farB3;
  if (s == "deepar-gaussian") return ModelKind::DeepArGaussian;
  throw InputError("unknown model kind: " + s);
}

std::string model_kind_name(ModelKind k) {
  switch (k) {
    case ModelKind::C2farB1: return "c2far-b1";
    case ModelKind::C2farB2: return "c2far-b2";
    case ModelKind::C2farB3: return "c2far-b3";
    case ModelKind::DeepArGaussian: return "deepar-gaussian";
  }
  throw InputError("bad model kind");
}

int model_depth(ModelKind k) {
  switch (k) {
    case ModelKind::C2farB1: return 1;
    case ModelKind::C2farB2: return 2;
    case ModelKind::C2farB3: return 3;
    case ModelKind::DeepArGaussian: return 0;
  }
  return 0;
}

namespace {

std::int64_t config_param_count(const SampledConfig& cfg, double extent_lo, double extent_hi,
                                double lstm_dropout, int covariate_dim) {
  if (cfg.kind == ModelKind::DeepArGaussian) {
    model::GaussianRnnConfig g;
    g.n_hidden = cfg.n_hidden;
    g.lstm_dropout = lstm_dropout;
    g.covariate_dim = covariate_dim;
    return model::count_parameters(g);
  }
  model::C2farRnnConfig c;
  c.binning = hbin::BinningSpec{cfg.bin_levels, extent_lo, extent_hi};
  c.n_hidden = cfg.n_hidden;
  c.lstm_dropout = lstm_dropout;
  c.covariate_dim = covariate_dim;
  return model::count_parameters(c);
}

int uniform_int(RandomStream& rng, int lo, int hi) {
  // Plain uniform over the integer range.
  return lo + static_cast<int>(rng.below(static_cast<std::uint64_t>(hi - lo + 1)));
}

double log_uniform(RandomStream& rng, double lo, double hi) {
  return std::exp(rng.uniform(std::log(lo), std::log(hi)));
}

}  // namespace

SampledConfig sample_config(const SearchSpace& space, ModelKind kind, double extent_lo,
                            double extent_hi, double lstm_dropout, int covariate_dim,
                            RandomStream& rng) {
  const int depth = model_depth(kind);
  for (;;) {
    SampledConfig cfg;
    cfg.kind = kind;
    cfg.learning_rate = log_uniform(rng, space.learning_rate_min, space.learning_rate_max);
    cfg.weight_decay = log_uniform(rng, space.weight_decay_min, space.weight_decay_max);
    if (depth == 1) {
      cfg.bin_levels = {uniform_int(rng, space.flat_bins_min, space.flat_bins_max)};
    } else if (depth > 1) {
      for (int i = 0; i < depth; ++i) {
        cfg.bin_levels.push_back(uniform_int(rng, space.level_bins_min, space.level_bins_max));
      }
    }
    // Largest feasible n_hidden under the parameter budget; the count is
    // monotone in n_hidden so a binary search suffices.
    int lo = space.n_hidden_min, hi = space.n_hidden_max;
    cfg.n_hidden = lo;
    if (config_param_count(cfg, extent_lo, extent_hi, lstm_dropout, covariate_dim) >
        space.max_total_params) {
      continue;  // no feasible hidden size for these bin counts; re-draw
    }
    while (lo < hi) {
      const int mid = (lo + hi + 1) / 2;
      cfg.n_hidden = mid;
      if (config_param_count(cfg, extent_lo, extent_hi, lstm_dropout, covariate_dim) <=
          space.max_total_params) {
        lo = mid;
      } else {
        hi = mid - 1;
      }
    }
    const int max_feasible = lo;
    cfg.n_hidden =
        space.n_hidden_min +
        static_cast<int>(rng.below(static_cast<std::uint64_t>(max_feasible - space.n_hidden_min + 1)));
    cfg.param_count = config_param_count(cfg, extent_lo, extent_hi, lstm_dropout, covariate_dim);
    return cfg;
  }
}

std::string TrialRecord::to_jsonl() const {
  nlohmann::json j;
  j["trial"] = trial;
  j["model_kind"] = model_kind_name(config.kind);
  j["bin_levels"] = config.bin_levels;
  j["n_hidden"] = config.n_hidden;
  j["learning_rate"] = config.learning_rate;
  j["weight_decay"] = config.weight_decay;
  j["param_count"] = config.param_count;
  j["eval_nds"] = eval_nds;
  switch (status) {
    case TrialStatus::Completed: j["status"] = "completed"; break;
    case TrialStatus::Pruned: j["status"] = "pruned"; break;
    case TrialStatus::Diverged: j["status"] = "diverged"; break;
  }
  if (status == TrialStatus::Pruned) j["pruned_at_checkpoint"] = pruned_at_checkpoint;
  j["best_nd"] = std::isnan(best_nd) ? nlohmann::json() : nlohmann::json(best_nd);
  return j.dump();
}

std::string StudyResult::log_jsonl() const {
  std::ostringstream out;
  for (const TrialRecord& t : trials) out << t.to_jsonl() << "\n";
  return out.str();
}

namespace {

// Median of prior trials' NDs at a given evaluation index (1-based).
std::optional<double> prior_median_at(const std::vector<TrialRecord>& trials, int eval_index,
                                      int min_count) {
  std::vector<double> vals;
  for (const TrialRecord& t : trials) {
    if (static_cast<int>(t.eval_nds.size()) >= eval_index) {
      vals.push_back(t.eval_nds[static_cast<std::size_t>(eval_index - 1)]);
    }
  }
  if (static_cast<int>(vals.size()) < min_count) return std::nullopt;
  std::sort(vals.begin(), vals.end());
  const std::size_t n = vals.size();
  return n % 2 == 1 ? vals[n / 2] : 0.5 * (vals[n / 2 - 1] + vals[n / 2]);
}

template <typename Model>
pipeline::TrainResult run_one_trial(Model& mdl, const data::SeriesSet& set,
                                    const std::vector<data::SeriesSplit>& splits, int T, int N,
                                    const pipeline::TrainSchedule& sched,
                                    const SampledConfig& cfg, std::uint64_t trial_seed,
                                    const pipeline::EvalObserver& observer) {
  mdl.init(trial_seed);
  return pipeline::train(mdl, set, splits, T, N, sched, cfg.learning_rate, cfg.weight_decay,
                         trial_seed, observer);
}

}  // namespace

StudyResult run_study(const SearchSpace& space, ModelKind kind, const data::SeriesSet& set,
                      const std::vector<data::SeriesSplit>& splits, int T, int N,
                      const pipeline::TrainSchedule& sched, const StudyConfig& study) {
  if (study.n_trials < 1) throw ConfigError("study needs at least one trial");
  if (set.empty()) throw InputError("empty dataset");
  const int covariate_dim = data::covariate_dim(set[0].freq);

  StudyResult result;
  RandomStream sample_rng(mix_seed({study.seed, hash_string("sample")}));
  double best_overall = std::numeric_limits<double>::infinity();

  for (int trial = 0; trial < study.n_trials; ++trial) {
    TrialRecord rec;
    rec.trial = trial;
    rec.config = sample_config(space, kind, study.extent_lo, study.extent_hi, study.lstm_dropout,
                               covariate_dim, sample_rng);
    const std::uint64_t trial_seed = mix_seed({study.seed, static_cast<std::uint64_t>(trial)});

    bool pruned = false;
    auto observer = [&](int eval_index, double nd) {
      rec.eval_nds.push_back(nd);
      if (!study.enable_pruning) return true;
      const auto median = prior_median_at(result.trials, eval_index, study.pruning_warmup_trials);
      if (median.has_value() && nd > *median) {
        pruned = true;
        return false;
      }
      return true;
    };

    pipeline::TrainResult tr;
    try {
      if (kind == ModelKind::DeepArGaussian) {
        model::GaussianRnnConfig mc;
        mc.n_hidden = rec.config.n_hidden;
        mc.lstm_dropout = study.lstm_dropout;
        mc.covariate_dim = covariate_dim;
        model::GaussianRnn<float> mdl(mc);
        tr = run_one_trial(mdl, set, splits, T, N, sched, rec.config, trial_seed, observer);
      } else {
        model::C2farRnnConfig mc;
        mc.binning = hbin::build_spec(rec.config.bin_levels, study.extent_lo, study.extent_hi);
        mc.n_hidden = rec.config.n_hidden;
        mc.lstm_dropout = study.lstm_dropout;
        mc.covariate_dim = covariate_dim;
        model::C2farRnn<float> mdl(mc);
        tr = run_one_trial(mdl, set, splits, T, N, sched, rec.config, trial_seed, observer);
      }
    } catch (const pipeline::TrainingDiverged&) {
      rec.status = TrialStatus::Diverged;
      result.trials.push_back(std::move(rec));
      continue;
    }

    if (pruned) {
      rec.status = TrialStatus::Pruned;
      rec.pruned_at_checkpoint = tr.checkpoints_run;
    }
    rec.best_nd = tr.best_validation_nd;
    if (!std::isnan(rec.best_nd) && rec.best_nd < best_overall) {
      best_overall = rec.best_nd;
      result.best_trial = trial;
      result.best_train_result = std::move(tr);
      result.best_config = rec.config;
    }
    result.trials.push_back(std::move(rec));
  }

  if (result.best_trial < 0) {
    throw InputError("all tuning trials diverged or produced no evaluation");
  }
  return result;
}

}  // namespace c2far::tune
