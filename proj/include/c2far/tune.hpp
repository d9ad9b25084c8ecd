#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "c2far/data.hpp"
#include "c2far/model.hpp"
#include "c2far/pipeline.hpp"

namespace c2far::tune {

// Supported tunable model kinds.
enum class ModelKind { C2farB1, C2farB2, C2farB3, DeepArGaussian };

ModelKind parse_model_kind(const std::string& s);
std::string model_kind_name(ModelKind k);
int model_depth(ModelKind k);  // 0 for the gaussian baseline

// Search ranges, with random (uniform / log-uniform) sampling.
struct SearchSpace {
  int n_hidden_min = 16;
  int n_hidden_max = 288;
  double learning_rate_min = 1e-5;
  double learning_rate_max = 1e-1;
  double weight_decay_min = 1e-7;
  double weight_decay_max = 1e-2;
  int flat_bins_min = 4;
  int flat_bins_max = 1024;       // single-level models
  int level_bins_min = 4;
  int level_bins_max = 128;       // per level of multi-level models
  std::int64_t max_total_params = 1'000'000;
};

struct SampledConfig {
  ModelKind kind = ModelKind::C2farB1;
  std::vector<int> bin_levels;  // empty for the gaussian baseline
  int n_hidden = 0;
  double learning_rate = 0.0;
  double weight_decay = 0.0;
  std::int64_t param_count = 0;
};

// Draws bin counts and rates from the declared distributions, then draws
// n_hidden uniformly from [min, H*] where H* is the largest hidden size
// keeping the parameter count within budget for the drawn bin counts.
// Re-draws bin counts when no feasible n_hidden >= min exists.
SampledConfig sample_config(const SearchSpace& space, ModelKind kind, double extent_lo,
                            double extent_hi, double lstm_dropout, int covariate_dim,
                            RandomStream& rng);

enum class TrialStatus { Completed, Pruned, Diverged };

struct TrialRecord {
  int trial = 0;
  SampledConfig config;
  std::vector<double> eval_nds;  // validation ND at evaluation 1, 2, ...
  TrialStatus status = TrialStatus::Completed;
  int pruned_at_checkpoint = -1;  // checkpoint index where the trial was cut
  double best_nd = std::numeric_limits<double>::quiet_NaN();

  std::string to_jsonl() const;
};

struct StudyConfig {
  int n_trials = 100;
  std::uint64_t seed = 0;
  // Median pruning: a trial is cut when its ND at evaluation k is above the
  // median of prior trials' NDs at evaluation k. Disabled until this many
  // prior trials have reached evaluation k.
  int pruning_warmup_trials = 5;
  bool enable_pruning = true;
  double extent_lo = -0.01;
  double extent_hi = 1.01;
  double lstm_dropout = 1e-3;
};

struct StudyResult {
  std::vector<TrialRecord> trials;
  int best_trial = -1;  // index into trials
  pipeline::TrainResult best_train_result;
  SampledConfig best_config;

  std::string log_jsonl() const;  // one TrialRecord per line
};

// Runs the budgeted random search sequentially: one training run per trial
// with median pruning via the validation-evaluation observer. Throws when
// every trial diverges.
StudyResult run_study(const SearchSpace& space, ModelKind kind, const data::SeriesSet& set,
                      const std::vector<data::SeriesSplit>& splits, int T, int N,
                      const pipeline::TrainSchedule& sched, const StudyConfig& study);

}  // namespace c2far::tune
