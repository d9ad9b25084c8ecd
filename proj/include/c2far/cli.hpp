#pragma once

#include <string>
#include <vector>

#include "c2far/pipeline.hpp"

namespace c2far::cli {

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Parsed command line. One subcommand per invocation; flags may also come
// from an INI config file (--config), with command-line flags taking
// precedence. Repeated single-value flags keep the last occurrence.
struct CommandConfig {
  std::string subcommand;

  // io
  std::string data_path;
  std::string out_dir = ".";
  std::string checkpoint_path;
  std::uint64_t seed = 0;
  int workers = 1;

  // model
  std::string model_kind;
  std::vector<int> bins;
  double extent_lo = -0.01;
  double extent_hi = 1.01;
  int hidden = 64;
  double learning_rate = 1e-3;
  double weight_decay = 0.0;
  double dropout = 1e-3;

  // windowing / split
  int cond = -1;     // -1: frequency default (168 hourly / 30 daily)
  int horizon = -1;  // -1: frequency default (24 hourly / 30 daily)
  int val_points = 0;
  int test_points = 0;

  pipeline::TrainSchedule schedule;

  // gen-synthetic
  std::string gen_kind = "gmm";
  int n_series = 50;
  int length = 2000;
  std::vector<double> weights = {0.3, 0.4, 0.3};
  std::vector<double> means = {-3.0, 0.0, 3.0};
  double std_dev = 0.4;
  int du_lo = 1;
  int du_hi = 10;
  std::string freq = "H";
  std::string start = "2024-01-01T00:00:00";

  // tune
  int trials = 100;
  int prune_warmup = 5;
  bool no_prune = false;

  // forecast / evaluate
  int rollouts = 500;
  std::string segment = "test";
  int season = -1;  // -1: frequency default (24 hourly / 7 daily)
  bool with_nll = false;

  // plot-data
  std::string series_id;
  int plot_offset = -1;
  double grid_lo = 0.0;
  double grid_hi = 0.0;
  int grid_points = 0;
};

// Throws UsageError on unknown flags or inconsistent combinations.
CommandConfig parse(const std::vector<std::string>& args);

// Executes the subcommand; returns the process exit status.
int run(const CommandConfig& cfg);

}  // namespace c2far::cli
