#pragma once

#include <string>
#include <vector>

#include "c2far/common.hpp"
#include "c2far/timeutil.hpp"

namespace c2far::data {

struct Series {
  std::string id;
  Timestamp start;
  Freq freq = Freq::Hourly;
  std::vector<double> values;
};

using SeriesSet = std::vector<Series>;

// Suffix split lengths, per series: the last `test_points` values form the
// test segment, the `validation_points` before them the validation segment,
// and everything earlier is training data. Validation/test windows may still
// condition on earlier values.
struct SplitConfig {
  int validation_points = 0;
  int test_points = 0;
};

struct SeriesSplit {
  int train_end = 0;       // values[0, train_end) are training data
  int validation_end = 0;  // values[train_end, validation_end) are validation
                           // values[validation_end, size) are test
};

// Computes per-series split boundaries; throws when a series is too short.
std::vector<SeriesSplit> split(const SeriesSet& set, const SplitConfig& cfg);

// JSON-lines interchange: one object per line with fields
//   id (string), start (ISO-8601), freq ("H"|"D"), values (array of numbers).
SeriesSet load_jsonl(const std::string& path);
void save_jsonl(const SeriesSet& set, const std::string& path);

// i.i.d. draws from a Gaussian mixture.
SeriesSet gen_gmm(int n_series, int length, const std::vector<double>& weights,
                  const std::vector<double>& means, double std_dev, std::uint64_t seed,
                  Freq freq = Freq::Hourly, Timestamp start = Timestamp{1704067200});

// i.i.d. integer draws from a discrete uniform on {lo, ..., hi}.
SeriesSet gen_discrete_uniform(int n_series, int length, int lo, int hi, std::uint64_t seed,
                               Freq freq = Freq::Hourly, Timestamp start = Timestamp{1704067200});

// Calendar covariates in [0, 1]:
//   hourly: [hour/23, weekday/6]
//   daily:  [weekday/6, (day_of_month - 1)/30]
int covariate_dim(Freq freq);
VecD time_features(Timestamp ts, Freq freq);

}  // namespace c2far::data
