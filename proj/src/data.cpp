#include "c2far/data.hpp"

#include <cmath>
#include <fstream>

#include <json.hpp>

#include "c2far/rng.hpp"

namespace c2far::data {

std::vector<SeriesSplit> split(const SeriesSet& set, const SplitConfig& cfg) {
  if (cfg.validation_points < 0 || cfg.test_points < 0) {
    throw ConfigError("split lengths must be non-negative");
  }
  std::vector<SeriesSplit> out;
  out.reserve(set.size());
  for (const Series& s : set) {
    const int n = static_cast<int>(s.values.size());
    if (cfg.validation_points + cfg.test_points >= n) {
      throw InputError("series '" + s.id + "' too short for requested split");
    }
    SeriesSplit sp;
    sp.validation_end = n - cfg.test_points;
    sp.train_end = sp.validation_end - cfg.validation_points;
    out.push_back(sp);
  }
  return out;
}

SeriesSet load_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  SeriesSet out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw IoError(path + ":" + std::to_string(line_no) + ": " + e.what());
    }
    try {
      Series s;
      s.id = j.at("id").get<std::string>();
      s.start = parse_iso8601(j.at("start").get<std::string>());
      s.freq = parse_freq(j.at("freq").get<std::string>());
      s.values = j.at("values").get<std::vector<double>>();
      if (s.values.empty()) throw InputError("empty values array");
      for (double v : s.values) {
        if (!std::isfinite(v)) throw InputError("non-finite value");
      }
      out.push_back(std::move(s));
    } catch (const std::exception& e) {
      throw IoError(path + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

void save_jsonl(const SeriesSet& set, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path + " for writing");
  for (const Series& s : set) {
    nlohmann::json j;
    j["id"] = s.id;
    j["start"] = format_iso8601(s.start);
    j["freq"] = freq_to_string(s.freq);
    j["values"] = s.values;
    out << j.dump() << "\n";
  }
  if (!out) throw IoError("write failed: " + path);
}

SeriesSet gen_gmm(int n_series, int length, const std::vector<double>& weights,
                  const std::vector<double>& means, double std_dev, std::uint64_t seed,
                  Freq freq, Timestamp start) {
  if (weights.size() != means.size() || weights.empty()) {
    throw ConfigError("mixture weights and means must have equal, non-zero length");
  }
  double wsum = 0.0;
  for (double w : weights) {
    if (w < 0.0) throw ConfigError("mixture weights must be non-negative");
    wsum += w;
  }
  if (std::abs(wsum - 1.0) > 1e-9) throw ConfigError("mixture weights must sum to 1");
  if (!(std_dev > 0.0)) throw ConfigError("mixture std must be positive");

  SeriesSet out;
  out.reserve(static_cast<std::size_t>(n_series));
  for (int i = 0; i < n_series; ++i) {
    RandomStream rng(mix_seed({seed, static_cast<std::uint64_t>(i)}));
    Series s;
    s.id = "gmm-" + std::to_string(i);
    s.start = start;
    s.freq = freq;
    s.values.resize(static_cast<std::size_t>(length));
    for (int t = 0; t < length; ++t) {
      const double u = rng.u01();
      double acc = 0.0;
      std::size_t comp = weights.size() - 1;
      for (std::size_t k = 0; k < weights.size(); ++k) {
        acc += weights[k];
        if (u < acc) {
          comp = k;
          break;
        }
      }
      s.values[static_cast<std::size_t>(t)] = means[comp] + std_dev * rng.normal();
    }
    out.push_back(std::move(s));
  }
  return out;
}

SeriesSet gen_discrete_uniform(int n_series, int length, int lo, int hi, std::uint64_t seed,
                               Freq freq, Timestamp start) {
  if (lo > hi) throw ConfigError("discrete uniform needs lo <= hi");
  SeriesSet out;
  out.reserve(static_cast<std::size_t>(n_series));
  const std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
  for (int i = 0; i < n_series; ++i) {
    RandomStream rng(mix_seed({seed, static_cast<std::uint64_t>(i)}));
    Series s;
    s.id = "du-" + std::to_string(i);
    s.start = start;
    s.freq = freq;
    s.values.resize(static_cast<std::size_t>(length));
    for (int t = 0; t < length; ++t) {
      s.values[static_cast<std::size_t>(t)] = static_cast<double>(lo + static_cast<int>(rng.below(span)));
    }
    out.push_back(std::move(s));
  }
  return out;
}

int covariate_dim(Freq) { return 2; }

VecD time_features(Timestamp ts, Freq freq) {
  VecD f(2);
  if (freq == Freq::Hourly) {
    f(0) = hour_of_day(ts) / 23.0;
    f(1) = weekday_mon0(ts) / 6.0;
  } else {
    f(0) = weekday_mon0(ts) / 6.0;
    f(1) = (day_of_month(ts) - 1) / 30.0;
  }
  return f;
}

}  // namespace c2far::data
