#pragma once

// Template implementations for pipeline.hpp.

#include <algorithm>
#include <cmath>
#include <thread>

namespace c2far::pipeline {

namespace detail {

template <typename Model>
double batch_forward_backward(const Model& mdl, std::span<const model::ModelWindow> batch,
                              std::uint64_t dropout_seed, int n_workers,
                              nn::ParamSet<float>& grads) {
  constexpr int kChunk = 64;
  const int n = static_cast<int>(batch.size());
  const int n_chunks = (n + kChunk - 1) / kChunk;

  std::vector<double> chunk_loss(static_cast<std::size_t>(n_chunks), 0.0);
  std::vector<int> chunk_size(static_cast<std::size_t>(n_chunks), 0);
  std::vector<nn::ParamSet<float>> chunk_grads;
  chunk_grads.reserve(static_cast<std::size_t>(n_chunks));
  for (int c = 0; c < n_chunks; ++c) chunk_grads.push_back(grads.zeros_like());

  auto run_chunk = [&](int c) {
    const int begin = c * kChunk;
    const int size = std::min(kChunk, n - begin);
    chunk_size[static_cast<std::size_t>(c)] = size;
    typename Model::Cache cache;
    const double loss =
        mdl.forward(batch.subspan(static_cast<std::size_t>(begin), static_cast<std::size_t>(size)),
                    /*train=*/true, mix_seed({dropout_seed, static_cast<std::uint64_t>(c)}), &cache);
    mdl.backward(cache, chunk_grads[static_cast<std::size_t>(c)]);
    chunk_loss[static_cast<std::size_t>(c)] = loss;
  };

  const int workers = std::max(1, std::min(n_workers, n_chunks));
  if (workers == 1) {
    for (int c = 0; c < n_chunks; ++c) run_chunk(c);
  } else {
    std::vector<std::thread> pool;
    std::atomic<int> next{0};
    for (int w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (int c = next.fetch_add(1); c < n_chunks; c = next.fetch_add(1)) run_chunk(c);
      });
    }
    for (auto& t : pool) t.join();
  }

  // Per-chunk gradients are means over (chunk_size * N) points; rescale to a
  // batch mean. Reduction order is fixed by chunk index.
  double loss = 0.0;
  for (int c = 0; c < n_chunks; ++c) {
    const double w = static_cast<double>(chunk_size[static_cast<std::size_t>(c)]) / n;
    loss += chunk_loss[static_cast<std::size_t>(c)] * w;
    for (const auto& name : grads.names()) {
      grads.at(name) += static_cast<float>(w) * chunk_grads[static_cast<std::size_t>(c)].at(name);
    }
  }
  return loss;
}

template <typename Model>
double validation_nd(const Model& mdl, const std::vector<SeriesWindow>& val_windows,
                     int n_rollouts, std::uint64_t seed, int n_workers) {
  const int n = static_cast<int>(val_windows.size());
  std::vector<double> num(static_cast<std::size_t>(n), 0.0);
  std::vector<double> den(static_cast<std::size_t>(n), 0.0);

  auto run_window = [&](int i) {
    const SeriesWindow& w = val_windows[static_cast<std::size_t>(i)];
    const ForecastGrid g = forecast(mdl, w, n_rollouts, seed);
    for (std::size_t h = 0; h < w.prediction.size(); ++h) {
      const double truth = w.prediction[h];
      num[static_cast<std::size_t>(i)] += std::abs(truth - g.at(static_cast<int>(h), 0.5));
      den[static_cast<std::size_t>(i)] += std::abs(truth);
    }
  };

  const int workers = std::max(1, std::min(n_workers, n));
  if (workers == 1) {
    for (int i = 0; i < n; ++i) run_window(i);
  } else {
    std::vector<std::thread> pool;
    std::atomic<int> next{0};
    for (int w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (int i = next.fetch_add(1); i < n; i = next.fetch_add(1)) run_window(i);
      });
    }
    for (auto& t : pool) t.join();
  }

  double total_num = 0.0, total_den = 0.0;
  for (int i = 0; i < n; ++i) {
    total_num += num[static_cast<std::size_t>(i)];
    total_den += den[static_cast<std::size_t>(i)];
  }
  if (total_den == 0.0) throw InputError("validation ND denominator is zero");
  return total_num / total_den;
}

}  // namespace detail

template <typename Model>
TrainResult train(Model& mdl, const data::SeriesSet& set,
                  const std::vector<data::SeriesSplit>& splits, int T, int N,
                  const TrainSchedule& sched, double learning_rate, double weight_decay,
                  std::uint64_t seed, const EvalObserver& observer) {
  WindowSet train_ws = training_windows(set, splits, T, N, /*stride=*/1);
  if (train_ws.windows.empty()) throw InputError("no usable training windows");
  WindowSet val_ws = segment_windows(set, splits, Segment::Validation, T, N);
  std::vector<SeriesWindow> val_windows =
      cap_windows(std::move(val_ws.windows), sched.max_validation_windows);

  nn::Adam<float> adam(learning_rate, weight_decay);
  nn::ParamSet<float> grads = mdl.params().zeros_like();

  TrainResult result;
  RandomStream shuffle_rng(mix_seed({seed, hash_string("shuffle")}));
  std::vector<int> order(train_ws.windows.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  shuffle_rng.shuffle(order);

  std::size_t cursor = 0;
  int windows_this_checkpoint = 0;
  double loss_sum = 0.0;
  int loss_batches = 0;
  std::uint64_t batch_counter = 0;
  int evals_since_best = 0;
  bool stop = false;

  std::vector<model::ModelWindow> batch;
  while (!stop && result.checkpoints_run < sched.max_checkpoints) {
    // Assemble the next batch from the shuffled order, rewrapping per epoch.
    batch.clear();
    const int want = sched.train_batch_size;
    while (static_cast<int>(batch.size()) < want) {
      if (cursor == order.size()) {
        shuffle_rng.shuffle(order);
        cursor = 0;
      }
      batch.push_back(
          normalize_window(train_ws.windows[static_cast<std::size_t>(order[cursor++])]));
    }

    grads.set_zero();
    const double loss = detail::batch_forward_backward(
        mdl, std::span<const model::ModelWindow>(batch),
        mix_seed({seed, hash_string("dropout"), batch_counter}), sched.n_workers, grads);
    ++batch_counter;
    if (!std::isfinite(loss)) {
      throw TrainingDiverged("non-finite training loss at batch " +
                             std::to_string(batch_counter));
    }
    adam.step(mdl.params(), grads);
    loss_sum += loss;
    ++loss_batches;
    windows_this_checkpoint += static_cast<int>(batch.size());

    if (windows_this_checkpoint < sched.ranges_per_checkpoint) continue;

    // Checkpoint boundary.
    ++result.checkpoints_run;
    CheckpointRecord rec;
    rec.index = result.checkpoints_run;
    rec.train_nll = loss_sum / loss_batches;
    windows_this_checkpoint = 0;
    loss_sum = 0.0;
    loss_batches = 0;

    const int c = result.checkpoints_run;
    const bool eligible = !val_windows.empty() && c > sched.validation_warmup &&
                          (c - sched.validation_warmup - 1) % sched.validation_eval_period == 0;
    if (eligible) {
      const double nd_val = detail::validation_nd(mdl, val_windows, sched.validation_rollouts,
                                                  mix_seed({seed, hash_string("validation")}),
                                                  sched.n_workers);
      ++result.evals_run;
      rec.evaluated = true;
      rec.validation_nd = nd_val;
      result.validation_history.emplace_back(c, nd_val);
      if (!(nd_val >= result.best_validation_nd)) {  // also true when best is NaN
        result.best_validation_nd = nd_val;
        result.best_checkpoint = c;
        result.best_params = mdl.params();
        evals_since_best = 0;
      } else {
        ++evals_since_best;
      }
      if (observer && !observer(result.evals_run, nd_val)) {
        result.stopped_by_observer = true;
        stop = true;
      }
      if (evals_since_best >= sched.stop_evals_no_improve) stop = true;
    }
    result.log.push_back(rec);
  }

  if (result.best_checkpoint < 0) {
    // No evaluation ever ran; fall back to the final parameters.
    result.best_params = mdl.params();
    result.best_checkpoint = result.checkpoints_run;
  }
  return result;
}

}  // namespace c2far::pipeline
