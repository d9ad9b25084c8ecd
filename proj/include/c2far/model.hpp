#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "c2far/common.hpp"
#include "c2far/dist.hpp"
#include "c2far/hbin.hpp"
#include "c2far/neural.hpp"
#include "c2far/rng.hpp"

namespace c2far::model {

// Floor applied to probabilities/densities when computing *training* loss
// values, keeping them finite through early training. Evaluation-mode NLL is
// exact and may be -inf. Softmax cross-entropy gradients never divide by the
// probability, so gradients are exact in both modes.
constexpr double kTrainLogFloor = 1e-12;

// One normalized window as consumed by the models: values over the full
// conditioning+prediction span plus per-step covariates.
struct ModelWindow {
  std::vector<double> values;  // normalized, length n_conditioning + n_prediction
  MatD covariates;             // covariate_dim x (n_conditioning + n_prediction)
  int n_conditioning = 0;

  int n_prediction() const {
    return static_cast<int>(values.size()) - n_conditioning;
  }
};

// ---------------------------------------------------------------------------
// Coarse-to-fine RNN configuration.
// ---------------------------------------------------------------------------

struct C2farRnnConfig {
  hbin::BinningSpec binning;
  int n_hidden = 64;
  double lstm_dropout = 1e-3;
  int covariate_dim = 2;
};

struct GaussianRnnConfig {
  int n_hidden = 64;
  double lstm_dropout = 1e-3;
  int covariate_dim = 2;
};

// Width of the per-level input feature vector: 1-hot blocks for all
// previous-step indices, fixed zero-padded 1-hot slots for the current
// coarser indices (all levels but the last), covariates, and the previous
// normalized value.
inline int level_input_dim(const C2farRnnConfig& cfg) {
  const auto& lv = cfg.binning.levels;
  int d = 0;
  for (int k : lv) d += k;
  for (std::size_t j = 0; j + 1 < lv.size(); ++j) d += lv[j];
  return d + cfg.covariate_dim + 1;
}

std::int64_t count_parameters(const C2farRnnConfig& cfg);
std::int64_t count_parameters(const GaussianRnnConfig& cfg);

// Cost model for the per-step output projection (parameters touched per
// timestep): the flat equivalent of a B-level binning pays K^B * H while the
// hierarchical model pays (sum of K_i) * H.
std::int64_t output_projection_cost(const C2farRnnConfig& cfg);

// ---------------------------------------------------------------------------
// C2FAR-RNN: one two-layer LSTM stack per level, autoregressive across both
// time (previous-step discretization) and space (current coarser indices),
// with a feed-forward softplus head on the deepest hidden state emitting the
// two tail shapes.
// ---------------------------------------------------------------------------

template <typename T>
class C2farRnn {
 public:
  explicit C2farRnn(C2farRnnConfig cfg);

  const C2farRnnConfig& config() const { return cfg_; }
  nn::ParamSet<T>& params() { return params_; }
  const nn::ParamSet<T>& params() const { return params_; }

  void init(std::uint64_t seed);

  struct TailEvent {
    int step = 0;  // prediction-range step index
    int col = 0;
    bool high = false;      // high vs low tail
    double log_abs_v = 0.0; // log |value|
  };

  struct Cache {
    int cols = 0;
    int n_cond = 0;
    int n_pred = 0;
    std::vector<nn::StackCache<T>> stacks;         // per level
    std::vector<std::vector<Mat<T>>> probs;        // per level, per pred step (K x n)
    std::vector<Mat<int>> targets;                 // per level, n_pred x n
    std::vector<Mat<T>> head_hidden_act;           // tanh(z1) per pred step (H x n)
    std::vector<Mat<T>> head_out_sig;              // sigmoid(z2) per pred step (2 x n)
    std::vector<Mat<T>> alphas;                    // per pred step (2 x n)
    std::vector<TailEvent> tail_events;
    double loss = 0.0;
  };

  // Teacher-forced mean NLL per prediction-range point over the batch. All
  // windows must share conditioning/prediction lengths. In train mode,
  // dropout is applied (seeded) and the loss value is floored; in eval mode
  // the NLL is exact.
  double forward(std::span<const ModelWindow> batch, bool train, std::uint64_t dropout_seed,
                 Cache* cache) const;

  // Accumulates parameter gradients of the last forward's loss into `grads`
  // (same names/shapes as params()).
  void backward(const Cache& cache, nn::ParamSet<T>& grads) const;

  // --- Monte Carlo sampling -------------------------------------------------

  struct SampleState {
    std::vector<typename nn::LstmStack<T>::State> levels;
    std::vector<hbin::BinPath> prev_path;  // per column
    std::vector<double> prev_value;        // per column, normalized
    int cols = 0;
  };

  // Runs the conditioning range teacher-forced and replicates the final
  // state across `n_cols` rollout columns.
  SampleState encode(const ModelWindow& window, int n_cols) const;

  // One prediction step: samples a path and value per column (levels
  // sequentially, value from the leaf distribution) and feeds them back.
  void sample_step(SampleState& st, const VecD& covariates, std::span<RandomStream> rngs,
                   std::vector<double>& out_values) const;

  // Functional queries against a single-column state positioned before a
  // step: the level-i conditional given a coarser prefix, without advancing.
  VecD peek_level_probs(const SampleState& st, int level, std::span<const int> coarser,
                        const VecD& covariates) const;

  // Tail shapes manifested under the all-highest / all-lowest coarser
  // prefixes (the only ones the tails apply to).
  dist::Tails peek_tails(const SampleState& st, const VecD& covariates) const;

 private:
  Mat<T> assemble_inputs(int level, std::span<const ModelWindow> batch,
                         const std::vector<Mat<int>>& paths, int t) const;
  Mat<T> assemble_sample_inputs(int level, const SampleState& st,
                                const std::vector<hbin::BinPath>& cur_paths,
                                const VecD& covariates) const;
  void head_forward(const Mat<T>& h, Mat<T>& act, Mat<T>& sig, Mat<T>& alphas) const;
  Vec<T> peek_hidden(const SampleState& st, int level, std::span<const int> coarser,
                     const VecD& covariates) const;

  C2farRnnConfig cfg_;
  int input_dim_ = 0;
  std::vector<nn::LstmStack<T>> stacks_;
  nn::ParamSet<T> params_;
};

// ---------------------------------------------------------------------------
// DeepAR-style Gaussian forecaster: one stack over (previous value,
// covariates), head emits mean and softplus-mapped standard deviation.
// ---------------------------------------------------------------------------

template <typename T>
class GaussianRnn {
 public:
  explicit GaussianRnn(GaussianRnnConfig cfg);

  const GaussianRnnConfig& config() const { return cfg_; }
  nn::ParamSet<T>& params() { return params_; }
  const nn::ParamSet<T>& params() const { return params_; }

  void init(std::uint64_t seed);

  struct Cache {
    int cols = 0;
    int n_cond = 0;
    int n_pred = 0;
    nn::StackCache<T> stack;
    std::vector<Mat<T>> mean;     // 1 x n per pred step
    std::vector<Mat<T>> std_dev;  // 1 x n per pred step
    std::vector<Mat<T>> out_sig;  // sigmoid of the std pre-activation
    std::vector<Mat<T>> targets;  // 1 x n per pred step
    double loss = 0.0;
  };

  double forward(std::span<const ModelWindow> batch, bool train, std::uint64_t dropout_seed,
                 Cache* cache) const;
  void backward(const Cache& cache, nn::ParamSet<T>& grads) const;

  struct SampleState {
    typename nn::LstmStack<T>::State state;
    std::vector<double> prev_value;
    int cols = 0;
  };

  SampleState encode(const ModelWindow& window, int n_cols) const;
  void sample_step(SampleState& st, const VecD& covariates, std::span<RandomStream> rngs,
                   std::vector<double>& out_values) const;

 private:
  Mat<T> head(const Mat<T>& h, Mat<T>* sig) const;  // rows: mean, std

  GaussianRnnConfig cfg_;
  nn::LstmStack<T> stack_;
  nn::ParamSet<T> params_;
};

}  // namespace c2far::model

#include "c2far/model_impl.hpp"
