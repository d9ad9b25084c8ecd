#pragma once

// Template implementations for model.hpp.

#include <algorithm>
#include <cmath>

namespace c2far::model {

namespace detail {

// Feature-block offsets inside a level input vector.
struct InputLayout {
  std::vector<int> prev_off;     // per level j: 1-hot of z^j_{t-1}
  std::vector<int> coarser_off;  // per level j < B-1: 1-hot of z^j_t
  int cov_off = 0;
  int prev_value_off = 0;
  int dim = 0;
};

inline InputLayout make_layout(const C2farRnnConfig& cfg) {
  InputLayout lay;
  const auto& lv = cfg.binning.levels;
  int off = 0;
  for (int k : lv) {
    lay.prev_off.push_back(off);
    off += k;
  }
  for (std::size_t j = 0; j + 1 < lv.size(); ++j) {
    lay.coarser_off.push_back(off);
    off += lv[j];
  }
  lay.cov_off = off;
  off += cfg.covariate_dim;
  lay.prev_value_off = off;
  lay.dim = off + 1;
  return lay;
}

inline bool is_all_zero(const Eigen::Ref<const Eigen::VectorXi>& path) {
  return (path.array() == 0).all();
}

inline bool is_all_max(const Eigen::Ref<const Eigen::VectorXi>& path,
                       const std::vector<int>& levels) {
  for (int i = 0; i < path.size(); ++i) {
    if (path(i) != levels[static_cast<std::size_t>(i)] - 1) return false;
  }
  return true;
}

}  // namespace detail

inline std::int64_t count_parameters(const C2farRnnConfig& cfg) {
  const std::int64_t h = cfg.n_hidden;
  const std::int64_t d = level_input_dim(cfg);
  std::int64_t total = 0;
  for (int k : cfg.binning.levels) {
    total += nn::lstm_layer_param_count(d, h) + nn::lstm_layer_param_count(h, h);
    total += nn::linear_param_count(h, k);
  }
  total += nn::linear_param_count(h, h);  // tail head hidden layer
  total += nn::linear_param_count(h, 2);  // tail head output
  return total;
}

inline std::int64_t count_parameters(const GaussianRnnConfig& cfg) {
  const std::int64_t h = cfg.n_hidden;
  const std::int64_t d = cfg.covariate_dim + 1;
  return nn::lstm_layer_param_count(d, h) + nn::lstm_layer_param_count(h, h) +
         nn::linear_param_count(h, 2);
}

inline std::int64_t output_projection_cost(const C2farRnnConfig& cfg) {
  std::int64_t total = 0;
  for (int k : cfg.binning.levels) total += static_cast<std::int64_t>(k) * cfg.n_hidden;
  return total;
}

// ---------------------------------------------------------------------------
// C2farRnn
// ---------------------------------------------------------------------------

template <typename T>
C2farRnn<T>::C2farRnn(C2farRnnConfig cfg) : cfg_(std::move(cfg)) {
  if (cfg_.binning.levels.empty()) throw ConfigError("binning has no levels");
  if (cfg_.n_hidden < 1) throw ConfigError("n_hidden must be positive");
  input_dim_ = level_input_dim(cfg_);
  const int b = cfg_.binning.depth();
  for (int i = 0; i < b; ++i) {
    stacks_.emplace_back("lvl" + std::to_string(i), input_dim_, cfg_.n_hidden,
                         static_cast<T>(cfg_.lstm_dropout));
    stacks_.back().register_params(params_);
    params_.add("lvl" + std::to_string(i) + ".proj.w",
                cfg_.binning.levels[static_cast<std::size_t>(i)], cfg_.n_hidden);
    params_.add("lvl" + std::to_string(i) + ".proj.b",
                cfg_.binning.levels[static_cast<std::size_t>(i)], 1);
  }
  params_.add("tail.w1", cfg_.n_hidden, cfg_.n_hidden);
  params_.add("tail.b1", cfg_.n_hidden, 1);
  params_.add("tail.w2", 2, cfg_.n_hidden);
  params_.add("tail.b2", 2, 1);
}

template <typename T>
void C2farRnn<T>::init(std::uint64_t seed) {
  RandomStream rng(seed);
  const double k = 1.0 / std::sqrt(static_cast<double>(cfg_.n_hidden));
  for (auto& stack : stacks_) stack.init_params(params_, rng);
  for (const auto& name : params_.names()) {
    if (name.find(".proj.") == std::string::npos && name.rfind("tail.", 0) != 0) continue;
    Mat<T>& m = params_.at(name);
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      for (Eigen::Index r = 0; r < m.rows(); ++r) {
        m(r, c) = static_cast<T>(rng.uniform(-k, k));
      }
    }
  }
}

template <typename T>
Mat<T> C2farRnn<T>::assemble_inputs(int level, std::span<const ModelWindow> batch,
                                    const std::vector<Mat<int>>& paths, int t) const {
  const detail::InputLayout lay = detail::make_layout(cfg_);
  const int n = static_cast<int>(batch.size());
  const int b = cfg_.binning.depth();
  Mat<T> x = Mat<T>::Zero(lay.dim, n);
  for (int col = 0; col < n; ++col) {
    const Mat<int>& p = paths[static_cast<std::size_t>(col)];
    if (t > 0) {
      for (int j = 0; j < b; ++j) {
        x(lay.prev_off[static_cast<std::size_t>(j)] + p(j, t - 1), col) = T(1);
      }
      x(lay.prev_value_off, col) =
          static_cast<T>(batch[static_cast<std::size_t>(col)].values[static_cast<std::size_t>(t - 1)]);
    }
    for (int j = 0; j < level; ++j) {
      x(lay.coarser_off[static_cast<std::size_t>(j)] + p(j, t), col) = T(1);
    }
    for (int d = 0; d < cfg_.covariate_dim; ++d) {
      x(lay.cov_off + d, col) =
          static_cast<T>(batch[static_cast<std::size_t>(col)].covariates(d, t));
    }
  }
  return x;
}

template <typename T>
void C2farRnn<T>::head_forward(const Mat<T>& h, Mat<T>& act, Mat<T>& sig, Mat<T>& alphas) const {
  const Mat<T>& w1 = params_.at("tail.w1");
  const Mat<T>& b1 = params_.at("tail.b1");
  const Mat<T>& w2 = params_.at("tail.w2");
  const Mat<T>& b2 = params_.at("tail.b2");
  Mat<T> z1 = w1 * h;
  z1.colwise() += b1.col(0);
  act = z1.array().tanh().matrix();
  Mat<T> z2 = w2 * act;
  z2.colwise() += b2.col(0);
  sig = z2.unaryExpr([](T v) { return nn::sigmoid(v); });
  alphas = z2.unaryExpr([](T v) { return std::max(nn::softplus(v), T(1e-12)); });
}

template <typename T>
double C2farRnn<T>::forward(std::span<const ModelWindow> batch, bool train,
                            std::uint64_t dropout_seed, Cache* cache) const {
  const int n = static_cast<int>(batch.size());
  if (n == 0) throw InputError("empty batch");
  const int n_cond = batch[0].n_conditioning;
  const int n_pred = batch[0].n_prediction();
  const int steps = n_cond + n_pred;
  const int b = cfg_.binning.depth();
  if (n_pred <= 0) throw InputError("window has no prediction range");
  for (const ModelWindow& w : batch) {
    if (w.n_conditioning != n_cond || w.n_prediction() != n_pred) {
      throw InputError("batch windows must share conditioning/prediction lengths");
    }
  }

  // Discretize every value once.
  std::vector<Mat<int>> paths(static_cast<std::size_t>(n));
  for (int col = 0; col < n; ++col) {
    Mat<int>& p = paths[static_cast<std::size_t>(col)];
    p.resize(b, steps);
    for (int t = 0; t < steps; ++t) {
      const hbin::BinPath bp =
          hbin::discretize(cfg_.binning, batch[static_cast<std::size_t>(col)].values[static_cast<std::size_t>(t)]);
      for (int j = 0; j < b; ++j) p(j, t) = bp[static_cast<std::size_t>(j)];
    }
  }

  Cache local;
  Cache& c = cache != nullptr ? *cache : local;
  c.cols = n;
  c.n_cond = n_cond;
  c.n_pred = n_pred;
  c.stacks.assign(static_cast<std::size_t>(b), nn::StackCache<T>());
  c.probs.assign(static_cast<std::size_t>(b), {});
  c.targets.assign(static_cast<std::size_t>(b), Mat<int>());
  c.head_hidden_act.assign(static_cast<std::size_t>(n_pred), Mat<T>());
  c.head_out_sig.assign(static_cast<std::size_t>(n_pred), Mat<T>());
  c.alphas.assign(static_cast<std::size_t>(n_pred), Mat<T>());
  c.tail_events.clear();

  for (int i = 0; i < b; ++i) {
    std::vector<Mat<T>> inputs(static_cast<std::size_t>(steps));
    for (int t = 0; t < steps; ++t) inputs[static_cast<std::size_t>(t)] = assemble_inputs(i, batch, paths, t);
    stacks_[static_cast<std::size_t>(i)].forward(params_, std::move(inputs), train,
                                                 mix_seed({dropout_seed, static_cast<std::uint64_t>(i)}),
                                                 c.stacks[static_cast<std::size_t>(i)]);
  }

  const double log_floor = std::log(kTrainLogFloor);
  double loss_sum = 0.0;

  // Per-level categorical NLL over the prediction range.
  for (int i = 0; i < b; ++i) {
    c.probs[static_cast<std::size_t>(i)].assign(static_cast<std::size_t>(n_pred), Mat<T>());
    c.targets[static_cast<std::size_t>(i)].resize(n_pred, n);
    const Mat<T>& pw = params_.at("lvl" + std::to_string(i) + ".proj.w");
    const Mat<T>& pb = params_.at("lvl" + std::to_string(i) + ".proj.b");
    for (int tp = 0; tp < n_pred; ++tp) {
      const int t = n_cond + tp;
      const Mat<T>& h2 = c.stacks[static_cast<std::size_t>(i)].l2.hidden[static_cast<std::size_t>(t)];
      Mat<T> logits = pw * h2;
      logits.colwise() += pb.col(0);
      Mat<T> probs = nn::softmax_columns(logits);
      for (int col = 0; col < n; ++col) {
        const int target = paths[static_cast<std::size_t>(col)](i, t);
        c.targets[static_cast<std::size_t>(i)](tp, col) = target;
        const double p = static_cast<double>(probs(target, col));
        const double lp = train ? std::log(std::max(p, kTrainLogFloor)) : std::log(p);
        loss_sum -= lp;
      }
      c.probs[static_cast<std::size_t>(i)][static_cast<std::size_t>(tp)] = std::move(probs);
    }
  }

  // Level-(B+1) terms: uniform inside finite leaves, Pareto in the extremes.
  for (int tp = 0; tp < n_pred; ++tp) {
    const int t = n_cond + tp;
    const Mat<T>& hb = c.stacks[static_cast<std::size_t>(b - 1)].l2.hidden[static_cast<std::size_t>(t)];
    head_forward(hb, c.head_hidden_act[static_cast<std::size_t>(tp)],
                 c.head_out_sig[static_cast<std::size_t>(tp)], c.alphas[static_cast<std::size_t>(tp)]);
    const Mat<T>& alphas = c.alphas[static_cast<std::size_t>(tp)];
    for (int col = 0; col < n; ++col) {
      const double v = batch[static_cast<std::size_t>(col)].values[static_cast<std::size_t>(t)];
      const Eigen::VectorXi path = paths[static_cast<std::size_t>(col)].col(t);
      hbin::BinPath bp(path.data(), path.data() + path.size());
      const hbin::Interval leaf = hbin::interval_of(cfg_.binning, bp);
      const double a_hi = static_cast<double>(alphas(0, col));
      const double a_lo = static_cast<double>(alphas(1, col));
      const double ld = dist::leaf_log_density<double>(cfg_.binning, leaf, a_hi, a_lo, v);
      if (std::isfinite(ld)) {
        if (leaf.hi_open_ended) {
          c.tail_events.push_back(TailEvent{tp, col, true, std::log(v)});
        } else if (leaf.lo_open_ended) {
          c.tail_events.push_back(TailEvent{tp, col, false, std::log(-v)});
        }
        loss_sum -= ld;
      } else {
        loss_sum -= train ? log_floor : ld;
      }
    }
  }

  c.loss = loss_sum / (static_cast<double>(n_pred) * n);
  return c.loss;
}

template <typename T>
void C2farRnn<T>::backward(const Cache& c, nn::ParamSet<T>& grads) const {
  const int b = cfg_.binning.depth();
  const int n = c.cols;
  const int steps = c.n_cond + c.n_pred;
  const T scale = T(1) / static_cast<T>(static_cast<double>(c.n_pred) * n);

  for (int i = 0; i < b; ++i) {
    const std::string lp = "lvl" + std::to_string(i);
    const Mat<T>& pw = params_.at(lp + ".proj.w");
    std::vector<Mat<T>> dh(static_cast<std::size_t>(steps));
    for (int tp = 0; tp < c.n_pred; ++tp) {
      const int t = c.n_cond + tp;
      const Mat<T>& h2 = c.stacks[static_cast<std::size_t>(i)].l2.hidden[static_cast<std::size_t>(t)];
      Mat<T> dlogits = c.probs[static_cast<std::size_t>(i)][static_cast<std::size_t>(tp)];
      for (int col = 0; col < n; ++col) {
        dlogits(c.targets[static_cast<std::size_t>(i)](tp, col), col) -= T(1);
      }
      dlogits *= scale;
      grads.at(lp + ".proj.w").noalias() += dlogits * h2.transpose();
      grads.at(lp + ".proj.b").col(0) += dlogits.rowwise().sum();
      dh[static_cast<std::size_t>(t)].noalias() = pw.transpose() * dlogits;
    }

    if (i == b - 1 && !c.tail_events.empty()) {
      // Tail-shape gradient through the softplus head.
      const Mat<T>& w1 = params_.at("tail.w1");
      const Mat<T>& w2 = params_.at("tail.w2");
      std::vector<Mat<T>> dalpha(static_cast<std::size_t>(c.n_pred));
      for (const TailEvent& ev : c.tail_events) {
        Mat<T>& da = dalpha[static_cast<std::size_t>(ev.step)];
        if (da.size() == 0) da = Mat<T>::Zero(2, n);
        const double alpha = static_cast<double>(
            c.alphas[static_cast<std::size_t>(ev.step)](ev.high ? 0 : 1, ev.col));
        const double log_scale =
            ev.high ? std::log(cfg_.binning.extent_hi) : std::log(-cfg_.binning.extent_lo);
        const double d = -1.0 / alpha - log_scale + ev.log_abs_v;
        da(ev.high ? 0 : 1, ev.col) += static_cast<T>(d) * scale;
      }
      for (int tp = 0; tp < c.n_pred; ++tp) {
        if (dalpha[static_cast<std::size_t>(tp)].size() == 0) continue;
        const int t = c.n_cond + tp;
        const Mat<T>& h2 = c.stacks[static_cast<std::size_t>(b - 1)].l2.hidden[static_cast<std::size_t>(t)];
        const Mat<T>& act = c.head_hidden_act[static_cast<std::size_t>(tp)];
        const Mat<T>& sig = c.head_out_sig[static_cast<std::size_t>(tp)];
        Mat<T> dz2 = dalpha[static_cast<std::size_t>(tp)].cwiseProduct(sig);
        grads.at("tail.w2").noalias() += dz2 * act.transpose();
        grads.at("tail.b2").col(0) += dz2.rowwise().sum();
        Mat<T> dz1 = (w2.transpose() * dz2).cwiseProduct(
            (Mat<T>::Ones(act.rows(), act.cols()) - act.cwiseProduct(act)));
        grads.at("tail.w1").noalias() += dz1 * h2.transpose();
        grads.at("tail.b1").col(0) += dz1.rowwise().sum();
        Mat<T> dh_head = w1.transpose() * dz1;
        if (dh[static_cast<std::size_t>(t)].size() == 0) {
          dh[static_cast<std::size_t>(t)] = std::move(dh_head);
        } else {
          dh[static_cast<std::size_t>(t)] += dh_head;
        }
      }
    }

    stacks_[static_cast<std::size_t>(i)].backward(params_, c.stacks[static_cast<std::size_t>(i)], dh,
                                                  grads);
  }
}

template <typename T>
typename C2farRnn<T>::SampleState C2farRnn<T>::encode(const ModelWindow& window,
                                                      int n_cols) const {
  const int n_cond = window.n_conditioning;
  if (n_cond < 1) throw InputError("conditioning range is empty");
  const int b = cfg_.binning.depth();

  std::vector<Mat<int>> paths(1);
  paths[0].resize(b, n_cond);
  for (int t = 0; t < n_cond; ++t) {
    const hbin::BinPath bp = hbin::discretize(cfg_.binning, window.values[static_cast<std::size_t>(t)]);
    for (int j = 0; j < b; ++j) paths[0](j, t) = bp[static_cast<std::size_t>(j)];
  }

  // Teacher-forced pass over the conditioning range with a single column.
  ModelWindow cond_view;
  cond_view.values.assign(window.values.begin(), window.values.begin() + n_cond);
  cond_view.covariates = window.covariates.leftCols(n_cond);
  cond_view.n_conditioning = n_cond;
  std::span<const ModelWindow> one(&cond_view, 1);

  SampleState st;
  st.cols = 1;
  st.levels.resize(static_cast<std::size_t>(b));
  for (auto& ls : st.levels) ls.reset(cfg_.n_hidden, 1);
  for (int t = 0; t < n_cond; ++t) {
    for (int i = 0; i < b; ++i) {
      Mat<T> x = assemble_inputs(i, one, paths, t);
      stacks_[static_cast<std::size_t>(i)].step(params_, x, st.levels[static_cast<std::size_t>(i)]);
    }
  }

  hbin::BinPath last(static_cast<std::size_t>(b));
  for (int j = 0; j < b; ++j) last[static_cast<std::size_t>(j)] = paths[0](j, n_cond - 1);
  st.prev_path.assign(static_cast<std::size_t>(n_cols), last);
  st.prev_value.assign(static_cast<std::size_t>(n_cols),
                       window.values[static_cast<std::size_t>(n_cond - 1)]);
  if (n_cols > 1) {
    for (auto& ls : st.levels) ls.replicate_column(n_cols);
  }
  st.cols = n_cols;
  return st;
}

template <typename T>
Mat<T> C2farRnn<T>::assemble_sample_inputs(int level, const SampleState& st,
                                           const std::vector<hbin::BinPath>& cur_paths,
                                           const VecD& covariates) const {
  const detail::InputLayout lay = detail::make_layout(cfg_);
  const int n = st.cols;
  const int b = cfg_.binning.depth();
  Mat<T> x = Mat<T>::Zero(lay.dim, n);
  for (int col = 0; col < n; ++col) {
    for (int j = 0; j < b; ++j) {
      x(lay.prev_off[static_cast<std::size_t>(j)] +
            st.prev_path[static_cast<std::size_t>(col)][static_cast<std::size_t>(j)],
        col) = T(1);
    }
    for (int j = 0; j < level; ++j) {
      x(lay.coarser_off[static_cast<std::size_t>(j)] +
            cur_paths[static_cast<std::size_t>(col)][static_cast<std::size_t>(j)],
        col) = T(1);
    }
    for (int d = 0; d < cfg_.covariate_dim; ++d) {
      x(lay.cov_off + d, col) = static_cast<T>(covariates(d));
    }
    x(lay.prev_value_off, col) = static_cast<T>(st.prev_value[static_cast<std::size_t>(col)]);
  }
  return x;
}

template <typename T>
void C2farRnn<T>::sample_step(SampleState& st, const VecD& covariates,
                              std::span<RandomStream> rngs,
                              std::vector<double>& out_values) const {
  const int n = st.cols;
  const int b = cfg_.binning.depth();
  if (static_cast<int>(rngs.size()) != n) throw InputError("one rng stream per rollout required");

  std::vector<hbin::BinPath> cur(static_cast<std::size_t>(n));
  for (auto& p : cur) p.reserve(static_cast<std::size_t>(b));

  for (int i = 0; i < b; ++i) {
    Mat<T> x = assemble_sample_inputs(i, st, cur, covariates);
    stacks_[static_cast<std::size_t>(i)].step(params_, x, st.levels[static_cast<std::size_t>(i)]);
    const Mat<T>& h2 = st.levels[static_cast<std::size_t>(i)].h2;
    const Mat<T>& pw = params_.at("lvl" + std::to_string(i) + ".proj.w");
    const Mat<T>& pb = params_.at("lvl" + std::to_string(i) + ".proj.b");
    Mat<T> logits = pw * h2;
    logits.colwise() += pb.col(0);
    Mat<T> probs = nn::softmax_columns(logits);
    for (int col = 0; col < n; ++col) {
      cur[static_cast<std::size_t>(col)].push_back(
          rngs[static_cast<std::size_t>(col)].categorical(probs.col(col)));
    }
  }

  Mat<T> act, sig, alphas;
  head_forward(st.levels[static_cast<std::size_t>(b - 1)].h2, act, sig, alphas);

  out_values.resize(static_cast<std::size_t>(n));
  for (int col = 0; col < n; ++col) {
    const hbin::Interval leaf = hbin::interval_of(cfg_.binning, cur[static_cast<std::size_t>(col)]);
    const dist::Tails tails{static_cast<double>(alphas(0, col)),
                            static_cast<double>(alphas(1, col))};
    out_values[static_cast<std::size_t>(col)] =
        dist::sample_leaf(cfg_.binning, leaf, tails, rngs[static_cast<std::size_t>(col)]);
  }
  st.prev_path = std::move(cur);
  st.prev_value = out_values;
}

template <typename T>
Vec<T> C2farRnn<T>::peek_hidden(const SampleState& st, int level, std::span<const int> coarser,
                                const VecD& covariates) const {
  if (st.cols != 1) throw InputError("peek queries require a single-column state");
  std::vector<hbin::BinPath> cur(1);
  cur[0].assign(coarser.begin(), coarser.end());
  Mat<T> x = assemble_sample_inputs(level, st, cur, covariates);
  typename nn::LstmStack<T>::State tmp = st.levels[static_cast<std::size_t>(level)];
  stacks_[static_cast<std::size_t>(level)].step(params_, x, tmp);
  return tmp.h2.col(0);
}

template <typename T>
VecD C2farRnn<T>::peek_level_probs(const SampleState& st, int level, std::span<const int> coarser,
                                   const VecD& covariates) const {
  if (static_cast<int>(coarser.size()) != level) {
    throw InputError("coarser prefix length must equal the level index");
  }
  const Vec<T> h = peek_hidden(st, level, coarser, covariates);
  const Mat<T>& pw = params_.at("lvl" + std::to_string(level) + ".proj.w");
  const Mat<T>& pb = params_.at("lvl" + std::to_string(level) + ".proj.b");
  Vec<T> logits = pw * h + pb.col(0);
  return nn::softmax<T>(logits).template cast<double>();
}

template <typename T>
dist::Tails C2farRnn<T>::peek_tails(const SampleState& st, const VecD& covariates) const {
  const int b = cfg_.binning.depth();
  std::vector<int> hi_prefix, lo_prefix;
  for (int j = 0; j < b - 1; ++j) {
    hi_prefix.push_back(cfg_.binning.levels[static_cast<std::size_t>(j)] - 1);
    lo_prefix.push_back(0);
  }
  Mat<T> act, sig, alphas_hi, alphas_lo;
  Mat<T> h_hi = peek_hidden(st, b - 1, hi_prefix, covariates);
  head_forward(h_hi, act, sig, alphas_hi);
  Mat<T> h_lo = peek_hidden(st, b - 1, lo_prefix, covariates);
  head_forward(h_lo, act, sig, alphas_lo);
  return dist::Tails{static_cast<double>(alphas_hi(0, 0)), static_cast<double>(alphas_lo(1, 0))};
}

// ---------------------------------------------------------------------------
// GaussianRnn
// ---------------------------------------------------------------------------

template <typename T>
GaussianRnn<T>::GaussianRnn(GaussianRnnConfig cfg)
    : cfg_(cfg),
      stack_("rnn", cfg.covariate_dim + 1, cfg.n_hidden, static_cast<T>(cfg.lstm_dropout)) {
  stack_.register_params(params_);
  params_.add("head.w", 2, cfg_.n_hidden);
  params_.add("head.b", 2, 1);
}

template <typename T>
void GaussianRnn<T>::init(std::uint64_t seed) {
  RandomStream rng(seed);
  stack_.init_params(params_, rng);
  const double k = 1.0 / std::sqrt(static_cast<double>(cfg_.n_hidden));
  for (const char* name : {"head.w", "head.b"}) {
    Mat<T>& m = params_.at(name);
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      for (Eigen::Index r = 0; r < m.rows(); ++r) m(r, c) = static_cast<T>(rng.uniform(-k, k));
    }
  }
}

template <typename T>
Mat<T> GaussianRnn<T>::head(const Mat<T>& h, Mat<T>* sig) const {
  const Mat<T>& w = params_.at("head.w");
  const Mat<T>& b = params_.at("head.b");
  Mat<T> out = w * h;
  out.colwise() += b.col(0);
  if (sig != nullptr) {
    *sig = out.row(1).unaryExpr([](T v) { return nn::sigmoid(v); });
  }
  out.row(1) = out.row(1).unaryExpr([](T v) { return nn::softplus(v) + T(1e-6); });
  return out;
}

template <typename T>
double GaussianRnn<T>::forward(std::span<const ModelWindow> batch, bool train,
                               std::uint64_t dropout_seed, Cache* cache) const {
  const int n = static_cast<int>(batch.size());
  if (n == 0) throw InputError("empty batch");
  const int n_cond = batch[0].n_conditioning;
  const int n_pred = batch[0].n_prediction();
  const int steps = n_cond + n_pred;
  for (const ModelWindow& w : batch) {
    if (w.n_conditioning != n_cond || w.n_prediction() != n_pred) {
      throw InputError("batch windows must share conditioning/prediction lengths");
    }
  }

  Cache local;
  Cache& c = cache != nullptr ? *cache : local;
  c.cols = n;
  c.n_cond = n_cond;
  c.n_pred = n_pred;

  const int d = cfg_.covariate_dim + 1;
  std::vector<Mat<T>> inputs(static_cast<std::size_t>(steps));
  for (int t = 0; t < steps; ++t) {
    Mat<T> x = Mat<T>::Zero(d, n);
    for (int col = 0; col < n; ++col) {
      for (int k = 0; k < cfg_.covariate_dim; ++k) {
        x(k, col) = static_cast<T>(batch[static_cast<std::size_t>(col)].covariates(k, t));
      }
      if (t > 0) {
        x(d - 1, col) =
            static_cast<T>(batch[static_cast<std::size_t>(col)].values[static_cast<std::size_t>(t - 1)]);
      }
    }
    inputs[static_cast<std::size_t>(t)] = std::move(x);
  }
  stack_.forward(params_, std::move(inputs), train, dropout_seed, c.stack);

  c.mean.assign(static_cast<std::size_t>(n_pred), Mat<T>());
  c.std_dev.assign(static_cast<std::size_t>(n_pred), Mat<T>());
  c.out_sig.assign(static_cast<std::size_t>(n_pred), Mat<T>());
  c.targets.assign(static_cast<std::size_t>(n_pred), Mat<T>());

  double loss_sum = 0.0;
  constexpr double kHalfLog2Pi = 0.9189385332046727;  // 0.5 * ln(2*pi)
  for (int tp = 0; tp < n_pred; ++tp) {
    const int t = n_cond + tp;
    Mat<T> sig;
    const Mat<T> out = head(c.stack.l2.hidden[static_cast<std::size_t>(t)], &sig);
    Mat<T> targ(1, n);
    for (int col = 0; col < n; ++col) {
      targ(0, col) =
          static_cast<T>(batch[static_cast<std::size_t>(col)].values[static_cast<std::size_t>(t)]);
    }
    for (int col = 0; col < n; ++col) {
      const double mu = static_cast<double>(out(0, col));
      const double sd = static_cast<double>(out(1, col));
      const double z = static_cast<double>(targ(0, col));
      loss_sum += kHalfLog2Pi + std::log(sd) + (z - mu) * (z - mu) / (2.0 * sd * sd);
    }
    c.mean[static_cast<std::size_t>(tp)] = out.row(0);
    c.std_dev[static_cast<std::size_t>(tp)] = out.row(1);
    c.out_sig[static_cast<std::size_t>(tp)] = std::move(sig);
    c.targets[static_cast<std::size_t>(tp)] = std::move(targ);
  }
  c.loss = loss_sum / (static_cast<double>(n_pred) * n);
  return c.loss;
}

template <typename T>
void GaussianRnn<T>::backward(const Cache& c, nn::ParamSet<T>& grads) const {
  const int n = c.cols;
  const int steps = c.n_cond + c.n_pred;
  const T scale = T(1) / static_cast<T>(static_cast<double>(c.n_pred) * n);
  const Mat<T>& w = params_.at("head.w");

  std::vector<Mat<T>> dh(static_cast<std::size_t>(steps));
  for (int tp = 0; tp < c.n_pred; ++tp) {
    const int t = c.n_cond + tp;
    const Mat<T>& mu = c.mean[static_cast<std::size_t>(tp)];
    const Mat<T>& sd = c.std_dev[static_cast<std::size_t>(tp)];
    const Mat<T>& targ = c.targets[static_cast<std::size_t>(tp)];
    Mat<T> dout(2, n);
    for (int col = 0; col < n; ++col) {
      const T m = mu(0, col), s = sd(0, col), z = targ(0, col);
      dout(0, col) = (m - z) / (s * s) * scale;
      const T dsd = (T(1) / s - (z - m) * (z - m) / (s * s * s)) * scale;
      dout(1, col) = dsd * c.out_sig[static_cast<std::size_t>(tp)](0, col);
    }
    const Mat<T>& h2 = c.stack.l2.hidden[static_cast<std::size_t>(t)];
    grads.at("head.w").noalias() += dout * h2.transpose();
    grads.at("head.b").col(0) += dout.rowwise().sum();
    dh[static_cast<std::size_t>(t)].noalias() = w.transpose() * dout;
  }
  stack_.backward(params_, c.stack, dh, grads);
}

template <typename T>
typename GaussianRnn<T>::SampleState GaussianRnn<T>::encode(const ModelWindow& window,
                                                            int n_cols) const {
  const int n_cond = window.n_conditioning;
  if (n_cond < 1) throw InputError("conditioning range is empty");
  SampleState st;
  st.state.reset(cfg_.n_hidden, 1);
  const int d = cfg_.covariate_dim + 1;
  for (int t = 0; t < n_cond; ++t) {
    Mat<T> x = Mat<T>::Zero(d, 1);
    for (int k = 0; k < cfg_.covariate_dim; ++k) {
      x(k, 0) = static_cast<T>(window.covariates(k, t));
    }
    if (t > 0) x(d - 1, 0) = static_cast<T>(window.values[static_cast<std::size_t>(t - 1)]);
    stack_.step(params_, x, st.state);
  }
  st.state.replicate_column(n_cols);
  st.prev_value.assign(static_cast<std::size_t>(n_cols),
                       window.values[static_cast<std::size_t>(n_cond - 1)]);
  st.cols = n_cols;
  return st;
}

template <typename T>
void GaussianRnn<T>::sample_step(SampleState& st, const VecD& covariates,
                                 std::span<RandomStream> rngs,
                                 std::vector<double>& out_values) const {
  const int n = st.cols;
  if (static_cast<int>(rngs.size()) != n) throw InputError("one rng stream per rollout required");
  const int d = cfg_.covariate_dim + 1;
  Mat<T> x(d, n);
  for (int col = 0; col < n; ++col) {
    for (int k = 0; k < cfg_.covariate_dim; ++k) x(k, col) = static_cast<T>(covariates(k));
    x(d - 1, col) = static_cast<T>(st.prev_value[static_cast<std::size_t>(col)]);
  }
  stack_.step(params_, x, st.state);
  const Mat<T> out = head(st.state.h2, nullptr);
  out_values.resize(static_cast<std::size_t>(n));
  for (int col = 0; col < n; ++col) {
    out_values[static_cast<std::size_t>(col)] =
        static_cast<double>(out(0, col)) +
        static_cast<double>(out(1, col)) * rngs[static_cast<std::size_t>(col)].normal();
  }
  st.prev_value = out_values;
}

}  // namespace c2far::model
