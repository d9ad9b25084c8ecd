#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "c2far/common.hpp"
#include "c2far/rng.hpp"

namespace c2far::nn {

// ---------------------------------------------------------------------------
// Parameter registry: named dense arrays in a stable insertion order.
// Gradients and optimizer state are held in separate sets with identical
// names and shapes.
// ---------------------------------------------------------------------------

template <typename T>
class ParamSet {
 public:
  Mat<T>& add(const std::string& name, Eigen::Index rows, Eigen::Index cols) {
    if (entries_.count(name)) throw ConfigError("duplicate parameter name: " + name);
    names_.push_back(name);
    Mat<T>& m = entries_[name];
    m.setZero(rows, cols);
    return m;
  }

  bool has(const std::string& name) const { return entries_.count(name) != 0; }

  Mat<T>& at(const std::string& name) {
    auto it = entries_.find(name);
    if (it == entries_.end()) throw InputError("unknown parameter: " + name);
    return it->second;
  }
  const Mat<T>& at(const std::string& name) const {
    auto it = entries_.find(name);
    if (it == entries_.end()) throw InputError("unknown parameter: " + name);
    return it->second;
  }

  const std::vector<std::string>& names() const { return names_; }

  std::size_t total_count() const {
    std::size_t n = 0;
    for (const auto& [k, v] : entries_) n += static_cast<std::size_t>(v.size());
    return n;
  }

  void set_zero() {
    for (auto& [k, v] : entries_) v.setZero();
  }

  // Same names and shapes, all-zero values.
  ParamSet zeros_like() const {
    ParamSet out;
    for (const auto& name : names_) {
      const Mat<T>& m = at(name);
      out.add(name, m.rows(), m.cols());
    }
    return out;
  }

  void accumulate(const ParamSet& other) {
    for (const auto& name : names_) at(name) += other.at(name);
  }

  bool all_finite() const {
    for (const auto& [k, v] : entries_) {
      if (!v.allFinite()) return false;
    }
    return true;
  }

  template <typename U>
  ParamSet<U> cast() const {
    ParamSet<U> out;
    for (const auto& name : names_) {
      const Mat<T>& m = at(name);
      out.add(name, m.rows(), m.cols()) = m.template cast<U>();
    }
    return out;
  }

 private:
  std::vector<std::string> names_;
  std::map<std::string, Mat<T>> entries_;
};

// ---------------------------------------------------------------------------
// Activations.
// ---------------------------------------------------------------------------

template <typename T>
T softplus(T x) {
  // ln(1 + e^x), overflow-safe on both sides.
  if (x > T(0)) return x + std::log1p(std::exp(-x));
  return std::log1p(std::exp(x));
}

template <typename T>
T sigmoid(T x) {
  if (x >= T(0)) return T(1) / (T(1) + std::exp(-x));
  const T e = std::exp(x);
  return e / (T(1) + e);
}

// Column-wise numerically stable softmax (max-subtracted).
template <typename T>
Mat<T> softmax_columns(const Mat<T>& logits) {
  Mat<T> out(logits.rows(), logits.cols());
  for (Eigen::Index c = 0; c < logits.cols(); ++c) {
    const T mx = logits.col(c).maxCoeff();
    out.col(c) = (logits.col(c).array() - mx).exp();
    out.col(c) /= out.col(c).sum();
  }
  return out;
}

template <typename T>
Vec<T> softmax(const Vec<T>& logits) {
  Mat<T> m = logits;
  return softmax_columns<T>(m).col(0);
}

// Inverted-dropout mask: entries are 0 with probability p, else 1/(1-p).
template <typename T>
Mat<T> dropout_mask(Eigen::Index rows, Eigen::Index cols, T p, RandomStream& rng) {
  Mat<T> m(rows, cols);
  const T keep_scale = T(1) / (T(1) - p);
  for (Eigen::Index c = 0; c < cols; ++c) {
    for (Eigen::Index r = 0; r < rows; ++r) {
      m(r, c) = (rng.u01() < static_cast<double>(p)) ? T(0) : keep_scale;
    }
  }
  return m;
}

// ---------------------------------------------------------------------------
// Parameter-count bookkeeping.
// ---------------------------------------------------------------------------

inline std::int64_t linear_param_count(std::int64_t in, std::int64_t out) {
  return in * out + out;
}

// Single combined bias per gate set: 4*(H*d + H*H + H).
inline std::int64_t lstm_layer_param_count(std::int64_t input, std::int64_t hidden) {
  return 4 * (hidden * input + hidden * hidden + hidden);
}

// ---------------------------------------------------------------------------
// Two-layer LSTM stack with intra-layer dropout.
//
// Layer parameters (per layer L in {1,2}): <prefix>.lL.w_ih [4H x d],
// <prefix>.lL.w_hh [4H x H], <prefix>.lL.b [4H x 1]. Gate row order: input,
// forget, candidate, output. Batched over columns.
// ---------------------------------------------------------------------------

template <typename T>
struct LayerCache {
  std::vector<Mat<T>> gates;  // activated [i; f; g; o], 4H x n per step
  std::vector<Mat<T>> cell;   // c_t
  std::vector<Mat<T>> cell_tanh;
  std::vector<Mat<T>> hidden;  // h_t
};

template <typename T>
struct StackCache {
  int steps = 0;
  int cols = 0;
  std::vector<Mat<T>> inputs;  // d x n per step
  LayerCache<T> l1, l2;
  std::vector<Mat<T>> mask;    // dropout masks (empty in eval mode)
  std::vector<Mat<T>> l2_in;   // layer-2 inputs (masked layer-1 hidden)
};

template <typename T>
class LstmStack {
 public:
  LstmStack() = default;
  LstmStack(std::string prefix, int input_dim, int hidden, T dropout)
      : prefix_(std::move(prefix)), input_dim_(input_dim), hidden_(hidden), dropout_(dropout) {}

  int hidden() const { return hidden_; }
  int input_dim() const { return input_dim_; }

  std::int64_t param_count() const {
    return lstm_layer_param_count(input_dim_, hidden_) + lstm_layer_param_count(hidden_, hidden_);
  }

  void register_params(ParamSet<T>& params) const {
    params.add(prefix_ + ".l1.w_ih", 4 * hidden_, input_dim_);
    params.add(prefix_ + ".l1.w_hh", 4 * hidden_, hidden_);
    params.add(prefix_ + ".l1.b", 4 * hidden_, 1);
    params.add(prefix_ + ".l2.w_ih", 4 * hidden_, hidden_);
    params.add(prefix_ + ".l2.w_hh", 4 * hidden_, hidden_);
    params.add(prefix_ + ".l2.b", 4 * hidden_, 1);
  }

  void init_params(ParamSet<T>& params, RandomStream& rng) const {
    const double k = 1.0 / std::sqrt(static_cast<double>(hidden_));
    for (const char* part : {".l1.w_ih", ".l1.w_hh", ".l1.b", ".l2.w_ih", ".l2.w_hh", ".l2.b"}) {
      Mat<T>& m = params.at(prefix_ + part);
      for (Eigen::Index c = 0; c < m.cols(); ++c) {
        for (Eigen::Index r = 0; r < m.rows(); ++r) {
          m(r, c) = static_cast<T>(rng.uniform(-k, k));
        }
      }
    }
  }

  // Full-sequence forward. Takes ownership of the per-step inputs.
  void forward(const ParamSet<T>& params, std::vector<Mat<T>> inputs, bool train,
               std::uint64_t mask_seed, StackCache<T>& cache) const {
    const int steps = static_cast<int>(inputs.size());
    const int n = steps > 0 ? static_cast<int>(inputs[0].cols()) : 0;
    cache.steps = steps;
    cache.cols = n;
    cache.inputs = std::move(inputs);
    reset_layer_cache(cache.l1, steps);
    reset_layer_cache(cache.l2, steps);
    cache.mask.clear();
    cache.l2_in.assign(static_cast<std::size_t>(steps), Mat<T>());

    const bool use_dropout = train && dropout_ > T(0);
    RandomStream mask_rng(mask_seed);
    if (use_dropout) cache.mask.resize(static_cast<std::size_t>(steps));

    Mat<T> h1 = Mat<T>::Zero(hidden_, n), c1 = h1, h2 = h1, c2 = h1;
    for (int t = 0; t < steps; ++t) {
      layer_step(params, 1, cache.inputs[static_cast<std::size_t>(t)], h1, c1, cache.l1, t);
      h1 = cache.l1.hidden[static_cast<std::size_t>(t)];
      c1 = cache.l1.cell[static_cast<std::size_t>(t)];
      Mat<T>& l2_in = cache.l2_in[static_cast<std::size_t>(t)];
      if (use_dropout) {
        cache.mask[static_cast<std::size_t>(t)] = dropout_mask<T>(hidden_, n, dropout_, mask_rng);
        l2_in = h1.cwiseProduct(cache.mask[static_cast<std::size_t>(t)]);
      } else {
        l2_in = h1;
      }
      layer_step(params, 2, l2_in, h2, c2, cache.l2, t);
      h2 = cache.l2.hidden[static_cast<std::size_t>(t)];
      c2 = cache.l2.cell[static_cast<std::size_t>(t)];
    }
  }

  // Reverse pass. dh_out[t] is the loss gradient w.r.t. the layer-2 hidden
  // output at step t (size-0 matrix means zero). Parameter gradients are
  // accumulated into `grads`.
  void backward(const ParamSet<T>& params, const StackCache<T>& cache,
                const std::vector<Mat<T>>& dh_out, ParamSet<T>& grads) const {
    const int steps = cache.steps;
    const int n = cache.cols;
    Mat<T> dh2 = Mat<T>::Zero(hidden_, n), dc2 = dh2, dh1 = dh2, dc1 = dh2;
    Mat<T> dx2(hidden_, n);
    for (int t = steps - 1; t >= 0; --t) {
      if (dh_out[static_cast<std::size_t>(t)].size() > 0) dh2 += dh_out[static_cast<std::size_t>(t)];
      layer_backward_step(params, grads, 2, cache.l2, cache.l2_in[static_cast<std::size_t>(t)], t,
                          dh2, dc2, &dx2);
      if (!cache.mask.empty()) dx2 = dx2.cwiseProduct(cache.mask[static_cast<std::size_t>(t)]);
      dh1 += dx2;
      layer_backward_step(params, grads, 1, cache.l1, cache.inputs[static_cast<std::size_t>(t)], t,
                          dh1, dc1, nullptr);
    }
  }

  // Stateful single-step application (no dropout; used for sampling).
  struct State {
    Mat<T> h1, c1, h2, c2;
    void reset(int hidden, int cols) {
      h1.setZero(hidden, cols);
      c1 = h1;
      h2 = h1;
      c2 = h1;
    }
    void replicate_column(int cols) {
      // Broadcast a single-column state to `cols` identical columns.
      h1 = h1.col(0).replicate(1, cols).eval();
      c1 = c1.col(0).replicate(1, cols).eval();
      h2 = h2.col(0).replicate(1, cols).eval();
      c2 = c2.col(0).replicate(1, cols).eval();
    }
  };

  void step(const ParamSet<T>& params, const Mat<T>& x, State& st) const {
    Mat<T> gates, c, ct, h;
    raw_step(params, 1, x, st.h1, st.c1, gates, c, ct, h);
    st.h1 = h;
    st.c1 = c;
    raw_step(params, 2, st.h1, st.h2, st.c2, gates, c, ct, h);
    st.h2 = h;
    st.c2 = c;
  }

 private:
  static void reset_layer_cache(LayerCache<T>& lc, int steps) {
    lc.gates.assign(static_cast<std::size_t>(steps), Mat<T>());
    lc.cell.assign(static_cast<std::size_t>(steps), Mat<T>());
    lc.cell_tanh.assign(static_cast<std::size_t>(steps), Mat<T>());
    lc.hidden.assign(static_cast<std::size_t>(steps), Mat<T>());
  }

  void raw_step(const ParamSet<T>& params, int layer, const Mat<T>& x, const Mat<T>& h_prev,
                const Mat<T>& c_prev, Mat<T>& gates, Mat<T>& c, Mat<T>& ct, Mat<T>& h) const {
    const std::string lp = prefix_ + (layer == 1 ? ".l1" : ".l2");
    const Mat<T>& w_ih = params.at(lp + ".w_ih");
    const Mat<T>& w_hh = params.at(lp + ".w_hh");
    const Mat<T>& b = params.at(lp + ".b");
    const int hd = hidden_;
    gates.noalias() = w_ih * x;
    gates.noalias() += w_hh * h_prev;
    gates.colwise() += b.col(0);
    auto gi = gates.topRows(hd);
    auto gf = gates.middleRows(hd, hd);
    auto gg = gates.middleRows(2 * hd, hd);
    auto go = gates.bottomRows(hd);
    gi = gi.unaryExpr([](T v) { return sigmoid(v); }).eval();
    gf = gf.unaryExpr([](T v) { return sigmoid(v); }).eval();
    gg = gg.array().tanh().matrix().eval();
    go = go.unaryExpr([](T v) { return sigmoid(v); }).eval();
    c = gf.cwiseProduct(c_prev) + gi.cwiseProduct(gg);
    ct = c.array().tanh().matrix();
    h = go.cwiseProduct(ct);
  }

  void layer_step(const ParamSet<T>& params, int layer, const Mat<T>& x, const Mat<T>& h_prev,
                  const Mat<T>& c_prev, LayerCache<T>& lc, int t) const {
    raw_step(params, layer, x, h_prev, c_prev, lc.gates[static_cast<std::size_t>(t)],
             lc.cell[static_cast<std::size_t>(t)], lc.cell_tanh[static_cast<std::size_t>(t)],
             lc.hidden[static_cast<std::size_t>(t)]);
  }

  void layer_backward_step(const ParamSet<T>& params, ParamSet<T>& grads, int layer,
                           const LayerCache<T>& lc, const Mat<T>& x, int t, Mat<T>& dh,
                           Mat<T>& dc, Mat<T>* dx) const {
    const std::string lp = prefix_ + (layer == 1 ? ".l1" : ".l2");
    const Mat<T>& w_ih = params.at(lp + ".w_ih");
    const Mat<T>& w_hh = params.at(lp + ".w_hh");
    const int hd = hidden_;
    const std::size_t ut = static_cast<std::size_t>(t);
    const Mat<T>& gates = lc.gates[ut];
    auto gi = gates.topRows(hd);
    auto gf = gates.middleRows(hd, hd);
    auto gg = gates.middleRows(2 * hd, hd);
    auto go = gates.bottomRows(hd);
    const Mat<T>& ct = lc.cell_tanh[ut];
    const Mat<T> c_prev =
        t > 0 ? lc.cell[ut - 1] : Mat<T>::Zero(hd, static_cast<int>(dh.cols()));
    const Mat<T> h_prev =
        t > 0 ? lc.hidden[ut - 1] : Mat<T>::Zero(hd, static_cast<int>(dh.cols()));

    Mat<T> d_o = dh.cwiseProduct(ct);
    Mat<T> d_c =
        dc + (dh.array() * go.array() * (T(1) - ct.array().square())).matrix();
    Mat<T> d_i = d_c.cwiseProduct(gg);
    Mat<T> d_g = d_c.cwiseProduct(gi);
    Mat<T> d_f = d_c.cwiseProduct(c_prev);

    Mat<T> draw(4 * hd, dh.cols());
    draw.topRows(hd) = (d_i.array() * gi.array() * (T(1) - gi.array())).matrix();
    draw.middleRows(hd, hd) = (d_f.array() * gf.array() * (T(1) - gf.array())).matrix();
    draw.middleRows(2 * hd, hd) = (d_g.array() * (T(1) - gg.array().square())).matrix();
    draw.bottomRows(hd) = (d_o.array() * go.array() * (T(1) - go.array())).matrix();

    grads.at(lp + ".w_ih").noalias() += draw * x.transpose();
    grads.at(lp + ".w_hh").noalias() += draw * h_prev.transpose();
    grads.at(lp + ".b").col(0) += draw.rowwise().sum();

    if (dx != nullptr) dx->noalias() = w_ih.transpose() * draw;
    dh.noalias() = w_hh.transpose() * draw;  // gradient into h_{t-1}
    dc = d_c.cwiseProduct(gf);               // gradient into c_{t-1}
  }

  std::string prefix_;
  int input_dim_ = 0;
  int hidden_ = 0;
  T dropout_ = T(0);
};

// ---------------------------------------------------------------------------
// Adam with decoupled weight decay (applied as p -= lr*wd*p before the step).
// ---------------------------------------------------------------------------

template <typename T>
class Adam {
 public:
  Adam(double lr, double weight_decay, double beta1 = 0.9, double beta2 = 0.999,
       double eps = 1e-8)
      : lr_(lr), wd_(weight_decay), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void step(ParamSet<T>& params, const ParamSet<T>& grads) {
    if (t_ == 0) {
      m_ = params.zeros_like();
      v_ = params.zeros_like();
    }
    ++t_;
    const T b1 = static_cast<T>(beta1_), b2 = static_cast<T>(beta2_);
    const T bc1 = static_cast<T>(1.0 - std::pow(beta1_, t_));
    const T bc2 = static_cast<T>(1.0 - std::pow(beta2_, t_));
    const T lr = static_cast<T>(lr_), wd = static_cast<T>(wd_), eps = static_cast<T>(eps_);
    for (const auto& name : params.names()) {
      Mat<T>& p = params.at(name);
      const Mat<T>& g = grads.at(name);
      Mat<T>& m = m_.at(name);
      Mat<T>& v = v_.at(name);
      if (wd != T(0)) p -= lr * wd * p;
      m = b1 * m + (T(1) - b1) * g;
      v = b2 * v + (T(1) - b2) * g.cwiseProduct(g);
      p.array() -= lr * (m.array() / bc1) / ((v.array() / bc2).sqrt() + eps);
    }
  }

  int steps_taken() const { return t_; }
  double learning_rate() const { return lr_; }

 private:
  double lr_, wd_, beta1_, beta2_, eps_;
  int t_ = 0;
  ParamSet<T> m_, v_;
};

// ---------------------------------------------------------------------------
// Central finite differences over every entry of a parameter set. The loss
// functor must re-evaluate the full forward pass. Test oracle; O(2 * count)
// forward passes.
// ---------------------------------------------------------------------------

inline ParamSet<double> numeric_gradient(ParamSet<double>& params,
                                         const std::function<double()>& loss,
                                         double eps = 1e-4) {
  ParamSet<double> out = params.zeros_like();
  for (const auto& name : params.names()) {
    Mat<double>& p = params.at(name);
    Mat<double>& g = out.at(name);
    for (Eigen::Index c = 0; c < p.cols(); ++c) {
      for (Eigen::Index r = 0; r < p.rows(); ++r) {
        const double orig = p(r, c);
        p(r, c) = orig + eps;
        const double up = loss();
        p(r, c) = orig - eps;
        const double down = loss();
        p(r, c) = orig;
        g(r, c) = (up - down) / (2.0 * eps);
      }
    }
  }
  return out;
}

// Largest relative disagreement between two gradient sets; denominators are
// floored so near-zero pairs compare absolutely.
inline double max_relative_error(const ParamSet<double>& a, const ParamSet<double>& b,
                                 double floor = 1e-4) {
  double worst = 0.0;
  for (const auto& name : a.names()) {
    const Mat<double>& ma = a.at(name);
    const Mat<double>& mb = b.at(name);
    for (Eigen::Index c = 0; c < ma.cols(); ++c) {
      for (Eigen::Index r = 0; r < ma.rows(); ++r) {
        const double denom = std::max({std::abs(ma(r, c)), std::abs(mb(r, c)), floor});
        worst = std::max(worst, std::abs(ma(r, c) - mb(r, c)) / denom);
      }
    }
  }
  return worst;
}

}  // namespace c2far::nn
