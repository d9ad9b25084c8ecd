#include <doctest.h>

#include <cmath>

#include "c2far/neural.hpp"

using namespace c2far;
using namespace c2far::nn;

namespace {

// Oracle: plain scalar-loop two-layer LSTM recurrence over a single sequence,
// written independently of the batched implementation.
std::vector<VecD> oracle_stack_forward(const ParamSet<double>& p, const std::string& prefix,
                                       int hidden, const std::vector<VecD>& inputs) {
  auto cell = [&](const std::string& lp, const VecD& x, VecD& h, VecD& c) {
    const Mat<double>& w_ih = p.at(lp + ".w_ih");
    const Mat<double>& w_hh = p.at(lp + ".w_hh");
    const Mat<double>& b = p.at(lp + ".b");
    VecD g = w_ih * x + w_hh * h + b.col(0);
    VecD nh(hidden), nc(hidden);
    for (int j = 0; j < hidden; ++j) {
      const double gi = 1.0 / (1.0 + std::exp(-g(j)));
      const double gf = 1.0 / (1.0 + std::exp(-g(hidden + j)));
      const double gg = std::tanh(g(2 * hidden + j));
      const double go = 1.0 / (1.0 + std::exp(-g(3 * hidden + j)));
      nc(j) = gf * c(j) + gi * gg;
      nh(j) = go * std::tanh(nc(j));
    }
    h = nh;
    c = nc;
  };
  VecD h1 = VecD::Zero(hidden), c1 = h1, h2 = h1, c2 = h1;
  std::vector<VecD> out;
  for (const VecD& x : inputs) {
    cell(prefix + ".l1", x, h1, c1);
    cell(prefix + ".l2", h1, h2, c2);
    out.push_back(h2);
  }
  return out;
}

ParamSet<double> random_stack_params(const LstmStack<double>& stack, std::uint64_t seed) {
  ParamSet<double> p;
  stack.register_params(p);
  RandomStream rng(seed);
  stack.init_params(p, rng);
  return p;
}

}  // namespace

TEST_CASE("softmax: uniform, shift invariance, hand value") {
  VecD logits = VecD::Zero(4);
  VecD p = softmax<double>(logits);
  for (int i = 0; i < 4; ++i) CHECK(p(i) == doctest::Approx(0.25));

  VecD shifted(4);
  shifted << 3.0, 3.0, 3.0, 3.0;
  VecD q = softmax<double>(shifted);
  for (int i = 0; i < 4; ++i) CHECK(std::abs(q(i) - p(i)) < 1e-12);

  VecD two(2);
  two << 0.0, std::log(3.0);
  VecD r = softmax<double>(two);
  CHECK(r(0) == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(r(1) == doctest::Approx(0.75).epsilon(1e-12));
}

TEST_CASE("softplus: value, asymptote, positivity") {
  CHECK(softplus(0.0) == doctest::Approx(std::log(2.0)));
  CHECK(softplus(50.0) == doctest::Approx(50.0).epsilon(1e-9));
  CHECK(softplus(-50.0) > 0.0);
  CHECK(softplus(700.0) == doctest::Approx(700.0));  // no overflow
}

TEST_CASE("lstm: zero weights give zero outputs") {
  LstmStack<double> stack("s", 3, 4, 0.0);
  ParamSet<double> p;
  stack.register_params(p);
  std::vector<Mat<double>> inputs(5, Mat<double>::Random(3, 2));
  StackCache<double> cache;
  stack.forward(p, inputs, false, 0, cache);
  for (int t = 0; t < 5; ++t) {
    CHECK(cache.l2.hidden[static_cast<std::size_t>(t)].cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("lstm: batched forward matches the scalar oracle") {
  const int hidden = 6, dim = 5, steps = 7, cols = 3;
  LstmStack<double> stack("s", dim, hidden, 0.0);
  ParamSet<double> p = random_stack_params(stack, 99);

  std::vector<Mat<double>> inputs(steps);
  RandomStream rng(7);
  for (auto& x : inputs) {
    x.resize(dim, cols);
    for (int c = 0; c < cols; ++c) {
      for (int r = 0; r < dim; ++r) x(r, c) = rng.uniform(-1, 1);
    }
  }
  StackCache<double> cache;
  stack.forward(p, inputs, false, 0, cache);

  for (int c = 0; c < cols; ++c) {
    std::vector<VecD> col_inputs;
    for (const auto& x : inputs) col_inputs.push_back(x.col(c));
    const auto oracle = oracle_stack_forward(p, "s", hidden, col_inputs);
    for (int t = 0; t < steps; ++t) {
      const double diff =
          (cache.l2.hidden[static_cast<std::size_t>(t)].col(c) - oracle[static_cast<std::size_t>(t)])
              .cwiseAbs()
              .maxCoeff();
      CHECK(diff < 1e-6);
    }
  }
}

TEST_CASE("lstm: sequence of length one equals a single step") {
  const int hidden = 4, dim = 3;
  LstmStack<double> stack("s", dim, hidden, 0.0);
  ParamSet<double> p = random_stack_params(stack, 5);
  Mat<double> x = Mat<double>::Random(dim, 2);

  StackCache<double> cache;
  stack.forward(p, {x}, false, 0, cache);
  LstmStack<double>::State st;
  st.reset(hidden, 2);
  stack.step(p, x, st);
  CHECK((st.h2 - cache.l2.hidden[0]).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("lstm backward matches finite differences") {
  const int hidden = 4, dim = 3, steps = 5, cols = 2;
  LstmStack<double> stack("s", dim, hidden, 0.0);
  ParamSet<double> p = random_stack_params(stack, 21);
  std::vector<Mat<double>> inputs(steps);
  RandomStream rng(23);
  for (auto& x : inputs) {
    x.resize(dim, cols);
    for (int c = 0; c < cols; ++c) {
      for (int r = 0; r < dim; ++r) x(r, c) = rng.uniform(-1, 1);
    }
  }
  // Loss: sum of all layer-2 hidden outputs over time.
  auto loss_fn = [&]() {
    StackCache<double> cache;
    stack.forward(p, inputs, false, 0, cache);
    double s = 0.0;
    for (int t = 0; t < steps; ++t) s += cache.l2.hidden[static_cast<std::size_t>(t)].sum();
    return s;
  };
  StackCache<double> cache;
  stack.forward(p, inputs, false, 0, cache);
  std::vector<Mat<double>> dh(steps, Mat<double>::Ones(hidden, cols));
  ParamSet<double> grads = p.zeros_like();
  stack.backward(p, cache, dh, grads);
  ParamSet<double> numeric = numeric_gradient(p, loss_fn, 1e-5);
  CHECK(max_relative_error(grads, numeric) < 1e-6);
}

TEST_CASE("dropout: eval identity, training preserves expectation") {
  LstmStack<float> stack("s", 2, 128, 0.3f);
  RandomStream rng(77);
  Mat<float> mask = dropout_mask<float>(128, 64, 0.3f, rng);
  // Entries are 0 or 1/(1-p); mean approx 1.
  const double mean = mask.template cast<double>().mean();
  CHECK(mean == doctest::Approx(1.0).epsilon(0.05));
  for (Eigen::Index c = 0; c < mask.cols(); ++c) {
    for (Eigen::Index r = 0; r < mask.rows(); ++r) {
      const float v = mask(r, c);
      CHECK((v == 0.0f || std::abs(v - 1.0f / 0.7f) < 1e-6));
    }
  }
}

TEST_CASE("forward is deterministic given the dropout mask seed") {
  LstmStack<float> stack("s", 3, 8, 0.25f);
  ParamSet<float> p;
  stack.register_params(p);
  RandomStream rng(3);
  stack.init_params(p, rng);
  std::vector<Mat<float>> inputs(4, Mat<float>::Random(3, 5));
  StackCache<float> a, b;
  stack.forward(p, inputs, true, 42, a);
  stack.forward(p, inputs, true, 42, b);
  for (int t = 0; t < 4; ++t) {
    CHECK((a.l2.hidden[static_cast<std::size_t>(t)] - b.l2.hidden[static_cast<std::size_t>(t)])
              .cwiseAbs()
              .maxCoeff() == 0.0f);
  }
}

TEST_CASE("adam: gradient descent scalar recurrence and basic properties") {
  // First-step magnitude approx lr.
  ParamSet<double> p;
  p.add("w", 1, 1)(0, 0) = 3.0;
  ParamSet<double> g = p.zeros_like();
  g.at("w")(0, 0) = 6.0;  // d(w^2)/dw at w=3
  Adam<double> adam(0.1, 0.0);
  adam.step(p, g);
  CHECK(p.at("w")(0, 0) == doctest::Approx(3.0 - 0.1).epsilon(1e-6));

  // Zero gradient, zero decay: parameters unchanged.
  ParamSet<double> q;
  q.add("w", 2, 2).setConstant(1.5);
  ParamSet<double> zg = q.zeros_like();
  Adam<double> adam2(0.5, 0.0);
  adam2.step(q, zg);
  CHECK(q.at("w")(0, 0) == doctest::Approx(1.5));

  // Repeated steps on f(w) = w^2 from w=1 shrink |w| below 0.1 within 200 steps.
  ParamSet<double> r;
  r.add("w", 1, 1)(0, 0) = 1.0;
  Adam<double> adam3(0.1, 0.0);
  bool converged = false;
  for (int i = 0; i < 200; ++i) {
    ParamSet<double> gr = r.zeros_like();
    gr.at("w")(0, 0) = 2.0 * r.at("w")(0, 0);
    adam3.step(r, gr);
    if (std::abs(r.at("w")(0, 0)) < 0.1) {
      converged = true;
      break;
    }
  }
  CHECK(converged);
}

TEST_CASE("adam: decoupled weight decay shrinks before the step") {
  ParamSet<double> p;
  p.add("w", 1, 1)(0, 0) = 2.0;
  ParamSet<double> g = p.zeros_like();  // zero gradient isolates the decay
  Adam<double> adam(0.1, 0.5);
  adam.step(p, g);
  CHECK(p.at("w")(0, 0) == doctest::Approx(2.0 - 0.1 * 0.5 * 2.0));
}

TEST_CASE("parameter counting helpers") {
  CHECK(linear_param_count(10, 7) == 77);
  CHECK(lstm_layer_param_count(5, 8) == 4 * (8 * 5 + 8 * 8 + 8));
  LstmStack<float> stack("s", 5, 8, 0.0f);
  ParamSet<float> p;
  stack.register_params(p);
  CHECK(static_cast<std::int64_t>(p.total_count()) == stack.param_count());
}

TEST_CASE("softmax cross-entropy gradient equals probs minus target") {
  // Gradient identity check through the numeric differentiator.
  VecD logits(3);
  logits << 0.3, -0.2, 0.9;
  const int target = 1;
  ParamSet<double> p;
  p.add("z", 3, 1) = logits;
  auto loss = [&]() {
    VecD probs = softmax<double>(VecD(p.at("z").col(0)));
    return -std::log(probs(target));
  };
  ParamSet<double> numeric = numeric_gradient(p, loss, 1e-6);
  VecD probs = softmax<double>(logits);
  VecD expected = probs;
  expected(target) -= 1.0;
  CHECK((numeric.at("z").col(0) - expected).cwiseAbs().maxCoeff() < 1e-7);
}
