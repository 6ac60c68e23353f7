#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "rrid/gradcheck.hpp"
#include "rrid/graph.hpp"
#include "rrid/rng.hpp"

using namespace rrid;

namespace {

BasicTensor<double> random_tensor(Rng& rng, Shape shape, double scale = 1.0) {
  BasicTensor<double> t(std::move(shape));
  for (auto& v : t.data()) v = scale * rng.normal();
  return t;
}

void require_pass(const GradCheckReport& r) {
  INFO("worst " << r.worst << " analytic " << r.worst_analytic << " numeric " << r.worst_numeric
                << " kinked " << r.kinked);
  CHECK(r.kinked == 0);
  CHECK(r.max_rel_err < 1e-4);
}

}  // namespace

TEST_CASE("chained shape ops and reductions have correct gradients") {
  Rng rng(3);
  const std::vector<BasicTensor<double>> inputs{random_tensor(rng, {4, 6}),
                                                random_tensor(rng, {6, 3}),
                                                random_tensor(rng, {3})};
  const auto report = grad_check(
      [](auto& g, std::span<const NodeId> x) {
        const NodeId y = g.linear(x[0], x[1], x[2]);
        const NodeId parts[] = {y, g.scale(y, 2)};
        const NodeId z = g.concat(parts, 1);
        const NodeId r = g.reshape(g.slice(z, 1, 1, 5), {4, 2, 2});
        const NodeId m = g.reduce_max(r, 1);
        const NodeId a = g.reduce_mean(r, 2);
        return g.sum(g.add(g.relu(m), g.sub(a, m)));
      },
      inputs);
  require_pass(report);
  CHECK(report.coordinates == 24 + 18 + 3);
}

TEST_CASE("softmax cross-entropy: value and gradient") {
  Rng rng(4);
  const auto logits = random_tensor(rng, {5, 4}, 2.0);
  const std::vector<int> labels{0, 3, 1, 1, 2};
  Graph<double> g;
  const NodeId z = g.leaf(logits);
  const double value = g.value(g.softmax_cross_entropy(z, labels))[0];
  oracle::Rows rows(5, std::vector<long double>(4));
  for (std::size_t n = 0; n < 5; ++n) {
    for (std::size_t k = 0; k < 4; ++k) rows[n][k] = logits.at(n, k);
  }
  CHECK(std::abs(value - static_cast<double>(oracle::cross_entropy(rows, labels))) < 1e-6);
  require_pass(grad_check(
      [&](auto& gr, std::span<const NodeId> x) { return gr.softmax_cross_entropy(x[0], labels); },
      {logits}));
  const int bad[] = {0, 4, 1, 1, 2};
  CHECK_THROWS_AS(g.softmax_cross_entropy(z, bad), DataError);
}

TEST_CASE("batch-hard triplet gradient") {
  Rng rng(5);
  const auto emb = random_tensor(rng, {8, 5});
  const std::vector<int> labels{0, 0, 1, 1, 2, 2, 3, 3};
  require_pass(grad_check(
      [&](auto& g, std::span<const NodeId> x) {
        using T = std::remove_cvref_t<decltype(g.value(x[0])[0])>;
        return g.batch_hard_triplet(x[0], labels, T(1.5));
      },
      {emb}));
}

TEST_CASE("batchnorm gradients in both modes") {
  for (Mode mode : {Mode::training, Mode::inference}) {
    Rng rng(6);
    BasicParamStore<double> store;
    store.add("x", random_tensor(rng, {6, 4}));
    const auto bn = add_batchnorm(store, "bn", 4);
    for (auto& v : store[bn.gamma].value.data()) v = rng.uniform(0.5, 1.5);
    for (auto& v : store[bn.beta].value.data()) v = rng.uniform(-1, 1);
    for (auto& v : store[bn.running_mean].value.data()) v = rng.uniform(-1, 1);
    for (auto& v : store[bn.running_var].value.data()) v = rng.uniform(0.5, 2);
    const auto w = random_tensor(rng, {6, 4});
    const auto report = grad_check_params(
        [&](auto& g, auto& s) {
          using T = std::remove_cvref_t<decltype(s[0].value[0])>;
          const NodeId y = g.batchnorm(g.param(s, 0), s, bn);
          // relu against a random offset so the loss is not shift-invariant
          const NodeId c = g.constant(w.template cast<T>());
          return g.sum(g.relu(g.sub(y, c)));
        },
        store, mode);
    INFO("mode " << (mode == Mode::training ? "training" : "inference"));
    require_pass(report);
  }
}

TEST_CASE("batchnorm on the two-point batch [[1],[3]]") {
  ParamStore store;
  const auto bn = add_batchnorm(store, "bn", 1);
  Graph<float> g(Mode::training);
  const NodeId y = g.batchnorm(g.constant(Tensor({2, 1}, {1.0f, 3.0f})), store, bn);
  const float expected = static_cast<float>(1.0 / std::sqrt(1.0 + 1e-5));
  CHECK(g.value(y)[0] == doctest::Approx(-expected).epsilon(1e-6));
  CHECK(g.value(y)[1] == doctest::Approx(expected).epsilon(1e-6));
  // running stats: momentum 0.1, unbiased variance 2
  CHECK(store[bn.running_mean].value[0] == doctest::Approx(0.2));
  CHECK(store[bn.running_var].value[0] == doctest::Approx(0.9 + 0.1 * 2.0));
}

TEST_CASE("batchnorm inference uses running statistics and leaves them alone") {
  ParamStore store;
  const auto bn = add_batchnorm(store, "bn", 1);
  store[bn.running_mean].value[0] = 2.0f;
  store[bn.running_var].value[0] = 4.0f;
  Graph<float> g(Mode::inference);
  const NodeId y = g.batchnorm(g.constant(Tensor({1, 1}, {6.0f})), store, bn);
  CHECK(g.value(y)[0] == doctest::Approx(4.0 / std::sqrt(4.0 + 1e-5)));
  CHECK(store[bn.running_mean].value[0] == 2.0f);
}

TEST_CASE("batchnorm training on one row returns beta") {
  ParamStore store;
  const auto bn = add_batchnorm(store, "bn", 2);
  store[bn.beta].value[0] = 0.25f;
  store[bn.beta].value[1] = -1.0f;
  Graph<float> g(Mode::training);
  const NodeId y = g.batchnorm(g.constant(Tensor({1, 2}, {7.0f, -3.0f})), store, bn);
  CHECK(g.value(y)[0] == 0.25f);
  CHECK(g.value(y)[1] == -1.0f);
}

TEST_CASE("graph rejects bad shapes and non-scalar losses") {
  Graph<float> g;
  const NodeId x = g.leaf(Tensor({2, 3}));
  CHECK_THROWS_AS(g.linear(x, g.leaf(Tensor({4, 2})), g.leaf(Tensor({2}))), DimensionError);
  CHECK_THROWS_AS(g.add(x, g.leaf(Tensor({3, 2}))), DimensionError);
  CHECK_THROWS_AS(g.slice(x, 1, 2, 5), DimensionError);
  CHECK_THROWS_AS(g.backward(x), DimensionError);
}

TEST_CASE("gradients of unreached nodes are zero") {
  Graph<float> g;
  const NodeId a = g.leaf(Tensor::vector({1, 2}));
  const NodeId b = g.leaf(Tensor::vector({3, 4}));
  g.backward(g.sum(a));
  CHECK(g.grad(a) == Tensor::vector({1, 1}));
  CHECK(g.grad(b) == Tensor::vector({0, 0}));
}

TEST_CASE("value references survive later ops") {
  Graph<float> g;
  const NodeId a = g.leaf(Tensor::vector({1, 2}));
  const Tensor& va = g.value(a);
  NodeId x = a;
  for (int i = 0; i < 1000; ++i) x = g.scale(x, 1.0f);
  CHECK(va == Tensor::vector({1, 2}));
  CHECK(&va == &g.value(a));
}

TEST_CASE("max reduction routes the upstream gradient to one element per slice") {
  Rng rng(31);
  for (int t = 0; t < 20; ++t) {
    Graph<double> g;
    const NodeId x = g.leaf(random_tensor(rng, {3, 5, 4}));
    const NodeId up = g.constant(random_tensor(rng, {3, 4}));
    const NodeId m = g.reduce_max(x, 1);
    // loss = <m, up>
    g.backward(g.sum(g.linear(g.reshape(m, {1, 12}), g.reshape(up, {12, 1}),
                              g.constant(BasicTensor<double>({1}, 0.0)))));
    const auto& gx = g.grad(x);
    for (std::size_t a = 0; a < 3; ++a) {
      for (std::size_t b = 0; b < 4; ++b) {
        double mass = 0;
        int nonzero = 0;
        for (std::size_t r = 0; r < 5; ++r) {
          mass += gx[(a * 5 + r) * 4 + b];
          nonzero += gx[(a * 5 + r) * 4 + b] != 0.0;
        }
        CHECK(mass == g.value(up)[a * 4 + b]);
        CHECK(nonzero == 1);
      }
    }
  }
  // ties: the lowest index takes the gradient
  Graph<double> g;
  const NodeId x = g.leaf(BasicTensor<double>({3, 1}, std::vector<double>{2, 2, 1}));
  g.backward(g.sum(g.reduce_max(x, 0)));
  CHECK(g.grad(x) == BasicTensor<double>({3, 1}, std::vector<double>{1, 0, 0}));
}

TEST_CASE("max reduction dominates mean reduction") {
  Rng rng(32);
  for (int t = 0; t < 100; ++t) {
    Graph<float> g;
    const NodeId x = g.constant(random_tensor(rng, {4, 1 + rng.below(9), 3}, 10.0).cast<float>());
    const auto& mx = g.value(g.reduce_max(x, 1));
    const auto& mean = g.value(g.reduce_mean(x, 1));
    for (std::size_t i = 0; i < mx.size(); ++i) CHECK(mx[i] >= mean[i]);
  }
}

TEST_CASE("inference batchnorm is affine per channel") {
  Rng rng(33);
  BasicParamStore<double> store;
  const auto bn = add_batchnorm(store, "bn", 3);
  for (auto id : {bn.gamma, bn.beta, bn.running_mean}) {
    for (auto& v : store[id].value.data()) v = rng.normal();
  }
  for (auto& v : store[bn.running_var].value.data()) v = rng.uniform(0.5, 2.0);
  Graph<double> g(Mode::inference);
  const auto x = random_tensor(rng, {6, 3});
  const auto& y = g.value(g.batchnorm(g.constant(x), store, bn));
  for (std::size_t ch = 0; ch < 3; ++ch) {
    const double slope = (y[3 + ch] - y[ch]) / (x[3 + ch] - x[ch]);
    for (std::size_t n = 2; n < 6; ++n) {
      const double pred = y[ch] + slope * (x[n * 3 + ch] - x[ch]);
      CHECK(std::abs(pred - y[n * 3 + ch]) < 1e-9);
    }
  }
}

TEST_CASE("identical graphs give identical values and gradients") {
  Rng rng(34);
  const auto x = random_tensor(rng, {8, 5}).cast<float>();
  const std::vector<int> labels{0, 0, 1, 1, 2, 2, 3, 3};
  auto run = [&] {
    Graph<float> g;
    const NodeId leaf = g.leaf(x);
    const NodeId loss = g.add(g.batch_hard_triplet(leaf, labels, 0.3f),
                              g.softmax_cross_entropy(g.relu(leaf), labels));
    g.backward(loss);
    return std::pair{g.value(loss), g.grad(leaf)};
  };
  const auto a = run(), b = run();
  CHECK(a.first == b.first);
  CHECK(a.second == b.second);
}
