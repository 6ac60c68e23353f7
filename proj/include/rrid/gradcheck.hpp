#pragma once

// Finite-difference oracle for the graph's reverse-mode gradients.
//
// The analytic gradient comes from a double graph. Each coordinate is then
// estimated numerically, escalating only when the estimate misses:
//   1. three-point central difference at `step`, in double;
//   2. five-point stencil at the same step, in double (truncation O(h^4));
//   3. five-point stencil in long double. Coordinates whose true derivative
//      is ~0 (a bias feeding batchnorm, say) otherwise drown in rounding
//      noise of order eps * |loss| / step.
// If a probe lands on a different relu/max/mining branch than the unperturbed
// point, the step is divided by 10 (down to min_step).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <type_traits>
#include <vector>

#include "rrid/graph.hpp"

namespace rrid {

struct GradCheckOptions {
  double step = 1e-3;
  double tolerance = 1e-4;
  // Smallest step tried when a coordinate straddles a kink.
  double min_step = 1e-7;
};

struct GradCheckReport {
  double max_rel_err = 0.0;
  std::size_t coordinates = 0;
  // Coordinates where the step had to shrink to avoid a branch change.
  std::size_t refined = 0;
  // Coordinates still straddling a branch at min_step. Non-zero means the
  // input sits on a kink and should be re-sampled; the check fails.
  std::size_t kinked = 0;
  // Coordinates that needed stage 2 / stage 3.
  std::size_t five_point = 0;
  std::size_t extended = 0;
  std::string worst;  // where max_rel_err occurred
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  bool pass = false;
};

// |a - n| / max(|a|, |n|, 1e-8)
double relative_error(double analytic, double numeric);

namespace detail {

template <typename T>
struct Evaluation {
  T loss;
  std::vector<std::uint32_t> branches;
};

// `probe(offset)` evaluates with the coordinate shifted by offset.
template <typename T, typename Probe>
bool stencil(Probe& probe, const std::vector<std::uint32_t>& base, bool five_point,
             const GradCheckOptions& options, double& numeric, double& used_step) {
  double step = options.step;
  for (;;) {
    const T h = static_cast<T>(step);
    auto p1 = probe(h);
    auto m1 = probe(-h);
    bool smooth = p1.branches == base && m1.branches == base;
    T estimate = (p1.loss - m1.loss) / (T(2) * h);
    if (five_point) {
      auto p2 = probe(T(2) * h);
      auto m2 = probe(T(-2) * h);
      smooth = smooth && p2.branches == base && m2.branches == base;
      estimate = (T(8) * (p1.loss - m1.loss) - (p2.loss - m2.loss)) / (T(12) * h);
    }
    if (smooth || step <= options.min_step) {
      numeric = static_cast<double>(estimate);
      used_step = step;
      return smooth;
    }
    step /= 10.0;
  }
}

template <typename ProbeD, typename ProbeL>
double estimate(double analytic, ProbeD& probe_d, ProbeL& probe_l,
                const std::vector<std::uint32_t>& base_d, const std::vector<std::uint32_t>& base_l,
                const GradCheckOptions& options, GradCheckReport& report) {
  double numeric = 0.0, step = options.step;
  bool smooth = stencil<double>(probe_d, base_d, false, options, numeric, step);
  bool refined = step < options.step;
  if (smooth && relative_error(analytic, numeric) >= options.tolerance) {
    ++report.five_point;
    smooth = stencil<double>(probe_d, base_d, true, options, numeric, step);
    refined = refined || step < options.step;
    if (smooth && relative_error(analytic, numeric) >= options.tolerance) {
      ++report.extended;
      smooth = stencil<long double>(probe_l, base_l, true, options, numeric, step);
      refined = refined || step < options.step;
    }
  }
  if (refined) ++report.refined;
  if (!smooth) ++report.kinked;
  return numeric;
}

inline void record(GradCheckReport& r, double analytic, double numeric, const std::string& where) {
  const double err = relative_error(analytic, numeric);
  ++r.coordinates;
  if (r.coordinates == 1 || err > r.max_rel_err) {
    r.max_rel_err = err;
    r.worst = where;
    r.worst_analytic = analytic;
    r.worst_numeric = numeric;
  }
}

inline void finish(GradCheckReport& r, const GradCheckOptions& options) {
  r.pass = r.kinked == 0 && r.max_rel_err < options.tolerance;
}

}  // namespace detail

// `f(Graph<T>&, std::span<const NodeId>) -> NodeId` must accept
// T = double and T = long double (write it as a generic lambda). One leaf is
// created per input, in order.
template <typename Builder>
GradCheckReport grad_check(Builder&& f, const std::vector<BasicTensor<double>>& inputs,
                           const GradCheckOptions& options = {}) {
  std::vector<BasicTensor<double>> xd = inputs;
  std::vector<BasicTensor<long double>> xl;
  for (const auto& t : inputs) xl.push_back(t.template cast<long double>());

  auto evaluate = [&](auto& xs, std::vector<BasicTensor<double>>* grads) {
    using T = typename std::remove_cvref_t<decltype(xs)>::value_type::value_type;
    Graph<T> g(Mode::training);
    g.set_update_running_stats(false);
    g.set_grad_enabled(grads != nullptr);
    std::vector<NodeId> leaves;
    for (const auto& t : xs) leaves.push_back(g.leaf(t));
    const NodeId loss = f(g, std::span<const NodeId>(leaves));
    detail::Evaluation<T> e{g.value(loss)[0], g.branch_signature()};
    if (grads) {
      g.backward(loss);
      for (NodeId l : leaves) grads->push_back(g.grad(l).template cast<double>());
    }
    return e;
  };

  std::vector<BasicTensor<double>> analytic;
  const auto base_d = evaluate(xd, &analytic);
  const auto base_l = evaluate(xl, nullptr);

  GradCheckReport report;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    for (std::size_t i = 0; i < inputs[k].size(); ++i) {
      auto probe_d = [&](double off) {
        xd[k][i] = inputs[k][i] + off;
        auto e = evaluate(xd, nullptr);
        xd[k][i] = inputs[k][i];
        return e;
      };
      auto probe_l = [&](long double off) {
        const long double saved = xl[k][i];
        xl[k][i] = saved + off;
        auto e = evaluate(xl, nullptr);
        xl[k][i] = saved;
        return e;
      };
      const double n = detail::estimate(analytic[k][i], probe_d, probe_l, base_d.branches,
                                        base_l.branches, options, report);
      detail::record(report, analytic[k][i], n,
                     "input" + std::to_string(k) + "[" + std::to_string(i) + "]");
    }
  }
  detail::finish(report, options);
  return report;
}

// `f(Graph<T>&, BasicParamStore<T>&) -> NodeId` must accept T = double and
// T = long double. Every coordinate of every trainable parameter is checked.
// Graphs run in `mode` with running-statistics updates off; `store` is not
// modified.
template <typename Builder>
GradCheckReport grad_check_params(Builder&& f, const BasicParamStore<double>& store,
                                  Mode mode = Mode::training,
                                  const GradCheckOptions& options = {}) {
  BasicParamStore<double> sd = store.template cast<double>();
  BasicParamStore<long double> sl = store.template cast<long double>();

  auto evaluate = [&](auto& s, std::vector<BasicTensor<double>>* grads) {
    using T = typename std::remove_cvref_t<decltype(s[0].value)>::value_type;
    Graph<T> g(mode);
    g.set_update_running_stats(false);
    g.set_grad_enabled(grads != nullptr);
    const NodeId loss = f(g, s);
    detail::Evaluation<T> e{g.value(loss)[0], g.branch_signature()};
    if (grads) {
      g.backward(loss);
      grads->assign(s.size(), BasicTensor<double>{});
      for (const auto& pg : g.param_grads()) (*grads)[pg.id] = pg.grad->template cast<double>();
    }
    return e;
  };

  std::vector<BasicTensor<double>> analytic;
  const auto base_d = evaluate(sd, &analytic);
  const auto base_l = evaluate(sl, nullptr);

  GradCheckReport report;
  for (ParamId id = 0; id < store.size(); ++id) {
    if (!store[id].trainable) continue;
    for (std::size_t i = 0; i < store[id].value.size(); ++i) {
      auto probe_d = [&](double off) {
        double& x = sd[id].value[i];
        const double saved = x;
        x = saved + off;
        auto e = evaluate(sd, nullptr);
        x = saved;
        return e;
      };
      auto probe_l = [&](long double off) {
        long double& x = sl[id].value[i];
        const long double saved = x;
        x = saved + off;
        auto e = evaluate(sl, nullptr);
        x = saved;
        return e;
      };
      // Parameters the loss never reached have zero analytic gradient.
      const double a = analytic[id].empty() ? 0.0 : analytic[id][i];
      const double n = detail::estimate(a, probe_d, probe_l, base_d.branches, base_l.branches,
                                        options, report);
      detail::record(report, a, n, store[id].name + "[" + std::to_string(i) + "]");
    }
  }
  detail::finish(report, options);
  return report;
}

}  // namespace rrid
