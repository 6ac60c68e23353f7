#include "rrid/graph.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <limits>

#include "rrid/kernels.hpp"

namespace rrid {

namespace {

void require_same_shape(const Shape& a, const Shape& b, const char* op) {
  if (a != b) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a) + " vs " +
                         shape_str(b));
  }
}

void require_axis(const Shape& s, std::size_t axis, const char* op) {
  if (axis >= s.size()) {
    throw DimensionError(std::string(op) + ": invalid axis " + std::to_string(axis) +
                         " for shape " + shape_str(s));
  }
}

struct AxisView {
  std::size_t outer = 1, len = 1, inner = 1;
};

AxisView view_around(const Shape& s, std::size_t axis) {
  AxisView v;
  for (std::size_t i = 0; i < axis; ++i) v.outer *= s[i];
  v.len = s[axis];
  for (std::size_t i = axis + 1; i < s.size(); ++i) v.inner *= s[i];
  return v;
}

}  // namespace

template <typename T>
BatchNormState add_batchnorm(BasicParamStore<T>& store, const std::string& prefix,
                             std::size_t channels) {
  BatchNormState s;
  s.gamma = store.add(prefix + ".gamma", BasicTensor<T>({channels}, T(1)));
  s.beta = store.add(prefix + ".beta", BasicTensor<T>({channels}, T(0)));
  s.running_mean = store.add(prefix + ".running_mean", BasicTensor<T>({channels}, T(0)), false);
  s.running_var = store.add(prefix + ".running_var", BasicTensor<T>({channels}, T(1)), false);
  return s;
}

template <typename T>
NodeId Graph<T>::push(TensorT value, bool requires_grad) {
  Node n;
  n.own = std::move(value);
  n.requires_grad = requires_grad && grad_enabled_;
  nodes_.push_back(std::move(n));
  return NodeId{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

template <typename T>
const typename Graph<T>::TensorT& Graph<T>::value(NodeId id) const {
  const Node& n = node(id);
  return n.external ? *n.external : n.own;
}

template <typename T>
typename Graph<T>::TensorT& Graph<T>::grad_buffer(NodeId id) {
  Node& n = node(id);
  if (n.grad.shape() != value(id).shape() || n.grad.empty() != value(id).empty()) {
    n.grad = TensorT(value(id).shape(), T(0));
  }
  return n.grad;
}

template <typename T>
const typename Graph<T>::TensorT& Graph<T>::grad(NodeId id) {
  return grad_buffer(id);
}

template <typename T>
NodeId Graph<T>::constant(TensorT value) {
  return push(std::move(value), false);
}

template <typename T>
NodeId Graph<T>::leaf(TensorT value) {
  return push(std::move(value), true);
}

template <typename T>
NodeId Graph<T>::param(BasicParamStore<T>& store, ParamId id) {
  const auto key = std::make_pair(static_cast<const void*>(&store), id);
  if (auto it = param_nodes_.find(key); it != param_nodes_.end()) return it->second;
  const NodeId nid = push(TensorT{}, store[id].trainable);
  Node& n = node(nid);
  n.external = &store[id].value;
  n.is_param = true;
  n.param_id = id;
  param_nodes_.emplace(key, nid);
  bound_params_.push_back(nid);
  return nid;
}

template <typename T>
NodeId Graph<T>::linear(NodeId x, NodeId w, NodeId b) {
  const auto& xs = val(x).shape();
  const auto& ws = val(w).shape();
  const auto& bs = val(b).shape();
  if (xs.size() != 2 || ws.size() != 2 || xs[1] != ws[0]) {
    throw DimensionError("linear: input " + shape_str(xs) + " incompatible with weight " +
                         shape_str(ws));
  }
  if (bs.size() != 1 || bs[0] != ws[1]) {
    throw DimensionError("linear: bias " + shape_str(bs) + " incompatible with weight " +
                         shape_str(ws));
  }
  const std::size_t rows = xs[0], in = xs[1], out = ws[1];
  TensorT y({rows, out});
  kernels::affine<T>(val(x).data(), val(w).data(), val(b).data(), y.data(), rows, in, out);
  const NodeId id = push(std::move(y), needs(x) || needs(w) || needs(b));
  if (!needs(id)) return id;
  node(id).backward = [this, id, x, w, b, rows, in, out] {
    const auto& g = node(id).grad;
    if (needs(x)) {
      kernels::affine_grad_input<T>(g.data(), val(w).data(), grad_buffer(x).data(), rows, in, out);
    }
    if (needs(w)) {
      kernels::affine_grad_weight<T>(val(x).data(), g.data(), grad_buffer(w).data(), rows, in,
                                     out);
    }
    if (needs(b)) {
      auto& gb = grad_buffer(b);
      for (std::size_t n = 0; n < rows; ++n) {
        for (std::size_t j = 0; j < out; ++j) gb[j] += g[n * out + j];
      }
    }
  };
  return id;
}

template <typename T>
NodeId Graph<T>::batchnorm(NodeId x, BasicParamStore<T>& store, const BatchNormState& state) {
  const auto& xs = val(x).shape();
  if (xs.size() != 2) throw DimensionError("batchnorm: expected [N x d], got " + shape_str(xs));
  const std::size_t rows = xs[0], d = xs[1];
  const NodeId gamma = param(store, state.gamma);
  const NodeId beta = param(store, state.beta);
  require_same_shape(val(gamma).shape(), Shape{d}, "batchnorm gamma");
  require_same_shape(val(beta).shape(), Shape{d}, "batchnorm beta");
  if (rows == 0) throw DimensionError("batchnorm: empty batch");

  const T eps = static_cast<T>(state.epsilon);
  std::vector<T> mean(d, T(0)), inv_std(d, T(0));
  const auto& xv = val(x);
  if (mode_ == Mode::training) {
    if (rows == 1 && !warned_single_row_bn_) {
      std::cerr << "warning: training-mode batchnorm on a batch of 1; output equals beta\n";
      warned_single_row_bn_ = true;
    }
    std::vector<T> var(d, T(0));
    for (std::size_t n = 0; n < rows; ++n) {
      for (std::size_t j = 0; j < d; ++j) mean[j] += xv[n * d + j];
    }
    for (std::size_t j = 0; j < d; ++j) mean[j] /= static_cast<T>(rows);
    for (std::size_t n = 0; n < rows; ++n) {
      for (std::size_t j = 0; j < d; ++j) {
        const T c = xv[n * d + j] - mean[j];
        var[j] += c * c;
      }
    }
    for (std::size_t j = 0; j < d; ++j) {
      var[j] /= static_cast<T>(rows);
      inv_std[j] = T(1) / std::sqrt(var[j] + eps);
    }
    if (update_running_stats_) {
      auto& rm = store[state.running_mean].value;
      auto& rv = store[state.running_var].value;
      const T m = static_cast<T>(state.momentum);
      const T unbias = rows > 1 ? static_cast<T>(rows) / static_cast<T>(rows - 1) : T(1);
      for (std::size_t j = 0; j < d; ++j) {
        rm[j] = (T(1) - m) * rm[j] + m * mean[j];
        rv[j] = (T(1) - m) * rv[j] + m * var[j] * unbias;
      }
    }
  } else {
    const auto& rm = store[state.running_mean].value;
    const auto& rv = store[state.running_var].value;
    for (std::size_t j = 0; j < d; ++j) {
      mean[j] = rm[j];
      inv_std[j] = T(1) / std::sqrt(std::max(rv[j], T(0)) + eps);
    }
  }

  TensorT xhat({rows, d});
  TensorT y({rows, d});
  const auto& gv = val(gamma);
  const auto& bv = val(beta);
  for (std::size_t n = 0; n < rows; ++n) {
    for (std::size_t j = 0; j < d; ++j) {
      const T h = (xv[n * d + j] - mean[j]) * inv_std[j];
      xhat[n * d + j] = h;
      y[n * d + j] = gv[j] * h + bv[j];
    }
  }
  const NodeId id = push(std::move(y), needs(x) || needs(gamma) || needs(beta));
  if (!needs(id)) return id;
  const bool batch_stats = mode_ == Mode::training;
  node(id).backward = [this, id, x, gamma, beta, rows, d, batch_stats, xhat = std::move(xhat),
                       inv_std = std::move(inv_std)] {
    const auto& g = node(id).grad;
    if (needs(gamma) || needs(beta)) {
      std::vector<T> dg(d, T(0)), db(d, T(0));
      for (std::size_t n = 0; n < rows; ++n) {
        for (std::size_t j = 0; j < d; ++j) {
          dg[j] += g[n * d + j] * xhat[n * d + j];
          db[j] += g[n * d + j];
        }
      }
      if (needs(gamma)) {
        auto& G = grad_buffer(gamma);
        for (std::size_t j = 0; j < d; ++j) G[j] += dg[j];
      }
      if (needs(beta)) {
        auto& B = grad_buffer(beta);
        for (std::size_t j = 0; j < d; ++j) B[j] += db[j];
      }
    }
    if (!needs(x)) return;
    auto& gx = grad_buffer(x);
    const auto& gv = val(gamma);
    if (!batch_stats) {
      for (std::size_t n = 0; n < rows; ++n) {
        for (std::size_t j = 0; j < d; ++j) gx[n * d + j] += g[n * d + j] * gv[j] * inv_std[j];
      }
      return;
    }
    // dx = inv_std/N * (N*dxhat - sum(dxhat) - xhat*sum(dxhat*xhat)), dxhat = g*gamma
    std::vector<T> s1(d, T(0)), s2(d, T(0));
    for (std::size_t n = 0; n < rows; ++n) {
      for (std::size_t j = 0; j < d; ++j) {
        const T dh = g[n * d + j] * gv[j];
        s1[j] += dh;
        s2[j] += dh * xhat[n * d + j];
      }
    }
    const T inv_n = T(1) / static_cast<T>(rows);
    for (std::size_t n = 0; n < rows; ++n) {
      for (std::size_t j = 0; j < d; ++j) {
        const T dh = g[n * d + j] * gv[j];
        gx[n * d + j] += inv_std[j] * (dh - inv_n * s1[j] - xhat[n * d + j] * inv_n * s2[j]);
      }
    }
  };
  return id;
}

template <typename T>
NodeId Graph<T>::relu(NodeId x) {
  const auto& xv = val(x);
  TensorT y(xv.shape());
  for (std::size_t i = 0; i < xv.size(); ++i) {
    const bool on = xv[i] > T(0);
    y[i] = on ? xv[i] : T(0);
    branches_.push_back(on ? 1u : 0u);
  }
  const NodeId id = push(std::move(y), needs(x));
  if (!needs(id)) return id;
  node(id).backward = [this, id, x] {
    const auto& g = node(id).grad;
    const auto& xv = val(x);
    auto& gx = grad_buffer(x);
    for (std::size_t i = 0; i < xv.size(); ++i) {
      if (xv[i] > T(0)) gx[i] += g[i];
    }
  };
  return id;
}

template <typename T>
NodeId Graph<T>::add(NodeId a, NodeId b) {
  require_same_shape(val(a).shape(), val(b).shape(), "add");
  TensorT y = val(a);
  const auto& bv = val(b);
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += bv[i];
  const NodeId id = push(std::move(y), needs(a) || needs(b));
  if (!needs(id)) return id;
  node(id).backward = [this, id, a, b] {
    const auto& g = node(id).grad;
    for (NodeId in : {a, b}) {
      if (!needs(in)) continue;
      auto& gi = grad_buffer(in);
      for (std::size_t i = 0; i < g.size(); ++i) gi[i] += g[i];
    }
  };
  return id;
}

template <typename T>
NodeId Graph<T>::sub(NodeId a, NodeId b) {
  require_same_shape(val(a).shape(), val(b).shape(), "sub");
  TensorT y = val(a);
  const auto& bv = val(b);
  for (std::size_t i = 0; i < y.size(); ++i) y[i] -= bv[i];
  const NodeId id = push(std::move(y), needs(a) || needs(b));
  if (!needs(id)) return id;
  node(id).backward = [this, id, a, b] {
    const auto& g = node(id).grad;
    if (needs(a)) {
      auto& ga = grad_buffer(a);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    }
    if (needs(b)) {
      auto& gb = grad_buffer(b);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
    }
  };
  return id;
}

template <typename T>
NodeId Graph<T>::scale(NodeId x, T factor) {
  TensorT y = val(x);
  for (auto& v : y.data()) v *= factor;
  const NodeId id = push(std::move(y), needs(x));
  if (!needs(id)) return id;
  node(id).backward = [this, id, x, factor] {
    const auto& g = node(id).grad;
    auto& gx = grad_buffer(x);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += factor * g[i];
  };
  return id;
}

template <typename T>
NodeId Graph<T>::concat(std::span<const NodeId> parts, std::size_t axis) {
  if (parts.empty()) throw DimensionError("concat: empty input list");
  const Shape& first = val(parts[0]).shape();
  require_axis(first, axis, "concat");
  Shape out_shape = first;
  out_shape[axis] = 0;
  bool any_grad = false;
  for (NodeId p : parts) {
    const Shape& s = val(p).shape();
    if (s.size() != first.size()) {
      throw DimensionError("concat: rank mismatch " + shape_str(first) + " vs " + shape_str(s));
    }
    for (std::size_t k = 0; k < s.size(); ++k) {
      if (k != axis && s[k] != first[k]) {
        throw DimensionError("concat: shape mismatch " + shape_str(first) + " vs " +
                             shape_str(s));
      }
    }
    out_shape[axis] += s[axis];
    any_grad = any_grad || needs(p);
  }
  const AxisView ov = view_around(out_shape, axis);
  TensorT y(out_shape);
  std::vector<std::size_t> offsets;
  std::size_t offset = 0;
  for (NodeId p : parts) {
    const auto& pv = val(p);
    const std::size_t len = pv.shape()[axis];
    for (std::size_t a = 0; a < ov.outer; ++a) {
      const T* src = pv.data().data() + a * len * ov.inner;
      T* dst = y.data().data() + (a * ov.len + offset) * ov.inner;
      std::copy(src, src + len * ov.inner, dst);
    }
    offsets.push_back(offset);
    offset += len;
  }
  const NodeId id = push(std::move(y), any_grad);
  if (!needs(id)) return id;
  std::vector<NodeId> inputs(parts.begin(), parts.end());
  node(id).backward = [this, id, inputs = std::move(inputs), offsets = std::move(offsets), ov,
                       axis] {
    const auto& g = node(id).grad;
    for (std::size_t k = 0; k < inputs.size(); ++k) {
      if (!needs(inputs[k])) continue;
      auto& gi = grad_buffer(inputs[k]);
      const std::size_t len = gi.shape()[axis];
      for (std::size_t a = 0; a < ov.outer; ++a) {
        const T* src = g.data().data() + (a * ov.len + offsets[k]) * ov.inner;
        T* dst = gi.data().data() + a * len * ov.inner;
        for (std::size_t i = 0; i < len * ov.inner; ++i) dst[i] += src[i];
      }
    }
  };
  return id;
}

template <typename T>
NodeId Graph<T>::reshape(NodeId x, Shape shape) {
  TensorT y = val(x).reshaped(std::move(shape));
  const NodeId id = push(std::move(y), needs(x));
  if (!needs(id)) return id;
  node(id).backward = [this, id, x] {
    const auto& g = node(id).grad;
    auto& gx = grad_buffer(x);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
  };
  return id;
}

template <typename T>
NodeId Graph<T>::slice(NodeId x, std::size_t axis, std::size_t begin, std::size_t end) {
  const Shape& s = val(x).shape();
  require_axis(s, axis, "slice");
  if (begin >= end || end > s[axis]) {
    throw DimensionError("slice: range [" + std::to_string(begin) + ", " + std::to_string(end) +
                         ") out of bounds for shape " + shape_str(s));
  }
  const AxisView v = view_around(s, axis);
  Shape out_shape = s;
  out_shape[axis] = end - begin;
  const std::size_t len = end - begin;
  TensorT y(out_shape);
  const auto& xv = val(x);
  for (std::size_t a = 0; a < v.outer; ++a) {
    const T* src = xv.data().data() + (a * v.len + begin) * v.inner;
    std::copy(src, src + len * v.inner, y.data().data() + a * len * v.inner);
  }
  const NodeId id = push(std::move(y), needs(x));
  if (!needs(id)) return id;
  node(id).backward = [this, id, x, v, begin, len] {
    const auto& g = node(id).grad;
    auto& gx = grad_buffer(x);
    for (std::size_t a = 0; a < v.outer; ++a) {
      const T* src = g.data().data() + a * len * v.inner;
      T* dst = gx.data().data() + (a * v.len + begin) * v.inner;
      for (std::size_t i = 0; i < len * v.inner; ++i) dst[i] += src[i];
    }
  };
  return id;
}

template <typename T>
NodeId Graph<T>::reduce_max(NodeId x, std::size_t axis) {
  const Shape& s = val(x).shape();
  require_axis(s, axis, "reduce_max");
  const AxisView v = view_around(s, axis);
  if (v.len == 0) throw DimensionError("reduce_max: empty axis");
  Shape out_shape = s;
  out_shape.erase(out_shape.begin() + static_cast<std::ptrdiff_t>(axis));
  TensorT y(out_shape);
  std::vector<std::uint32_t> argmax(v.outer * v.inner);
  kernels::reduce_max<T>(val(x).data(), y.data(), argmax, v.outer, v.len, v.inner);
  branches_.insert(branches_.end(), argmax.begin(), argmax.end());
  const NodeId id = push(std::move(y), needs(x));
  if (!needs(id)) return id;
  node(id).backward = [this, id, x, v, argmax = std::move(argmax)] {
    const auto& g = node(id).grad;
    auto& gx = grad_buffer(x);
    for (std::size_t a = 0; a < v.outer; ++a) {
      for (std::size_t b = 0; b < v.inner; ++b) {
        const std::size_t k = a * v.inner + b;
        gx[(a * v.len + argmax[k]) * v.inner + b] += g[k];
      }
    }
  };
  return id;
}

template <typename T>
NodeId Graph<T>::reduce_mean(NodeId x, std::size_t axis) {
  const Shape& s = val(x).shape();
  require_axis(s, axis, "reduce_mean");
  const AxisView v = view_around(s, axis);
  if (v.len == 0) throw DimensionError("reduce_mean: empty axis");
  Shape out_shape = s;
  out_shape.erase(out_shape.begin() + static_cast<std::ptrdiff_t>(axis));
  TensorT y(out_shape);
  kernels::reduce_mean<T>(val(x).data(), y.data(), v.outer, v.len, v.inner);
  const NodeId id = push(std::move(y), needs(x));
  if (!needs(id)) return id;
  node(id).backward = [this, id, x, v] {
    const auto& g = node(id).grad;
    auto& gx = grad_buffer(x);
    const T w = T(1) / static_cast<T>(v.len);
    for (std::size_t a = 0; a < v.outer; ++a) {
      for (std::size_t r = 0; r < v.len; ++r) {
        for (std::size_t b = 0; b < v.inner; ++b) {
          gx[(a * v.len + r) * v.inner + b] += w * g[a * v.inner + b];
        }
      }
    }
  };
  return id;
}

template <typename T>
NodeId Graph<T>::sum(NodeId x) {
  T acc = 0;
  for (T v : val(x).data()) acc += v;
  const NodeId id = push(TensorT(Shape{}, std::vector<T>{acc}), needs(x));
  if (!needs(id)) return id;
  node(id).backward = [this, id, x] {
    const T g = node(id).grad[0];
    auto& gx = grad_buffer(x);
    for (auto& v : gx.data()) v += g;
  };
  return id;
}

template <typename T>
NodeId Graph<T>::softmax_cross_entropy(NodeId logits, std::span<const int> labels) {
  const Shape& s = val(logits).shape();
  if (s.size() != 2) {
    throw DimensionError("softmax_cross_entropy: expected [N x K] logits, got " + shape_str(s));
  }
  const std::size_t rows = s[0], k = s[1];
  if (labels.size() != rows) {
    throw DimensionError("softmax_cross_entropy: " + std::to_string(labels.size()) +
                         " labels for " + std::to_string(rows) + " rows");
  }
  const auto& z = val(logits);
  TensorT prob({rows, k});
  T loss = 0;
  for (std::size_t n = 0; n < rows; ++n) {
    const int y = labels[n];
    if (y < 0 || static_cast<std::size_t>(y) >= k) {
      throw DataError("softmax_cross_entropy: label " + std::to_string(y) + " outside [0, " +
                      std::to_string(k) + ")");
    }
    const T* row = z.data().data() + n * k;
    const T mx = *std::max_element(row, row + k);
    T denom = 0;
    for (std::size_t j = 0; j < k; ++j) denom += std::exp(row[j] - mx);
    const T log_denom = std::log(denom);
    for (std::size_t j = 0; j < k; ++j) prob[n * k + j] = std::exp(row[j] - mx - log_denom);
    loss += log_denom - (row[static_cast<std::size_t>(y)] - mx);
  }
  const NodeId id = push(TensorT(Shape{}, std::vector<T>{loss}), needs(logits));
  if (!needs(id)) return id;
  std::vector<int> ys(labels.begin(), labels.end());
  node(id).backward = [this, id, logits, rows, k, prob = std::move(prob), ys = std::move(ys)] {
    const T g = node(id).grad[0];
    auto& gz = grad_buffer(logits);
    for (std::size_t n = 0; n < rows; ++n) {
      for (std::size_t j = 0; j < k; ++j) {
        const T onehot = static_cast<std::size_t>(ys[n]) == j ? T(1) : T(0);
        gz[n * k + j] += g * (prob[n * k + j] - onehot);
      }
    }
  };
  return id;
}

template <typename T>
NodeId Graph<T>::batch_hard_triplet(NodeId embeddings, std::span<const int> labels, T alpha) {
  const Shape& s = val(embeddings).shape();
  if (s.size() != 2) {
    throw DimensionError("batch_hard_triplet: expected [N x D], got " + shape_str(s));
  }
  const std::size_t rows = s[0], dim = s[1];
  if (labels.size() != rows) {
    throw DimensionError("batch_hard_triplet: " + std::to_string(labels.size()) +
                         " labels for " + std::to_string(rows) + " rows");
  }
  bool has_negative = false, has_positive = false;
  for (std::size_t a = 0; a < rows; ++a) {
    for (std::size_t b = 0; b < rows; ++b) {
      if (a == b) continue;
      if (labels[a] == labels[b]) has_positive = true;
      else has_negative = true;
    }
  }
  if (!has_negative) throw DataError("batch_hard_triplet: batch holds a single identity");
  if (!has_positive) throw DataError("batch_hard_triplet: no identity has two images in batch");

  const auto& e = val(embeddings);
  std::vector<T> dist(rows * rows, T(0));
  for (std::size_t a = 0; a < rows; ++a) {
    for (std::size_t b = a + 1; b < rows; ++b) {
      T acc = 0;
      for (std::size_t k = 0; k < dim; ++k) {
        const T diff = e[a * dim + k] - e[b * dim + k];
        acc += diff * diff;
      }
      dist[a * rows + b] = dist[b * rows + a] = std::sqrt(acc);
    }
  }

  // Per anchor: hardest positive (self included at distance 0), hardest
  // negative; ties go to the lowest index.
  std::vector<std::size_t> pos(rows), neg(rows);
  std::vector<char> active(rows, 0);
  T loss = 0;
  for (std::size_t a = 0; a < rows; ++a) {
    std::size_t p = a;
    std::size_t n = rows;
    for (std::size_t b = 0; b < rows; ++b) {
      const T d = dist[a * rows + b];
      if (labels[b] == labels[a]) {
        if (d > dist[a * rows + p]) p = b;
      } else if (n == rows || d < dist[a * rows + n]) {
        n = b;
      }
    }
    pos[a] = p;
    neg[a] = n;
    const T margin = alpha + dist[a * rows + p] - dist[a * rows + n];
    if (margin > T(0)) {
      active[a] = 1;
      loss += margin;
    }
    branches_.push_back(static_cast<std::uint32_t>(p));
    branches_.push_back(static_cast<std::uint32_t>(n));
    branches_.push_back(static_cast<std::uint32_t>(active[a]));
  }

  const NodeId id = push(TensorT(Shape{}, std::vector<T>{loss}), needs(embeddings));
  if (!needs(id)) return id;
  node(id).backward = [this, id, embeddings, rows, dim, dist = std::move(dist),
                       pos = std::move(pos), neg = std::move(neg), active = std::move(active)] {
    const T g = node(id).grad[0];
    const auto& e = val(embeddings);
    auto& ge = grad_buffer(embeddings);
    // d||u - v|| / du = (u - v) / ||u - v||; zero at coincident points.
    auto push_pair = [&](std::size_t a, std::size_t b, T sign) {
      const T d = dist[a * rows + b];
      if (!(d > T(0))) return;
      for (std::size_t k = 0; k < dim; ++k) {
        const T unit = (e[a * dim + k] - e[b * dim + k]) / d;
        ge[a * dim + k] += sign * g * unit;
        ge[b * dim + k] -= sign * g * unit;
      }
    };
    for (std::size_t a = 0; a < rows; ++a) {
      if (!active[a]) continue;
      push_pair(a, pos[a], T(1));
      push_pair(a, neg[a], T(-1));
    }
  };
  return id;
}

template <typename T>
void Graph<T>::backward(NodeId loss) {
  if (shape_numel(val(loss).shape()) != 1 || val(loss).rank() > 1) {
    throw DimensionError("backward: loss must be scalar, got shape " +
                         shape_str(val(loss).shape()));
  }
  for (auto& n : nodes_) n.grad = TensorT{};
  if (!needs(loss)) return;
  grad_buffer(loss)[0] = T(1);
  for (std::size_t i = loss.index + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.requires_grad || !n.backward || n.grad.empty()) continue;
    n.backward();
  }
}

template <typename T>
std::vector<typename Graph<T>::ParamGrad> Graph<T>::param_grads() {
  std::vector<ParamGrad> out;
  out.reserve(bound_params_.size());
  for (NodeId id : bound_params_) out.push_back({node(id).param_id, &grad_buffer(id)});
  return out;
}

template class Graph<float>;
template class Graph<double>;
template class Graph<long double>;
template BatchNormState add_batchnorm<float>(BasicParamStore<float>&, const std::string&,
                                             std::size_t);
template BatchNormState add_batchnorm<double>(BasicParamStore<double>&, const std::string&,
                                              std::size_t);
template BatchNormState add_batchnorm<long double>(BasicParamStore<long double>&,
                                                   const std::string&, std::size_t);

}  // namespace rrid
