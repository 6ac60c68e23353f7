#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "rrid/params.hpp"
#include "rrid/tensor.hpp"

namespace rrid {

struct NodeId {
  std::uint32_t index = 0;
};

enum class Mode { training, inference };

// Handles into a parameter store for one batch-norm layer.
struct BatchNormState {
  ParamId gamma = 0;
  ParamId beta = 0;
  ParamId running_mean = 0;
  ParamId running_var = 0;
  double momentum = 0.1;
  double epsilon = 1e-5;
};

// Creates gamma=1, beta=0, running_mean=0, running_var=1 under `prefix`.
template <typename T>
BatchNormState add_batchnorm(BasicParamStore<T>& store, const std::string& prefix,
                             std::size_t channels);

// Tape for reverse-mode differentiation. Ops run eagerly and are recorded in
// call order; backward() replays the tape in exact reverse, so gradients are
// deterministic for a fixed sequence of calls.
//
// Parameter nodes refer to tensors inside a BasicParamStore, which must
// outlive the graph and must not be mutated while it is alive (apart from the
// running statistics that training-mode batchnorm updates).
template <typename T>
class Graph {
 public:
  using TensorT = BasicTensor<T>;

  explicit Graph(Mode mode = Mode::training) : mode_(mode) {}
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Mode mode() const noexcept { return mode_; }

  // When false, training-mode batchnorm leaves running statistics alone.
  void set_update_running_stats(bool on) noexcept { update_running_stats_ = on; }

  // With gradients disabled no backward closures are recorded; leaves and
  // parameters created afterwards do not require gradients.
  void set_grad_enabled(bool on) noexcept { grad_enabled_ = on; }

  NodeId constant(TensorT value);
  NodeId leaf(TensorT value);
  NodeId param(BasicParamStore<T>& store, ParamId id);

  NodeId linear(NodeId x, NodeId w, NodeId b);
  NodeId batchnorm(NodeId x, BasicParamStore<T>& store, const BatchNormState& state);
  NodeId relu(NodeId x);
  NodeId add(NodeId a, NodeId b);
  NodeId sub(NodeId a, NodeId b);
  NodeId scale(NodeId x, T factor);
  NodeId concat(std::span<const NodeId> parts, std::size_t axis);
  NodeId reshape(NodeId x, Shape shape);
  NodeId slice(NodeId x, std::size_t axis, std::size_t begin, std::size_t end);
  NodeId reduce_max(NodeId x, std::size_t axis);
  NodeId reduce_mean(NodeId x, std::size_t axis);
  NodeId sum(NodeId x);

  // Sum over rows of -log softmax(logits[n])[labels[n]].
  NodeId softmax_cross_entropy(NodeId logits, std::span<const int> labels);

  // Sum over anchors of [alpha + hardest positive - hardest negative]_+ with
  // unsquared Euclidean distances between rows of `embeddings`.
  NodeId batch_hard_triplet(NodeId embeddings, std::span<const int> labels, T alpha);

  const TensorT& value(NodeId id) const;
  // Gradient after backward(); zero tensor for nodes the loss does not reach.
  const TensorT& grad(NodeId id);

  void backward(NodeId loss);

  struct ParamGrad {
    ParamId id;
    const TensorT* grad;
  };
  // One entry per bound parameter, in binding order.
  std::vector<ParamGrad> param_grads();

  // Every branch taken by non-smooth ops (relu gates, max argmaxes, triplet
  // mining choices, hinge activity). Two evaluations with equal signatures
  // ran on the same smooth piece.
  const std::vector<std::uint32_t>& branch_signature() const noexcept { return branches_; }

  std::size_t node_count() const noexcept { return nodes_.size(); }

 private:
  struct Node {
    TensorT own;
    const TensorT* external = nullptr;
    TensorT grad;
    bool requires_grad = false;
    bool is_param = false;
    ParamId param_id = 0;
    std::function<void()> backward;
  };

  NodeId push(TensorT value, bool requires_grad);
  Node& node(NodeId id) { return nodes_.at(id.index); }
  const Node& node(NodeId id) const { return nodes_.at(id.index); }
  const TensorT& val(NodeId id) const { return value(id); }
  TensorT& grad_buffer(NodeId id);
  bool needs(NodeId id) const { return node(id).requires_grad; }

  Mode mode_;
  bool update_running_stats_ = true;
  bool grad_enabled_ = true;
  bool warned_single_row_bn_ = false;
  // deque: references returned by value() and grad() survive later ops
  std::deque<Node> nodes_;
  std::vector<std::uint32_t> branches_;
  std::vector<NodeId> bound_params_;
  std::map<std::pair<const void*, ParamId>, NodeId> param_nodes_;
};

}  // namespace rrid
