#pragma once

// Part-based re-identification head.
//
// A batch of backbone feature maps [N x H x W x C] is split into P horizontal
// bands and each band is pooled to a part vector p_i (length C). Two branches
// consume the parts:
//
//   local:  r_i = mean_{j != i} p_j
//           q_i = proj_p_i(p_i) + R_p_i([proj_p_i(p_i), proj_r_i(r_i)])
//   global: p_max = max_i p_i, p_avg = mean_i p_i, p_cont = p_avg - p_max
//           q_0 = proj_max(p_max) + R_g([proj_max(p_max), proj_cont(p_cont)])
//
// where R is affine -> batchnorm -> relu. The representation for one scale is
// [q_0, q_1, ..., q_P] (length (P + 1) c); several scales are concatenated.
// No parameter is shared between parts, between branches, or between scales.

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "rrid/feature_map.hpp"
#include "rrid/graph.hpp"
#include "rrid/layers.hpp"

namespace rrid {

enum class PoolMode { gap, gmp };

// Global-feature variants: spatial average, spatial max, their sum, or
// contrastive pooling over the part vectors.
enum class GlobalMode { gap, gmp, gap_gmp, gcp };

PoolMode parse_pool_mode(std::string_view text);
GlobalMode parse_global_mode(std::string_view text);
std::string to_string(PoolMode mode);
std::string to_string(GlobalMode mode);

struct HeadConfig {
  std::vector<std::size_t> scales{6};
  std::size_t channels = 2048;
  std::size_t embed_dim = 256;
  PoolMode part_pool = PoolMode::gmp;
  GlobalMode global_mode = GlobalMode::gcp;
  bool relation_enabled = true;
  // Ablation switches; both on for the full model.
  bool use_global = true;
  bool use_local = true;

  // Checks everything that does not depend on the feature-map height.
  void validate() const;
  // Every scale must divide the height.
  void validate_for_height(std::size_t height) const;

  // Number of q vectors at one scale / across all scales.
  std::size_t features_at(std::size_t parts) const;
  std::size_t feature_count() const;
  std::size_t representation_dim() const;
};

struct PartParams {
  Affine proj_p;
  // Present only when the relation module is enabled.
  std::optional<Affine> proj_r;
  std::optional<SubNetwork> rp;
};

struct GcpParams {
  Affine proj_max;
  Affine proj_cont;
  SubNetwork rg;
};

struct ScaleParams {
  std::size_t parts = 0;
  std::vector<PartParams> local;
  // Exactly one of these is set when the global branch is enabled.
  std::optional<GcpParams> gcp;
  std::optional<Affine> global_proj;
};

template <typename T>
struct GcpNodes {
  NodeId p_avg, p_max, p_cont, q0;
};

template <typename T>
struct ScaleOutputs {
  std::size_t parts = 0;
  std::vector<NodeId> part_vectors;  // p_1..p_P, each [N x C]
  std::optional<NodeId> global;      // q_0, [N x c]
  std::vector<NodeId> local;         // q_1..q_P, each [N x c]
  std::vector<NodeId> features;      // q_0 (if any) followed by q_1..q_P
  NodeId representation;             // [N x features * c]
};

template <typename T>
struct HeadOutputs {
  std::vector<ScaleOutputs<T>> scales;
  std::vector<NodeId> features;  // every q vector, scale by scale
  NodeId representation;
};

// Horizontal bands of an [N x H x W x C] node, top to bottom, each
// [N x H/P x W x C].
template <typename T>
std::vector<NodeId> split_parts(Graph<T>& g, NodeId maps, std::size_t parts);

// Per-channel max or mean over the spatial cells of an [N x h x W x C] node.
template <typename T>
NodeId part_pool(Graph<T>& g, NodeId slice, PoolMode mode);

// r_i = mean of p_j over j != i. Requires at least two parts.
template <typename T>
std::vector<NodeId> one_vs_rest(Graph<T>& g, std::span<const NodeId> parts);

template <typename T>
NodeId relation_feature(Graph<T>& g, BasicParamStore<T>& store, NodeId part, NodeId rest,
                        const PartParams& params);

template <typename T>
GcpNodes<T> gcp(Graph<T>& g, BasicParamStore<T>& store, std::span<const NodeId> parts,
                const GcpParams& params);

template <typename T>
NodeId global_variant(Graph<T>& g, BasicParamStore<T>& store, NodeId maps,
                      std::span<const NodeId> parts, GlobalMode mode, const ScaleParams& params);

class ReidHead {
 public:
  // Creates freshly initialised parameters in `store`.
  ReidHead(HeadConfig config, ParamStore& store, Rng& rng);

  // Binds to parameters already in `store` (e.g. loaded from a checkpoint).
  static ReidHead bind(HeadConfig config, const ParamStore& store);

  const HeadConfig& config() const noexcept { return config_; }
  const std::vector<ScaleParams>& scale_params() const noexcept { return scales_; }

  // Single scale; `scale_index` indexes config().scales.
  template <typename T>
  ScaleOutputs<T> forward(Graph<T>& g, BasicParamStore<T>& store, NodeId maps,
                          std::size_t scale_index) const;

  // All scales, concatenated in configured order.
  template <typename T>
  HeadOutputs<T> multiscale_forward(Graph<T>& g, BasicParamStore<T>& store, NodeId maps) const;

  // Inference-mode representations, one row per map.
  Tensor embed(ParamStore& store, std::span<const FeatureMap* const> maps) const;

 private:
  explicit ReidHead(HeadConfig config) : config_(std::move(config)) {}

  HeadConfig config_;
  std::vector<ScaleParams> scales_;
};

std::string scale_prefix(std::size_t parts);

}  // namespace rrid
