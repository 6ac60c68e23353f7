#include "rrid/head.hpp"

#include <algorithm>
#include <cctype>

namespace rrid {

namespace {

std::string lower(std::string_view text) {
  std::string s(text);
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char ch) { return static_cast<char>(std::tolower(ch)); });
  return s;
}

std::string part_prefix(std::size_t parts, std::size_t i) {
  return scale_prefix(parts) + ".part" + std::to_string(i + 1);
}

// Creates or looks up the parameters of one scale. `make_affine` and
// `make_subnet` hide which of the two is happening.
template <typename MakeAffine, typename MakeSubnet>
ScaleParams layout_scale(const HeadConfig& cfg, std::size_t parts, MakeAffine&& make_affine,
                         MakeSubnet&& make_subnet) {
  const std::size_t C = cfg.channels, c = cfg.embed_dim;
  ScaleParams sp;
  sp.parts = parts;
  const std::string sfx = scale_prefix(parts);
  if (cfg.use_global) {
    if (cfg.global_mode == GlobalMode::gcp) {
      sp.gcp = GcpParams{make_affine(sfx + ".gcp.proj_max", C, c),
                         make_affine(sfx + ".gcp.proj_cont", C, c),
                         make_subnet(sfx + ".gcp.rg", 2 * c, c)};
    } else {
      sp.global_proj = make_affine(sfx + ".global.proj", C, c);
    }
  }
  if (cfg.use_local) {
    for (std::size_t i = 0; i < parts; ++i) {
      const std::string pre = part_prefix(parts, i);
      PartParams pp{make_affine(pre + ".proj_p", C, c), std::nullopt, std::nullopt};
      if (cfg.relation_enabled) {
        pp.proj_r = make_affine(pre + ".proj_r", C, c);
        pp.rp = make_subnet(pre + ".rp", 2 * c, c);
      }
      sp.local.push_back(std::move(pp));
    }
  }
  return sp;
}

}  // namespace

std::string scale_prefix(std::size_t parts) { return "p" + std::to_string(parts); }

PoolMode parse_pool_mode(std::string_view text) {
  const std::string s = lower(text);
  if (s == "gap") return PoolMode::gap;
  if (s == "gmp") return PoolMode::gmp;
  throw ConfigError("unknown pooling mode '" + std::string(text) + "' (expected gap or gmp)");
}

GlobalMode parse_global_mode(std::string_view text) {
  const std::string s = lower(text);
  if (s == "gap") return GlobalMode::gap;
  if (s == "gmp") return GlobalMode::gmp;
  if (s == "gap+gmp" || s == "gmp+gap") return GlobalMode::gap_gmp;
  if (s == "gcp") return GlobalMode::gcp;
  throw ConfigError("unknown global pooling mode '" + std::string(text) +
                    "' (expected gap, gmp, gap+gmp or gcp)");
}

std::string to_string(PoolMode mode) { return mode == PoolMode::gap ? "gap" : "gmp"; }

std::string to_string(GlobalMode mode) {
  switch (mode) {
    case GlobalMode::gap: return "gap";
    case GlobalMode::gmp: return "gmp";
    case GlobalMode::gap_gmp: return "gap+gmp";
    case GlobalMode::gcp: return "gcp";
  }
  return "?";
}

void HeadConfig::validate() const {
  if (scales.empty()) throw ConfigError("head: at least one part scale is required");
  std::vector<std::size_t> seen;
  for (std::size_t p : scales) {
    if (p == 0) throw ConfigError("head: part count must be positive");
    if (std::find(seen.begin(), seen.end(), p) != seen.end()) {
      throw ConfigError("head: duplicate part scale " + std::to_string(p));
    }
    seen.push_back(p);
    if (use_local && relation_enabled && p < 2) {
      throw ConfigError("head: the relation module needs at least 2 parts, got " +
                        std::to_string(p));
    }
  }
  if (channels == 0 || embed_dim == 0) throw ConfigError("head: channel counts must be positive");
  if (embed_dim >= channels) {
    throw ConfigError("head: reduced dimension " + std::to_string(embed_dim) +
                      " must be smaller than input channels " + std::to_string(channels));
  }
  if (!use_global && !use_local) throw ConfigError("head: both global and local features disabled");
}

void HeadConfig::validate_for_height(std::size_t height) const {
  validate();
  for (std::size_t p : scales) {
    if (height == 0 || height % p != 0) {
      throw ConfigError("head: feature height " + std::to_string(height) +
                        " is not divisible by part count " + std::to_string(p));
    }
  }
}

std::size_t HeadConfig::features_at(std::size_t parts) const {
  return (use_global ? 1 : 0) + (use_local ? parts : 0);
}

std::size_t HeadConfig::feature_count() const {
  std::size_t n = 0;
  for (std::size_t p : scales) n += features_at(p);
  return n;
}

std::size_t HeadConfig::representation_dim() const { return feature_count() * embed_dim; }

template <typename T>
std::vector<NodeId> split_parts(Graph<T>& g, NodeId maps, std::size_t parts) {
  const Shape& s = g.value(maps).shape();
  if (s.size() != 4) throw DimensionError("split_parts: expected [N x H x W x C], got " + shape_str(s));
  const std::size_t height = s[1];
  if (parts == 0 || height % parts != 0) {
    throw ConfigError("split_parts: height " + std::to_string(height) +
                      " is not divisible by part count " + std::to_string(parts));
  }
  const std::size_t band = height / parts;
  std::vector<NodeId> out;
  out.reserve(parts);
  for (std::size_t i = 0; i < parts; ++i) out.push_back(g.slice(maps, 1, i * band, (i + 1) * band));
  return out;
}

template <typename T>
NodeId part_pool(Graph<T>& g, NodeId slice, PoolMode mode) {
  const Shape s = g.value(slice).shape();
  if (s.size() != 4) throw DimensionError("part_pool: expected [N x h x W x C], got " + shape_str(s));
  if (s[1] * s[2] == 0) throw DimensionError("part_pool: empty slice");
  const NodeId cells = g.reshape(slice, {s[0], s[1] * s[2], s[3]});
  return mode == PoolMode::gmp ? g.reduce_max(cells, 1) : g.reduce_mean(cells, 1);
}

namespace {

// [N x C] nodes -> [N x k x C]
template <typename T>
NodeId stack_rows(Graph<T>& g, std::span<const NodeId> vectors) {
  const Shape s = g.value(vectors[0]).shape();
  const NodeId flat = g.concat(vectors, 1);
  return g.reshape(flat, {s[0], vectors.size(), s[1]});
}

}  // namespace

template <typename T>
std::vector<NodeId> one_vs_rest(Graph<T>& g, std::span<const NodeId> parts) {
  if (parts.size() < 2) throw ConfigError("one_vs_rest: needs at least 2 parts");
  std::vector<NodeId> rest;
  rest.reserve(parts.size());
  std::vector<NodeId> others;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    others.clear();
    for (std::size_t j = 0; j < parts.size(); ++j) {
      if (j != i) others.push_back(parts[j]);
    }
    rest.push_back(g.reduce_mean(stack_rows(g, std::span<const NodeId>(others)), 1));
  }
  return rest;
}

template <typename T>
NodeId relation_feature(Graph<T>& g, BasicParamStore<T>& store, NodeId part, NodeId rest,
                        const PartParams& params) {
  const NodeId p_bar = apply(g, store, params.proj_p, part);
  if (!params.proj_r || !params.rp) return p_bar;
  const NodeId r_bar = apply(g, store, *params.proj_r, rest);
  const NodeId pair[] = {p_bar, r_bar};
  return g.add(p_bar, apply(g, store, *params.rp, g.concat(pair, 1)));
}

template <typename T>
GcpNodes<T> gcp(Graph<T>& g, BasicParamStore<T>& store, std::span<const NodeId> parts,
                const GcpParams& params) {
  if (parts.empty()) throw ConfigError("gcp: needs at least 1 part");
  GcpNodes<T> n;
  const NodeId stacked = stack_rows(g, parts);
  n.p_avg = g.reduce_mean(stacked, 1);
  n.p_max = g.reduce_max(stacked, 1);
  n.p_cont = g.sub(n.p_avg, n.p_max);
  const NodeId max_bar = apply(g, store, params.proj_max, n.p_max);
  const NodeId cont_bar = apply(g, store, params.proj_cont, n.p_cont);
  const NodeId pair[] = {max_bar, cont_bar};
  n.q0 = g.add(max_bar, apply(g, store, params.rg, g.concat(pair, 1)));
  return n;
}

template <typename T>
NodeId global_variant(Graph<T>& g, BasicParamStore<T>& store, NodeId maps,
                      std::span<const NodeId> parts, GlobalMode mode, const ScaleParams& params) {
  if (mode == GlobalMode::gcp) {
    if (!params.gcp) throw ConfigError("global_variant: scale has no GCP parameters");
    return gcp(g, store, parts, *params.gcp).q0;
  }
  if (!params.global_proj) throw ConfigError("global_variant: scale has no global projection");
  const Shape s = g.value(maps).shape();
  const NodeId cells = g.reshape(maps, {s[0], s[1] * s[2], s[3]});
  NodeId pooled;
  switch (mode) {
    case GlobalMode::gap: pooled = g.reduce_mean(cells, 1); break;
    case GlobalMode::gmp: pooled = g.reduce_max(cells, 1); break;
    default: pooled = g.add(g.reduce_mean(cells, 1), g.reduce_max(cells, 1)); break;
  }
  return apply(g, store, *params.global_proj, pooled);
}

ReidHead::ReidHead(HeadConfig config, ParamStore& store, Rng& rng) : config_(std::move(config)) {
  config_.validate();
  auto make_affine = [&](const std::string& name, std::size_t in, std::size_t out) {
    return add_affine(store, name, in, out, rng);
  };
  auto make_subnet = [&](const std::string& name, std::size_t in, std::size_t out) {
    return add_subnetwork(store, name, in, out, rng);
  };
  for (std::size_t p : config_.scales) {
    scales_.push_back(layout_scale(config_, p, make_affine, make_subnet));
  }
}

ReidHead ReidHead::bind(HeadConfig config, const ParamStore& store) {
  config.validate();
  ReidHead head(std::move(config));
  auto make_affine = [&](const std::string& name, std::size_t in, std::size_t out) {
    return bind_affine(store, name, in, out);
  };
  auto make_subnet = [&](const std::string& name, std::size_t in, std::size_t out) {
    return bind_subnetwork(store, name, in, out);
  };
  for (std::size_t p : head.config_.scales) {
    head.scales_.push_back(layout_scale(head.config_, p, make_affine, make_subnet));
  }
  return head;
}

template <typename T>
ScaleOutputs<T> ReidHead::forward(Graph<T>& g, BasicParamStore<T>& store, NodeId maps,
                                  std::size_t scale_index) const {
  const ScaleParams& sp = scales_.at(scale_index);
  const Shape& s = g.value(maps).shape();
  if (s.size() != 4) throw DimensionError("forward: expected [N x H x W x C], got " + shape_str(s));
  if (s[3] != config_.channels) {
    throw DimensionError("forward: feature maps have " + std::to_string(s[3]) +
                         " channels, head expects " + std::to_string(config_.channels));
  }
  config_.validate_for_height(s[1]);

  ScaleOutputs<T> out;
  out.parts = sp.parts;
  for (NodeId slice : split_parts(g, maps, sp.parts)) {
    out.part_vectors.push_back(part_pool(g, slice, config_.part_pool));
  }
  if (config_.use_global) {
    out.global = global_variant(g, store, maps, out.part_vectors, config_.global_mode, sp);
    out.features.push_back(*out.global);
  }
  if (config_.use_local) {
    std::vector<NodeId> rest;
    if (config_.relation_enabled) rest = one_vs_rest(g, std::span<const NodeId>(out.part_vectors));
    for (std::size_t i = 0; i < sp.parts; ++i) {
      const NodeId q = config_.relation_enabled
                           ? relation_feature(g, store, out.part_vectors[i], rest[i], sp.local[i])
                           : relation_feature(g, store, out.part_vectors[i], out.part_vectors[i],
                                              sp.local[i]);
      out.local.push_back(q);
      out.features.push_back(q);
    }
  }
  out.representation = g.concat(out.features, 1);
  return out;
}

template <typename T>
HeadOutputs<T> ReidHead::multiscale_forward(Graph<T>& g, BasicParamStore<T>& store,
                                            NodeId maps) const {
  HeadOutputs<T> out;
  std::vector<NodeId> reps;
  for (std::size_t k = 0; k < scales_.size(); ++k) {
    out.scales.push_back(forward(g, store, maps, k));
    const auto& so = out.scales.back();
    out.features.insert(out.features.end(), so.features.begin(), so.features.end());
    reps.push_back(so.representation);
  }
  out.representation = reps.size() == 1 ? reps[0] : g.concat(reps, 1);
  return out;
}

Tensor ReidHead::embed(ParamStore& store, std::span<const FeatureMap* const> maps) const {
  if (maps.empty()) return Tensor({0, config_.representation_dim()});
  Graph<float> g(Mode::inference);
  const NodeId input = g.constant(stack_feature_maps(maps));
  const auto out = multiscale_forward(g, store, input);
  return g.value(out.representation);
}

#define RRID_INSTANTIATE_HEAD(T)                                                              \
  template std::vector<NodeId> split_parts<T>(Graph<T>&, NodeId, std::size_t);               \
  template NodeId part_pool<T>(Graph<T>&, NodeId, PoolMode);                                 \
  template std::vector<NodeId> one_vs_rest<T>(Graph<T>&, std::span<const NodeId>);           \
  template NodeId relation_feature<T>(Graph<T>&, BasicParamStore<T>&, NodeId, NodeId,        \
                                      const PartParams&);                                    \
  template GcpNodes<T> gcp<T>(Graph<T>&, BasicParamStore<T>&, std::span<const NodeId>,       \
                              const GcpParams&);                                             \
  template NodeId global_variant<T>(Graph<T>&, BasicParamStore<T>&, NodeId,                  \
                                    std::span<const NodeId>, GlobalMode, const ScaleParams&); \
  template ScaleOutputs<T> ReidHead::forward<T>(Graph<T>&, BasicParamStore<T>&, NodeId,      \
                                                std::size_t) const;                          \
  template HeadOutputs<T> ReidHead::multiscale_forward<T>(Graph<T>&, BasicParamStore<T>&,    \
                                                          NodeId) const;

RRID_INSTANTIATE_HEAD(float)
RRID_INSTANTIATE_HEAD(double)
RRID_INSTANTIATE_HEAD(long double)

#undef RRID_INSTANTIATE_HEAD

}  // namespace rrid
