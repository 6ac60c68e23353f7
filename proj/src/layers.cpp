#include "rrid/layers.hpp"

#include <cmath>

#include "rrid/feature_map.hpp"

namespace rrid {

namespace {

ParamId lookup(const ParamStore& store, const std::string& name, const Shape& shape) {
  const ParamId id = store.id_of(name);
  if (store[id].value.shape() != shape) {
    throw DimensionError("parameter '" + name + "' has shape " + shape_str(store[id].value.shape()) +
                         ", expected " + shape_str(shape));
  }
  return id;
}

}  // namespace

Affine add_affine(ParamStore& store, const std::string& prefix, std::size_t in, std::size_t out,
                  Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  Tensor w({in, out});
  for (auto& v : w.data()) v = static_cast<float>(rng.uniform(-bound, bound));
  Affine a;
  a.weight = store.add(prefix + ".weight", std::move(w));
  a.bias = store.add(prefix + ".bias", Tensor({out}, 0.0f));
  return a;
}

SubNetwork add_subnetwork(ParamStore& store, const std::string& prefix, std::size_t in,
                          std::size_t out, Rng& rng) {
  SubNetwork s;
  s.affine = add_affine(store, prefix + ".fc", in, out, rng);
  s.bn = add_batchnorm(store, prefix + ".bn", out);
  return s;
}

Affine bind_affine(const ParamStore& store, const std::string& prefix, std::size_t in,
                   std::size_t out) {
  Affine a;
  a.weight = lookup(store, prefix + ".weight", {in, out});
  a.bias = lookup(store, prefix + ".bias", {out});
  return a;
}

SubNetwork bind_subnetwork(const ParamStore& store, const std::string& prefix, std::size_t in,
                           std::size_t out) {
  SubNetwork s;
  s.affine = bind_affine(store, prefix + ".fc", in, out);
  s.bn.gamma = lookup(store, prefix + ".bn.gamma", {out});
  s.bn.beta = lookup(store, prefix + ".bn.beta", {out});
  s.bn.running_mean = lookup(store, prefix + ".bn.running_mean", {out});
  s.bn.running_var = lookup(store, prefix + ".bn.running_var", {out});
  return s;
}

Tensor stack_feature_maps(std::span<const FeatureMap* const> maps) {
  if (maps.empty()) return Tensor({0, 0, 0, 0});
  const auto& first = *maps[0];
  std::vector<float> data;
  data.reserve(maps.size() * first.values.size());
  for (const FeatureMap* m : maps) {
    if (m->height != first.height || m->width != first.width || m->channels != first.channels) {
      throw DimensionError("feature maps in one batch differ in size: " +
                           shape_str({first.height, first.width, first.channels}) + " vs " +
                           shape_str({m->height, m->width, m->channels}));
    }
    data.insert(data.end(), m->values.begin(), m->values.end());
  }
  return Tensor({maps.size(), first.height, first.width, first.channels}, std::move(data));
}

Tensor stack_feature_maps(std::span<const FeatureMap> maps) {
  std::vector<const FeatureMap*> ptrs;
  ptrs.reserve(maps.size());
  for (const auto& m : maps) ptrs.push_back(&m);
  return stack_feature_maps(std::span<const FeatureMap* const>(ptrs));
}

}  // namespace rrid
