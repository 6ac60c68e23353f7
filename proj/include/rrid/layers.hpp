#pragma once

#include <string>

#include "rrid/graph.hpp"
#include "rrid/rng.hpp"

namespace rrid {

// Affine map x -> x W + b with W stored [in x out]. A 1x1 convolution on a
// 1x1 spatial map is exactly this.
struct Affine {
  ParamId weight = 0;
  ParamId bias = 0;
};

// affine -> batchnorm -> relu
struct SubNetwork {
  Affine affine;
  BatchNormState bn;
};

// Weights ~ U(-1/sqrt(in), 1/sqrt(in)), bias zero.
Affine add_affine(ParamStore& store, const std::string& prefix, std::size_t in, std::size_t out,
                  Rng& rng);
SubNetwork add_subnetwork(ParamStore& store, const std::string& prefix, std::size_t in,
                          std::size_t out, Rng& rng);

// Resolve previously created parameters by name and check their shapes.
Affine bind_affine(const ParamStore& store, const std::string& prefix, std::size_t in,
                   std::size_t out);
SubNetwork bind_subnetwork(const ParamStore& store, const std::string& prefix, std::size_t in,
                           std::size_t out);

template <typename T>
NodeId apply(Graph<T>& g, BasicParamStore<T>& store, const Affine& layer, NodeId x) {
  return g.linear(x, g.param(store, layer.weight), g.param(store, layer.bias));
}

template <typename T>
NodeId apply(Graph<T>& g, BasicParamStore<T>& store, const SubNetwork& net, NodeId x) {
  return g.relu(g.batchnorm(apply(g, store, net.affine, x), store, net.bn));
}

}  // namespace rrid
