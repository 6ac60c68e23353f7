#pragma once

#include <span>
#include <vector>

#include "rrid/graph.hpp"
#include "rrid/layers.hpp"

namespace rrid {

// One affine classifier (c -> K logits) per q vector of the representation.
struct ClassifierBank {
  std::vector<Affine> classifiers;
  std::size_t num_classes = 0;

  static ClassifierBank create(ParamStore& store, std::size_t features, std::size_t embed_dim,
                               std::size_t num_classes, Rng& rng);
  static ClassifierBank bind(const ParamStore& store, std::size_t features, std::size_t embed_dim,
                             std::size_t num_classes);
};

// Sum over images and over every feature index of -log softmax(W_i q_i)[y].
template <typename T>
NodeId cross_entropy_loss(Graph<T>& g, BasicParamStore<T>& store, const ClassifierBank& bank,
                          std::span<const NodeId> features, std::span<const int> labels);

// Batch-hard triplet on the rows of `embeddings` with plain Euclidean
// distances, summed over anchors.
template <typename T>
NodeId batch_hard_triplet(Graph<T>& g, NodeId embeddings, std::span<const int> labels, T alpha);

struct LossTerms {
  NodeId total;
  NodeId triplet;
  NodeId cross_entropy;
};

// total = triplet(representation) + lambda * cross_entropy(features)
template <typename T>
LossTerms combined_loss(Graph<T>& g, BasicParamStore<T>& store, const ClassifierBank& bank,
                        NodeId representation, std::span<const NodeId> features,
                        std::span<const int> labels, T alpha, T lambda);

}  // namespace rrid
