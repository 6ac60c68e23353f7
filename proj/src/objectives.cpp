#include "rrid/objectives.hpp"

namespace rrid {

namespace {

std::string classifier_name(std::size_t i) { return "classifier." + std::to_string(i); }

}  // namespace

ClassifierBank ClassifierBank::create(ParamStore& store, std::size_t features,
                                      std::size_t embed_dim, std::size_t num_classes, Rng& rng) {
  if (num_classes < 2) throw ConfigError("classifier bank needs at least 2 classes");
  ClassifierBank bank;
  bank.num_classes = num_classes;
  for (std::size_t i = 0; i < features; ++i) {
    bank.classifiers.push_back(add_affine(store, classifier_name(i), embed_dim, num_classes, rng));
  }
  return bank;
}

ClassifierBank ClassifierBank::bind(const ParamStore& store, std::size_t features,
                                    std::size_t embed_dim, std::size_t num_classes) {
  ClassifierBank bank;
  bank.num_classes = num_classes;
  for (std::size_t i = 0; i < features; ++i) {
    bank.classifiers.push_back(bind_affine(store, classifier_name(i), embed_dim, num_classes));
  }
  return bank;
}

template <typename T>
NodeId cross_entropy_loss(Graph<T>& g, BasicParamStore<T>& store, const ClassifierBank& bank,
                          std::span<const NodeId> features, std::span<const int> labels) {
  if (features.size() != bank.classifiers.size()) {
    throw DimensionError("cross_entropy_loss: " + std::to_string(features.size()) +
                         " features but " + std::to_string(bank.classifiers.size()) +
                         " classifiers");
  }
  if (features.empty()) throw DimensionError("cross_entropy_loss: no features");
  NodeId total = g.softmax_cross_entropy(apply(g, store, bank.classifiers[0], features[0]), labels);
  for (std::size_t i = 1; i < features.size(); ++i) {
    total = g.add(total,
                  g.softmax_cross_entropy(apply(g, store, bank.classifiers[i], features[i]), labels));
  }
  return total;
}

template <typename T>
NodeId batch_hard_triplet(Graph<T>& g, NodeId embeddings, std::span<const int> labels, T alpha) {
  return g.batch_hard_triplet(embeddings, labels, alpha);
}

template <typename T>
LossTerms combined_loss(Graph<T>& g, BasicParamStore<T>& store, const ClassifierBank& bank,
                        NodeId representation, std::span<const NodeId> features,
                        std::span<const int> labels, T alpha, T lambda) {
  LossTerms t;
  t.triplet = batch_hard_triplet(g, representation, labels, alpha);
  t.cross_entropy = cross_entropy_loss(g, store, bank, features, labels);
  t.total = g.add(t.triplet, g.scale(t.cross_entropy, lambda));
  return t;
}

#define RRID_INSTANTIATE_OBJECTIVES(T)                                                        \
  template NodeId cross_entropy_loss<T>(Graph<T>&, BasicParamStore<T>&, const ClassifierBank&, \
                                        std::span<const NodeId>, std::span<const int>);      \
  template NodeId batch_hard_triplet<T>(Graph<T>&, NodeId, std::span<const int>, T);         \
  template LossTerms combined_loss<T>(Graph<T>&, BasicParamStore<T>&, const ClassifierBank&, \
                                      NodeId, std::span<const NodeId>, std::span<const int>, \
                                      T, T);

RRID_INSTANTIATE_OBJECTIVES(float)
RRID_INSTANTIATE_OBJECTIVES(double)
RRID_INSTANTIATE_OBJECTIVES(long double)

#undef RRID_INSTANTIATE_OBJECTIVES

}  // namespace rrid
