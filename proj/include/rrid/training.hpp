#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "rrid/checkpoint.hpp"
#include "rrid/feature_map.hpp"
#include "rrid/head.hpp"
#include "rrid/manifest.hpp"
#include "rrid/objectives.hpp"
#include "rrid/rng.hpp"

namespace rrid {

struct DecaySchedule {
  std::size_t start_epoch = 40;  // last epoch at the base rate
  std::size_t period = 20;
  double factor = 0.1;
};

struct TrainConfig {
  std::size_t n_k = 16;  // identities per batch
  std::size_t n_m = 4;   // images per identity
  std::size_t epochs = 80;
  double base_lr_head = 1e-2;
  // Only meaningful when a backbone is fine-tuned; the head-only pipeline
  // never reads it.
  double base_lr_backbone = 1e-3;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  double lambda = 2.0;
  double alpha = 0.3;
  std::uint64_t seed = 0;
  DecaySchedule decay;

  std::size_t batch_size() const { return n_k * n_m; }
  void validate() const;
};

// Epochs are 1-based. Base rate through decay.start_epoch, then multiplied
// by decay.factor once per started period.
double lr_at(std::size_t epoch, const DecaySchedule& schedule, double base_lr);

struct OptimizerState {
  std::vector<Tensor> velocity;  // indexed by ParamId; empty for buffers
  std::uint64_t steps = 0;

  static OptimizerState zeros(const ParamStore& store);
};

// v <- momentum * v + g + weight_decay * w;  w <- w - lr * v
// over trainable parameters. grads[id] may be empty (treated as zero).
void sgd_step(ParamStore& store, std::span<const Tensor> grads, OptimizerState& state, double lr,
              double momentum, double weight_decay);

struct SampledImage {
  std::size_t index;  // into the caller's image list
  int label;          // dense identity label
};

// `identities[k]` lists the images of dense label k. Picks n_k distinct
// identities uniformly without replacement, then n_m images of each (without
// replacement when the identity has at least n_m, otherwise with).
std::vector<SampledImage> pk_sample(std::span<const std::vector<std::size_t>> identities,
                                    std::size_t n_k, std::size_t n_m, Rng& rng);

// Train split of a manifest loaded into memory.
struct TrainingSet {
  std::vector<FeatureMap> maps;
  std::vector<int> labels;
  std::vector<std::vector<std::size_t>> identities;  // dense label -> map indices
  std::size_t num_classes = 0;
};

// Reads every train-split feature file; checks consistent dimensions.
TrainingSet load_training_set(const Manifest& manifest);

struct EpochLog {
  std::size_t epoch = 0;
  double lr = 0.0;
  std::size_t batches = 0;
  // Means over the epoch's batches.
  double loss = 0.0;
  double triplet = 0.0;
  double cross_entropy = 0.0;
};

struct TrainResult {
  ParamStore params;
  std::size_t num_classes = 0;
  std::vector<EpochLog> log;
  std::string rng_digest;
};

using EpochCallback = std::function<void(const EpochLog&)>;

// Every precondition (class count, n_k, feature dimensions vs. head) is
// checked before the first step.
TrainResult train(const TrainConfig& config, const HeadConfig& head, const TrainingSet& data,
                  const EpochCallback& on_epoch = {});

}  // namespace rrid
