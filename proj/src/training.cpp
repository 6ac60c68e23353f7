#include "rrid/training.hpp"

#include <cmath>
#include <numeric>

#include "rrid/errors.hpp"
#include "rrid/feature_io.hpp"

namespace rrid {

void TrainConfig::validate() const {
  if (n_k < 2) throw ConfigError("train: N_K must be >= 2");
  if (n_m < 2) throw ConfigError("train: N_M must be >= 2");
  if (epochs == 0) throw ConfigError("train: epochs must be >= 1");
  if (!(base_lr_head > 0.0) || !(base_lr_backbone > 0.0)) {
    throw ConfigError("train: learning rates must be > 0");
  }
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("train: momentum must be in [0, 1)");
  if (!(weight_decay >= 0.0)) throw ConfigError("train: weight decay must be >= 0");
  if (!(lambda >= 0.0)) throw ConfigError("train: lambda must be >= 0");
  if (!(alpha >= 0.0)) throw ConfigError("train: alpha must be >= 0");
  if (decay.period == 0) throw ConfigError("train: decay period must be >= 1");
  if (!(decay.factor > 0.0 && decay.factor <= 1.0)) {
    throw ConfigError("train: decay factor must be in (0, 1]");
  }
}

double lr_at(std::size_t epoch, const DecaySchedule& schedule, double base_lr) {
  if (epoch <= schedule.start_epoch) return base_lr;
  const std::size_t decays = (epoch - schedule.start_epoch - 1) / schedule.period + 1;
  double lr = base_lr;
  for (std::size_t i = 0; i < decays; ++i) lr *= schedule.factor;
  return lr;
}

OptimizerState OptimizerState::zeros(const ParamStore& store) {
  OptimizerState s;
  for (const auto& p : store) {
    s.velocity.push_back(p.trainable ? Tensor(p.value.shape()) : Tensor());
  }
  return s;
}

void sgd_step(ParamStore& store, std::span<const Tensor> grads, OptimizerState& state, double lr,
              double momentum, double weight_decay) {
  if (grads.size() != store.size() || state.velocity.size() != store.size()) {
    throw DimensionError("sgd_step: " + std::to_string(store.size()) + " parameters, " +
                         std::to_string(grads.size()) + " gradients, " +
                         std::to_string(state.velocity.size()) + " velocity buffers");
  }
  const float m = static_cast<float>(momentum), wd = static_cast<float>(weight_decay),
              eta = static_cast<float>(lr);
  for (ParamId id = 0; id < store.size(); ++id) {
    auto& p = store[id];
    if (!p.trainable) continue;
    Tensor& v = state.velocity[id];
    const Tensor& g = grads[id];
    if (v.shape() != p.value.shape() || (!g.empty() && g.shape() != p.value.shape())) {
      throw DimensionError("sgd_step: shape mismatch for '" + p.name + "': parameter " +
                           shape_str(p.value.shape()) + ", gradient " + shape_str(g.shape()) +
                           ", velocity " + shape_str(v.shape()));
    }
    auto w = p.value.data();
    for (std::size_t i = 0; i < w.size(); ++i) {
      const float gi = g.empty() ? 0.0f : g[i];
      v[i] = m * v[i] + gi + wd * w[i];
      w[i] -= eta * v[i];
    }
  }
  ++state.steps;
}

std::vector<SampledImage> pk_sample(std::span<const std::vector<std::size_t>> identities,
                                    std::size_t n_k, std::size_t n_m, Rng& rng) {
  if (identities.size() < n_k) {
    throw DataError("pk_sample: need " + std::to_string(n_k) + " identities, train split has " +
                    std::to_string(identities.size()));
  }
  std::vector<std::size_t> ids(identities.size());
  std::iota(ids.begin(), ids.end(), 0);
  rng.shuffle(ids);
  std::vector<SampledImage> batch;
  batch.reserve(n_k * n_m);
  for (std::size_t k = 0; k < n_k; ++k) {
    const auto& imgs = identities[ids[k]];
    if (imgs.empty()) throw DataError("pk_sample: identity without images");
    const int label = static_cast<int>(ids[k]);
    if (imgs.size() >= n_m) {
      std::vector<std::size_t> pick = imgs;
      rng.shuffle(pick);
      for (std::size_t j = 0; j < n_m; ++j) batch.push_back({pick[j], label});
    } else {
      for (std::size_t j = 0; j < n_m; ++j) batch.push_back({imgs[rng.below(imgs.size())], label});
    }
  }
  return batch;
}

TrainingSet load_training_set(const Manifest& manifest) {
  TrainingSet set;
  set.num_classes = manifest.num_classes();
  set.identities.resize(set.num_classes);
  for (std::size_t i : manifest.indices(Split::train)) {
    const auto& e = manifest.entries[i];
    FeatureMap map = read_feature(manifest.resolve(e));
    if (!set.maps.empty()) {
      const auto& first = set.maps.front();
      if (map.height != first.height || map.width != first.width ||
          map.channels != first.channels) {
        throw DimensionError("feature '" + manifest.resolve(e).string() + "' is " +
                             std::to_string(map.height) + "x" + std::to_string(map.width) + "x" +
                             std::to_string(map.channels) + ", expected " +
                             std::to_string(first.height) + "x" + std::to_string(first.width) +
                             "x" + std::to_string(first.channels));
      }
    }
    const int label = manifest.train_labels.at(e.person_id);
    set.identities[static_cast<std::size_t>(label)].push_back(set.maps.size());
    set.labels.push_back(label);
    set.maps.push_back(std::move(map));
  }
  return set;
}

TrainResult train(const TrainConfig& config, const HeadConfig& head_config,
                  const TrainingSet& data, const EpochCallback& on_epoch) {
  config.validate();
  head_config.validate();
  if (data.maps.empty()) throw DataError("train: the train split is empty");
  if (data.num_classes < config.n_k) {
    throw DataError("train: N_K = " + std::to_string(config.n_k) + " but the train split has only " +
                    std::to_string(data.num_classes) + " identities");
  }
  const auto& first = data.maps.front();
  if (first.channels != head_config.channels) {
    throw DimensionError("train: feature maps have " + std::to_string(first.channels) +
                         " channels, head expects " + std::to_string(head_config.channels));
  }
  head_config.validate_for_height(first.height);

  TrainResult result;
  result.num_classes = data.num_classes;
  Rng rng(config.seed);
  const ReidHead head(head_config, result.params, rng);
  const auto bank = ClassifierBank::create(result.params, head_config.feature_count(),
                                           head_config.embed_dim, data.num_classes, rng);
  auto state = OptimizerState::zeros(result.params);
  const std::size_t batches =
      (data.maps.size() + config.batch_size() - 1) / config.batch_size();

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    EpochLog log;
    log.epoch = epoch;
    log.lr = lr_at(epoch, config.decay, config.base_lr_head);
    log.batches = batches;
    for (std::size_t b = 0; b < batches; ++b) {
      const auto sample = pk_sample(data.identities, config.n_k, config.n_m, rng);
      std::vector<const FeatureMap*> maps;
      std::vector<int> labels;
      for (const auto& s : sample) {
        maps.push_back(&data.maps[s.index]);
        labels.push_back(s.label);
      }
      Graph<float> g(Mode::training);
      const NodeId input = g.constant(stack_feature_maps(maps));
      const auto out = head.multiscale_forward(g, result.params, input);
      const auto loss = combined_loss<float>(g, result.params, bank, out.representation,
                                             out.features, labels, static_cast<float>(config.alpha),
                                             static_cast<float>(config.lambda));
      const double total = g.value(loss.total)[0];
      if (!std::isfinite(total)) {
        throw Error("train: loss became non-finite at epoch " + std::to_string(epoch) +
                    ", batch " + std::to_string(b + 1));
      }
      log.loss += total;
      log.triplet += g.value(loss.triplet)[0];
      log.cross_entropy += g.value(loss.cross_entropy)[0];
      g.backward(loss.total);
      std::vector<Tensor> grads(result.params.size());
      for (const auto& pg : g.param_grads()) grads[pg.id] = *pg.grad;
      sgd_step(result.params, grads, state, log.lr, config.momentum, config.weight_decay);
    }
    log.loss /= static_cast<double>(batches);
    log.triplet /= static_cast<double>(batches);
    log.cross_entropy /= static_cast<double>(batches);
    result.log.push_back(log);
    if (on_epoch) on_epoch(log);
  }
  result.rng_digest = rng.digest();
  return result;
}

}  // namespace rrid
