#include "rrid/gradient_suite.hpp"

#include "rrid/objectives.hpp"
#include "rrid/rng.hpp"

namespace rrid {

GradCheckReport check_head_gradients(const HeadCheckCase& c, const GradCheckOptions& options) {
  if (c.batch < 4 || c.batch % 2 != 0) throw ConfigError("gradient check: batch must be even and >= 4");
  Rng rng(c.seed);
  ParamStore store;
  const ReidHead head(c.head, store, rng);
  const std::size_t classes = c.batch / 2;
  const auto bank =
      ClassifierBank::create(store, c.head.feature_count(), c.head.embed_dim, classes, rng);
  std::vector<FeatureMap> maps;
  for (std::size_t n = 0; n < c.batch; ++n) {
    FeatureMap m(c.height, c.width, c.head.channels);
    for (auto& v : m.values) v = static_cast<float>(rng.normal());
    maps.push_back(std::move(m));
  }
  // Perturb batch-norm affine terms and running statistics away from their
  // initial 1/0 so those paths are exercised at a generic point.
  for (auto& p : store) {
    if (p.name.ends_with(".gamma") || p.name.ends_with(".running_var")) {
      for (auto& v : p.value.data()) v = static_cast<float>(rng.uniform(0.5, 1.5));
    } else if (p.name.ends_with(".beta") || p.name.ends_with(".running_mean") ||
               p.name.ends_with(".bias")) {
      for (auto& v : p.value.data()) v = static_cast<float>(rng.uniform(-0.5, 0.5));
    }
  }
  std::vector<int> labels;
  for (std::size_t i = 0; i < c.batch; ++i) labels.push_back(static_cast<int>(i / 2));
  const Tensor batch = stack_feature_maps(std::span<const FeatureMap>(maps));

  return grad_check_params(
      [&](auto& g, auto& s) {
        using T = std::remove_cvref_t<decltype(s[0].value[0])>;
        const NodeId input = g.constant(batch.cast<T>());
        const auto out = head.multiscale_forward(g, s, input);
        return combined_loss<T>(g, s, bank, out.representation, out.features, labels, T(c.alpha),
                                T(c.lambda))
            .total;
      },
      store.cast<double>(), c.mode, options);
}

HeadCheckCase full_head_case(std::uint64_t seed) {
  HeadCheckCase c;
  c.name = "full head P=6 C=64 c=32 batch 8, GCP + relation, combined loss";
  c.head.scales = {6};
  c.head.channels = 64;
  c.head.embed_dim = 32;
  c.seed = seed;
  return c;
}

std::vector<HeadCheckCase> gradient_suite_cases(std::uint64_t seed) {
  std::vector<HeadCheckCase> cases{full_head_case(seed)};
  auto small = [&](std::string name) {
    HeadCheckCase c;
    c.name = std::move(name);
    c.head.channels = 12;
    c.head.embed_dim = 6;
    c.batch = 6;
    c.seed = seed + cases.size();
    return c;
  };
  {
    auto c = small("scales {2,4,6}, GAP+GMP global, GAP parts, no relation");
    c.head.scales = {2, 4, 6};
    c.head.global_mode = GlobalMode::gap_gmp;
    c.head.part_pool = PoolMode::gap;
    c.head.relation_enabled = false;
    cases.push_back(c);
  }
  {
    auto c = small("scales {2,4,6}, GCP + relation");
    c.head.scales = {2, 4, 6};
    cases.push_back(c);
  }
  {
    auto c = small("P=4 local only with relation, inference-mode batchnorm");
    c.head.scales = {4};
    c.head.use_global = false;
    c.mode = Mode::inference;
    cases.push_back(c);
  }
  {
    auto c = small("P=6 GMP global only, lambda 0");
    c.head.global_mode = GlobalMode::gmp;
    c.head.use_local = false;
    c.lambda = 0.0;
    cases.push_back(c);
  }
  {
    auto c = small("P=6 GAP global, GMP parts, relation, alpha 0");
    c.head.global_mode = GlobalMode::gap;
    c.alpha = 0.0;
    cases.push_back(c);
  }
  return cases;
}

}  // namespace rrid
