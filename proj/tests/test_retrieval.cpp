#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "random_cases.hpp"
#include "rrid/retrieval.hpp"
#include "rrid/synth.hpp"

using namespace rrid;

namespace {

BasicTensor<double> to_tensor(const std::vector<std::vector<double>>& d) {
  BasicTensor<double> t({d.size(), d.empty() ? 0 : d[0].size()});
  for (std::size_t i = 0; i < d.size(); ++i)
    for (std::size_t j = 0; j < d[i].size(); ++j) t[i * d[i].size() + j] = d[i][j];
  return t;
}

EvalResult eval(const std::vector<std::vector<double>>& d, const std::vector<int>& qp,
                const std::vector<int>& qc, const std::vector<int>& gp, const std::vector<int>& gc,
                std::size_t max_rank = kDefaultMaxRank) {
  return evaluate(to_tensor(d), qp, qc, gp, gc, max_rank);
}

}  // namespace

TEST_CASE("distance matrix") {
  const auto d = distance_matrix(Tensor::matrix({{0, 0}, {1, 1}}), Tensor::matrix({{3, 4}, {1, 1}}));
  CHECK(d[0] == 5.0);
  CHECK(d[1] == doctest::Approx(std::sqrt(2.0)));
  CHECK(d[3] == 0.0);

  Rng rng(3);
  Tensor q({7, 33}), g({11, 33});
  for (auto& v : q.data()) v = static_cast<float>(rng.normal());
  for (auto& v : g.data()) v = static_cast<float>(rng.normal());
  const auto fast = distance_matrix(q, g);
  for (std::size_t i = 0; i < 7; ++i) {
    for (std::size_t j = 0; j < 11; ++j) {
      double s = 0;
      for (std::size_t k = 0; k < 33; ++k) {
        const double diff = double(q[i * 33 + k]) - double(g[j * 33 + k]);
        s += diff * diff;
      }
      CHECK(std::abs(fast[i * 11 + j] - std::sqrt(s)) < 1e-5);
    }
  }
  CHECK_THROWS_AS(distance_matrix(Tensor({2, 3}), Tensor({2, 4})), DimensionError);
}

TEST_CASE("average precision of a known ranking") {
  // relevance by rank: 1, 0, 1, 0
  const auto r = eval({{0.1, 0.2, 0.3, 0.4}}, {1}, {0}, {1, 2, 1, 3}, {1, 1, 1, 1});
  CHECK(r.n_valid() == 1);
  CHECK(r.mAP == doctest::Approx(5.0 / 6.0).epsilon(1e-12));
  CHECK(r.cmc[0] == 1.0);
}

TEST_CASE("metrics match the brute-force oracle") {
  Rng rng(11);
  for (int t = 0; t < 100; ++t) {
    const auto c = cases::random_gallery(rng);
    const auto r = eval(c.d, c.qp, c.qc, c.gp, c.gc, 10);
    const auto o = oracle::retrieval(c.d, c.qp, c.qc, c.gp, c.gc, 10);
    REQUIRE(r.n_valid() == o.valid);
    CHECK(std::abs(r.mAP - o.mAP) < 1e-9);
    for (std::size_t k = 0; k < 10; ++k) CHECK(std::abs(r.cmc[k] - o.cmc[k]) < 1e-9);
  }
}

TEST_CASE("cross-camera filter") {
  // the closest match shares the query camera and is dropped
  const auto r = eval({{0.0, 0.5, 0.7}}, {4}, {1}, {4, 9, 4}, {1, 0, 0});
  CHECK(r.cmc[0] == 0.0);
  CHECK(r.cmc[1] == 1.0);
  CHECK(r.mAP == doctest::Approx(0.5));

  // junk rows never count
  const auto j = eval({{0.0, 0.5}}, {4}, {1}, {-1, 4}, {0, 0});
  CHECK(j.cmc[0] == 1.0);

  // a query whose only matches are same-camera is skipped
  const auto s = eval({{0.1, 0.2}, {0.1, 0.2}}, {4, 5}, {1, 1}, {4, 5}, {1, 0});
  CHECK(s.n_valid() == 1);
  CHECK(s.valid_queries[0] == 1);

  const auto none = eval({{0.1}}, {4}, {1}, {4}, {1});
  CHECK(none.n_valid() == 0);
  CHECK(none.mAP == 0.0);
}

TEST_CASE("perfect ranking and cmc shape") {
  const auto r = eval({{0.1, 0.2, 0.9}}, {1}, {0}, {1, 1, 2}, {1, 1, 1});
  CHECK(r.mAP == 1.0);
  CHECK(r.rank1() == 1.0);
  Rng rng(5);
  for (int t = 0; t < 50; ++t) {
    const auto c = cases::random_gallery(rng);
    const auto res = eval(c.d, c.qp, c.qc, c.gp, c.gc, 40);
    for (std::size_t k = 1; k < res.cmc.size(); ++k) CHECK(res.cmc[k] >= res.cmc[k - 1]);
    if (res.n_valid()) CHECK(res.cmc.back() == 1.0);
    std::size_t firsts = 0;
    for (std::size_t i = 0; i < res.n_valid(); ++i) {
      const std::size_t q = res.valid_queries[i];
      std::size_t best = 0;
      for (std::size_t g = 1; g < c.gp.size(); ++g) {
        const bool keep_g = c.gp[g] != -1 && !(c.gp[g] == c.qp[q] && c.gc[g] == c.qc[q]);
        const bool keep_b = c.gp[best] != -1 && !(c.gp[best] == c.qp[q] && c.gc[best] == c.qc[q]);
        if (keep_g && (!keep_b || c.d[q][g] < c.d[q][best])) best = g;
      }
      firsts += c.gp[best] == c.qp[q];
    }
    if (res.n_valid()) {
      CHECK(res.rank1() == doctest::Approx(double(firsts) / double(res.n_valid())));
    }
  }
}

TEST_CASE("evaluate checks alignment") {
  CHECK_THROWS_AS(eval({{0.1, 0.2}}, {1}, {0}, {1}, {0}), DimensionError);
  CHECK_THROWS_AS(eval({{0.1}}, {1, 2}, {0}, {1}, {0}), DimensionError);
  EmbeddingSet q, g;
  q.split = "query";
  q.ids = {"a"};
  q.matrix = Tensor::matrix({{1, 2}});
  q.person_ids = {1};
  q.camera_ids = {0};
  g = q;
  g.split = "gallery";
  g.matrix = Tensor::matrix({{1, 2, 3}});
  CHECK_THROWS_AS(evaluate(q, g), DimensionError);
}

TEST_CASE("embedding a manifest split") {
  SynthSpec spec;
  spec.n_ids = 3;
  spec.imgs_per_id = 4;
  spec.channels = 16;
  spec.seed = 2;
  const auto images = synth_images(spec);
  const auto dir = std::filesystem::temp_directory_path() / "rrid_test_embed";
  std::filesystem::remove_all(dir);
  const Manifest m = load_manifest(synth_generate(spec, dir));

  Rng rng(1);
  ParamStore store;
  HeadConfig cfg;
  cfg.channels = 16;
  cfg.embed_dim = 8;
  const ReidHead head(cfg, store, rng);
  const auto q = embed_all(head, store, m, Split::query);
  CHECK(q.size() == m.count(Split::query));
  CHECK(q.dim() == cfg.representation_dim());
  CHECK(q.split == "query");
  const auto again = embed_all(head, store, m, Split::query);
  CHECK(again.matrix == q.matrix);

  Manifest empty = m;
  empty.entries.clear();
  const auto e = embed_all(head, store, empty, Split::gallery);
  CHECK(e.size() == 0);

  HeadConfig wide = cfg;
  wide.channels = 32;
  ParamStore other;
  const ReidHead wrong(wide, other, rng);
  CHECK_THROWS_AS(embed_all(wrong, other, m, Split::query), DimensionError);
  std::filesystem::remove_all(dir);
}

TEST_CASE("ablation grid dimensions") {
  HeadConfig base;  // C = 2048, c = 256
  const auto grid = ablation_grid(base);
  REQUIRE(grid.size() == 19);
  std::vector<std::size_t> dims;
  for (const auto& v : grid) dims.push_back(v.head.representation_dim());
  CHECK(dims[0] == 256);
  CHECK(dims[1] == 1536);
  CHECK(dims[2] == 1792);
  std::size_t s = 0, f = 0;
  for (std::size_t i = 3; i < grid.size(); ++i) {
    if (grid[i].ext) {
      CHECK(dims[i] == 3840);
      ++f;
    } else {
      CHECK(dims[i] == 1792);
      ++s;
    }
  }
  CHECK(s == 8);
  CHECK(f == 8);
  CHECK(grid[0].lf_pool == "-");
  CHECK(grid[1].gf_pool == "-");
}
