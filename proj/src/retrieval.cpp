#include "rrid/retrieval.hpp"

#include <algorithm>
#include <cstdio>
#include <numeric>

#include "rrid/errors.hpp"
#include "rrid/feature_io.hpp"
#include "rrid/kernels.hpp"
#include "rrid/training.hpp"

namespace rrid {

namespace {

constexpr std::size_t kEmbedChunk = 64;

}  // namespace

EmbeddingSet embed_all(const ReidHead& head, const ParamStore& params, const Manifest& manifest,
                       Split split) {
  const HeadConfig& cfg = head.config();
  const auto rows = manifest.indices(split);
  EmbeddingSet set;
  set.split = to_string(split);
  set.matrix = Tensor({rows.size(), cfg.representation_dim()});
  ParamStore store = params;
  for (std::size_t start = 0; start < rows.size(); start += kEmbedChunk) {
    const std::size_t stop = std::min(rows.size(), start + kEmbedChunk);
    std::vector<FeatureMap> maps;
    for (std::size_t r = start; r < stop; ++r) {
      const auto& e = manifest.entries[rows[r]];
      const auto path = manifest.resolve(e);
      FeatureMap map = read_feature(path);
      if (map.channels != cfg.channels) {
        throw DimensionError("'" + path.string() + "' has " + std::to_string(map.channels) +
                             " channels, model expects " + std::to_string(cfg.channels));
      }
      try {
        cfg.validate_for_height(map.height);
      } catch (const ConfigError& err) {
        throw DimensionError("'" + path.string() + "': " + err.what());
      }
      if (!maps.empty() && (map.height != maps[0].height || map.width != maps[0].width)) {
        throw DimensionError("'" + path.string() + "' is " + std::to_string(map.height) + "x" +
                             std::to_string(map.width) + ", other maps are " +
                             std::to_string(maps[0].height) + "x" + std::to_string(maps[0].width));
      }
      maps.push_back(std::move(map));
      set.ids.push_back(e.id);
      set.person_ids.push_back(e.person_id);
      set.camera_ids.push_back(e.camera_id);
    }
    std::vector<const FeatureMap*> ptrs;
    for (const auto& m : maps) ptrs.push_back(&m);
    const Tensor out = head.embed(store, ptrs);
    std::copy(out.values().begin(), out.values().end(),
              set.matrix.data().begin() + static_cast<std::ptrdiff_t>(start * out.dim(1)));
  }
  return set;
}

EmbeddingSet embed_all(const Checkpoint& ckpt, const Manifest& manifest, Split split) {
  const RunConfig run = checkpoint_run_config(ckpt);
  const ReidHead head = ReidHead::bind(run.head, ckpt.params);
  EmbeddingSet set = embed_all(head, ckpt.params, manifest, split);
  set.config = ckpt.config.at("run");
  return set;
}

BasicTensor<double> distance_matrix(const Tensor& queries, const Tensor& gallery) {
  if (queries.rank() != 2 || gallery.rank() != 2 || queries.dim(1) != gallery.dim(1)) {
    throw DimensionError("distance_matrix: query " + shape_str(queries.shape()) + " vs gallery " +
                         shape_str(gallery.shape()));
  }
  const std::size_t nq = queries.dim(0), ng = gallery.dim(0);
  BasicTensor<double> d({nq, ng});
  kernels::euclidean_distances(queries.data(), gallery.data(), d.data(), nq, ng, queries.dim(1));
  return d;
}

EvalResult evaluate(const BasicTensor<double>& distances, std::span<const int> query_pids,
                    std::span<const int> query_cams, std::span<const int> gallery_pids,
                    std::span<const int> gallery_cams, std::size_t max_rank) {
  const std::size_t nq = query_pids.size(), ng = gallery_pids.size();
  if (query_cams.size() != nq || gallery_cams.size() != ng || distances.rank() != 2 ||
      distances.dim(0) != nq || distances.dim(1) != ng) {
    throw DimensionError("evaluate: distances " + shape_str(distances.shape()) + " with " +
                         std::to_string(nq) + "/" + std::to_string(query_cams.size()) +
                         " query and " + std::to_string(ng) + "/" +
                         std::to_string(gallery_cams.size()) + " gallery labels");
  }
  if (max_rank == 0) throw ConfigError("evaluate: max rank must be >= 1");

  // Per query: AP and 1-based rank of the first match (0 = invalid).
  std::vector<double> ap(nq, 0.0);
  std::vector<std::size_t> first(nq, 0);
#pragma omp parallel for schedule(dynamic) num_threads(kernels::thread_count()) if (nq * ng > 4096)
  for (std::ptrdiff_t qi = 0; qi < static_cast<std::ptrdiff_t>(nq); ++qi) {
    const auto q = static_cast<std::size_t>(qi);
    std::vector<std::size_t> order;
    order.reserve(ng);
    for (std::size_t g = 0; g < ng; ++g) {
      if (gallery_pids[g] == -1) continue;
      if (gallery_pids[g] == query_pids[q] && gallery_cams[g] == query_cams[q]) continue;
      order.push_back(g);
    }
    const double* row = distances.data().data() + q * ng;
    std::stable_sort(order.begin(), order.end(),
                     [row](std::size_t a, std::size_t b) { return row[a] < row[b]; });
    std::size_t hits = 0;
    double sum = 0.0;
    for (std::size_t k = 0; k < order.size(); ++k) {
      if (gallery_pids[order[k]] != query_pids[q]) continue;
      ++hits;
      if (hits == 1) first[q] = k + 1;
      sum += static_cast<double>(hits) / static_cast<double>(k + 1);
    }
    if (hits > 0) ap[q] = sum / static_cast<double>(hits);
  }

  EvalResult r;
  r.cmc.assign(max_rank, 0.0);
  double total = 0.0;
  for (std::size_t q = 0; q < nq; ++q) {
    if (first[q] == 0) continue;
    r.valid_queries.push_back(q);
    r.ap.push_back(ap[q]);
    total += ap[q];
    for (std::size_t k = first[q]; k <= max_rank; ++k) r.cmc[k - 1] += 1.0;
  }
  if (!r.valid_queries.empty()) {
    const double n = static_cast<double>(r.valid_queries.size());
    r.mAP = total / n;
    for (double& c : r.cmc) c /= n;
  }
  return r;
}

EvalResult evaluate(const EmbeddingSet& query, const EmbeddingSet& gallery, std::size_t max_rank) {
  query.validate();
  gallery.validate();
  if (query.dim() != gallery.dim()) {
    throw DimensionError("query embeddings have dimension " + std::to_string(query.dim()) +
                         ", gallery " + std::to_string(gallery.dim()));
  }
  return evaluate(distance_matrix(query.matrix, gallery.matrix), query.person_ids,
                  query.camera_ids, gallery.person_ids, gallery.camera_ids, max_rank);
}

nlohmann::ordered_json report_json(const EvalResult& result, const nlohmann::json& config) {
  nlohmann::ordered_json j;
  j["config"] = config;
  j["mAP"] = result.mAP;
  j["cmc"] = result.cmc;
  j["n_valid_queries"] = result.n_valid();
  return j;
}

std::string report_text(const EvalResult& r) {
  std::string out;
  char buf[96];
  std::snprintf(buf, sizeof buf, "valid queries  %zu\n", r.n_valid());
  out += buf;
  std::snprintf(buf, sizeof buf, "mAP            %.4f\n", r.mAP);
  out += buf;
  for (std::size_t k : {1, 5, 10, 20}) {
    if (k > r.cmc.size()) break;
    std::snprintf(buf, sizeof buf, "rank-%-2zu        %.4f\n", k, r.cmc[k - 1]);
    out += buf;
  }
  return out;
}

std::vector<AblationVariant> ablation_grid(const HeadConfig& base) {
  std::vector<AblationVariant> grid;
  auto make = [&](bool gf, bool lf, bool rm, bool ext, GlobalMode gm, PoolMode lp) {
    AblationVariant v;
    v.gf = gf;
    v.lf = lf;
    v.rm = rm;
    v.ext = ext;
    v.head = base;
    v.head.use_global = gf;
    v.head.use_local = lf;
    v.head.relation_enabled = rm;
    v.head.global_mode = gm;
    v.head.part_pool = lp;
    v.head.scales = ext ? std::vector<std::size_t>{2, 4, 6} : std::vector<std::size_t>{6};
    v.gf_pool = gf ? to_string(gm) : "-";
    v.lf_pool = lf ? to_string(lp) : "-";
    for (auto& ch : v.gf_pool) ch = static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
    for (auto& ch : v.lf_pool) ch = static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
    grid.push_back(v);
  };
  make(true, false, false, false, GlobalMode::gap, PoolMode::gap);
  make(false, true, false, false, GlobalMode::gap, PoolMode::gap);
  make(true, true, false, false, GlobalMode::gap, PoolMode::gap);
  for (bool ext : {false, true}) {
    for (bool rm : {false, true}) {
      for (GlobalMode gm : {GlobalMode::gap, GlobalMode::gmp, GlobalMode::gap_gmp, GlobalMode::gcp}) {
        make(true, true, rm, ext, gm, PoolMode::gmp);
      }
    }
  }
  return grid;
}

std::vector<AblationRow> ablation_run(const RunConfig& run, const Manifest& manifest,
                                      const std::function<void(const AblationRow&)>& on_row) {
  const auto grid = ablation_grid(run.head);
  for (const auto& v : grid) v.head.validate();
  const TrainingSet data = load_training_set(manifest);
  std::vector<AblationRow> rows;
  for (const auto& v : grid) {
    AblationRow row;
    row.variant = v;
    row.f_dim = v.head.representation_dim();
    TrainResult trained = train(run.train, v.head, data);
    const ReidHead head = ReidHead::bind(v.head, trained.params);
    const auto q = embed_all(head, trained.params, manifest, Split::query);
    const auto g = embed_all(head, trained.params, manifest, Split::gallery);
    row.result = evaluate(q, g);
    if (on_row) on_row(row);
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string ablation_header() {
  return "GF  LF  RM  Ext  GF-pool  LF-pool  F-dim     mAP  rank-1\n";
}

std::string ablation_line(const AblationRow& r) {
  char buf[128];
  auto mark = [](bool b) { return b ? "x" : " "; };
  const auto& v = r.variant;
  std::snprintf(buf, sizeof buf, "%-3s %-3s %-3s %-4s %-8s %-8s %5zu  %6.4f  %6.4f\n", mark(v.gf),
                mark(v.lf), mark(v.rm), mark(v.ext), v.gf_pool.c_str(), v.lf_pool.c_str(), r.f_dim,
                r.result.mAP, r.result.rank1());
  return buf;
}

std::string ablation_table(std::span<const AblationRow> rows) {
  std::string out = ablation_header();
  for (const auto& r : rows) out += ablation_line(r);
  return out;
}

nlohmann::ordered_json ablation_json(std::span<const AblationRow> rows, const RunConfig& run) {
  nlohmann::ordered_json j;
  j["config"] = run.to_json();
  j["rows"] = nlohmann::ordered_json::array();
  for (const auto& r : rows) {
    nlohmann::ordered_json row;
    row["GF"] = r.variant.gf;
    row["LF"] = r.variant.lf;
    row["RM"] = r.variant.rm;
    row["Ext"] = r.variant.ext;
    row["gf_pool"] = r.variant.gf_pool;
    row["lf_pool"] = r.variant.lf_pool;
    row["f_dim"] = r.f_dim;
    row["mAP"] = r.result.mAP;
    row["rank1"] = r.result.rank1();
    row["n_valid_queries"] = r.result.n_valid();
    j["rows"].push_back(row);
  }
  return j;
}

}  // namespace rrid
