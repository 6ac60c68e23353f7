#pragma once

// Single-query retrieval evaluation: Euclidean ranking, CMC and mAP with the
// cross-camera filter, plus the architecture ablation harness.

#include <functional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "rrid/checkpoint.hpp"
#include "rrid/config.hpp"
#include "rrid/embeddings.hpp"
#include "rrid/head.hpp"
#include "rrid/manifest.hpp"

namespace rrid {

// Inference-mode representations for every manifest row of `split`, in
// manifest order.
EmbeddingSet embed_all(const ReidHead& head, const ParamStore& params, const Manifest& manifest,
                       Split split);
EmbeddingSet embed_all(const Checkpoint& ckpt, const Manifest& manifest, Split split);

// [nq x ng] unsquared Euclidean distances.
BasicTensor<double> distance_matrix(const Tensor& queries, const Tensor& gallery);

struct EvalResult {
  double mAP = 0.0;
  std::vector<double> cmc;  // cmc[k-1] = rank-k accuracy
  std::vector<std::size_t> valid_queries;
  std::vector<double> ap;   // one per valid query, same order
  std::size_t n_valid() const { return valid_queries.size(); }
  double rank1() const { return cmc.empty() ? 0.0 : cmc[0]; }
};

inline constexpr std::size_t kDefaultMaxRank = 50;

// Per query, gallery rows with the same person and camera and rows with
// person_id -1 are dropped; the rest are ranked by ascending distance, ties
// by gallery index. Queries without any remaining match are skipped.
EvalResult evaluate(const BasicTensor<double>& distances, std::span<const int> query_pids,
                    std::span<const int> query_cams, std::span<const int> gallery_pids,
                    std::span<const int> gallery_cams, std::size_t max_rank = kDefaultMaxRank);
EvalResult evaluate(const EmbeddingSet& query, const EmbeddingSet& gallery,
                    std::size_t max_rank = kDefaultMaxRank);

// {config, mAP, cmc, n_valid_queries}
nlohmann::ordered_json report_json(const EvalResult& result, const nlohmann::json& config);
std::string report_text(const EvalResult& result);

struct AblationVariant {
  bool gf = false, lf = false, rm = false, ext = false;
  HeadConfig head;
  std::string gf_pool;  // "-" when the global branch is off
  std::string lf_pool;
};

// Three baselines (global only, local only, both with GAP), then
// {GAP, GMP, GAP+GMP, GCP} global pooling x relation module off/on x
// scales {6} / {2, 4, 6}. Channel and embedding sizes come from `base`.
std::vector<AblationVariant> ablation_grid(const HeadConfig& base);

struct AblationRow {
  AblationVariant variant;
  std::size_t f_dim = 0;
  EvalResult result;
};

// Trains and evaluates every variant with the same training config.
std::vector<AblationRow> ablation_run(const RunConfig& run, const Manifest& manifest,
                                      const std::function<void(const AblationRow&)>& on_row = {});

std::string ablation_header();
std::string ablation_line(const AblationRow& row);
std::string ablation_table(std::span<const AblationRow> rows);
nlohmann::ordered_json ablation_json(std::span<const AblationRow> rows, const RunConfig& run);

}  // namespace rrid
