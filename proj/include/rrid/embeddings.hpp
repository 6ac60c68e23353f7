#pragma once

// "RIDE" embedding files:
//   magic "RIDE" | count u32 | dim u32 | count x dim f32 rows
// little-endian, plus a sidecar <path>.meta.json holding
//   {"split", "ids", "person_ids", "camera_ids", "config"}.

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "rrid/tensor.hpp"

namespace rrid {

struct EmbeddingSet {
  std::string split;
  std::vector<std::string> ids;
  Tensor matrix;  // [count x dim]
  std::vector<int> person_ids;
  std::vector<int> camera_ids;
  // Resolved run configuration of the model that produced the rows.
  nlohmann::json config = nlohmann::json::object();

  std::size_t size() const { return ids.size(); }
  std::size_t dim() const { return matrix.rank() == 2 ? matrix.dim(1) : 0; }
  // Row count / metadata lengths agree.
  void validate() const;
};

std::string encode_embedding_matrix(const Tensor& matrix);
Tensor decode_embedding_matrix(std::string_view bytes, const std::string& what = "embeddings");

std::filesystem::path sidecar_path(const std::filesystem::path& path);

void write_embeddings(const std::filesystem::path& path, const EmbeddingSet& set);
EmbeddingSet read_embeddings(const std::filesystem::path& path);

}  // namespace rrid
