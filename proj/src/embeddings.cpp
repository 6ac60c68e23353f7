#include "rrid/embeddings.hpp"

#include "binary.hpp"

namespace rrid {

using nlohmann::json;

void EmbeddingSet::validate() const {
  const std::size_t n = ids.size();
  if (matrix.rank() != 2 || matrix.dim(0) != n || person_ids.size() != n ||
      camera_ids.size() != n) {
    throw DimensionError("embedding set: matrix " + shape_str(matrix.shape()) + " with " +
                         std::to_string(n) + " ids, " + std::to_string(person_ids.size()) +
                         " person ids, " + std::to_string(camera_ids.size()) + " camera ids");
  }
}

std::string encode_embedding_matrix(const Tensor& matrix) {
  if (matrix.rank() != 2) throw DimensionError("embeddings must be a matrix");
  bin::Writer w;
  w.bytes("RIDE");
  w.u32(static_cast<std::uint32_t>(matrix.dim(0)));
  w.u32(static_cast<std::uint32_t>(matrix.dim(1)));
  for (float v : matrix.values()) w.f32(v);
  return w.data();
}

Tensor decode_embedding_matrix(std::string_view bytes, const std::string& what) {
  bin::Reader r(bytes, what);
  r.magic("RIDE");
  const std::size_t count = r.u32("count"), dim = r.u32("dim");
  if (count > 0 && dim > r.remaining() / 4 / count) {
    r.fail("truncated rows: header declares " + std::to_string(count) + "x" +
           std::to_string(dim) + ", " + std::to_string(r.remaining()) + " bytes left");
  }
  Tensor m({count, dim});
  r.f32_array(m.data().data(), m.size(), "rows");
  r.expect_end();
  return m;
}

std::filesystem::path sidecar_path(const std::filesystem::path& path) {
  return std::filesystem::path(path.string() + ".meta.json");
}

void write_embeddings(const std::filesystem::path& path, const EmbeddingSet& set) {
  set.validate();
  bin::write_file(path, encode_embedding_matrix(set.matrix));
  nlohmann::ordered_json meta;
  meta["split"] = set.split;
  meta["ids"] = set.ids;
  meta["person_ids"] = set.person_ids;
  meta["camera_ids"] = set.camera_ids;
  meta["config"] = set.config;
  bin::write_file(sidecar_path(path), meta.dump(2) + "\n");
}

EmbeddingSet read_embeddings(const std::filesystem::path& path) {
  EmbeddingSet set;
  set.matrix = decode_embedding_matrix(bin::read_file(path), path.string());
  const auto meta_path = sidecar_path(path);
  const std::string where = meta_path.string();
  json meta;
  try {
    meta = json::parse(bin::read_file(meta_path));
    set.split = meta.at("split").get<std::string>();
    set.ids = meta.at("ids").get<std::vector<std::string>>();
    set.person_ids = meta.at("person_ids").get<std::vector<int>>();
    set.camera_ids = meta.at("camera_ids").get<std::vector<int>>();
    if (meta.contains("config")) set.config = meta.at("config");
  } catch (const json::exception& e) {
    throw FormatError(where + ": bad sidecar metadata: " + e.what());
  }
  try {
    set.validate();
  } catch (const DimensionError& e) {
    throw FormatError(where + ": does not match '" + path.string() + "': " + e.what());
  }
  return set;
}

}  // namespace rrid
