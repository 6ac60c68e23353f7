#include "rrid/manifest.hpp"

#include <algorithm>
#include <cctype>
#include <set>

#include <json.hpp>

#include "binary.hpp"
#include "rrid/errors.hpp"

namespace rrid {

using nlohmann::json;

Split parse_split(std::string_view text) {
  if (text == "train") return Split::train;
  if (text == "query") return Split::query;
  if (text == "gallery") return Split::gallery;
  throw DataError("unknown split '" + std::string(text) + "' (expected train, query or gallery)");
}

std::string to_string(Split split) {
  switch (split) {
    case Split::train: return "train";
    case Split::query: return "query";
    case Split::gallery: return "gallery";
  }
  return "?";
}

std::filesystem::path Manifest::resolve(const ManifestEntry& e) const {
  std::filesystem::path p(e.feature_path);
  return p.is_absolute() ? p : base_dir / p;
}

std::vector<std::size_t> Manifest::indices(Split split) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    if (entries[i].split == split) out.push_back(i);
  }
  return out;
}

std::size_t Manifest::count(Split split) const {
  return static_cast<std::size_t>(std::count_if(
      entries.begin(), entries.end(), [&](const ManifestEntry& e) { return e.split == split; }));
}

namespace {

template <typename T>
T field(const json& obj, const char* key, const std::string& where) {
  auto it = obj.find(key);
  if (it == obj.end()) throw DataError(where + ": missing \"" + key + "\"");
  if constexpr (std::is_same_v<T, std::string>) {
    if (!it->is_string()) throw DataError(where + ": \"" + key + "\" must be a string");
  } else {
    if (!it->is_number_integer()) throw DataError(where + ": \"" + key + "\" must be an integer");
  }
  return it->get<T>();
}

bool blank(std::string_view line) {
  return std::all_of(line.begin(), line.end(), [](unsigned char ch) { return std::isspace(ch); });
}

}  // namespace

Manifest parse_manifest(std::string_view text, const std::filesystem::path& base_dir,
                        bool check_paths, const std::string& what) {
  Manifest m;
  m.base_dir = base_dir;
  std::map<std::string, std::size_t> seen;  // id -> line
  std::set<int> train_ids;
  std::size_t line_no = 0;
  while (!text.empty()) {
    const std::size_t nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (blank(line)) continue;
    const std::string where = what + " line " + std::to_string(line_no);
    json obj;
    try {
      obj = json::parse(line);
    } catch (const json::parse_error& e) {
      throw DataError(where + ": invalid JSON: " + e.what());
    }
    if (!obj.is_object()) throw DataError(where + ": expected a JSON object");
    ManifestEntry e;
    e.id = field<std::string>(obj, "id", where);
    e.feature_path = field<std::string>(obj, "feature_path", where);
    e.person_id = field<int>(obj, "person_id", where);
    e.camera_id = field<int>(obj, "camera_id", where);
    try {
      e.split = parse_split(field<std::string>(obj, "split", where));
    } catch (const DataError& err) {
      throw DataError(where + ": " + err.what());
    }
    if (e.id.empty()) throw DataError(where + ": empty id");
    if (e.person_id < -1) throw DataError(where + ": person_id must be >= -1");
    if (auto [it, fresh] = seen.emplace(e.id, line_no); !fresh) {
      throw DataError(where + ": duplicate id '" + e.id + "' (first on line " +
                      std::to_string(it->second) + ")");
    }
    if (e.split == Split::train) {
      if (e.person_id < 0) throw DataError(where + ": junk person_id -1 in train split");
      train_ids.insert(e.person_id);
    }
    if (check_paths && !std::filesystem::is_regular_file(m.resolve(e))) {
      throw DataError(where + ": feature file '" + m.resolve(e).string() + "' not found");
    }
    m.entries.push_back(std::move(e));
  }
  int next = 0;
  for (int pid : train_ids) m.train_labels.emplace(pid, next++);
  return m;
}

Manifest load_manifest(const std::filesystem::path& path, bool check_paths) {
  return parse_manifest(bin::read_file(path), path.parent_path(), check_paths, path.string());
}

std::string manifest_line(const ManifestEntry& e) {
  // ordered_json keeps the documented field order in emitted files.
  nlohmann::ordered_json obj;
  obj["id"] = e.id;
  obj["feature_path"] = e.feature_path;
  obj["person_id"] = e.person_id;
  obj["camera_id"] = e.camera_id;
  obj["split"] = to_string(e.split);
  return obj.dump();
}

void write_manifest(const std::filesystem::path& path, const std::vector<ManifestEntry>& entries) {
  std::string out;
  for (const auto& e : entries) out += manifest_line(e) + "\n";
  bin::write_file(path, out);
}

}  // namespace rrid
