#pragma once

// JSON Lines dataset manifests, one object per line:
//   {"id": "...", "feature_path": "...", "person_id": 3, "camera_id": 1, "split": "train"}
// person_id -1 marks junk / distractor images. Relative feature paths resolve
// against the manifest's directory.

#include <cstddef>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace rrid {

enum class Split { train, query, gallery };

Split parse_split(std::string_view text);
std::string to_string(Split split);

struct ManifestEntry {
  std::string id;
  std::string feature_path;  // as written in the manifest
  int person_id = 0;
  int camera_id = 0;
  Split split = Split::train;
};

struct Manifest {
  std::filesystem::path base_dir;
  std::vector<ManifestEntry> entries;
  // Train person_id -> dense label in [0, K), assigned in ascending person_id.
  std::map<int, int> train_labels;

  std::filesystem::path resolve(const ManifestEntry& e) const;
  std::vector<std::size_t> indices(Split split) const;
  std::size_t count(Split split) const;
  std::size_t num_classes() const { return train_labels.size(); }
};

// `check_paths` verifies every feature file exists.
Manifest parse_manifest(std::string_view text, const std::filesystem::path& base_dir,
                        bool check_paths = true, const std::string& what = "manifest");
Manifest load_manifest(const std::filesystem::path& path, bool check_paths = true);

std::string manifest_line(const ManifestEntry& e);
void write_manifest(const std::filesystem::path& path, const std::vector<ManifestEntry>& entries);

}  // namespace rrid
