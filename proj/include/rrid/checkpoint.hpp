#pragma once

// "RIDC" checkpoints:
//   magic "RIDC" | version u32 | count u32
//   count x { name: u32 length + UTF-8 | rank u32 | dims u32[rank] | f32 values }
//   config: u32 length + UTF-8 JSON | epoch u32
// all little-endian.

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

#include <json.hpp>

#include "rrid/params.hpp"

namespace rrid {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  // Head, classifier bank and batch-norm running statistics.
  ParamStore params;
  // Resolved run configuration plus whatever else the writer records
  // (class count, random-state digest).
  nlohmann::json config = nlohmann::json::object();
  std::uint32_t epoch = 0;
};

// Batch-norm running statistics, recognised by name suffix on load.
bool is_buffer_name(std::string_view name);

std::string encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(std::string_view bytes, const std::string& what = "checkpoint");

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace rrid
