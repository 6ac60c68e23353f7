#pragma once

// "RIDF" feature files:
//   magic "RIDF" | version u32 = 1 | H u32 | W u32 | C u32 | H*W*C f32
// all little-endian, payload in ((h * W + w) * C + c) order.

#include <filesystem>
#include <string>
#include <string_view>

#include "rrid/feature_map.hpp"

namespace rrid {

inline constexpr std::uint32_t kFeatureVersion = 1;

std::string encode_feature(const FeatureMap& map);
// `what` names the source in error messages.
FeatureMap decode_feature(std::string_view bytes, const std::string& what = "feature");

void write_feature(const std::filesystem::path& path, const FeatureMap& map);
FeatureMap read_feature(const std::filesystem::path& path);

}  // namespace rrid
