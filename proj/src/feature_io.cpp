#include "rrid/feature_io.hpp"

#include <cmath>
#include <fstream>
#include <iterator>

#include "binary.hpp"
#include "rrid/errors.hpp"

namespace rrid {

namespace bin {

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path.string() + "'");
  std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw DataError("error reading '" + path.string() + "'");
  return data;
}

void write_file(const std::filesystem::path& path, std::string_view data) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  out.write(data.data(), static_cast<std::streamsize>(data.size()));
  out.flush();
  if (!out) throw DataError("error writing '" + path.string() + "'");
}

}  // namespace bin

std::string encode_feature(const FeatureMap& map) {
  if (map.values.size() != map.height * map.width * map.channels) {
    throw DimensionError("feature map holds " + std::to_string(map.values.size()) +
                         " values, header says " + std::to_string(map.height) + "x" +
                         std::to_string(map.width) + "x" + std::to_string(map.channels));
  }
  for (std::size_t i = 0; i < map.values.size(); ++i) {
    if (!std::isfinite(map.values[i])) {
      throw DataError("feature map value " + std::to_string(i) + " is not finite");
    }
  }
  bin::Writer w;
  w.bytes("RIDF");
  w.u32(kFeatureVersion);
  w.u32(static_cast<std::uint32_t>(map.height));
  w.u32(static_cast<std::uint32_t>(map.width));
  w.u32(static_cast<std::uint32_t>(map.channels));
  for (float v : map.values) w.f32(v);
  return w.data();
}

FeatureMap decode_feature(std::string_view bytes, const std::string& what) {
  bin::Reader r(bytes, what);
  r.magic("RIDF");
  const std::size_t at = r.offset();
  const std::uint32_t version = r.u32("version");
  if (version != kFeatureVersion) {
    throw FormatError(what + ": unsupported version " + std::to_string(version),
                      static_cast<long long>(at));
  }
  const std::size_t h = r.u32("height"), w = r.u32("width"), c = r.u32("channels");
  if (h == 0 || w == 0 || c == 0) r.fail("zero dimension in header");
  // u32 * u32 * u32 fits in 96 bits; compare in steps so nothing overflows.
  const std::size_t room = r.remaining() / 4;
  if (h > room || w > room / h || c > room / (h * w)) {
    r.fail("truncated payload: header declares " + std::to_string(h) + "x" + std::to_string(w) +
           "x" + std::to_string(c) + " values, " + std::to_string(r.remaining()) + " bytes left");
  }
  FeatureMap map;
  map.height = h;
  map.width = w;
  map.channels = c;
  map.values.resize(h * w * c);
  r.f32_array(map.values.data(), map.values.size(), "payload");
  r.expect_end();
  return map;
}

void write_feature(const std::filesystem::path& path, const FeatureMap& map) {
  bin::write_file(path, encode_feature(map));
}

FeatureMap read_feature(const std::filesystem::path& path) {
  return decode_feature(bin::read_file(path), path.string());
}

}  // namespace rrid
