#include "rrid/checkpoint.hpp"

#include "binary.hpp"

namespace rrid {

bool is_buffer_name(std::string_view name) {
  return name.ends_with(".running_mean") || name.ends_with(".running_var");
}

std::string encode_checkpoint(const Checkpoint& ckpt) {
  bin::Writer w;
  w.bytes("RIDC");
  w.u32(kCheckpointVersion);
  w.u32(static_cast<std::uint32_t>(ckpt.params.size()));
  for (const auto& p : ckpt.params) {
    w.str(p.name);
    w.u32(static_cast<std::uint32_t>(p.value.rank()));
    for (std::size_t d : p.value.shape()) w.u32(static_cast<std::uint32_t>(d));
    for (float v : p.value.values()) w.f32(v);
  }
  w.str(ckpt.config.dump());
  w.u32(ckpt.epoch);
  return w.data();
}

Checkpoint decode_checkpoint(std::string_view bytes, const std::string& what) {
  bin::Reader r(bytes, what);
  r.magic("RIDC");
  const std::size_t at = r.offset();
  const std::uint32_t version = r.u32("version");
  if (version != kCheckpointVersion) {
    throw FormatError(what + ": unsupported version " + std::to_string(version),
                      static_cast<long long>(at));
  }
  Checkpoint ckpt;
  const std::uint32_t count = r.u32("record count");
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::size_t record_at = r.offset();
    std::string name = r.str("record name");
    const std::uint32_t rank = r.u32("rank");
    if (rank > 8) r.fail("implausible rank " + std::to_string(rank) + " for '" + name + "'");
    Shape shape(rank);
    std::size_t numel = 1;
    for (auto& d : shape) {
      d = r.u32("dimension");
      numel = d == 0 || numel <= r.remaining() / d ? numel * d : r.remaining() + 1;
    }
    // Reject before allocating.
    if (numel > r.remaining() / 4) r.fail("truncated values for '" + name + "'");
    Tensor value(shape);
    r.f32_array(value.data().data(), value.size(), "record values");
    if (ckpt.params.find(name)) {
      throw FormatError(what + ": duplicate record '" + name + "'",
                        static_cast<long long>(record_at));
    }
    const bool buffer = is_buffer_name(name);
    ckpt.params.add(std::move(name), std::move(value), !buffer);
  }
  const std::size_t config_at = r.offset();
  const std::string blob = r.str("config");
  try {
    ckpt.config = nlohmann::json::parse(blob);
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(what + ": config blob is not JSON: " + e.what(),
                      static_cast<long long>(config_at + 4 + e.byte));
  }
  ckpt.epoch = r.u32("epoch");
  r.expect_end();
  return ckpt;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  bin::write_file(path, encode_checkpoint(ckpt));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(bin::read_file(path), path.string());
}

}  // namespace rrid
