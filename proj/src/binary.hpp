#pragma once

// Little-endian byte buffers shared by the RIDF / RIDC / RIDE codecs.

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <string>
#include <string_view>

#include "rrid/errors.hpp"

namespace rrid::bin {

class Writer {
 public:
  void bytes(std::string_view s) { buf_.append(s); }

  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
  }

  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }

  // u32 length then raw bytes
  void str(std::string_view s) {
    if (s.size() > UINT32_MAX) throw Error("string too long to serialize");
    u32(static_cast<std::uint32_t>(s.size()));
    bytes(s);
  }

  const std::string& data() const noexcept { return buf_; }

 private:
  std::string buf_;
};

// Reads from an in-memory copy of a file. Every failure reports the offset
// at which the missing or bad field starts.
class Reader {
 public:
  Reader(std::string_view data, std::string what) : data_(data), what_(std::move(what)) {}

  std::size_t offset() const noexcept { return pos_; }
  std::size_t remaining() const noexcept { return data_.size() - pos_; }

  void magic(std::string_view expected) {
    need(expected.size(), "magic");
    if (data_.substr(pos_, expected.size()) != expected) {
      fail("bad magic, expected \"" + std::string(expected) + "\"");
    }
    pos_ += expected.size();
  }

  std::uint32_t u32(const char* field) {
    need(4, field);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) {
      v |= static_cast<std::uint32_t>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
    }
    pos_ += 4;
    return v;
  }

  float f32(const char* field) { return std::bit_cast<float>(u32(field)); }

  std::string str(const char* field) {
    const std::size_t at = pos_;
    const std::uint32_t n = u32(field);
    if (remaining() < n) {
      throw FormatError(what_ + ": truncated " + field + " (" + std::to_string(n) + " bytes declared)",
                        static_cast<long long>(at));
    }
    std::string s(data_.substr(pos_, n));
    pos_ += n;
    return s;
  }

  // Bulk f32 payload; checks the whole length up front.
  template <typename Out>
  void f32_array(Out* out, std::size_t count, const char* field) {
    if (count > remaining() / 4) {
      fail(std::string("truncated ") + field + ": need " + std::to_string(count * 4) +
           " bytes, have " + std::to_string(remaining()));
    }
    for (std::size_t i = 0; i < count; ++i) out[i] = f32(field);
  }

  void expect_end() {
    if (pos_ != data_.size()) {
      fail(std::to_string(data_.size() - pos_) + " trailing bytes");
    }
  }

  [[noreturn]] void fail(const std::string& msg) const {
    throw FormatError(what_ + ": " + msg, static_cast<long long>(pos_));
  }

 private:
  void need(std::size_t n, const char* field) const {
    if (remaining() < n) fail(std::string("truncated ") + field);
  }

  std::string_view data_;
  std::string what_;
  std::size_t pos_ = 0;
};

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view data);

}  // namespace rrid::bin
