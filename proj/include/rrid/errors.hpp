#pragma once

#include <stdexcept>
#include <string>

namespace rrid {

// Base for everything the library throws on bad input. The CLI maps these to
// exit code 2; argument-parsing failures are exit code 1.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Tensor shapes that do not line up.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// Invalid head/training/run configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Corrupt or unreadable file. `offset` is the byte position where reading
// failed, or -1 when the error is not tied to a position.
class FormatError : public Error {
 public:
  FormatError(const std::string& what, long long offset = -1)
      : Error(offset >= 0 ? what + " (at byte offset " + std::to_string(offset) + ")" : what),
        offset_(offset) {}

  long long offset() const noexcept { return offset_; }

 private:
  long long offset_;
};

// Dataset contents that cannot satisfy a request (too few identities,
// unknown label, duplicate id, ...).
class DataError : public Error {
 public:
  using Error::Error;
};

}  // namespace rrid
