#pragma once

#include <stdexcept>
#include <string>

namespace bdh {

// Validation failure: bad shapes, bad arguments, malformed data.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// Filesystem or file-format failure.
class IoError : public Error {
 public:
  explicit IoError(const std::string& what) : Error(what) {}
};

[[noreturn]] inline void fail(const std::string& msg) { throw Error(msg); }
[[noreturn]] inline void fail_io(const std::string& msg) { throw IoError(msg); }

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw Error(msg);
}

}  // namespace bdh
