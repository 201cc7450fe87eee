#pragma once

#include <stdexcept>
#include <string>

namespace metaopt {

// Single exception type for the whole library. Messages are meant to be
// actionable: they name the offending value, file, or key.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

[[noreturn]] inline void fail(const std::string& msg) { throw Error(msg); }

inline void require(bool cond, const std::string& msg) {
  if (!cond) fail(msg);
}

}  // namespace metaopt
