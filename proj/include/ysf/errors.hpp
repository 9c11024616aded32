#pragma once

#include <stdexcept>
#include <string>

namespace ysf {

// Invalid configuration or usage; the CLI maps this to exit code 1.
class ConfigError : public std::invalid_argument {
 public:
  explicit ConfigError(const std::string& msg) : std::invalid_argument(msg) {}
};

// Failure while running an otherwise valid configuration; exit code 2.
class RuntimeFailure : public std::runtime_error {
 public:
  explicit RuntimeFailure(const std::string& msg) : std::runtime_error(msg) {}
};

inline void require_config(bool ok, const std::string& msg) {
  if (!ok) throw ConfigError(msg);
}

inline void require_runtime(bool ok, const std::string& msg) {
  if (!ok) throw RuntimeFailure(msg);
}

}  // namespace ysf
