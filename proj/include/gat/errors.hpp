#pragma once

#include <stdexcept>
#include <string>

namespace gat {

// Invalid model/run configuration or bad operation arguments.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

enum class IoCode {
  open_failed,
  bad_magic,
  version_mismatch,
  truncated,
  checksum_mismatch,
  geometry_mismatch,
};

class IoError : public std::runtime_error {
 public:
  IoError(IoCode code, const std::string& msg)
      : std::runtime_error(msg), code_(code) {}
  IoCode code() const { return code_; }

 private:
  IoCode code_;
};

// Non-finite values reached a loss or attention logits; the training loop
// turns this into a divergence report rather than a crash.
class DivergenceError : public std::runtime_error {
 public:
  explicit DivergenceError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace gat
