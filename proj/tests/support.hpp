#pragma once

#include <filesystem>
#include <optional>
#include <random>
#include <string>

#include "iotprint/error.hpp"
#include "iotprint/transform.hpp"

namespace support {

template <typename F>
std::optional<iotprint::ErrorKind> error_kind(F&& f) {
  try {
    f();
  } catch (const iotprint::Error& e) {
    return e.kind();
  }
  return std::nullopt;
}

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& name) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("iotprint-" + name + "-" + std::to_string(rd()));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

/// Image whose first bytes repeat `pattern` and the rest is noise from `gen`.
inline iotprint::transform::PayloadVector patterned(std::mt19937_64& gen, std::uint8_t pattern,
                                                    std::size_t pattern_len = 64) {
  iotprint::transform::PayloadVector v;
  for (std::size_t i = 0; i < v.bytes.size(); ++i) {
    v.bytes[i] = i < pattern_len ? pattern : static_cast<std::uint8_t>(gen() % 32);
  }
  return v;
}

}  // namespace support
