#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace iotprint {

std::string sha256_hex(std::span<const unsigned char> bytes);
std::string sha256_file(const std::filesystem::path& path);

/// Throws Error(ManifestMismatch) when the file's digest differs from `expected`.
void verify_file_digest(const std::filesystem::path& path, std::string_view expected);

/// Ordered key=value text file. Keys are unique; values run to end of line.
class Manifest {
 public:
  void set(std::string key, std::string value);
  std::optional<std::string> get(std::string_view key) const;
  /// Throws Error(ManifestMismatch) naming the missing key.
  const std::string& require(std::string_view key) const;

  const std::vector<std::pair<std::string, std::string>>& entries() const { return entries_; }

  std::string serialize() const;
  static Manifest parse(std::string_view text);

  void save(const std::filesystem::path& path) const;
  static Manifest load(const std::filesystem::path& path);

 private:
  std::vector<std::pair<std::string, std::string>> entries_;
};

}  // namespace iotprint
