#pragma once

#include <nlohmann/json.hpp>

#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace srlab {

/// Lowercase hex SHA-256 digest.
std::string sha256_hex(std::string_view bytes);

/// Collects every artifact an experiment writes so the manifest can list
/// them with checksums.
class OutputDir {
 public:
  explicit OutputDir(std::filesystem::path root);

  const std::filesystem::path& root() const noexcept { return root_; }
  void write(const std::string& name, const std::string& content);
  /// Name -> checksum, in name order.
  const std::map<std::string, std::string>& checksums() const noexcept { return checksums_; }

 private:
  std::filesystem::path root_;
  std::map<std::string, std::string> checksums_;
};

struct RunManifest {
  nlohmann::json config;
  std::string version;
  std::map<std::string, std::string> checksums;
  double duration_seconds = 0.0;

  nlohmann::json to_json() const;
  static RunManifest from_json(const nlohmann::json& doc);
};

/// Pretty-printed JSON with a trailing newline.
std::string dump_json(const nlohmann::json& doc);

}  // namespace srlab
