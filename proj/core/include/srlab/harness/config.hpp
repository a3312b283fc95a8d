#pragma once

#include <nlohmann/json.hpp>

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace srlab {

enum class Experiment { iterate, hard_instance, trap, spectral, dynamics };

std::string_view to_string(Experiment experiment);
/// "iterate", "hard-instance", "trap", "spectral", "dynamics".
Experiment parse_experiment(std::string_view text);
/// Stable per-experiment id used to key random streams.
std::uint64_t experiment_stream_id(Experiment experiment);

/// Parses JSON text; syntax errors become ConfigError("line L, column C", ...).
nlohmann::json parse_config_text(const std::string& text);
nlohmann::json load_config_file(const std::string& path);

/// Read-only cursor into a config document that reports the dotted field
/// path in every ConfigError.
class ConfigView {
 public:
  ConfigView(const nlohmann::json& doc, std::string path = "") : doc_(&doc), path_(std::move(path)) {}

  bool has(std::string_view key) const;
  ConfigView child(std::string_view key) const;
  std::string field(std::string_view key) const;
  const nlohmann::json& json() const noexcept { return *doc_; }

  template <typename T>
  T get(std::string_view key) const {
    if (!has(key)) throw_missing(key);
    return convert<T>(key);
  }

  template <typename T>
  T get_or(std::string_view key, T fallback) const {
    return has(key) ? convert<T>(key) : fallback;
  }

  /// Nonempty, strictly increasing list.
  std::vector<double> grid(std::string_view key) const;

 private:
  template <typename T>
  T convert(std::string_view key) const {
    try {
      return doc_->at(std::string(key)).get<T>();
    } catch (const nlohmann::json::exception& e) {
      throw_type(key, e.what());
    }
  }
  [[noreturn]] void throw_missing(std::string_view key) const;
  [[noreturn]] void throw_type(std::string_view key, const char* what) const;

  const nlohmann::json* doc_;
  std::string path_;
};

/// Fields shared by every experiment config.
struct ExperimentConfig {
  Experiment experiment = Experiment::iterate;
  std::uint64_t seed = 0;
  std::string output_dir = "out";
  /// The full document with the effective seed written back.
  nlohmann::json document;

  static ExperimentConfig from_json(const nlohmann::json& doc, std::optional<Experiment> expected = std::nullopt);
};

}  // namespace srlab
