#include "srlab/harness/config.hpp"

#include "srlab/errors.hpp"

#include <fstream>
#include <sstream>

namespace srlab {

std::string_view to_string(Experiment experiment) {
  switch (experiment) {
    case Experiment::iterate:
      return "iterate";
    case Experiment::hard_instance:
      return "hard-instance";
    case Experiment::trap:
      return "trap";
    case Experiment::spectral:
      return "spectral";
    case Experiment::dynamics:
      return "dynamics";
  }
  return "unknown";
}

Experiment parse_experiment(std::string_view text) {
  for (Experiment e : {Experiment::iterate, Experiment::hard_instance, Experiment::trap, Experiment::spectral,
                       Experiment::dynamics}) {
    if (text == to_string(e)) return e;
  }
  throw ConfigError("experiment", "unknown experiment '" + std::string(text) + "'");
}

std::uint64_t experiment_stream_id(Experiment experiment) { return static_cast<std::uint64_t>(experiment) + 1; }

nlohmann::json parse_config_text(const std::string& text) {
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    std::size_t line = 1;
    std::size_t column = 1;
    const std::size_t stop = std::min<std::size_t>(e.byte == 0 ? 0 : e.byte - 1, text.size());
    for (std::size_t i = 0; i < stop; ++i) {
      if (text[i] == '\n') {
        ++line;
        column = 1;
      } else {
        ++column;
      }
    }
    throw ConfigError("line " + std::to_string(line) + ", column " + std::to_string(column), e.what());
  }
}

nlohmann::json load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config", "cannot open '" + path + "'");
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse_config_text(buffer.str());
}

bool ConfigView::has(std::string_view key) const {
  return doc_->is_object() && doc_->contains(std::string(key)) && !doc_->at(std::string(key)).is_null();
}

std::string ConfigView::field(std::string_view key) const {
  return path_.empty() ? std::string(key) : path_ + "." + std::string(key);
}

ConfigView ConfigView::child(std::string_view key) const {
  if (!has(key)) throw_missing(key);
  const nlohmann::json& sub = doc_->at(std::string(key));
  if (!sub.is_object()) throw ConfigError(field(key), "must be an object");
  return ConfigView(sub, field(key));
}

std::vector<double> ConfigView::grid(std::string_view key) const {
  const auto values = get<std::vector<double>>(key);
  if (values.empty()) throw ConfigError(field(key), "grid must be nonempty");
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (!(values[i] > values[i - 1])) throw ConfigError(field(key), "grid must be strictly increasing");
  }
  return values;
}

void ConfigView::throw_missing(std::string_view key) const { throw ConfigError(field(key), "missing"); }

void ConfigView::throw_type(std::string_view key, const char* what) const { throw ConfigError(field(key), what); }

ExperimentConfig ExperimentConfig::from_json(const nlohmann::json& doc, std::optional<Experiment> expected) {
  if (!doc.is_object()) throw ConfigError("", "config must be a JSON object");
  const ConfigView view(doc);
  ExperimentConfig config;
  if (view.has("experiment")) {
    config.experiment = parse_experiment(view.get<std::string>("experiment"));
    if (expected && *expected != config.experiment) {
      throw ConfigError("experiment", "config is for '" + std::string(to_string(config.experiment)) +
                                          "' but '" + std::string(to_string(*expected)) + "' was requested");
    }
  } else if (expected) {
    config.experiment = *expected;
  } else {
    throw ConfigError("experiment", "missing");
  }
  config.seed = view.get_or<std::uint64_t>("seed", 0);
  config.output_dir = view.get_or<std::string>("output_dir", "out");
  config.document = doc;
  config.document["experiment"] = std::string(to_string(config.experiment));
  config.document["seed"] = config.seed;
  return config;
}

}  // namespace srlab
