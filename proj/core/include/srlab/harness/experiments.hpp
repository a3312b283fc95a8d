#pragma once

#include "srlab/adversarial.hpp"
#include "srlab/harness/config.hpp"
#include "srlab/random.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace srlab {

inline constexpr int kExitSuccess = 0;
inline constexpr int kExitAssertionFailure = 1;
inline constexpr int kExitConfigError = 2;

/// Name of the environment variable that overrides the config's output_dir.
inline constexpr const char* kOutputDirEnv = "SRLAB_OUT_DIR";

struct RunOptions {
  std::optional<std::uint64_t> seed;
  /// Highest precedence; then kOutputDirEnv; then the config.
  std::optional<std::string> output_dir;
  std::size_t threads = 1;
};

struct RunResult {
  int exit_code = kExitSuccess;
  std::string output_dir;
  /// Artifacts written, manifest.json last.
  std::vector<std::string> files;
  /// One-paragraph plain-text summary for the log.
  std::string summary;
};

/// Runs one experiment and writes its artifacts plus manifest.json.
/// Throws ConfigError (and other std::invalid_argument) on bad configs.
RunResult run_experiment(Experiment experiment, const nlohmann::json& config, const RunOptions& options);

/// Output directory after applying the precedence rule.
std::string resolve_output_dir(const ExperimentConfig& config, const RunOptions& options);

// ---------------------------------------------------------------------------
// Building blocks shared with the acceptance suite.

/// Row-wise softmax of N(0, scale^2) logits.
TabularPolicy random_tabular_policy(std::size_t n_prompts, std::size_t n_responses, double scale, RandomStream& rng);

/// Unit-norm Gaussian features and a parameter of norm `theta_norm`.
LinearSoftmaxPolicy random_linear_policy(std::size_t n_prompts, std::size_t n_responses, std::size_t dim,
                                         double radius_B, double theta_norm, RandomStream& rng);

/// Exponents s^{count-1}, ..., s^1, s^0 with s = 1 + 1/beta, sharpest first so
/// that ERM ties on degenerate data resolve toward the sharper member.
std::vector<double> orbit_exponents(double beta, std::size_t count);

struct WashoutOptions {
  std::size_t n_prompts = 8;
  std::size_t n_responses = 16;
  std::size_t n = 2000;
  std::size_t trials = 200;
  /// Required kappa ratio between the two initializations.
  double kappa_ratio = 10.0;
  /// Rounds beyond the iteration threshold.
  std::size_t extra_rounds = 2;
  double delta = 0.5;
  std::size_t threads = 1;
};

struct WashoutResult {
  /// Rounds actually run (largest per-trial threshold + extra rounds).
  std::size_t horizon = 0;
  double min_kappa_ratio = 0.0;
  double mean_kappa_diffuse = 0.0;
  double mean_kappa_sharp = 0.0;
  double failure_diffuse = 0.0;
  double stderr_diffuse = 0.0;
  double failure_sharp = 0.0;
  double stderr_sharp = 0.0;
  bool realizable = true;
  /// Mean failure difference (diffuse minus sharp) per round.
  std::vector<double> difference_by_round;

  double combined_stderr() const;
  nlohmann::json to_json() const;
};

/// Per trial: a diffuse tabular policy A and a sharpened copy B with
/// kappa(A) / kappa(B) >= kappa_ratio, both iterated by finite-class ERM
/// over one shared sharpening-orbit class containing both trajectories.
/// Each trial reads its final failure at its own threshold + extra rounds.
WashoutResult run_washout(const WashoutOptions& options, std::uint64_t seed);

}  // namespace srlab
