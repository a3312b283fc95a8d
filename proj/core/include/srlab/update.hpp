#pragma once

#include "srlab/csv.hpp"
#include "srlab/policy.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <span>
#include <string_view>
#include <variant>
#include <vector>

namespace srlab {

/// One self-generated training example (x, y, y', r(y|x) - r(y'|x)).
struct PreferenceTriple {
  PromptIndex x = 0;
  ResponseIndex y = 0;
  ResponseIndex y_prime = 0;
  double delta_r = 0.0;
};

using Dataset = std::vector<PreferenceTriple>;

enum class UpdateMode { exact_gibbs, erm_finite, erm_linear };

std::string_view to_string(UpdateMode mode);
/// Accepts "exact-gibbs", "erm-finite", "erm-linear".
UpdateMode parse_update_mode(std::string_view text);

struct UpdateConfig {
  double beta = 1.0;
  std::size_t n = 1;
  std::size_t T = 0;
  UpdateMode mode = UpdateMode::exact_gibbs;
  /// Failure threshold for the per-round failure probability.
  double delta = 0.5;
  std::uint64_t seed = 0;

  /// beta = 1 / sqrt(n).
  static UpdateConfig with_default_beta(std::size_t n, std::size_t T, UpdateMode mode);

  void validate() const;
  /// Keys: beta (optional, default 1/sqrt(n)), n, T, mode, delta, seed.
  static UpdateConfig from_json(const nlohmann::json& doc);
  nlohmann::json to_json() const;
};

/// The exponent 1 + 1/beta of the closed-form KL-regularized update.
inline double sharpening_exponent(double beta) { return 1.0 + 1.0 / beta; }

/// n triples: x ~ mu, y, y' ~ pi(.|x) independently, delta_r from pi.
Dataset generate_dataset(const TabularPolicy& policy, const PromptDistribution& mu, std::size_t n, RandomStream& rng);
Dataset generate_dataset(const LinearSoftmaxPolicy& policy, const PromptDistribution& mu, std::size_t n,
                         RandomStream& rng);

/// Mean squared residual between beta * (pairwise log-ratio shift of
/// `candidate` against `reference`) and the stored reward differences.
/// +inf if the candidate gives zero mass to a response in a distinct pair.
double dpo_loss(const TabularPolicy& candidate, const TabularPolicy& reference, std::span<const PreferenceTriple> data,
                double beta);
double dpo_loss(const LinearSoftmaxPolicy& candidate, const LinearSoftmaxPolicy& reference,
                std::span<const PreferenceTriple> data, double beta);

/// pi^(1+1/beta) / Z row by row, in log domain.
TabularPolicy gibbs_sharpen(const TabularPolicy& policy, double beta);
/// theta -> (1+1/beta) theta; OutOfClassError if that leaves the B-ball.
LinearSoftmaxPolicy gibbs_sharpen(const LinearSoftmaxPolicy& policy, double beta);

inline constexpr std::size_t kMaxEnumeratedClass = 100'000;

struct FiniteErmResult {
  std::size_t index = 0;
  double loss = 0.0;
};

/// Exhaustive arg min of dpo_loss over `hypotheses`; lowest index on ties.
FiniteErmResult erm_finite(std::span<const TabularPolicy> hypotheses, const TabularPolicy& reference,
                           std::span<const PreferenceTriple> data, double beta);

/// Finite class that is a Cartesian product of per-prompt candidate rows.
///
/// Members are indexed in mixed radix with prompt 0 most significant, so
/// flat index order agrees with per-prompt lowest-index tie-breaking. The
/// DPO loss separates over prompts, which lets erm_product minimize over
/// classes far beyond kMaxEnumeratedClass exactly.
class ProductClass {
 public:
  /// One (candidates x n_responses) log-probability matrix per prompt.
  explicit ProductClass(std::vector<RowMatrix> candidates, Support support = Support::allow_zeros);

  /// Rows base(x)^e / Z for each exponent e, in the given order.
  static ProductClass sharpening_orbit(const TabularPolicy& base, std::span<const double> exponents);

  std::size_t n_prompts() const noexcept { return candidates_.size(); }
  std::size_t n_responses() const noexcept { return n_responses_; }
  std::size_t choices(PromptIndex x) const { return static_cast<std::size_t>(candidates_.at(x).rows()); }
  const RowMatrix& candidates(PromptIndex x) const { return candidates_.at(x); }
  /// Number of members; saturates at SIZE_MAX.
  std::size_t size() const noexcept;

  TabularPolicy materialize(std::span<const std::size_t> choice) const;
  std::size_t flat_index(std::span<const std::size_t> choice) const;
  std::vector<std::size_t> choice_of(std::size_t flat_index) const;
  /// All members in flat-index order; SizeError beyond kMaxEnumeratedClass.
  std::vector<TabularPolicy> enumerate() const;

  /// Whether some member matches `policy` within `tolerance` in every probability.
  bool contains(const TabularPolicy& policy, double tolerance = 1e-9) const;

 private:
  std::vector<RowMatrix> candidates_;
  std::size_t n_responses_ = 0;
  Support support_;
};

struct ProductErmResult {
  std::vector<std::size_t> choice;
  double loss = 0.0;
};

/// Same minimizer (and tie-break) as erm_finite over products.enumerate().
ProductErmResult erm_product(const ProductClass& products, const TabularPolicy& reference,
                             std::span<const PreferenceTriple> data, double beta);

struct LinearErmResult {
  Vector theta;
  /// Ridge multiplier of the norm constraint (0 when inactive).
  double multiplier = 0.0;
  bool constraint_active = false;
  double loss = 0.0;
};

/// arg min over ||theta|| <= B of (1/n) sum (beta <psi_i, theta - theta_ref> - delta_r_i)^2,
/// psi_i = phi(x_i, y_i) - phi(x_i, y'_i).
LinearErmResult erm_linear(const FeatureTable& features, const Vector& theta_ref, std::span<const PreferenceTriple> data,
                           double beta, double radius_B);

struct RoundRecord {
  std::size_t t = 0;
  double kappa = 0.0;
  double min_confidence = 0.0;
  double margin = 0.0;
  double failure_prob = 0.0;
  /// Training loss of the update that produced this round; nan at t = 0.
  double dpo_train_loss = 0.0;
};

struct TrajectoryRecord {
  std::vector<RoundRecord> rounds;
  /// False if some round's Gibbs target was missing from the hypothesis space.
  bool realizable = true;

  /// Running infimum of the per-round margin.
  std::vector<double> running_min_margin() const;
  /// Minimum confidence over every recorded round.
  double min_confidence_over_rounds() const;

  CsvTable to_csv() const;
  static TrajectoryRecord from_csv(const CsvTable& table);
};

using TabularHypotheses = std::variant<std::monostate, std::vector<TabularPolicy>, ProductClass>;

struct TabularTrajectory {
  TrajectoryRecord record;
  TabularPolicy final_policy;
};

struct LinearTrajectory {
  TrajectoryRecord record;
  LinearSoftmaxPolicy final_policy;
};

/// T rounds of pi_{t+1} = update(pi_t). Round t draws its dataset from
/// rng.split(t). exact-gibbs ignores `hypotheses`; erm-finite needs one.
TabularTrajectory run_iterations(const TabularPolicy& initial, const PromptDistribution& mu, const UpdateConfig& config,
                                 const TabularHypotheses& hypotheses, const RandomStream& rng);

/// exact-gibbs or erm-linear over the initial policy's feature table and radius.
LinearTrajectory run_iterations(const LinearSoftmaxPolicy& initial, const PromptDistribution& mu,
                                const UpdateConfig& config, const RandomStream& rng);

}  // namespace srlab
