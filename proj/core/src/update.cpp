#include "srlab/update.hpp"

#include "srlab/errors.hpp"
#include "srlab/serialization.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace srlab {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void check_beta(double beta) {
  if (!(beta > 0.0) || !std::isfinite(beta)) throw PreconditionError("beta must be positive and finite");
}

void check_same_spaces(const TabularPolicy& a, const TabularPolicy& b) {
  if (a.n_prompts() != b.n_prompts() || a.n_responses() != b.n_responses()) {
    throw ShapeError("candidate and reference policies have different prompt/response spaces");
  }
}

// Residual of one triple, or +inf when the candidate cannot explain it.
double triple_residual(const RowMatrix& cand, const RowMatrix& ref, const PreferenceTriple& t, double beta) {
  if (t.y == t.y_prime) return -t.delta_r;
  const auto x = static_cast<Eigen::Index>(t.x);
  const auto y = static_cast<Eigen::Index>(t.y);
  const auto yp = static_cast<Eigen::Index>(t.y_prime);
  const double ry = ref(x, y);
  const double ryp = ref(x, yp);
  if (!std::isfinite(ry) || !std::isfinite(ryp)) {
    throw PreconditionError("reference assigns zero probability to a sampled response");
  }
  const double cy = cand(x, y);
  const double cyp = cand(x, yp);
  if (!std::isfinite(cy) || !std::isfinite(cyp)) return kInf;
  return beta * ((cy - ry) - (cyp - ryp)) - t.delta_r;
}

void check_triples(std::span<const PreferenceTriple> data, std::size_t n_prompts, std::size_t n_responses) {
  for (const auto& t : data) {
    if (t.x >= n_prompts || t.y >= n_responses || t.y_prime >= n_responses) {
      throw ShapeError("dataset indices fall outside the policy's spaces");
    }
  }
}

RowMatrix sharpen_rows(const RowMatrix& log_probs, double exponent) {
  RowMatrix out(log_probs.rows(), log_probs.cols());
  for (Eigen::Index x = 0; x < out.rows(); ++x) {
    // Shift the modal entry to 0 before scaling so large exponents keep it exact.
    // -inf * e stays -inf; finite entries scale.
    out.row(x) = (log_probs.row(x).array() - log_probs.row(x).maxCoeff()) * exponent;
    out.row(x).array() -= log_sum_exp(out.row(x));
  }
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// UpdateConfig

std::string_view to_string(UpdateMode mode) {
  switch (mode) {
    case UpdateMode::exact_gibbs:
      return "exact-gibbs";
    case UpdateMode::erm_finite:
      return "erm-finite";
    case UpdateMode::erm_linear:
      return "erm-linear";
  }
  return "unknown";
}

UpdateMode parse_update_mode(std::string_view text) {
  if (text == "exact-gibbs") return UpdateMode::exact_gibbs;
  if (text == "erm-finite") return UpdateMode::erm_finite;
  if (text == "erm-linear") return UpdateMode::erm_linear;
  throw ConfigError("mode", "unknown update mode '" + std::string(text) + "'");
}

UpdateConfig UpdateConfig::with_default_beta(std::size_t n, std::size_t T, UpdateMode mode) {
  UpdateConfig config;
  config.n = n;
  config.T = T;
  config.mode = mode;
  config.beta = n > 0 ? 1.0 / std::sqrt(static_cast<double>(n)) : 1.0;
  return config;
}

void UpdateConfig::validate() const {
  if (!(beta > 0.0) || !std::isfinite(beta)) throw ConfigError("beta", "must be positive and finite");
  if (n < 1) throw ConfigError("n", "must be at least 1");
  if (!(delta > 0.0 && delta < 1.0)) throw ConfigError("delta", "must lie in (0, 1)");
}

UpdateConfig UpdateConfig::from_json(const nlohmann::json& doc) {
  if (!doc.is_object()) throw ConfigError("", "update config must be a JSON object");
  UpdateConfig config;
  auto read = [&](const char* key, auto& into) {
    if (!doc.contains(key)) return false;
    try {
      doc.at(key).get_to(into);
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(key, e.what());
    }
    return true;
  };
  if (!read("n", config.n)) throw ConfigError("n", "missing");
  read("T", config.T);
  std::string mode = "exact-gibbs";
  read("mode", mode);
  config.mode = parse_update_mode(mode);
  if (!read("beta", config.beta)) config.beta = 1.0 / std::sqrt(static_cast<double>(std::max<std::size_t>(config.n, 1)));
  read("delta", config.delta);
  read("seed", config.seed);
  config.validate();
  return config;
}

nlohmann::json UpdateConfig::to_json() const {
  return {{"beta", beta}, {"n", n}, {"T", T}, {"mode", std::string(to_string(mode))}, {"delta", delta}, {"seed", seed}};
}

// ---------------------------------------------------------------------------
// Data, loss, closed form

Dataset generate_dataset(const TabularPolicy& policy, const PromptDistribution& mu, std::size_t n, RandomStream& rng) {
  if (n == 0) throw PreconditionError("dataset size n must be at least 1");
  if (mu.size() != policy.n_prompts()) throw ShapeError("prompt distribution does not match the policy");
  const ResponseSampler sampler(policy);
  Dataset data;
  data.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    PreferenceTriple t;
    t.x = mu.sample(rng);
    t.y = sampler.sample(t.x, rng);
    t.y_prime = sampler.sample(t.x, rng);
    t.delta_r = t.y == t.y_prime ? 0.0 : policy.log_prob(t.x, t.y) - policy.log_prob(t.x, t.y_prime);
    data.push_back(t);
  }
  return data;
}

Dataset generate_dataset(const LinearSoftmaxPolicy& policy, const PromptDistribution& mu, std::size_t n,
                         RandomStream& rng) {
  return generate_dataset(policy.tabulate(), mu, n, rng);
}

double dpo_loss(const TabularPolicy& candidate, const TabularPolicy& reference, std::span<const PreferenceTriple> data,
                double beta) {
  check_beta(beta);
  check_same_spaces(candidate, reference);
  if (data.empty()) throw PreconditionError("dpo_loss needs a non-empty dataset");
  check_triples(data, reference.n_prompts(), reference.n_responses());
  double total = 0.0;
  for (const auto& t : data) {
    const double r = triple_residual(candidate.log_probs(), reference.log_probs(), t, beta);
    if (std::isinf(r)) return kInf;
    total += r * r;
  }
  return total / static_cast<double>(data.size());
}

double dpo_loss(const LinearSoftmaxPolicy& candidate, const LinearSoftmaxPolicy& reference,
                std::span<const PreferenceTriple> data, double beta) {
  return dpo_loss(candidate.tabulate(), reference.tabulate(), data, beta);
}

TabularPolicy gibbs_sharpen(const TabularPolicy& policy, double beta) {
  check_beta(beta);
  return TabularPolicy::from_log_probabilities(sharpen_rows(policy.log_probs(), sharpening_exponent(beta)),
                                               policy.support());
}

LinearSoftmaxPolicy gibbs_sharpen(const LinearSoftmaxPolicy& policy, double beta) {
  check_beta(beta);
  Vector theta = sharpening_exponent(beta) * policy.theta();
  if (theta.norm() > policy.radius()) {
    throw OutOfClassError("sharpened parameter norm " + format_real(theta.norm()) + " exceeds radius B = " +
                          format_real(policy.radius()));
  }
  return policy.with_theta(std::move(theta));
}

// ---------------------------------------------------------------------------
// Finite classes

FiniteErmResult erm_finite(std::span<const TabularPolicy> hypotheses, const TabularPolicy& reference,
                           std::span<const PreferenceTriple> data, double beta) {
  if (hypotheses.empty()) throw PreconditionError("hypothesis class is empty");
  if (hypotheses.size() > kMaxEnumeratedClass) {
    throw SizeError("hypothesis class of " + std::to_string(hypotheses.size()) + " members exceeds the limit");
  }
  FiniteErmResult best{0, kInf};
  for (std::size_t i = 0; i < hypotheses.size(); ++i) {
    const double loss = dpo_loss(hypotheses[i], reference, data, beta);
    if (i == 0 || loss < best.loss) best = {i, loss};
  }
  return best;
}

ProductClass::ProductClass(std::vector<RowMatrix> candidates, Support support)
    : candidates_(std::move(candidates)), support_(support) {
  if (candidates_.empty()) throw ConstructionError("product class needs at least one prompt");
  n_responses_ = static_cast<std::size_t>(candidates_.front().cols());
  for (const auto& block : candidates_) {
    if (block.rows() == 0) throw ConstructionError("every prompt needs at least one candidate row");
    if (static_cast<std::size_t>(block.cols()) != n_responses_) {
      throw ConstructionError("candidate rows disagree on the response count");
    }
    // Validates normalization and support.
    (void)TabularPolicy::from_log_probabilities(block, support_);
  }
}

ProductClass ProductClass::sharpening_orbit(const TabularPolicy& base, std::span<const double> exponents) {
  if (exponents.empty()) throw ConstructionError("orbit needs at least one exponent");
  std::vector<RowMatrix> blocks;
  blocks.reserve(base.n_prompts());
  for (std::size_t x = 0; x < base.n_prompts(); ++x) {
    RowMatrix block(static_cast<Eigen::Index>(exponents.size()), static_cast<Eigen::Index>(base.n_responses()));
    const Eigen::RowVectorXd row = base.log_probs().row(static_cast<Eigen::Index>(x));
    for (std::size_t k = 0; k < exponents.size(); ++k) {
      if (!(exponents[k] > 0.0)) throw ConstructionError("orbit exponents must be positive");
      block.row(static_cast<Eigen::Index>(k)) = sharpen_rows(row, exponents[k]);
    }
    blocks.push_back(std::move(block));
  }
  return ProductClass(std::move(blocks), base.support());
}

std::size_t ProductClass::size() const noexcept {
  std::size_t total = 1;
  for (const auto& block : candidates_) {
    const auto k = static_cast<std::size_t>(block.rows());
    if (total > std::numeric_limits<std::size_t>::max() / k) return std::numeric_limits<std::size_t>::max();
    total *= k;
  }
  return total;
}

TabularPolicy ProductClass::materialize(std::span<const std::size_t> choice) const {
  if (choice.size() != candidates_.size()) throw ShapeError("choice vector length differs from the prompt count");
  RowMatrix lp(static_cast<Eigen::Index>(candidates_.size()), static_cast<Eigen::Index>(n_responses_));
  for (std::size_t x = 0; x < candidates_.size(); ++x) {
    if (choice[x] >= choices(x)) throw IndexError("candidate index out of range");
    lp.row(static_cast<Eigen::Index>(x)) = candidates_[x].row(static_cast<Eigen::Index>(choice[x]));
  }
  return TabularPolicy::from_log_probabilities(std::move(lp), support_);
}

std::size_t ProductClass::flat_index(std::span<const std::size_t> choice) const {
  if (choice.size() != candidates_.size()) throw ShapeError("choice vector length differs from the prompt count");
  std::size_t index = 0;
  for (std::size_t x = 0; x < candidates_.size(); ++x) index = index * choices(x) + choice[x];
  return index;
}

std::vector<std::size_t> ProductClass::choice_of(std::size_t flat_index) const {
  std::vector<std::size_t> choice(candidates_.size());
  for (std::size_t x = candidates_.size(); x-- > 0;) {
    choice[x] = flat_index % choices(x);
    flat_index /= choices(x);
  }
  return choice;
}

std::vector<TabularPolicy> ProductClass::enumerate() const {
  const std::size_t total = size();
  if (total > kMaxEnumeratedClass) throw SizeError("product class too large to enumerate");
  std::vector<TabularPolicy> members;
  members.reserve(total);
  for (std::size_t i = 0; i < total; ++i) members.push_back(materialize(choice_of(i)));
  return members;
}

bool ProductClass::contains(const TabularPolicy& policy, double tolerance) const {
  if (policy.n_prompts() != n_prompts() || policy.n_responses() != n_responses_) return false;
  const RowMatrix probs = policy.probabilities();
  for (std::size_t x = 0; x < candidates_.size(); ++x) {
    bool found = false;
    for (Eigen::Index k = 0; k < candidates_[x].rows() && !found; ++k) {
      const Eigen::RowVectorXd cand = exact_exp(candidates_[x].row(k).array());
      found = (cand - probs.row(static_cast<Eigen::Index>(x))).cwiseAbs().maxCoeff() <= tolerance;
    }
    if (!found) return false;
  }
  return true;
}

ProductErmResult erm_product(const ProductClass& products, const TabularPolicy& reference,
                             std::span<const PreferenceTriple> data, double beta) {
  check_beta(beta);
  if (products.n_prompts() != reference.n_prompts() || products.n_responses() != reference.n_responses()) {
    throw ShapeError("product class and reference have different prompt/response spaces");
  }
  if (data.empty()) throw PreconditionError("erm_product needs a non-empty dataset");
  check_triples(data, reference.n_prompts(), reference.n_responses());

  std::vector<std::vector<PreferenceTriple>> by_prompt(products.n_prompts());
  for (const auto& t : data) by_prompt[t.x].push_back(t);

  ProductErmResult result;
  result.choice.assign(products.n_prompts(), 0);
  for (std::size_t x = 0; x < products.n_prompts(); ++x) {
    const auto& triples = by_prompt[x];
    if (triples.empty()) continue;
    const RowMatrix& block = products.candidates(x);
    double best = kInf;
    for (Eigen::Index k = 0; k < block.rows(); ++k) {
      double partial = 0.0;
      for (const auto& t : triples) {
        PreferenceTriple local = t;
        local.x = 0;
        const double r = triple_residual(block.middleRows(k, 1), reference.log_probs().middleRows(t.x, 1), local, beta);
        partial += r * r;
        if (!(partial < kInf)) break;
      }
      if (k == 0 || partial < best) {
        best = partial;
        result.choice[x] = static_cast<std::size_t>(k);
      }
    }
  }
  result.loss = dpo_loss(products.materialize(result.choice), reference, data, beta);
  return result;
}

// ---------------------------------------------------------------------------
// Linear softmax ERM

LinearErmResult erm_linear(const FeatureTable& features, const Vector& theta_ref, std::span<const PreferenceTriple> data,
                           double beta, double radius_B) {
  check_beta(beta);
  if (data.empty()) throw PreconditionError("erm_linear needs a non-empty dataset");
  if (static_cast<std::size_t>(theta_ref.size()) != features.dim()) throw ShapeError("theta_ref has the wrong dimension");
  if (theta_ref.norm() > radius_B * (1.0 + 1e-9)) throw PreconditionError("||theta_ref|| exceeds radius B");
  check_triples(data, features.n_prompts(), features.n_responses());

  const auto n = static_cast<Eigen::Index>(data.size());
  const auto d = static_cast<Eigen::Index>(features.dim());
  RowMatrix psi(n, d);
  Vector rewards(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& t = data[static_cast<std::size_t>(i)];
    psi.row(i) = features.feature(t.x, t.y) - features.feature(t.x, t.y_prime);
    rewards(i) = t.delta_r;
  }
  const double scale = 1.0 / static_cast<double>(n);
  // f(theta) = theta' H theta - 2 theta' c + const.
  const Eigen::MatrixXd hessian = (beta * beta * scale) * (psi.transpose() * psi);
  const Vector gradient = (beta * scale) * (psi.transpose() * rewards);
  const Vector c = hessian * theta_ref + gradient;

  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(hessian);
  const Vector& h = eig.eigenvalues();
  const Eigen::MatrixXd& basis = eig.eigenvectors();
  const double cutoff = 1e-12 * std::max(1.0, h.cwiseAbs().maxCoeff());
  std::vector<Eigen::Index> range;
  for (Eigen::Index k = 0; k < d; ++k) {
    if (h(k) > cutoff) range.push_back(k);
  }

  const Vector c_coords = basis.transpose() * c;
  auto theta_at = [&](double lambda) {
    Vector theta = Vector::Zero(d);
    for (Eigen::Index k : range) theta += basis.col(k) * (c_coords(k) / (h(k) + lambda));
    return theta;
  };
  auto loss_at = [&](const Vector& theta) {
    const Vector residual = beta * (psi * (theta - theta_ref)) - rewards;
    return residual.squaredNorm() * scale;
  };

  // Range part of theta_ref + pinv(H) g; the null-space part of theta_ref is kept.
  const Vector range_part = theta_at(0.0);
  Vector null_part = theta_ref;
  for (Eigen::Index k : range) null_part -= basis.col(k) * basis.col(k).dot(theta_ref);

  LinearErmResult result;
  Vector unconstrained = range_part + null_part;
  if (unconstrained.norm() <= radius_B) {
    result.theta = std::move(unconstrained);
    result.loss = loss_at(result.theta);
    return result;
  }

  result.constraint_active = true;
  const double range_norm = range_part.norm();
  if (range_norm <= radius_B) {
    // Loss is flat along the null space: shrink the kept reference component onto the sphere.
    const double room = std::sqrt(std::max(0.0, radius_B * radius_B - range_norm * range_norm));
    result.theta = range_part + null_part * (room / null_part.norm());
    result.loss = loss_at(result.theta);
    return result;
  }

  // ||theta(lambda)|| decreases in lambda and is <= ||c|| / lambda.
  double lo = 0.0;
  double hi = c.norm() / radius_B;
  Vector theta_hi = theta_at(hi);
  for (int iter = 0; iter < 400 && radius_B - theta_hi.norm() > 1e-10; ++iter) {
    const double mid = 0.5 * (lo + hi);
    Vector theta_mid = theta_at(mid);
    if (theta_mid.norm() > radius_B) {
      lo = mid;
    } else {
      hi = mid;
      theta_hi = std::move(theta_mid);
    }
  }
  result.theta = std::move(theta_hi);
  result.multiplier = hi;
  result.loss = loss_at(result.theta);
  return result;
}

// ---------------------------------------------------------------------------
// Trajectories

std::vector<double> TrajectoryRecord::running_min_margin() const {
  std::vector<double> out;
  out.reserve(rounds.size());
  double lowest = kInf;
  for (const auto& r : rounds) {
    lowest = std::min(lowest, r.margin);
    out.push_back(lowest);
  }
  return out;
}

double TrajectoryRecord::min_confidence_over_rounds() const {
  double lowest = 1.0;
  for (const auto& r : rounds) lowest = std::min(lowest, r.min_confidence);
  return lowest;
}

CsvTable TrajectoryRecord::to_csv() const {
  CsvTable table;
  table.header = {"t", "kappa", "min_confidence", "margin", "failure_prob", "dpo_train_loss"};
  for (const auto& r : rounds) {
    table.rows.push_back({std::to_string(r.t), format_real(r.kappa), format_real(r.min_confidence), format_real(r.margin),
                          format_real(r.failure_prob), format_real(r.dpo_train_loss)});
  }
  return table;
}

TrajectoryRecord TrajectoryRecord::from_csv(const CsvTable& table) {
  const std::vector<std::string> expected = {"t", "kappa", "min_confidence", "margin", "failure_prob", "dpo_train_loss"};
  if (table.header != expected) throw std::invalid_argument("trajectory csv has an unexpected header");
  TrajectoryRecord record;
  for (const auto& row : table.rows) {
    RoundRecord r;
    r.t = std::stoul(row[0]);
    r.kappa = parse_real(row[1]);
    r.min_confidence = parse_real(row[2]);
    r.margin = parse_real(row[3]);
    r.failure_prob = parse_real(row[4]);
    r.dpo_train_loss = parse_real(row[5]);
    if (r.t != record.rounds.size()) throw std::invalid_argument("trajectory rounds must be contiguous from 0");
    record.rounds.push_back(r);
  }
  return record;
}

namespace {

RoundRecord diagnose_round(std::size_t t, const TabularPolicy& policy, const PromptDistribution& mu, double delta,
                           double loss) {
  RoundRecord r;
  r.t = t;
  r.kappa = condition_number(policy, mu);
  r.min_confidence = min_confidence(policy);
  r.margin = margin(policy);
  r.failure_prob = failure_probability(policy, mu, delta);
  r.dpo_train_loss = loss;
  return r;
}

bool finite_class_contains(const std::vector<TabularPolicy>& hypotheses, const TabularPolicy& target) {
  const RowMatrix probs = target.probabilities();
  for (const auto& h : hypotheses) {
    if (h.n_prompts() != target.n_prompts() || h.n_responses() != target.n_responses()) continue;
    if ((h.probabilities() - probs).cwiseAbs().maxCoeff() <= 1e-9) return true;
  }
  return false;
}

}  // namespace

TabularTrajectory run_iterations(const TabularPolicy& initial, const PromptDistribution& mu, const UpdateConfig& config,
                                 const TabularHypotheses& hypotheses, const RandomStream& rng) {
  config.validate();
  if (mu.size() != initial.n_prompts()) throw ShapeError("prompt distribution does not match the policy");
  if (config.mode == UpdateMode::erm_linear) {
    throw PreconditionError("erm-linear needs a linear softmax policy");
  }
  if (config.mode == UpdateMode::erm_finite && std::holds_alternative<std::monostate>(hypotheses)) {
    throw PreconditionError("erm-finite needs a hypothesis class");
  }

  const double nan = std::numeric_limits<double>::quiet_NaN();
  TabularTrajectory out{{}, initial};
  out.record.rounds.push_back(diagnose_round(0, initial, mu, config.delta, nan));
  for (std::size_t t = 0; t < config.T; ++t) {
    const TabularPolicy& current = out.final_policy;
    double loss = 0.0;
    if (config.mode == UpdateMode::exact_gibbs) {
      out.final_policy = gibbs_sharpen(current, config.beta);
    } else {
      RandomStream round_rng = rng.split(t);
      const Dataset data = generate_dataset(current, mu, config.n, round_rng);
      const TabularPolicy target = gibbs_sharpen(current, config.beta);
      if (const auto* list = std::get_if<std::vector<TabularPolicy>>(&hypotheses)) {
        if (!finite_class_contains(*list, target)) out.record.realizable = false;
        const FiniteErmResult pick = erm_finite(*list, current, data, config.beta);
        loss = pick.loss;
        out.final_policy = (*list)[pick.index];
      } else {
        const auto& products = std::get<ProductClass>(hypotheses);
        if (!products.contains(target)) out.record.realizable = false;
        const ProductErmResult pick = erm_product(products, current, data, config.beta);
        loss = pick.loss;
        out.final_policy = products.materialize(pick.choice);
      }
    }
    out.record.rounds.push_back(diagnose_round(t + 1, out.final_policy, mu, config.delta, loss));
  }
  return out;
}

LinearTrajectory run_iterations(const LinearSoftmaxPolicy& initial, const PromptDistribution& mu,
                                const UpdateConfig& config, const RandomStream& rng) {
  config.validate();
  if (mu.size() != initial.n_prompts()) throw ShapeError("prompt distribution does not match the policy");
  if (config.mode == UpdateMode::erm_finite) throw PreconditionError("erm-finite needs a tabular policy and class");

  const double nan = std::numeric_limits<double>::quiet_NaN();
  LinearTrajectory out{{}, initial};
  out.record.rounds.push_back(diagnose_round(0, initial.tabulate(), mu, config.delta, nan));
  for (std::size_t t = 0; t < config.T; ++t) {
    const LinearSoftmaxPolicy& current = out.final_policy;
    double loss = 0.0;
    if (config.mode == UpdateMode::exact_gibbs) {
      out.final_policy = gibbs_sharpen(current, config.beta);
    } else {
      if (sharpening_exponent(config.beta) * current.theta().norm() > current.radius()) out.record.realizable = false;
      RandomStream round_rng = rng.split(t);
      const Dataset data = generate_dataset(current, mu, config.n, round_rng);
      LinearErmResult fit = erm_linear(current.features(), current.theta(), data, config.beta, current.radius());
      loss = fit.loss;
      out.final_policy = current.with_theta(std::move(fit.theta));
    }
    out.record.rounds.push_back(diagnose_round(t + 1, out.final_policy.tabulate(), mu, config.delta, loss));
  }
  return out;
}

}  // namespace srlab
