#include "srlab/harness/experiments.hpp"

#include "srlab/dynamics.hpp"
#include "srlab/errors.hpp"
#include "srlab/harness/analysis.hpp"
#include "srlab/harness/manifest.hpp"
#include "srlab/harness/parallel.hpp"
#include "srlab/serialization.hpp"
#include "srlab/spectral.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

namespace srlab {
namespace {

constexpr double kNan = std::numeric_limits<double>::quiet_NaN();
constexpr std::uint64_t kWashoutStream = 100;

std::string csv_text(const CsvTable& table) { return table.to_string(); }

/// Gnuplot commands for one CSV; columns are 1-based.
std::string plot_script(const std::string& csv, const std::string& title, const std::string& xlabel,
                        const std::vector<std::pair<int, std::string>>& series, bool logx, bool logy) {
  std::ostringstream out;
  out << "set datafile separator ','\n"
      << "set key autotitle columnhead\n"
      << "set title '" << title << "'\n"
      << "set xlabel '" << xlabel << "'\n";
  if (logx) out << "set logscale x\n";
  if (logy) out << "set logscale y\n";
  out << "plot ";
  for (std::size_t i = 0; i < series.size(); ++i) {
    if (i > 0) out << ", \\\n     ";
    out << "'" << csv << "' using 1:" << series[i].first << " with linespoints title '" << series[i].second << "'";
  }
  out << "\n";
  return out.str();
}

PromptDistribution prompt_distribution(const ConfigView& view, std::size_t n_prompts) {
  if (!view.has("prompt_weights")) return PromptDistribution::uniform(n_prompts);
  auto weights = view.get<std::vector<double>>("prompt_weights");
  if (weights.size() != n_prompts) throw ConfigError(view.field("prompt_weights"), "length differs from n_prompts");
  try {
    return PromptDistribution(std::move(weights));
  } catch (const ConstructionError& e) {
    throw ConfigError(view.field("prompt_weights"), e.what());
  }
}

std::string read_text(const ConfigView& view, const char* key) {
  const auto path = view.get<std::string>(key);
  std::ifstream in(path);
  if (!in) throw ConfigError(view.field(key), "cannot open '" + path + "'");
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

// ---------------------------------------------------------------------------
// iterate

/// Theory overlay for one trajectory. A zero margin makes every envelope
/// above t = 0 infinite.
CsvTable iterate_theory(const TrajectoryRecord& record, const UpdateConfig& update, double rho, const Complexity& cx) {
  const double kappa_0 = record.rounds.front().kappa;
  const double gamma = record.running_min_margin().back();
  TheoryInputs in;
  in.c = record.min_confidence_over_rounds();
  in.gamma = gamma > 0.0 ? gamma : 1.0;
  in.delta = update.delta;
  in.n = update.n;
  in.beta = update.beta;
  in.rho = rho;
  in.complexity = cx;
  CsvTable table = theory_curve(in, kappa_0, update.T);
  if (!(gamma > 0.0)) {
    for (std::size_t t = 1; t < table.rows.size(); ++t) table.rows[t][1] = table.rows[t][2] = "inf";
  }
  return table;
}

RunResult run_iterate(const ExperimentConfig& config, OutputDir& out) {
  const ConfigView root(config.document);
  const ConfigView update_view = root.child("update");
  UpdateConfig update = UpdateConfig::from_json(update_view.json());
  update.seed = config.seed;
  const ConfigView policy_view = root.child("policy");
  const auto kind = policy_view.get<std::string>("kind");
  const double rho = root.has("theory") ? root.child("theory").get_or<double>("rho", 0.05) : 0.05;

  const RandomStream base = trial_stream(config.seed, experiment_stream_id(Experiment::iterate), 0);
  RandomStream policy_rng = base.split(0);
  const RandomStream iter_rng = base.split(1);

  TrajectoryRecord record;
  Complexity complexity = FiniteComplexity{0.0};
  nlohmann::json summary;
  const bool linear = kind == "random-linear" || kind == "linear-file";
  if (linear) {
    if (update.mode == UpdateMode::erm_finite) throw ConfigError("update.mode", "erm-finite needs a tabular policy");
    std::optional<LinearSoftmaxPolicy> initial;
    if (kind == "random-linear") {
      initial = random_linear_policy(policy_view.get<std::size_t>("n_prompts"), policy_view.get<std::size_t>("n_responses"),
                                     policy_view.get<std::size_t>("dim"), policy_view.get_or<double>("radius_B", 10.0),
                                     policy_view.get_or<double>("theta_norm", 1.0), policy_rng);
    } else {
      initial = linear_policy_from_json(parse_config_text(read_text(policy_view, "path")));
    }
    const PromptDistribution mu = prompt_distribution(policy_view, initial->n_prompts());
    if (update.mode == UpdateMode::erm_linear) {
      complexity = LinearComplexity{static_cast<double>(initial->dim()), initial->radius()};
    }
    LinearTrajectory run = run_iterations(*initial, mu, update, iter_rng);
    record = std::move(run.record);
    summary["final_theta_norm"] = run.final_policy.theta().norm();
  } else {
    if (update.mode == UpdateMode::erm_linear) throw ConfigError("update.mode", "erm-linear needs a linear policy");
    std::optional<TabularPolicy> initial;
    if (kind == "random-tabular") {
      initial = random_tabular_policy(policy_view.get<std::size_t>("n_prompts"), policy_view.get<std::size_t>("n_responses"),
                                      policy_view.get_or<double>("logit_scale", 1.0), policy_rng);
    } else if (kind == "uniform") {
      initial = TabularPolicy::uniform(policy_view.get<std::size_t>("n_prompts"), policy_view.get<std::size_t>("n_responses"));
    } else if (kind == "tabular-file") {
      std::istringstream in(read_text(policy_view, "path"));
      const Support support = policy_view.get_or<bool>("allow_zeros", false) ? Support::allow_zeros : Support::strict;
      initial = read_tabular_policy(in, support);
    } else {
      throw ConfigError(policy_view.field("kind"), "unknown policy kind '" + kind + "'");
    }
    const PromptDistribution mu = prompt_distribution(policy_view, initial->n_prompts());
    TabularHypotheses hypotheses;
    if (update.mode == UpdateMode::erm_finite) {
      const std::size_t orbit = root.has("class") ? root.child("class").get_or<std::size_t>("orbit_size", update.T + 1)
                                                  : update.T + 1;
      if (orbit < 1) throw ConfigError("class.orbit_size", "must be at least 1");
      const std::vector<double> exps = orbit_exponents(update.beta, orbit);
      ProductClass products = ProductClass::sharpening_orbit(*initial, exps);
      complexity = FiniteComplexity{static_cast<double>(initial->n_prompts()) * std::log(static_cast<double>(orbit))};
      hypotheses = std::move(products);
    }
    TabularTrajectory run = run_iterations(*initial, mu, update, hypotheses, iter_rng);
    record = std::move(run.record);
  }

  const CsvTable trajectory = record.to_csv();
  const CsvTable theory = iterate_theory(record, update, rho, complexity);
  out.write("trajectory.csv", csv_text(trajectory));
  out.write("theory.csv", csv_text(theory));

  std::vector<double> kappa;
  for (const auto& r : record.rounds) kappa.push_back(r.kappa);
  const double c = record.min_confidence_over_rounds();
  summary["realizable"] = record.realizable;
  summary["kappa_0"] = kappa.front();
  summary["final_kappa"] = kappa.back();
  summary["min_confidence_over_rounds"] = c;
  summary["running_min_margin"] = record.running_min_margin().back();
  summary["iterations_threshold"] = iterations_threshold(c, kappa.front(), update.n);
  summary["geometric_ratio"] = geometric_ratio(kappa);
  summary["update"] = update.to_json();
  out.write("summary.json", dump_json(summary));
  out.write("plot.gp", plot_script("trajectory.csv", "condition number by round", "round t",
                                   {{2, "kappa"}, {5, "failure_prob"}}, false, true) +
                           plot_script("theory.csv", "theory envelope", "round t",
                                       {{2, "envelope_kappa"}, {3, "envelope_failure"}}, false, true));

  RunResult result;
  std::ostringstream msg;
  msg << "iterate: T=" << update.T << " mode=" << to_string(update.mode) << " kappa " << format_real(kappa.front())
      << " -> " << format_real(kappa.back()) << (record.realizable ? "" : " (non-realizable)");
  result.summary = msg.str();
  return result;
}

// ---------------------------------------------------------------------------
// hard-instance

HardInstanceParams instance_params(const ConfigView& view) {
  HardInstanceParams p;
  p.d = view.get<std::size_t>("d");
  p.M = view.get<std::size_t>("M");
  p.Delta = view.get<double>("Delta");
  try {
    p.validate();
  } catch (const ConstructionError& e) {
    throw ConfigError(view.field("M"), e.what());
  }
  return p;
}

CsvTable sweep_table() {
  CsvTable t;
  t.header = {"n", "failure_rate", "stderr", "kappa_0", "log_class_size"};
  return t;
}

void add_sweep_row(CsvTable& table, std::size_t n, const FailureRate& rate, const HardInstanceParams& p) {
  table.rows.push_back({std::to_string(n), format_real(rate.rate), format_real(rate.standard_error),
                        format_real(rate.kappa_0), format_real(p.log_class_size())});
}

RunResult run_hard_instance(const ExperimentConfig& config, const RunOptions& options, OutputDir& out) {
  const ConfigView root(config.document);
  const HardInstanceParams params = instance_params(root.child("instance"));
  const std::vector<double> grid = root.grid("n_grid");
  if (grid.size() < 4) throw ConfigError("n_grid", "needs at least 4 points");
  const double ratio = grid[1] / grid[0];
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (!(grid[i] >= 1.0) || grid[i] != std::floor(grid[i])) throw ConfigError("n_grid", "entries must be positive integers");
    if (i > 0 && std::abs(grid[i] / grid[i - 1] - ratio) > 1e-9 * ratio) {
      throw ConfigError("n_grid", "grid must be geometric");
    }
  }
  const auto trials = root.get_or<std::size_t>("trials", 400);
  if (trials < 100) throw ConfigError("trials", "must be at least 100");
  const auto learner_name = root.get_or<std::string>("learner", "erm");
  HardInstanceLearner learner;
  if (learner_name == "erm") {
    learner = erm_learner();
  } else if (learner_name == "base") {
    learner = base_policy_learner();
  } else {
    throw ConfigError("learner", "unknown learner '" + learner_name + "'");
  }
  FailureRateOptions fro;
  fro.trials = trials;
  fro.beta = root.get_or<double>("beta", 0.0);
  fro.delta = root.get_or<double>("delta", 0.5);
  fro.threads = options.threads;
  const auto event_name = root.get_or<std::string>("failure_event", "own-modal");
  try {
    fro.event = parse_failure_event(event_name);
  } catch (const std::invalid_argument&) {
    throw ConfigError("failure_event", "expected 'own-modal' or 'true-label'");
  }
  if (fro.beta < 0.0) throw ConfigError("beta", "must be positive (or 0 for 1/sqrt(n))");
  if (!(fro.delta > 0.0 && fro.delta < 1.0)) throw ConfigError("delta", "must lie in (0, 1)");

  const std::uint64_t stream = experiment_stream_id(Experiment::hard_instance);
  CsvTable sweep = sweep_table();
  std::vector<double> ns, rates;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    fro.n = static_cast<std::size_t>(grid[i]);
    const FailureRate rate = measure_failure_rate(params, learner, fro, trial_stream(config.seed, stream, i));
    add_sweep_row(sweep, fro.n, rate, params);
    ns.push_back(grid[i]);
    rates.push_back(rate.rate);
  }
  out.write("sweep.csv", csv_text(sweep));

  const LinearFit fit = fit_log_log(ns, rates);
  nlohmann::json fit_doc = fit.to_json();
  fit_doc["points_total"] = grid.size();
  fit_doc["learner"] = learner_name;
  fit_doc["failure_event"] = event_name;
  int exit_code = kExitSuccess;
  if (root.has("expect")) {
    const ConfigView expect = root.child("expect");
    const double lo = expect.get<double>("slope_min");
    const double hi = expect.get<double>("slope_max");
    const bool ok = std::isfinite(fit.slope) && fit.slope >= lo && fit.slope <= hi;
    fit_doc["expect"] = {{"slope_min", lo}, {"slope_max", hi}, {"passed", ok}};
    if (!ok) exit_code = kExitAssertionFailure;
  }
  out.write("fit.json", dump_json(fit_doc));

  if (root.has("compare")) {
    const ConfigView compare = root.child("compare");
    const auto Ms = compare.grid("M");
    fro.n = compare.get<std::size_t>("n");
    CsvTable table;
    table.header = {"M", "n", "failure_rate", "stderr", "kappa_0", "log_class_size"};
    for (std::size_t j = 0; j < Ms.size(); ++j) {
      HardInstanceParams p = params;
      p.M = static_cast<std::size_t>(Ms[j]);
      try {
        p.validate();
      } catch (const ConstructionError& e) {
        throw ConfigError("compare.M", e.what());
      }
      const FailureRate rate = measure_failure_rate(p, learner, fro, trial_stream(config.seed, stream, 1000 + j));
      table.rows.push_back({std::to_string(p.M), std::to_string(fro.n), format_real(rate.rate),
                            format_real(rate.standard_error), format_real(rate.kappa_0), format_real(p.log_class_size())});
    }
    out.write("compare.csv", csv_text(table));
  }
  out.write("plot.gp", plot_script("sweep.csv", "hard-instance failure rate", "n", {{2, "failure_rate"}}, true, true));

  RunResult result;
  result.exit_code = exit_code;
  result.summary = "hard-instance: " + std::to_string(grid.size()) + " grid points, log-log slope " + format_real(fit.slope);
  return result;
}

// ---------------------------------------------------------------------------
// trap

RunResult run_trap(const ExperimentConfig& config, const RunOptions& options, OutputDir& out) {
  const ConfigView root(config.document);
  std::vector<TrapParams> points;
  if (root.has("points")) {
    const nlohmann::json& list = root.json().at("points");
    if (!list.is_array() || list.empty()) throw ConfigError("points", "must be a nonempty array");
    for (std::size_t i = 0; i < list.size(); ++i) {
      const ConfigView p(list[i], "points[" + std::to_string(i) + "]");
      points.push_back({p.get<double>("p_star"), p.get<double>("epsilon"), p.get<std::size_t>("H"), p.get<std::size_t>("V")});
    }
  } else {
    const ConfigView grid = root.child("grid");
    for (double p_star : grid.grid("p_star")) {
      for (double fraction : grid.grid("epsilon_fraction")) {
        for (double H : grid.grid("H")) {
          for (double V : grid.grid("V")) {
            points.push_back({p_star, fraction * TrapParams::max_epsilon(p_star), static_cast<std::size_t>(H),
                              static_cast<std::size_t>(V)});
          }
        }
      }
    }
  }
  for (const auto& p : points) {
    if (p.V == 0 || p.H == 0) continue;
    const double count = std::pow(static_cast<double>(p.V), static_cast<double>(p.H));
    if (count > 1e6) throw SizeError("trap grid point with V^H = " + format_real(count) + " exceeds 1e6");
  }

  const auto rows = parallel_map(points.size(), options.threads, [&](std::size_t i) -> nlohmann::json {
    try {
      return verify_greedy_failure(build_trap_policy(points[i])).to_json();
    } catch (const ConstructionError& e) {
      return {{"p_star", points[i].p_star}, {"epsilon", points[i].epsilon}, {"H", points[i].H}, {"V", points[i].V},
              {"error", e.what()}};
    }
  });
  std::size_t passed = 0, failed = 0, invalid = 0;
  for (const auto& row : rows) {
    if (row.contains("error")) {
      ++invalid;
    } else if (row.at("assertions") == nlohmann::json({true, true, true})) {
      ++passed;
    } else {
      ++failed;
    }
  }
  out.write("trap_reports.json", dump_json(rows));
  out.write("trap_summary.json", dump_json({{"points", points.size()}, {"passed", passed}, {"failed", failed},
                                            {"construction_errors", invalid}}));
  RunResult result;
  result.exit_code = failed > 0 ? kExitAssertionFailure : kExitSuccess;
  result.summary = "trap: " + std::to_string(passed) + " passed, " + std::to_string(failed) + " failed, " +
                   std::to_string(invalid) + " invalid";
  return result;
}

// ---------------------------------------------------------------------------
// spectral

std::vector<double> lambda_grid(const ConfigView& root) {
  if (root.has("lambda_grid") && root.json().at("lambda_grid").is_array()) return root.grid("lambda_grid");
  const ConfigView g = root.child("lambda_grid");
  const double lo = g.get<double>("min");
  const double hi = g.get<double>("max");
  const auto points = g.get<std::size_t>("points");
  if (!(lo > 0.0 && hi > lo) || points < 2) throw ConfigError("lambda_grid", "needs 0 < min < max and points >= 2");
  std::vector<double> out(points);
  for (std::size_t i = 0; i < points; ++i) {
    out[i] = lo * std::pow(hi / lo, static_cast<double>(i) / static_cast<double>(points - 1));
  }
  return out;
}

RunResult run_spectral(const ExperimentConfig& config, OutputDir& out) {
  const ConfigView root(config.document);
  const auto d = root.get_or<std::size_t>("d", 64);
  const std::vector<double> lambdas = lambda_grid(root);
  if (!root.has("regimes") || !root.json().at("regimes").is_array()) throw ConfigError("regimes", "must be an array");
  const nlohmann::json& regimes_doc = root.json().at("regimes");
  std::optional<Spectrum> file_spectrum;
  if (root.has("spectrum_file")) {
    std::istringstream in(read_text(root, "spectrum_file"));
    file_spectrum = read_spectrum(in);
  }

  bool all_dominated = true;
  nlohmann::json report = nlohmann::json::array();
  for (std::size_t k = 0; k < regimes_doc.size(); ++k) {
    const SpectralRegime regime = regime_from_json(regimes_doc[k]);
    const Spectrum spectrum = canonical_spectrum(regime, d);
    CsvTable table;
    table.header = {"lambda", "d_eff", "regime_bound"};
    double min_slack = std::numeric_limits<double>::infinity();
    std::vector<double> log_inv_lambda, deff_valid;
    for (double lambda : lambdas) {
      const double deff = effective_dimension(spectrum, lambda);
      const double bound = regime_bound(regime, lambda);
      min_slack = std::min(min_slack, bound - deff);
      table.rows.push_back({format_real(lambda), format_real(deff), format_real(bound)});
      const auto& ev = spectrum.eigenvalues();
      if (lambda <= ev.front() && lambda >= ev.back()) {
        log_inv_lambda.push_back(std::log(1.0 / lambda));
        deff_valid.push_back(deff);
      }
    }
    const std::string name = "spectral_" + std::to_string(k) + "_" + regime_name(regime) + ".csv";
    out.write(name, csv_text(table));
    nlohmann::json entry = {{"regime", regime_to_json(regime)}, {"csv", name}, {"d", d},
                            {"dominated", min_slack >= 0.0}, {"min_slack", min_slack}};
    if (std::holds_alternative<ExponentialRegime>(regime)) {
      entry["log_inverse_lambda_fit"] = fit_linear(log_inv_lambda, deff_valid).to_json();
    }
    if (const auto* spiked = std::get_if<SpikedRegime>(&regime)) {
      bool ok = true;
      for (double lambda : lambdas) {
        if (lambda >= spiked->tau) ok = ok && effective_dimension(spectrum, lambda) <= static_cast<double>(spiked->r) + 1.0;
      }
      entry["r_plus_one_when_lambda_ge_tau"] = ok;
      all_dominated = all_dominated && ok;
    }
    if (file_spectrum) {
      const bool applies = satisfies(regime, *file_spectrum);
      bool ok = true;
      for (double lambda : lambdas) ok = ok && effective_dimension(*file_spectrum, lambda) <= regime_bound(regime, lambda);
      entry["file_spectrum"] = {{"satisfies_hypothesis", applies}, {"dominated", ok}};
      if (applies) all_dominated = all_dominated && ok;
    }
    all_dominated = all_dominated && min_slack >= 0.0;
    report.push_back(std::move(entry));
  }

  nlohmann::json doc = {{"regimes", report}};
  if (root.has("scaling")) {
    const ConfigView s = root.child("scaling");
    const ExponentialRegime regime{s.get_or<double>("C", 1.0), s.get_or<double>("alpha", 1.0)};
    const Spectrum spectrum = canonical_spectrum(regime, s.get_or<std::size_t>("d", d));
    const std::vector<double> c0s = s.grid("c0");
    const std::vector<double> ns = s.grid("n");
    CsvTable table;
    table.header = {"c0", "n", "lambda", "d_eff"};
    nlohmann::json fits = nlohmann::json::array();
    for (double c0 : c0s) {
      std::vector<double> logn, deff;
      for (double n : ns) {
        const double lambda = c0 / n;
        const double v = effective_dimension(spectrum, lambda);
        table.rows.push_back({format_real(c0), format_real(n), format_real(lambda), format_real(v)});
        logn.push_back(std::log(n));
        deff.push_back(v);
      }
      nlohmann::json f = fit_linear(logn, deff).to_json();
      f["c0"] = c0;
      fits.push_back(std::move(f));
    }
    out.write("scaling.csv", csv_text(table));
    doc["scaling"] = fits;
  }
  doc["all_dominated"] = all_dominated;
  out.write("dominance.json", dump_json(doc));

  RunResult result;
  result.exit_code = all_dominated ? kExitSuccess : kExitAssertionFailure;
  result.summary = std::string("spectral: ") + std::to_string(regimes_doc.size()) + " regimes, dominance " +
                   (all_dominated ? "holds" : "FAILS");
  return result;
}

// ---------------------------------------------------------------------------
// dynamics

RunResult run_dynamics(const ExperimentConfig& config, OutputDir& out) {
  const ConfigView root(config.document);
  const TheoryInputs inputs = TheoryInputs::from_json(root.child("theory").json());
  const double kappa_0 = root.get<double>("kappa_0");
  if (!(kappa_0 >= 1.0)) throw ConfigError("kappa_0", "must be at least 1");
  const auto T = root.get<std::size_t>("T");
  const RecurrenceParams params = recurrence_params(inputs);
  out.write("theory.csv", csv_text(theory_curve(inputs, kappa_0, T)));
  nlohmann::json terms = nlohmann::json::array();
  for (std::size_t t = 1; t <= T; ++t) {
    const EnvelopeTerms e = envelope_terms(inputs, kappa_0, t);
    terms.push_back({{"t", t}, {"stable", e.stable}, {"transient", e.transient}});
  }
  const std::size_t threshold = iterations_threshold(inputs.c, kappa_0, inputs.n);
  out.write("dynamics.json",
            dump_json({{"inputs", inputs.to_json()},
                       {"recurrence", params.to_json()},
                       {"fixed_point_residual", std::abs(params.U - params.M0 - params.K * std::sqrt(params.U))},
                       {"iterations_threshold", threshold},
                       {"envelope_terms", terms}}));
  out.write("plot.gp", plot_script("theory.csv", "theory envelope", "round t",
                                   {{2, "envelope_kappa"}, {3, "envelope_failure"}}, false, true));
  RunResult result;
  result.summary = "dynamics: U=" + format_real(params.U) + " q=" + format_real(params.q) +
                   " threshold=" + std::to_string(threshold);
  return result;
}

}  // namespace

// ---------------------------------------------------------------------------

std::string resolve_output_dir(const ExperimentConfig& config, const RunOptions& options) {
  if (options.output_dir) return *options.output_dir;
  if (const char* env = std::getenv(kOutputDirEnv); env != nullptr && *env != '\0') return env;
  return config.output_dir;
}

RunResult run_experiment(Experiment experiment, const nlohmann::json& document, const RunOptions& options) {
  const auto start = std::chrono::steady_clock::now();
  ExperimentConfig config = ExperimentConfig::from_json(document, experiment);
  if (options.seed) {
    config.seed = *options.seed;
    config.document["seed"] = *options.seed;
  }
  const std::string dir = resolve_output_dir(config, options);
  OutputDir out(dir);

  RunResult result;
  switch (experiment) {
    case Experiment::iterate:
      result = run_iterate(config, out);
      break;
    case Experiment::hard_instance:
      result = run_hard_instance(config, options, out);
      break;
    case Experiment::trap:
      result = run_trap(config, options, out);
      break;
    case Experiment::spectral:
      result = run_spectral(config, out);
      break;
    case Experiment::dynamics:
      result = run_dynamics(config, out);
      break;
  }

  RunManifest manifest;
  manifest.config = config.document;
  manifest.version = SRLAB_VERSION;
  manifest.checksums = out.checksums();
  manifest.duration_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  for (const auto& [name, sum] : out.checksums()) result.files.push_back(name);
  out.write("manifest.json", dump_json(manifest.to_json()));
  result.files.push_back("manifest.json");
  result.output_dir = dir;
  return result;
}

TabularPolicy random_tabular_policy(std::size_t n_prompts, std::size_t n_responses, double scale, RandomStream& rng) {
  RowMatrix logits(static_cast<Eigen::Index>(n_prompts), static_cast<Eigen::Index>(n_responses));
  for (Eigen::Index i = 0; i < logits.size(); ++i) logits.data()[i] = scale * rng.normal();
  return TabularPolicy::from_logits(logits);
}

LinearSoftmaxPolicy random_linear_policy(std::size_t n_prompts, std::size_t n_responses, std::size_t dim,
                                         double radius_B, double theta_norm, RandomStream& rng) {
  if (!(theta_norm >= 0.0) || theta_norm > radius_B) throw ConfigError("theta_norm", "must lie in [0, radius_B]");
  RowMatrix rows(static_cast<Eigen::Index>(n_prompts * n_responses), static_cast<Eigen::Index>(dim));
  for (Eigen::Index i = 0; i < rows.rows(); ++i) {
    for (Eigen::Index k = 0; k < rows.cols(); ++k) rows(i, k) = rng.normal();
    const double norm = rows.row(i).norm();
    if (norm > 0.0) rows.row(i) /= norm;
  }
  Vector theta(static_cast<Eigen::Index>(dim));
  for (Eigen::Index k = 0; k < theta.size(); ++k) theta(k) = rng.normal();
  if (theta.norm() > 0.0) theta *= theta_norm / theta.norm();
  auto features = std::make_shared<const FeatureTable>(n_prompts, n_responses, std::move(rows));
  return LinearSoftmaxPolicy(std::move(features), std::move(theta), radius_B);
}

std::vector<double> orbit_exponents(double beta, std::size_t count) {
  const double s = sharpening_exponent(beta);
  std::vector<double> out(count);
  double e = 1.0;
  for (std::size_t k = 0; k < count; ++k) {
    out[count - 1 - k] = e;
    e *= s;
  }
  return out;
}

// ---------------------------------------------------------------------------
// washout

double WashoutResult::combined_stderr() const {
  return std::sqrt(stderr_diffuse * stderr_diffuse + stderr_sharp * stderr_sharp);
}

nlohmann::json WashoutResult::to_json() const {
  return {{"horizon", horizon},
          {"min_kappa_ratio", min_kappa_ratio},
          {"mean_kappa_diffuse", mean_kappa_diffuse},
          {"mean_kappa_sharp", mean_kappa_sharp},
          {"failure_diffuse", failure_diffuse},
          {"stderr_diffuse", stderr_diffuse},
          {"failure_sharp", failure_sharp},
          {"stderr_sharp", stderr_sharp},
          {"realizable", realizable},
          {"difference_by_round", difference_by_round}};
}

namespace {

struct WashoutPair {
  TabularPolicy diffuse;
  TabularPolicy sharp;
  double exponent = 1.0;
  std::size_t rounds_diffuse = 0;
  std::size_t rounds_sharp = 0;
};

WashoutPair draw_washout_pair(const WashoutOptions& o, const PromptDistribution& mu, RandomStream rng) {
  // Near-uniform logits keep kappa(A) close to |Y|, leaving room for the ratio.
  const TabularPolicy diffuse = random_tabular_policy(o.n_prompts, o.n_responses, 0.1, rng);
  const double kappa_a = condition_number(diffuse, mu);
  double exponent = 2.0;
  std::optional<TabularPolicy> sharp;
  for (int i = 0; i < 64; ++i, exponent *= 2.0) {
    // A^e is the Gibbs update with beta = 1 / (e - 1).
    TabularPolicy candidate = gibbs_sharpen(diffuse, 1.0 / (exponent - 1.0));
    if (kappa_a / condition_number(candidate, mu) >= o.kappa_ratio) {
      sharp = std::move(candidate);
      break;
    }
  }
  if (!sharp) throw PreconditionError("could not reach the requested kappa ratio");
  const double kappa_b = condition_number(*sharp, mu);
  WashoutPair pair{diffuse, *sharp, exponent, 0, 0};
  pair.rounds_diffuse = iterations_threshold(min_confidence(diffuse), kappa_a, o.n) + o.extra_rounds;
  pair.rounds_sharp = iterations_threshold(min_confidence(*sharp), kappa_b, o.n) + o.extra_rounds;
  return pair;
}

void mean_and_stderr(const std::vector<double>& v, double& mean, double& se) {
  const double n = static_cast<double>(v.size());
  mean = std::accumulate(v.begin(), v.end(), 0.0) / n;
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  se = v.size() > 1 ? std::sqrt(ss / (n - 1.0)) / std::sqrt(n) : 0.0;
}

}  // namespace

WashoutResult run_washout(const WashoutOptions& o, std::uint64_t seed) {
  if (o.trials < 2) throw PreconditionError("washout needs at least two trials");
  const PromptDistribution mu = PromptDistribution::uniform(o.n_prompts);
  UpdateConfig update = UpdateConfig::with_default_beta(o.n, 0, UpdateMode::erm_finite);
  update.delta = o.delta;

  const auto pairs = parallel_map(o.trials, o.threads, [&](std::size_t k) {
    return draw_washout_pair(o, mu, trial_stream(seed, kWashoutStream, k).split(0));
  });
  std::size_t horizon = 0;
  for (const auto& p : pairs) horizon = std::max({horizon, p.rounds_diffuse, p.rounds_sharp});
  update.T = horizon;

  struct TrialOutcome {
    double kappa_ratio, kappa_diffuse, kappa_sharp, final_diffuse, final_sharp;
    bool realizable;
    std::vector<double> diff;
  };
  const auto outcomes = parallel_map(o.trials, o.threads, [&](std::size_t k) {
    const WashoutPair& p = pairs[k];
    const RandomStream stream = trial_stream(seed, kWashoutStream, k);
    // One class holds both orbits, sharpest first.
    std::vector<double> exps;
    for (double e : orbit_exponents(update.beta, horizon + 2)) {
      exps.push_back(e);
      exps.push_back(e * p.exponent);
    }
    std::sort(exps.begin(), exps.end(), std::greater<>());
    const TabularHypotheses hypotheses = ProductClass::sharpening_orbit(p.diffuse, exps);
    const TabularTrajectory a = run_iterations(p.diffuse, mu, update, hypotheses, stream.split(1));
    const TabularTrajectory b = run_iterations(p.sharp, mu, update, hypotheses, stream.split(2));
    TrialOutcome t;
    t.kappa_diffuse = a.record.rounds.front().kappa;
    t.kappa_sharp = b.record.rounds.front().kappa;
    t.kappa_ratio = t.kappa_diffuse / t.kappa_sharp;
    t.final_diffuse = a.record.rounds[p.rounds_diffuse].failure_prob;
    t.final_sharp = b.record.rounds[p.rounds_sharp].failure_prob;
    t.realizable = a.record.realizable && b.record.realizable;
    for (std::size_t r = 0; r <= horizon; ++r) {
      t.diff.push_back(a.record.rounds[r].failure_prob - b.record.rounds[r].failure_prob);
    }
    return t;
  });

  WashoutResult result;
  result.horizon = horizon;
  result.min_kappa_ratio = std::numeric_limits<double>::infinity();
  result.difference_by_round.assign(horizon + 1, 0.0);
  std::vector<double> fa, fb;
  for (const auto& t : outcomes) {
    result.min_kappa_ratio = std::min(result.min_kappa_ratio, t.kappa_ratio);
    result.mean_kappa_diffuse += t.kappa_diffuse / static_cast<double>(o.trials);
    result.mean_kappa_sharp += t.kappa_sharp / static_cast<double>(o.trials);
    result.realizable = result.realizable && t.realizable;
    fa.push_back(t.final_diffuse);
    fb.push_back(t.final_sharp);
    for (std::size_t r = 0; r <= horizon; ++r) result.difference_by_round[r] += t.diff[r] / static_cast<double>(o.trials);
  }
  mean_and_stderr(fa, result.failure_diffuse, result.stderr_diffuse);
  mean_and_stderr(fb, result.failure_sharp, result.stderr_sharp);
  return result;
}

}  // namespace srlab
