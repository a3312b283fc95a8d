// srlab <experiment> --config <file> [--seed N] [--out DIR] [--threads K]

#include "srlab/errors.hpp"
#include "srlab/harness/experiments.hpp"

#include <CLI11.hpp>

#include <iostream>

int main(int argc, char** argv) {
  CLI::App app{"Self-rewarding alignment laboratory"};
  app.set_version_flag("--version", std::string(SRLAB_VERSION));
  app.require_subcommand(1);

  std::string config_path;
  std::uint64_t seed = 0;
  std::string out_dir;
  std::size_t threads = 1;

  for (const char* name : {"iterate", "hard-instance", "trap", "spectral", "dynamics"}) {
    CLI::App* sub = app.add_subcommand(name);
    sub->add_option("--config", config_path, "JSON config file")->required();
    sub->add_option("--seed", seed, "Override the config seed");
    sub->add_option("--out", out_dir, "Output directory (beats SRLAB_OUT_DIR and the config)");
    sub->add_option("--threads", threads, "Worker threads; 0 uses every hardware thread");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? srlab::kExitSuccess : srlab::kExitConfigError;
  }

  const CLI::App* chosen = app.get_subcommands().front();
  srlab::RunOptions options;
  if (chosen->count("--seed") > 0) options.seed = seed;
  if (chosen->count("--out") > 0) options.output_dir = out_dir;
  options.threads = threads;

  try {
    const srlab::Experiment experiment = srlab::parse_experiment(chosen->get_name());
    const srlab::RunResult result = srlab::run_experiment(experiment, srlab::load_config_file(config_path), options);
    std::cout << result.summary << "\n";
    for (const auto& file : result.files) std::cout << "  wrote " << result.output_dir << "/" << file << "\n";
    return result.exit_code;
  } catch (const srlab::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return srlab::kExitConfigError;
  } catch (const std::invalid_argument& e) {
    std::cerr << "invalid parameters: " << e.what() << "\n";
    return srlab::kExitConfigError;
  } catch (const std::length_error& e) {
    std::cerr << "size error: " << e.what() << "\n";
    return srlab::kExitConfigError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return srlab::kExitAssertionFailure;
  }
}
