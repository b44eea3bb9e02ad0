// bohmlab: scripted experiment runner.

#include <chrono>
#include <fstream>
#include <iostream>
#include <optional>

#include "CLI11.hpp"
#include "bohm/experiments.hpp"

namespace {

enum Exit { pass = 0, assertion_failed = 1, config_error = 2 };

// Failures that trace back to the parameters rather than to the physics.
bool is_setup_error(bohm::Errc c) {
  using bohm::Errc;
  return c == Errc::config || c == Errc::invalid_argument || c == Errc::width_under_resolved || c == Errc::resolution ||
         c == Errc::stability_violation || c == Errc::pointer_grid_too_narrow;
}

bohm::lab::ExperimentConfig load(const std::string& experiment, const std::string& path) {
  nlohmann::json j = nlohmann::json::object();
  if (!path.empty()) {
    std::ifstream f(path);
    bohm::require(static_cast<bool>(f), bohm::Errc::config, "cannot open config " + path);
    try {
      j = nlohmann::json::parse(f);
    } catch (const nlohmann::json::parse_error& e) {
      bohm::fail(bohm::Errc::config, std::string("malformed config: ") + e.what());
    }
  }
  return bohm::lab::ExperimentConfig::parse(j, experiment);
}

int run(const std::string& experiment, const std::string& config, std::optional<std::uint64_t> seed,
        const std::string& out, bool check) {
  bohm::lab::ExperimentConfig cfg;
  try {
    cfg = load(experiment, config);
    if (seed) cfg.seed = *seed;
    if (!out.empty()) cfg.output_dir = out;
    cfg.validate();
  } catch (const bohm::Error& e) {
    std::cerr << "bohmlab: " << e.what() << '\n';
    return config_error;
  }

  const auto start = std::chrono::steady_clock::now();
  const bohm::lab::OutputDir dir(cfg.output_dir);
  bohm::lab::RunResult result;
  try {
    result = bohm::lab::run_experiment(cfg, dir);
  } catch (const bohm::Error& e) {
    std::cerr << "bohmlab: " << e.what() << '\n';
    return is_setup_error(e.code()) ? config_error : assertion_failed;
  }
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  bohm::lab::write_manifest(dir, cfg, result, wall);

  for (const auto& a : result.assertions)
    std::cout << (a.passed ? "PASS " : "FAIL ") << a.name << ": " << a.value << ' ' << a.relation << ' ' << a.threshold
              << '\n';
  std::cout << "manifest: " << (dir.root() / "manifest.json").string() << '\n';
  return check && !result.passed() ? assertion_failed : pass;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Guidance-law experiments: trajectories, weak measurements and equivariance checks"};
  app.require_subcommand(1);

  std::string config, out;
  std::optional<std::uint64_t> seed;
  bool check = false;
  std::string chosen;
  for (const auto& name : bohm::lab::experiment_names()) {
    auto* sub = app.add_subcommand(name, "run the " + name + " experiment");
    sub->add_option("--config", config, "JSON config file")->check(CLI::ExistingFile);
    sub->add_option("--seed", seed, "override the config seed");
    sub->add_option("--out", out, "output directory");
    sub->add_flag("--check", check, "exit 1 if any acceptance assertion fails");
    sub->callback([&chosen, name] { chosen = name; });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : config_error;
  }
  return run(chosen, config, seed, out, check);
}
