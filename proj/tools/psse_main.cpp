#include <cstdlib>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "psse/experiment.hpp"

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitSolver = 3;
constexpr int kExitIo = 4;

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  for (std::string item; std::getline(ss, item, ',');)
    if (!item.empty()) out.push_back(item);
  return out;
}

int run(const std::string& path, const psse::RunOverrides& overrides) {
  auto config = psse::load_experiment_config(path);
  psse::apply_overrides(config, overrides);
  const auto report = psse::run_experiment(config);
  for (const auto& point : report.summary["points"]) {
    std::cout << point["label"].get<std::string>() << " (" << point["measurement_count"]
              << " measurements)\n";
    for (const auto& [name, s] : point["solvers"].items()) {
      std::cout << "  " << name << ": rmse " << s["rmse"]["mean"] << " iters "
                << s["iterations"]["mean"] << " failures " << s["failures"] << "\n";
    }
  }
  std::cout << "wrote " << (config.output_dir / "summary.json").string() << "\n";
  if (report.failures > 0) {
    std::cerr << "error: " << report.failures << " solver run(s) failed\n";
    return kExitSolver;
  }
  return 0;
}

int validate(const std::string& path) {
  const auto config = psse::load_experiment_config(path);
  if (!std::filesystem::exists(config.case_path))
    throw psse::IoError("case file '" + config.case_path.string() + "' not found");
  const auto network = psse::load_case(config.case_path.string());
  std::cout << "ok: " << config.name << ", " << network.bus_count() << " buses, "
            << config.solvers.size() << " solvers, " << config.trials << " trials\n";
  return 0;
}

int case_info(const std::string& path) {
  if (!std::filesystem::exists(path)) throw psse::IoError("case file '" + path + "' not found");
  const auto network = psse::load_case(path);
  const auto model = psse::build_admittance(network);
  int max_degree = 0;
  for (int n = 0; n < model.bus_count(); ++n) max_degree = std::max(max_degree, model.degree(n));
  std::cout << "buses: " << network.bus_count() << "\n"
            << "branches in service: " << network.in_service_branch_count() << "\n"
            << "reference bus: " << network.buses[network.reference_bus()].external_id << "\n"
            << "base MVA: " << network.base_mva << "\n"
            << "max degree: " << max_degree << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Robust power system state estimation"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir;
  int trials = 0;
  std::uint64_t seed = 0;
  std::string solvers;
  auto* run_cmd = app.add_subcommand("run", "Run an experiment config");
  run_cmd->add_option("config", config_path, "Experiment JSON")->required();
  auto* out_opt = run_cmd->add_option("--out", out_dir, "Output directory");
  auto* trials_opt = run_cmd->add_option("--trials", trials, "Number of trials")->check(CLI::PositiveNumber);
  auto* seed_opt = run_cmd->add_option("--seed", seed, "Base seed");
  auto* solvers_opt = run_cmd->add_option("--solvers", solvers, "Comma-separated solver names");

  std::string validate_path;
  auto* validate_cmd = app.add_subcommand("validate", "Validate an experiment config");
  validate_cmd->add_option("config", validate_path, "Experiment JSON")->required();

  std::string case_path;
  auto* info_cmd = app.add_subcommand("case-info", "Summarize a case file");
  info_cmd->add_option("case", case_path, "MATPOWER .m or JSON case")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (*run_cmd) {
      psse::RunOverrides overrides;
      if (*out_opt) overrides.output_dir = out_dir;
      if (*trials_opt) overrides.trials = trials;
      if (*seed_opt) overrides.seed = seed;
      if (*solvers_opt) overrides.solvers = split_list(solvers);
      return run(config_path, overrides);
    }
    if (*validate_cmd) return validate(validate_path);
    return case_info(case_path);
  } catch (const psse::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const psse::CaseError& e) {
    std::cerr << "case error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const psse::IoError& e) {
    std::cerr << "I/O error: " << e.what() << "\n";
    return kExitIo;
  } catch (const psse::SolverError& e) {
    std::cerr << "solver error: " << e.what() << "\n";
    return kExitSolver;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitSolver;
  }
}
