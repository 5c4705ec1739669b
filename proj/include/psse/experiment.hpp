#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "psse/baselines.hpp"
#include "psse/deterministic.hpp"
#include "psse/measurement.hpp"
#include "psse/stochastic.hpp"

namespace psse {

/// Invalid experiment configuration (CLI exit code 2).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Filesystem failure while reading inputs or writing artifacts (exit code 4).
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class SolverType { Deterministic, Stochastic, GaussNewton, Irls };
enum class InitMode { Flat, MeasuredMagnitude };

struct SolverSpec {
  std::string name;
  SolverType type = SolverType::Deterministic;
  DeterministicConfig deterministic;
  StochasticConfig stochastic;  // seed is replaced by a per-trial sub-seed
  bool minibatch = false;
  BaselineConfig baseline;
};

struct TruthSpec {
  bool from_case = true;  // stored Vm/Va of the case file
  double magnitude_lo = 0.9;
  double magnitude_hi = 1.1;
  double angle_lo = -0.1;  // radians
  double angle_hi = 0.1;
};

struct ExperimentConfig {
  std::string name;
  std::filesystem::path case_path;
  TruthSpec truth;
  // Either explicit kinds, a sweep over ordered-type counts, or a replay file.
  std::vector<MeasurementKind> kinds;
  std::vector<int> ordered_type_counts;
  std::optional<std::filesystem::path> replay_path;
  std::array<double, 3> noise_sigma{};  // voltage, flow, injection
  std::optional<CorruptionSpec> corruption;
  InitMode init = InitMode::MeasuredMagnitude;
  std::vector<SolverSpec> solvers;
  int trials = 1;
  std::uint64_t seed = 1;
  std::filesystem::path output_dir = "out";
};

/// Parses and validates; relative paths resolve against `base_dir`.
ExperimentConfig parse_experiment_config(const nlohmann::json& doc,
                                         const std::filesystem::path& base_dir);
ExperimentConfig load_experiment_config(const std::filesystem::path& path);

struct RunOverrides {
  std::optional<std::filesystem::path> output_dir;
  std::optional<int> trials;
  std::optional<std::uint64_t> seed;
  std::optional<std::vector<std::string>> solvers;
};

void apply_overrides(ExperimentConfig& config, const RunOverrides& overrides);

struct SolverOutcome {
  std::string solver;
  std::optional<SolveResult> result;
  double final_rmse = 0.0;
  double final_objective = 0.0;  // LAV objective on the normalized set
  std::string error;             // non-empty when the solver failed
};

struct TrialOutcome {
  int point = 0;
  int trial = 0;
  int measurement_count = 0;
  int corrupted_count = 0;
  std::vector<SolverOutcome> solvers;
};

struct PreparedTrial {
  MeasurementSet raw;  // possibly corrupted, unnormalized
  Truth truth;
  NoiseSpec noise;
};

/// Simulates (or replays) the measurement set for one sweep point and trial.
PreparedTrial prepare_trial(const ExperimentConfig& config, const NetworkCase& network,
                            const AdmittanceModel& model, int point, int trial);

/// Runs every configured solver on a prepared trial.
TrialOutcome run_trial(const ExperimentConfig& config, const PreparedTrial& prepared, int point,
                       int trial);

struct ExperimentReport {
  nlohmann::json summary;
  std::vector<TrialOutcome> outcomes;
  int failures = 0;
};

/// Executes every sweep point and trial on a worker pool of `threads` workers
/// (0 = PSSE_THREADS or hardware concurrency) and writes traces, replayable
/// measurement sets and summary.json under the output directory when
/// `write_artifacts` is set.
ExperimentReport run_experiment(const ExperimentConfig& config, bool write_artifacts = true,
                                unsigned threads = 0);

/// Replay file: truth, reference bus and the raw measurement set.
nlohmann::json replay_document(const PreparedTrial& prepared);

std::string_view to_string(SolverType type);

}  // namespace psse
