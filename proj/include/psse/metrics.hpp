#pragma once

#include <chrono>
#include <cstdint>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "psse/grid_model.hpp"
#include "psse/measurement.hpp"

namespace psse {

/// Numerical failure inside a solver (non-finite iterate, singular system).
class SolverError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Truth {
  VoltageState voltages;
  int reference_bus = 0;
};

struct TraceRow {
  int index = 0;  // iteration or epoch
  double objective = 0.0;
  std::optional<double> rmse;
  double seconds = 0.0;
};

struct ConvergenceTrace {
  std::vector<TraceRow> rows;

  /// Columns: iter, objective, rmse, seconds. Missing RMSE is written as "nan".
  void write_csv(std::ostream& out) const;
};

struct SolveResult {
  VoltageState estimate;
  ConvergenceTrace trace;
  int iterations = 0;  // outer iterations, or epochs for the stochastic solvers
  bool converged = false;
};

/// Appends trace rows while keeping the clock paused during the objective and
/// RMSE evaluations, so `seconds` is solver time only.
class TraceRecorder {
 public:
  TraceRecorder(const MeasurementSet& set, const std::optional<Truth>& truth);

  void record(int index, const VoltageState& v);
  ConvergenceTrace take() { return std::move(trace_); }

 private:
  using Clock = std::chrono::steady_clock;
  const MeasurementSet& set_;
  const std::optional<Truth>& truth_;
  ConvergenceTrace trace_;
  Clock::time_point resumed_;
  double accumulated_ = 0.0;
};

/// ||v_hat - v|| / ||v|| after rotating both so the reference bus has zero phase.
double rmse(const VoltageState& estimate, const VoltageState& truth, int reference_bus);

/// Mean absolute residual (1/M) sum |v^H H_m v - z_m|.
double lav_objective(const MeasurementSet& set, const VoltageState& v);

/// Independent uniform magnitude and angle per bus; reference angle forced to 0.
VoltageState random_truth(const NetworkCase& network, double magnitude_lo, double magnitude_hi,
                          double angle_lo, double angle_hi, std::uint64_t seed);

/// Square roots of the Vsq measurements, 1 where a bus has none.
VoltageState measured_magnitude_start(const MeasurementSet& set);

/// Normalized distance ||a - b|| / sqrt(N) used by every stopping rule.
double normalized_step(const VoltageState& a, const VoltageState& b);

}  // namespace psse
