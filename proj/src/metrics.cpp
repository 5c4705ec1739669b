#include "psse/metrics.hpp"

#include <cmath>
#include <iomanip>
#include <limits>

#include "psse/random.hpp"

namespace psse {

void ConvergenceTrace::write_csv(std::ostream& out) const {
  out << "iter,objective,rmse,seconds\n";
  const auto old_precision = out.precision(std::numeric_limits<double>::max_digits10);
  for (const auto& row : rows) {
    out << row.index << ',' << row.objective << ',';
    if (row.rmse)
      out << *row.rmse;
    else
      out << "nan";
    out << ',' << row.seconds << '\n';
  }
  out.precision(old_precision);
}

TraceRecorder::TraceRecorder(const MeasurementSet& set, const std::optional<Truth>& truth)
    : set_(set), truth_(truth), resumed_(Clock::now()) {}

void TraceRecorder::record(int index, const VoltageState& v) {
  accumulated_ += std::chrono::duration<double>(Clock::now() - resumed_).count();
  TraceRow row;
  row.index = index;
  row.objective = lav_objective(set_, v);
  if (truth_) row.rmse = rmse(v, truth_->voltages, truth_->reference_bus);
  row.seconds = accumulated_;
  trace_.rows.push_back(row);
  resumed_ = Clock::now();
}

double rmse(const VoltageState& estimate, const VoltageState& truth, int reference_bus) {
  if (estimate.size() != truth.size()) throw std::invalid_argument("rmse: length mismatch");
  if (reference_bus < 0 || reference_bus >= truth.size())
    throw std::invalid_argument("rmse: reference bus out of range");
  const double truth_norm = truth.norm();
  if (!(truth_norm > 0.0)) throw std::invalid_argument("rmse: zero truth vector");
  auto align = [reference_bus](const VoltageState& v) -> VoltageState {
    const Complex ref = v(reference_bus);
    if (std::abs(ref) == 0.0) return v;
    return v * std::polar(1.0, -std::arg(ref));
  };
  return (align(estimate) - align(truth)).norm() / truth_norm;
}

double lav_objective(const MeasurementSet& set, const VoltageState& v) {
  if (set.records.empty()) return 0.0;
  double sum = 0.0;
  for (const auto& rec : set.records) sum += std::abs(evaluate(rec.matrix, v) - rec.z);
  return sum / set.size();
}

VoltageState random_truth(const NetworkCase& network, double magnitude_lo, double magnitude_hi,
                          double angle_lo, double angle_hi, std::uint64_t seed) {
  if (magnitude_hi < magnitude_lo || angle_hi < angle_lo)
    throw std::invalid_argument("random_truth: empty range");
  Rng rng(seed);
  const int reference = network.reference_bus();
  VoltageState v(network.bus_count());
  for (int n = 0; n < network.bus_count(); ++n) {
    const double magnitude = rng.uniform(magnitude_lo, magnitude_hi);
    const double angle = rng.uniform(angle_lo, angle_hi);
    v(n) = std::polar(magnitude, n == reference ? 0.0 : angle);
  }
  return v;
}

VoltageState measured_magnitude_start(const MeasurementSet& set) {
  VoltageState v = VoltageState::Ones(set.bus_count);
  for (const auto& rec : set.records) {
    if (rec.kind != MeasurementKind::Vsq) continue;
    // z and H are scaled together, so z * norm_factor is the raw |V|^2.
    const double raw = rec.z * rec.norm_factor;
    if (raw > 0.0) v(rec.location) = std::sqrt(raw);
  }
  return v;
}

double normalized_step(const VoltageState& a, const VoltageState& b) {
  return (a - b).norm() / std::sqrt(static_cast<double>(a.size()));
}

}  // namespace psse
