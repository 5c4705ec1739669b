#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include <json.hpp>

#include "psse/grid_model.hpp"

namespace psse {

struct MeasurementRecord {
  MeasurementKind kind = MeasurementKind::Vsq;
  int location = 0;
  double z = 0.0;
  MeasurementMatrix matrix;
  double norm_factor = 1.0;
  bool corrupted = false;
};

struct MeasurementSet {
  int bus_count = 0;
  std::vector<MeasurementRecord> records;

  int size() const { return static_cast<int>(records.size()); }
  bool normalized() const;
};

/// One (kind, location) entry of a measurement plan.
using PlanEntry = std::pair<MeasurementKind, int>;

/// Every location of each listed kind, kinds in the given order.
std::vector<PlanEntry> full_plan(const AdmittanceModel& model, std::span<const MeasurementKind> kinds);

/// First `count` kinds of the enumeration {Vsq, Pf, Qf, Pinj, Qinj, Pt, Qt}.
std::vector<MeasurementKind> ordered_types(int count);

struct NoiseSpec {
  std::array<double, 7> sigma{};  // indexed by MeasurementKind
  std::uint64_t seed = 1;

  double stddev(MeasurementKind kind) const { return sigma[static_cast<std::size_t>(kind)]; }
  /// Same deviation for voltages, flows and injections respectively.
  static NoiseSpec by_class(double voltage, double flow, double injection, std::uint64_t seed);
};

enum class CorruptionModel { M1, M2 };

struct CorruptionSpec {
  CorruptionModel model = CorruptionModel::M1;
  double fraction = 0.0;
  std::vector<MeasurementKind> eligible_kinds{MeasurementKind::Pinj, MeasurementKind::Qinj,
                                              MeasurementKind::Pf,   MeasurementKind::Qf,
                                              MeasurementKind::Pt,   MeasurementKind::Qt};
  double laplace_mean = 0.0;
  double laplace_stddev = 30.0;
  std::uint64_t seed = 2;
};

struct CorruptionEvent {
  int record = 0;
  double original_z = 0.0;
  double corrupted_z = 0.0;
  // M2 only: surrogate state restricted to the record's support, in support
  // order. Coordinates off the support do not affect the quadratic form.
  std::vector<double> surrogate;
};

struct CorruptionResult {
  MeasurementSet set;
  std::vector<CorruptionEvent> events;
};

MeasurementSet simulate(const AdmittanceModel& model, const VoltageState& v_true,
                        std::span<const PlanEntry> plan, const NoiseSpec& noise);

/// Replaces floor(fraction * M) values, drawn without replacement from records
/// of eligible kinds. Throws std::invalid_argument when too few are eligible.
CorruptionResult corrupt(const MeasurementSet& set, const CorruptionSpec& spec);

/// Spectral norm of the record's matrix, computed on its support block.
double spectral_norm(const MeasurementMatrix& matrix);

/// Divides every matrix and value by the matrix spectral norm.
MeasurementSet normalize(const MeasurementSet& set);

nlohmann::json to_json(const MeasurementSet& set);
/// Rebuilds matrices from the model; stored z values are taken verbatim and
/// matrices are divided by the stored norm factors.
MeasurementSet measurement_set_from_json(const nlohmann::json& doc, const AdmittanceModel& model);

}  // namespace psse
