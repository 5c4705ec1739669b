#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "psse/measurement.hpp"
#include "psse/metrics.hpp"

namespace psse {

enum class Sampling {
  Uniform,     // draw with replacement
  Cyclic,      // fresh random permutation every epoch
  Sequential,  // 0, 1, ..., M-1 every epoch
};

struct StochasticConfig {
  double alpha = 1.0;
  double beta = 0.8;
  std::optional<double> constant_step;  // overrides alpha * t^-beta
  Sampling sampling = Sampling::Uniform;
  int max_epochs = 100;
  double tol = 1e-10;
  std::uint64_t seed = 1;

  void validate() const;
  /// Stepsize for the t-th update, t >= 1.
  double step(std::uint64_t t) const;
};

/// Per-call work counters, used to check the constant per-step cost.
struct StepCounters {
  std::uint64_t entries_visited = 0;  // matrix entries read
  std::uint64_t state_writes = 0;     // voltage entries changed
};

struct StepInfo {
  double coefficient = 0.0;  // proj_mu(c / ||a||^2)
  bool clipped = false;
};

/// In-place closed-form update for one record:
///   a = 2 H v, c = z - v^H H v, v += proj_mu(c / ||a||^2) a.
/// Reads and writes only the record's support.
StepInfo stochastic_step(const MeasurementRecord& record, VoltageState& v, double mu,
                         StepCounters* counters = nullptr);

/// The records of a set laid out contiguously for the solver loop: a compact
/// header per record, one shared entry array with the row already mapped to
/// its position in the support, and one shared support array. Steps on large
/// sets then read one short run of memory instead of three heap blocks.
struct PackedMeasurements {
  struct Header {
    double z = 0.0;
    std::uint32_t first_entry = 0;
    std::uint32_t first_support = 0;
    std::uint16_t entry_count = 0;
    std::uint16_t support_count = 0;
  };
  struct Entry {
    std::int32_t local_row = 0;  // index into the record's support
    std::int32_t col = 0;        // bus index
    Complex value;
  };

  int bus_count = 0;
  std::vector<Header> headers;
  std::vector<Entry> entries;
  std::vector<std::int32_t> support;

  explicit PackedMeasurements(const MeasurementSet& set);
  int size() const { return static_cast<int>(headers.size()); }
  std::size_t bytes() const;
};

/// Same update as above on record `m` of a packed set; results are bitwise
/// identical to the unpacked form.
StepInfo stochastic_step(const PackedMeasurements& packed, int m, VoltageState& v, double mu,
                         StepCounters* counters = nullptr);

/// Measurement groups whose supports are pairwise disjoint within a group.
struct MiniBatchSchedule {
  std::vector<std::vector<int>> batches;

  int size() const { return static_cast<int>(batches.size()); }
  /// For batch b, the record owning each touched bus (bus, record), sorted by
  /// bus. A repeated bus would mean two records overlap.
  std::vector<std::pair<int, int>> bus_owners(const MeasurementSet& set, int batch) const;
  /// True when every record appears in exactly one batch and no batch has two
  /// records sharing a bus.
  bool valid_for(const MeasurementSet& set) const;
};

/// Greedy coloring of the support-conflict graph, one kind at a time. Records
/// of a kind are visited by descending support size, then index, and placed
/// in the first batch of that kind they do not conflict with.
MiniBatchSchedule build_minibatches(const MeasurementSet& set);

/// All records of the batch evaluated at the same v, then the steps are added
/// in record order.
void minibatch_step(const MeasurementSet& set, const std::vector<int>& batch, VoltageState& v,
                    double mu, StepCounters* counters = nullptr);

/// Stochastic prox-linear iterations. Without a schedule each update uses one
/// record and an epoch is M updates; with a schedule each update uses one
/// batch and an epoch is B updates. Traces and the stopping rule are per epoch.
SolveResult solve_stochastic(const MeasurementSet& set, const StochasticConfig& config,
                             const VoltageState& v0,
                             const MiniBatchSchedule* schedule = nullptr,
                             const std::optional<Truth>& truth = std::nullopt);

}  // namespace psse
