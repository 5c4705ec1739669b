#include "psse/stochastic.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <span>
#include <stdexcept>

#include "psse/prox_ops.hpp"
#include "psse/random.hpp"

namespace psse {

void StochasticConfig::validate() const {
  if (constant_step) {
    if (!(*constant_step > 0.0)) throw std::invalid_argument("constant_step must be positive");
  } else {
    if (!(alpha > 0.0)) throw std::invalid_argument("alpha must be positive");
    if (!(beta > 0.5 && beta <= 1.0)) throw std::invalid_argument("beta must lie in (0.5, 1]");
  }
  if (max_epochs <= 0) throw std::invalid_argument("max_epochs must be positive");
  if (!(tol >= 0.0)) throw std::invalid_argument("tol must be nonnegative");
}

double StochasticConfig::step(std::uint64_t t) const {
  if (constant_step) return *constant_step;
  return alpha * std::pow(static_cast<double>(std::max<std::uint64_t>(t, 1)), -beta);
}

namespace {

// Largest support we keep on the stack; bigger injections fall back to the heap.
constexpr std::size_t kInlineSupport = 32;

// Fills a = 2 H v over the support (a[i] belongs to support[i]) and returns
// the proj coefficient. `for_each_entry(f)` calls f(local_row, col, value) for
// every matrix entry in storage order. Only support entries of v are read.
template <typename Support, typename ForEachEntry, typename Buffer>
double compute_step(double z, const Support& support, std::size_t entry_count, ForEachEntry for_each_entry,
                    const VoltageState& v, double mu, Buffer& a, StepCounters* counters) {
  const std::size_t k = support.size();
  for (std::size_t i = 0; i < k; ++i) a[i] = Complex{};
  for_each_entry([&](std::size_t local, int col, const Complex& value) { a[local] += 2.0 * value * v(col); });
  double quad = 0.0;  // Re(v^H H v) = Re(v^H a) / 2
  double a_norm_sq = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    quad += 0.5 * (std::conj(v(support[i])) * a[i]).real();
    a_norm_sq += std::norm(a[i]);
  }
  if (counters) counters->entries_visited += entry_count;
  return prox::scalar_abs_prox_coefficient(z - quad, a_norm_sq, mu);
}

template <typename Support, typename Buffer>
void apply_step(const Support& support, double coefficient, const Buffer& a, VoltageState& v,
                StepCounters* counters) {
  if (coefficient == 0.0) return;
  for (std::size_t i = 0; i < support.size(); ++i) {
    if (a[i] == Complex{}) continue;
    v(support[i]) += coefficient * a[i];
    if (counters) ++counters->state_writes;
  }
}

template <typename Buffer>
double compute_record(const MeasurementRecord& record, const VoltageState& v, double mu, Buffer& a,
                      StepCounters* counters) {
  const auto& support = record.matrix.support;
  auto entries = [&](auto&& f) {
    for (const auto& e : record.matrix.entries)
      f(static_cast<std::size_t>(std::lower_bound(support.begin(), support.end(), e.row) - support.begin()),
        e.col, e.value);
  };
  return compute_step(record.z, support, record.matrix.entries.size(), entries, v, mu, a, counters);
}

std::span<const std::int32_t> packed_support(const PackedMeasurements& packed, int m) {
  const auto& h = packed.headers[m];
  return {packed.support.data() + h.first_support, h.support_count};
}

template <typename Buffer>
double compute_packed(const PackedMeasurements& packed, int m, const VoltageState& v, double mu, Buffer& a,
                      StepCounters* counters) {
  const auto& h = packed.headers[m];
  auto entries = [&](auto&& f) {
    const auto* e = packed.entries.data() + h.first_entry;
    for (std::uint32_t i = 0; i < h.entry_count; ++i) f(static_cast<std::size_t>(e[i].local_row), e[i].col, e[i].value);
  };
  return compute_step(h.z, packed_support(packed, m), h.entry_count, entries, v, mu, a, counters);
}

template <typename Run>
StepInfo with_buffer(std::size_t k, Run run) {
  if (k <= kInlineSupport) {
    std::array<Complex, kInlineSupport> a;
    return run(a);
  }
  std::vector<Complex> a(k);
  return run(a);
}

// Steps of one batch, all formed at the same v and then applied in order.
// `scratch` is reused across calls to avoid per-step allocation.
void packed_minibatch_step(const PackedMeasurements& packed, const std::vector<int>& batch, VoltageState& v,
                           double mu, std::vector<Complex>& scratch, std::vector<double>& coefficients) {
  std::size_t total = 0;
  for (int m : batch) total += packed.headers[m].support_count;
  scratch.resize(total);
  coefficients.resize(batch.size());
  Complex* a = scratch.data();
  for (std::size_t i = 0; i < batch.size(); ++i) {
    coefficients[i] = compute_packed(packed, batch[i], v, mu, a, nullptr);
    a += packed.headers[batch[i]].support_count;
  }
  a = scratch.data();
  for (std::size_t i = 0; i < batch.size(); ++i) {
    apply_step(packed_support(packed, batch[i]), coefficients[i], a, v, nullptr);
    a += packed.headers[batch[i]].support_count;
  }
}

}  // namespace

PackedMeasurements::PackedMeasurements(const MeasurementSet& set) : bus_count(set.bus_count) {
  headers.reserve(set.records.size());
  std::size_t entry_total = 0, support_total = 0;
  for (const auto& r : set.records) {
    entry_total += r.matrix.entries.size();
    support_total += r.matrix.support.size();
  }
  if (entry_total > UINT32_MAX || support_total > UINT32_MAX)
    throw std::length_error("measurement set too large to pack");
  entries.reserve(entry_total);
  support.reserve(support_total);
  for (const auto& r : set.records) {
    const auto& sup = r.matrix.support;
    if (r.matrix.entries.size() > UINT16_MAX || sup.size() > UINT16_MAX)
      throw std::length_error("measurement support too large to pack");
    Header h;
    h.z = r.z;
    h.first_entry = static_cast<std::uint32_t>(entries.size());
    h.first_support = static_cast<std::uint32_t>(support.size());
    h.entry_count = static_cast<std::uint16_t>(r.matrix.entries.size());
    h.support_count = static_cast<std::uint16_t>(sup.size());
    headers.push_back(h);
    for (int bus : sup) support.push_back(bus);
    for (const auto& e : r.matrix.entries) {
      const auto local = std::lower_bound(sup.begin(), sup.end(), e.row) - sup.begin();
      entries.push_back({static_cast<std::int32_t>(local), e.col, e.value});
    }
  }
}

std::size_t PackedMeasurements::bytes() const {
  return headers.capacity() * sizeof(Header) + entries.capacity() * sizeof(Entry) +
         support.capacity() * sizeof(std::int32_t);
}

StepInfo stochastic_step(const MeasurementRecord& record, VoltageState& v, double mu,
                         StepCounters* counters) {
  if (!(mu > 0.0)) throw std::invalid_argument("stepsize must be positive");
  return with_buffer(record.matrix.support.size(), [&](auto& a) {
    StepInfo info;
    info.coefficient = compute_record(record, v, mu, a, counters);
    info.clipped = std::abs(info.coefficient) == mu;
    apply_step(record.matrix.support, info.coefficient, a, v, counters);
    return info;
  });
}

StepInfo stochastic_step(const PackedMeasurements& packed, int m, VoltageState& v, double mu,
                         StepCounters* counters) {
  if (!(mu > 0.0)) throw std::invalid_argument("stepsize must be positive");
  return with_buffer(packed.headers.at(m).support_count, [&](auto& a) {
    StepInfo info;
    info.coefficient = compute_packed(packed, m, v, mu, a, counters);
    info.clipped = std::abs(info.coefficient) == mu;
    apply_step(packed_support(packed, m), info.coefficient, a, v, counters);
    return info;
  });
}

void minibatch_step(const MeasurementSet& set, const std::vector<int>& batch, VoltageState& v,
                    double mu, StepCounters* counters) {
  if (!(mu > 0.0)) throw std::invalid_argument("stepsize must be positive");
  // Every step is formed at the same v before any is applied.
  std::vector<std::vector<Complex>> directions(batch.size());
  std::vector<double> coefficients(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto& record = set.records[batch[i]];
    directions[i].resize(record.matrix.support.size());
    coefficients[i] = compute_record(record, v, mu, directions[i], counters);
  }
  for (std::size_t i = 0; i < batch.size(); ++i)
    apply_step(set.records[batch[i]].matrix.support, coefficients[i], directions[i], v, counters);
}

std::vector<std::pair<int, int>> MiniBatchSchedule::bus_owners(const MeasurementSet& set,
                                                               int batch) const {
  std::vector<std::pair<int, int>> owners;
  for (int record : batches.at(batch))
    for (int bus : set.records.at(record).matrix.support) owners.emplace_back(bus, record);
  std::sort(owners.begin(), owners.end());
  return owners;
}

bool MiniBatchSchedule::valid_for(const MeasurementSet& set) const {
  std::vector<int> seen(set.size(), 0);
  for (int b = 0; b < size(); ++b) {
    for (int record : batches[b]) {
      if (record < 0 || record >= set.size()) return false;
      ++seen[record];
    }
    const auto owners = bus_owners(set, b);
    for (std::size_t i = 1; i < owners.size(); ++i)
      if (owners[i].first == owners[i - 1].first) return false;
  }
  return std::all_of(seen.begin(), seen.end(), [](int count) { return count == 1; });
}

MiniBatchSchedule build_minibatches(const MeasurementSet& set) {
  MiniBatchSchedule schedule;
  for (auto kind : kAllKinds) {
    std::vector<int> order;
    for (int m = 0; m < set.size(); ++m)
      if (set.records[m].kind == kind) order.push_back(m);
    if (order.empty()) continue;
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
      return set.records[a].matrix.support.size() > set.records[b].matrix.support.size();
    });

    const std::size_t first_batch = schedule.batches.size();
    std::vector<std::vector<char>> used;  // per batch of this kind, bus occupancy
    for (int m : order) {
      const auto& support = set.records[m].matrix.support;
      std::size_t b = 0;
      for (; b < used.size(); ++b) {
        const bool free = std::none_of(support.begin(), support.end(),
                                       [&](int bus) { return used[b][bus] != 0; });
        if (free) break;
      }
      if (b == used.size()) {
        used.emplace_back(set.bus_count, 0);
        schedule.batches.emplace_back();
      }
      for (int bus : support) used[b][bus] = 1;
      schedule.batches[first_batch + b].push_back(m);
    }
  }
  for (auto& batch : schedule.batches) std::sort(batch.begin(), batch.end());
  return schedule;
}

SolveResult solve_stochastic(const MeasurementSet& set, const StochasticConfig& config,
                             const VoltageState& v0, const MiniBatchSchedule* schedule,
                             const std::optional<Truth>& truth) {
  config.validate();
  if (v0.size() != set.bus_count) throw std::invalid_argument("initial state length mismatch");
  if (set.records.empty()) throw std::invalid_argument("measurement set is empty");
  if (schedule && !schedule->valid_for(set))
    throw std::invalid_argument("mini-batch schedule is not valid for this measurement set");

  const PackedMeasurements packed(set);
  std::vector<Complex> scratch;
  std::vector<double> coefficients;
  const auto units = static_cast<std::uint64_t>(schedule ? schedule->size() : set.size());
  Rng rng(config.seed);
  std::vector<std::uint64_t> permutation(units);
  std::iota(permutation.begin(), permutation.end(), std::uint64_t{0});

  TraceRecorder recorder(set, truth);
  SolveResult result;
  result.estimate = v0;
  VoltageState& v = result.estimate;
  recorder.record(0, v);

  std::uint64_t t = 0;
  for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
    const VoltageState previous = v;
    if (config.sampling == Sampling::Cyclic) {
      for (std::uint64_t i = units - 1; i > 0; --i) std::swap(permutation[i], permutation[rng.index(i + 1)]);
    }
    for (std::uint64_t i = 0; i < units; ++i) {
      const double mu = config.step(++t);
      std::uint64_t pick = i;
      if (config.sampling == Sampling::Uniform) pick = rng.index(units);
      else if (config.sampling == Sampling::Cyclic) pick = permutation[i];
      if (schedule)
        packed_minibatch_step(packed, schedule->batches[pick], v, mu, scratch, coefficients);
      else
        stochastic_step(packed, static_cast<int>(pick), v, mu);
    }
    if (!v.allFinite()) throw SolverError("stochastic iterate became non-finite");
    result.iterations = epoch;
    recorder.record(epoch, v);
    if (normalized_step(v, previous) <= config.tol) {
      result.converged = true;
      break;
    }
  }
  result.trace = recorder.take();
  return result;
}

}  // namespace psse
