#include "psse/measurement.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <Eigen/Eigenvalues>

#include "psse/random.hpp"

namespace psse {

bool MeasurementSet::normalized() const {
  return std::any_of(records.begin(), records.end(),
                     [](const MeasurementRecord& r) { return r.norm_factor != 1.0; });
}

std::vector<PlanEntry> full_plan(const AdmittanceModel& model,
                                 std::span<const MeasurementKind> kinds) {
  std::vector<PlanEntry> plan;
  for (auto kind : kinds) {
    const int count = is_flow(kind) ? model.line_count() : model.bus_count();
    for (int i = 0; i < count; ++i) plan.emplace_back(kind, i);
  }
  return plan;
}

std::vector<MeasurementKind> ordered_types(int count) {
  static constexpr MeasurementKind order[] = {
      MeasurementKind::Vsq,  MeasurementKind::Pf, MeasurementKind::Qf, MeasurementKind::Pinj,
      MeasurementKind::Qinj, MeasurementKind::Pt, MeasurementKind::Qt};
  if (count < 1 || count > 7) throw std::invalid_argument("ordered type count must be in 1..7");
  return {order, order + count};
}

NoiseSpec NoiseSpec::by_class(double voltage, double flow, double injection, std::uint64_t seed) {
  NoiseSpec spec;
  spec.seed = seed;
  for (auto kind : kAllKinds) {
    const double s = kind == MeasurementKind::Vsq ? voltage : is_flow(kind) ? flow : injection;
    spec.sigma[static_cast<std::size_t>(kind)] = s;
  }
  return spec;
}

MeasurementSet simulate(const AdmittanceModel& model, const VoltageState& v_true,
                        std::span<const PlanEntry> plan, const NoiseSpec& noise) {
  if (v_true.size() != model.bus_count())
    throw std::invalid_argument("true state length does not match the network");
  for (double s : noise.sigma)
    if (!(s >= 0.0)) throw std::invalid_argument("noise standard deviations must be >= 0");

  Rng rng(noise.seed);
  MeasurementSet set;
  set.bus_count = model.bus_count();
  set.records.reserve(plan.size());
  for (const auto& [kind, location] : plan) {
    MeasurementRecord rec;
    rec.kind = kind;
    rec.location = location;
    rec.matrix = measurement_matrix(model, kind, location);
    // Always draw so the noise stream does not depend on which sigmas are zero.
    const double e = rng.normal();
    rec.z = evaluate(rec.matrix, v_true) + noise.stddev(kind) * e;
    set.records.push_back(std::move(rec));
  }
  return set;
}

CorruptionResult corrupt(const MeasurementSet& set, const CorruptionSpec& spec) {
  if (!(spec.fraction >= 0.0 && spec.fraction <= 1.0))
    throw std::invalid_argument("corruption fraction must be in [0, 1]");
  CorruptionResult result{set, {}};
  const auto count = static_cast<std::size_t>(std::floor(spec.fraction * set.size() + 1e-9));
  if (count == 0) return result;

  std::vector<int> eligible;
  for (int m = 0; m < set.size(); ++m) {
    const auto kind = set.records[m].kind;
    if (std::find(spec.eligible_kinds.begin(), spec.eligible_kinds.end(), kind) !=
        spec.eligible_kinds.end())
      eligible.push_back(m);
  }
  if (count > eligible.size())
    throw std::invalid_argument("cannot corrupt " + std::to_string(count) + " records: only " +
                                std::to_string(eligible.size()) + " are eligible");

  Rng rng(spec.seed);
  // Partial Fisher-Yates: the first `count` slots become the chosen indices.
  for (std::size_t i = 0; i < count; ++i) {
    const auto j = i + static_cast<std::size_t>(rng.index(eligible.size() - i));
    std::swap(eligible[i], eligible[j]);
  }
  for (std::size_t i = 0; i < count; ++i) {
    auto& rec = result.set.records[eligible[i]];
    CorruptionEvent event;
    event.record = eligible[i];
    event.original_z = rec.z;
    if (spec.model == CorruptionModel::M1) {
      event.corrupted_z = rng.laplace(spec.laplace_mean, spec.laplace_stddev);
    } else {
      // Real Gaussian surrogate state; only support coordinates are needed.
      VoltageState surrogate = VoltageState::Zero(set.bus_count);
      for (int bus : rec.matrix.support) {
        const double x = rng.normal();
        surrogate(bus) = x;
        event.surrogate.push_back(x);
      }
      event.corrupted_z = evaluate(rec.matrix, surrogate);
    }
    rec.z = event.corrupted_z;
    rec.corrupted = true;
    result.events.push_back(std::move(event));
  }
  return result;
}

double spectral_norm(const MeasurementMatrix& matrix) {
  if (matrix.support.empty()) return 0.0;
  const Eigen::MatrixXcd block = matrix.support_block();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> solver(block, Eigen::EigenvaluesOnly);
  return solver.eigenvalues().cwiseAbs().maxCoeff();
}

MeasurementSet normalize(const MeasurementSet& set) {
  MeasurementSet out = set;
  for (auto& rec : out.records) {
    const double norm = spectral_norm(rec.matrix);
    if (!(norm > 0.0))
      throw std::invalid_argument("cannot normalize a zero measurement matrix (" +
                                  std::string(to_string(rec.kind)) + " at " +
                                  std::to_string(rec.location) + ")");
    rec.matrix.scale(1.0 / norm);
    rec.z /= norm;
    rec.norm_factor *= norm;
  }
  return out;
}

nlohmann::json to_json(const MeasurementSet& set) {
  nlohmann::json records = nlohmann::json::array();
  for (const auto& rec : set.records) {
    records.push_back({{"kind", to_string(rec.kind)},
                       {"location", rec.location},
                       {"z", rec.z},
                       {"corrupted", rec.corrupted},
                       {"norm_factor", rec.norm_factor}});
  }
  return {{"bus_count", set.bus_count}, {"records", std::move(records)}};
}

MeasurementSet measurement_set_from_json(const nlohmann::json& doc, const AdmittanceModel& model) {
  MeasurementSet set;
  set.bus_count = doc.at("bus_count").get<int>();
  if (set.bus_count != model.bus_count())
    throw std::invalid_argument("measurement set was recorded for a different network");
  for (const auto& jr : doc.at("records")) {
    MeasurementRecord rec;
    rec.kind = kind_from_string(jr.at("kind").get<std::string>());
    rec.location = jr.at("location").get<int>();
    rec.z = jr.at("z").get<double>();
    rec.corrupted = jr.value("corrupted", false);
    rec.norm_factor = jr.value("norm_factor", 1.0);
    if (!(rec.norm_factor > 0.0)) throw std::invalid_argument("norm_factor must be positive");
    rec.matrix = measurement_matrix(model, rec.kind, rec.location);
    if (rec.norm_factor != 1.0) rec.matrix.scale(1.0 / rec.norm_factor);
    set.records.push_back(std::move(rec));
  }
  return set;
}

}  // namespace psse
