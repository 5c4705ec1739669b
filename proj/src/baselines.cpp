#include "psse/baselines.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Cholesky>

namespace psse {

int RealParameterization::imag_column(int bus) const {
  if (bus == reference_bus) return -1;
  return bus_count + (bus < reference_bus ? bus : bus - 1);
}

Eigen::VectorXd RealParameterization::to_real(const VoltageState& v) const {
  Eigen::VectorXd x(size());
  for (int n = 0; n < bus_count; ++n) {
    x(n) = v(n).real();
    const int col = imag_column(n);
    if (col >= 0) x(col) = v(n).imag();
  }
  return x;
}

VoltageState RealParameterization::to_complex(const Eigen::VectorXd& x) const {
  VoltageState v(bus_count);
  for (int n = 0; n < bus_count; ++n) {
    const int col = imag_column(n);
    v(n) = Complex(x(n), col >= 0 ? x(col) : 0.0);
  }
  return v;
}

Eigen::VectorXd measurement_values(const MeasurementSet& set, const VoltageState& v) {
  Eigen::VectorXd h(set.size());
  for (int m = 0; m < set.size(); ++m) h(m) = evaluate(set.records[m].matrix, v);
  return h;
}

Eigen::MatrixXd real_jacobian(const MeasurementSet& set, const VoltageState& v,
                              const RealParameterization& param) {
  Eigen::MatrixXd jac = Eigen::MatrixXd::Zero(set.size(), param.size());
  for (int m = 0; m < set.size(); ++m) {
    // d(v^H H v) = 2 Re(dv^H H v): Re part -> 2 Re((Hv)_n), Im part -> 2 Im((Hv)_n).
    for (const auto& e : set.records[m].matrix.entries) {
      const Complex hv = 2.0 * e.value * v(e.col);
      jac(m, e.row) += hv.real();
      const int col = param.imag_column(e.row);
      if (col >= 0) jac(m, col) += hv.imag();
    }
  }
  return jac;
}

Eigen::VectorXd inverse_variance_weights(const MeasurementSet& set, const NoiseSpec& noise) {
  Eigen::VectorXd w(set.size());
  for (int m = 0; m < set.size(); ++m) {
    const auto& rec = set.records[m];
    const double sigma = noise.stddev(rec.kind);
    w(m) = sigma > 0.0 ? (rec.norm_factor * rec.norm_factor) / (sigma * sigma) : 1.0;
  }
  return w;
}

VoltageState weighted_gauss_newton_step(const MeasurementSet& set, const Eigen::VectorXd& weights,
                                        const VoltageState& v, const RealParameterization& param) {
  const Eigen::MatrixXd jac = real_jacobian(set, v, param);
  Eigen::VectorXd residual(set.size());
  for (int m = 0; m < set.size(); ++m)
    residual(m) = set.records[m].z - evaluate(set.records[m].matrix, v);

  const Eigen::MatrixXd weighted = weights.asDiagonal() * jac;
  Eigen::MatrixXd gain = Eigen::MatrixXd::Zero(param.size(), param.size());
  gain.selfadjointView<Eigen::Lower>().rankUpdate(jac.transpose() * weights.cwiseSqrt().asDiagonal());
  const Eigen::LLT<Eigen::MatrixXd> llt(gain);
  if (llt.info() != Eigen::Success || !(llt.rcond() > 1e-14))
    throw SolverError("gain matrix J^T W J is singular (system unobservable?)");
  const Eigen::VectorXd delta = llt.solve(weighted.transpose() * residual);
  return param.to_complex(param.to_real(v) + delta);
}

namespace {

VoltageState rotate_reference_to_zero(const VoltageState& v, int reference_bus) {
  const Complex ref = v(reference_bus);
  if (std::abs(ref) == 0.0) return v;
  return v * std::polar(1.0, -std::arg(ref));
}

template <typename WeightFn>
SolveResult reweighted_gauss_newton(const MeasurementSet& set, const VoltageState& v0,
                                    int reference_bus, const BaselineConfig& config,
                                    const std::optional<Truth>& truth, WeightFn weights_at) {
  if (v0.size() != set.bus_count) throw std::invalid_argument("initial state length mismatch");
  if (config.max_iters <= 0) throw std::invalid_argument("max_iters must be positive");
  const RealParameterization param{set.bus_count, reference_bus};
  TraceRecorder recorder(set, truth);
  SolveResult result;
  result.estimate = rotate_reference_to_zero(v0, reference_bus);
  recorder.record(0, result.estimate);
  for (int t = 1; t <= config.max_iters; ++t) {
    const Eigen::VectorXd weights = weights_at(result.estimate);
    VoltageState next = weighted_gauss_newton_step(set, weights, result.estimate, param);
    if (!next.allFinite()) throw SolverError("Gauss-Newton iterate became non-finite");
    const double step = normalized_step(next, result.estimate);
    result.estimate = std::move(next);
    result.iterations = t;
    recorder.record(t, result.estimate);
    if (step <= config.tol) {
      result.converged = true;
      break;
    }
  }
  result.trace = recorder.take();
  return result;
}

}  // namespace

SolveResult gauss_newton_wls(const MeasurementSet& set, const Eigen::VectorXd& weights,
                             const VoltageState& v0, int reference_bus, const BaselineConfig& config,
                             const std::optional<Truth>& truth) {
  if (weights.size() != set.size()) throw std::invalid_argument("one weight per record required");
  if (!(weights.minCoeff() > 0.0)) throw std::invalid_argument("weights must be positive");
  return reweighted_gauss_newton(set, v0, reference_bus, config, truth,
                                 [&](const VoltageState&) { return weights; });
}

SolveResult irls_lav(const MeasurementSet& set, const VoltageState& v0, int reference_bus,
                     const BaselineConfig& config, const std::optional<Truth>& truth) {
  if (!(config.epsilon > 0.0)) throw std::invalid_argument("epsilon must be positive");
  return reweighted_gauss_newton(set, v0, reference_bus, config, truth, [&](const VoltageState& v) {
    Eigen::VectorXd w(set.size());
    for (int m = 0; m < set.size(); ++m)
      w(m) = 1.0 / std::max(std::abs(set.records[m].z - evaluate(set.records[m].matrix, v)),
                            config.epsilon);
    return w;
  });
}

}  // namespace psse
