#include "psse/deterministic.hpp"

#include <cmath>
#include <tuple>

#include "psse/prox_ops.hpp"

namespace psse {

void DeterministicConfig::validate() const {
  if (!(mu > 0.0)) throw std::invalid_argument("mu must be positive");
  if (!(rho > 0.0)) throw std::invalid_argument("rho must be positive");
  if (inner_iters <= 0) throw std::invalid_argument("inner_iters must be positive");
  if (max_outer <= 0) throw std::invalid_argument("max_outer must be positive");
  if (!(tol >= 0.0)) throw std::invalid_argument("tol must be nonnegative");
  if (inner_tol && !(*inner_tol >= 0.0)) throw std::invalid_argument("inner_tol must be nonnegative");
  if (!(l1_weight > 0.0)) throw std::invalid_argument("l1_weight must be positive");
}

Linearization linearize(const MeasurementSet& set, const VoltageState& v, double mu) {
  if (v.size() != set.bus_count) throw std::invalid_argument("linearize: state length mismatch");
  const auto m_count = static_cast<Eigen::Index>(set.size());
  Linearization lin{Eigen::MatrixXcd::Zero(m_count, v.size()), Eigen::VectorXd::Zero(m_count)};
  const double row_scale = 2.0 * mu / static_cast<double>(m_count);
  const double c_scale = mu / static_cast<double>(m_count);
  for (Eigen::Index m = 0; m < m_count; ++m) {
    const auto& rec = set.records[m];
    Complex quad{};
    for (const auto& e : rec.matrix.entries) {
      const Complex t = std::conj(v(e.row)) * e.value;  // (v^H H)_col contribution
      lin.A(m, e.col) += row_scale * t;
      quad += t * v(e.col);
    }
    lin.c(m) = c_scale * (rec.z - quad.real());
  }
  return lin;
}

double subproblem_objective(const Linearization& lin, const Eigen::VectorXcd& w, double weight) {
  const Eigen::VectorXd r = (lin.A * w).real() - lin.c;
  return weight * r.lpNorm<1>() + 0.5 * w.squaredNorm();
}

SubproblemResult solve_subproblem(const Linearization& lin, const DeterministicConfig& config,
                                  std::vector<AdmmResidual>* residual_trace) {
  config.validate();
  const Eigen::Index m = lin.A.rows();
  const Eigen::Index n = lin.A.cols();
  // A has support-size nonzeros per row; the inner loop runs on a sparse copy.
  const prox::SparseMatrixXcd a = lin.A.sparseView();
  const prox::AffineProjectionFactor factor(a);
  const double threshold = config.l1_weight / config.rho;

  Eigen::VectorXcd w = Eigen::VectorXcd::Zero(n);
  Eigen::VectorXcd u = Eigen::VectorXcd::Zero(m);
  Eigen::VectorXcd lambda = Eigen::VectorXcd::Zero(n);
  Eigen::VectorXcd nu = Eigen::VectorXcd::Zero(m);

  SubproblemResult result;
  for (int k = 0; k < config.inner_iters; ++k) {
    const Eigen::VectorXcd w_tilde = prox::ridge_shrink(w, lambda, config.rho);
    const Eigen::VectorXcd u_tilde = prox::complex_l1_prox(u - nu, lin.c, threshold);
    std::tie(w, u) = prox::affine_project(factor, a, w_tilde + lambda, u_tilde + nu);
    lambda += w_tilde - w;
    nu += u_tilde - u;

    result.residual = {(w_tilde - w).norm(), (u_tilde - u).norm()};
    result.iterations = k + 1;
    if (residual_trace) residual_trace->push_back(result.residual);
    if (!w.allFinite()) throw SolverError("ADMM iterate became non-finite");
    if (config.inner_tol && result.residual.w_gap <= *config.inner_tol &&
        result.residual.u_gap <= *config.inner_tol)
      break;
  }
  result.w = std::move(w);
  return result;
}

SolveResult solve_deterministic(const MeasurementSet& set, const DeterministicConfig& config,
                                const VoltageState& v0, const std::optional<Truth>& truth) {
  config.validate();
  if (v0.size() != set.bus_count) throw std::invalid_argument("initial state length mismatch");
  TraceRecorder recorder(set, truth);
  SolveResult result;
  result.estimate = v0;
  recorder.record(0, result.estimate);
  for (int t = 1; t <= config.max_outer; ++t) {
    const Linearization lin = linearize(set, result.estimate, config.mu);
    SubproblemResult sub = solve_subproblem(lin, config);
    // j*v spans the null space of Re(A .), so the exact subproblem minimizer has no
    // component along it; truncated ADMM leaves a small global rotation there.
    if (const double norm_sq = result.estimate.squaredNorm(); norm_sq > 0.0) {
      const double rotation = result.estimate.dot(sub.w).imag() / norm_sq;
      sub.w -= Complex(0.0, rotation) * result.estimate;
    }
    result.estimate += sub.w;
    if (!result.estimate.allFinite()) throw SolverError("deterministic iterate became non-finite");
    result.iterations = t;
    recorder.record(t, result.estimate);
    if (sub.w.norm() / std::sqrt(static_cast<double>(sub.w.size())) <= config.tol) {
      result.converged = true;
      break;
    }
  }
  result.trace = recorder.take();
  return result;
}

}  // namespace psse
