#include "psse/prox_ops.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace psse::prox {

double soft_threshold(double x, double tau) {
  if (x > tau) return x - tau;
  if (x < -tau) return x + tau;
  return 0.0;
}

Eigen::VectorXd soft_threshold(const Eigen::VectorXd& x, double tau) {
  if (!(tau >= 0.0)) throw std::invalid_argument("threshold must be nonnegative");
  return x.unaryExpr([tau](double xi) { return soft_threshold(xi, tau); });
}

Eigen::VectorXcd complex_l1_prox(const Eigen::VectorXcd& d, const Eigen::VectorXd& c, double lambda) {
  if (d.size() != c.size()) throw std::invalid_argument("complex_l1_prox: dimension mismatch");
  Eigen::VectorXcd u(d.size());
  for (Eigen::Index i = 0; i < d.size(); ++i)
    u(i) = {c(i) + soft_threshold(d(i).real() - c(i), lambda), d(i).imag()};
  return u;
}

Eigen::VectorXcd ridge_shrink(const Eigen::VectorXcd& w, const Eigen::VectorXcd& lambda_dual,
                              double rho) {
  if (!(rho > 0.0)) throw std::invalid_argument("rho must be positive");
  return (rho / (1.0 + rho)) * (w - lambda_dual);
}

AffineProjectionFactor::AffineProjectionFactor(const Eigen::MatrixXcd& a)
    : rows_(a.rows()), cols_(a.cols()) {
  Eigen::MatrixXcd gram = Eigen::MatrixXcd::Identity(cols_, cols_);
  gram.selfadjointView<Eigen::Lower>().rankUpdate(a.adjoint());
  factorize(gram);
}

AffineProjectionFactor::AffineProjectionFactor(const SparseMatrixXcd& a)
    : rows_(a.rows()), cols_(a.cols()) {
  const SparseMatrixXcd ata = a.adjoint() * a;
  Eigen::MatrixXcd gram = Eigen::MatrixXcd(ata) + Eigen::MatrixXcd::Identity(cols_, cols_);
  factorize(gram);
}

void AffineProjectionFactor::factorize(const Eigen::MatrixXcd& gram) {
  if (!gram.allFinite()) throw std::runtime_error("factorization of I + A^H A failed (non-finite input)");
  llt_.compute(gram);
  if (llt_.info() != Eigen::Success) throw std::runtime_error("factorization of I + A^H A failed");
}

namespace {

template <typename Matrix>
std::pair<Eigen::VectorXcd, Eigen::VectorXcd> project(const AffineProjectionFactor& factor,
                                                      const Matrix& a, const Eigen::VectorXcd& b,
                                                      const Eigen::VectorXcd& d) {
  if (a.rows() != factor.rows() || a.cols() != factor.cols() || b.size() != a.cols() ||
      d.size() != a.rows())
    throw std::invalid_argument("affine_project: dimension mismatch");
  Eigen::VectorXcd rhs = b;
  rhs.noalias() += a.adjoint() * d;
  Eigen::VectorXcd w = factor.llt().solve(rhs);
  Eigen::VectorXcd u = a * w;
  return {std::move(w), std::move(u)};
}

}  // namespace

std::pair<Eigen::VectorXcd, Eigen::VectorXcd> affine_project(const AffineProjectionFactor& factor,
                                                             const Eigen::MatrixXcd& a,
                                                             const Eigen::VectorXcd& b,
                                                             const Eigen::VectorXcd& d) {
  return project(factor, a, b, d);
}

std::pair<Eigen::VectorXcd, Eigen::VectorXcd> affine_project(const AffineProjectionFactor& factor,
                                                             const SparseMatrixXcd& a,
                                                             const Eigen::VectorXcd& b,
                                                             const Eigen::VectorXcd& d) {
  return project(factor, a, b, d);
}

double interval_project(double x, double tau) {
  if (!(tau >= 0.0)) throw std::invalid_argument("interval half-width must be nonnegative");
  return std::clamp(x, -tau, tau);
}

double scalar_abs_prox_coefficient(double c, double a_norm_sq, double tau) {
  if (!(a_norm_sq > 0.0)) return 0.0;
  return interval_project(c / a_norm_sq, tau);
}

Eigen::VectorXcd scalar_abs_prox(const Eigen::VectorXcd& a, double c, double tau) {
  if (!(tau > 0.0)) throw std::invalid_argument("tau must be positive");
  return scalar_abs_prox_coefficient(c, a.squaredNorm(), tau) * a;
}

}  // namespace psse::prox
