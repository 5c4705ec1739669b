#pragma once

#include <utility>

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <Eigen/SparseCore>

namespace psse::prox {

using SparseMatrixXcd = Eigen::SparseMatrix<std::complex<double>, Eigen::RowMajor>;

/// sign(x) * max(|x| - tau, 0), elementwise, with sign(0) = 0.
double soft_threshold(double x, double tau);
Eigen::VectorXd soft_threshold(const Eigen::VectorXd& x, double tau);

/// argmin_u  lambda * ||Re(u) - c||_1 + 1/2 ||u - d||^2.
/// The imaginary part passes through unchanged.
Eigen::VectorXcd complex_l1_prox(const Eigen::VectorXcd& d, const Eigen::VectorXd& c, double lambda);

/// (rho / (1 + rho)) * (w - lambda_dual): minimizer of
/// 1/2 ||x||^2 + rho/2 ||x - (w - lambda_dual)||^2.
Eigen::VectorXcd ridge_shrink(const Eigen::VectorXcd& w, const Eigen::VectorXcd& lambda_dual,
                              double rho);

/// Cached Cholesky factor of I + A^H A.
class AffineProjectionFactor {
 public:
  explicit AffineProjectionFactor(const Eigen::MatrixXcd& a);
  explicit AffineProjectionFactor(const SparseMatrixXcd& a);

  Eigen::Index cols() const { return cols_; }
  Eigen::Index rows() const { return rows_; }
  const Eigen::LLT<Eigen::MatrixXcd>& llt() const { return llt_; }

 private:
  void factorize(const Eigen::MatrixXcd& gram);

  Eigen::Index rows_;
  Eigen::Index cols_;
  Eigen::LLT<Eigen::MatrixXcd> llt_;
};

/// Euclidean projection of (b, d) onto {(w, u) : A w = u}:
/// w = (I + A^H A)^{-1} (b + A^H d), u = A w.
std::pair<Eigen::VectorXcd, Eigen::VectorXcd> affine_project(const AffineProjectionFactor& factor,
                                                             const Eigen::MatrixXcd& a,
                                                             const Eigen::VectorXcd& b,
                                                             const Eigen::VectorXcd& d);
std::pair<Eigen::VectorXcd, Eigen::VectorXcd> affine_project(const AffineProjectionFactor& factor,
                                                             const SparseMatrixXcd& a,
                                                             const Eigen::VectorXcd& b,
                                                             const Eigen::VectorXcd& d);

/// Clamp of x onto [-tau, tau].
double interval_project(double x, double tau);

/// Coefficient s of the minimizer s * a of
///   |Re(a^H w) - c| + 1/(2 tau) ||w||^2,
/// given ||a||^2. Zero when a = 0.
double scalar_abs_prox_coefficient(double c, double a_norm_sq, double tau);

Eigen::VectorXcd scalar_abs_prox(const Eigen::VectorXcd& a, double c, double tau);

}  // namespace psse::prox
