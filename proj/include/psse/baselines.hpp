#pragma once

#include <optional>

#include <Eigen/Dense>

#include "psse/measurement.hpp"
#include "psse/metrics.hpp"

namespace psse {

/// Rectangular real coordinates x = [Re v (N); Im v without the reference bus]
/// of length 2N - 1. The reference bus imaginary part is pinned to zero.
struct RealParameterization {
  int bus_count = 0;
  int reference_bus = 0;

  int size() const { return 2 * bus_count - 1; }
  /// Column of Im(v_n) in x, or -1 for the reference bus.
  int imag_column(int bus) const;
  Eigen::VectorXd to_real(const VoltageState& v) const;
  VoltageState to_complex(const Eigen::VectorXd& x) const;
};

/// h_m(v) = v^H H_m v for every record.
Eigen::VectorXd measurement_values(const MeasurementSet& set, const VoltageState& v);

/// Jacobian of the measurement functions with respect to x; row m holds
/// 2 Re(H_m v) and 2 Im(H_m v) on the support columns.
Eigen::MatrixXd real_jacobian(const MeasurementSet& set, const VoltageState& v,
                              const RealParameterization& param);

/// 1 / sigma^2 per record (scaled by norm_factor^2 for normalized sets);
/// records whose kind has sigma = 0 get weight 1.
Eigen::VectorXd inverse_variance_weights(const MeasurementSet& set, const NoiseSpec& noise);

struct BaselineConfig {
  int max_iters = 100;
  double tol = 1e-10;    // normalized step ||v_t - v_{t-1}|| / sqrt(N)
  double epsilon = 1e-8;  // IRLS residual floor
};

/// WLS Gauss-Newton x <- x + (J^T W J)^{-1} J^T W r. Throws SolverError when the
/// gain matrix is numerically singular.
SolveResult gauss_newton_wls(const MeasurementSet& set, const Eigen::VectorXd& weights,
                             const VoltageState& v0, int reference_bus,
                             const BaselineConfig& config = {},
                             const std::optional<Truth>& truth = std::nullopt);

/// IRLS for the l1 loss: one weighted Gauss-Newton step per iteration with
/// w_m = 1 / max(|r_m|, epsilon).
SolveResult irls_lav(const MeasurementSet& set, const VoltageState& v0, int reference_bus,
                     const BaselineConfig& config = {},
                     const std::optional<Truth>& truth = std::nullopt);

/// One weighted Gauss-Newton step from v (exposed for tests).
VoltageState weighted_gauss_newton_step(const MeasurementSet& set, const Eigen::VectorXd& weights,
                                        const VoltageState& v, const RealParameterization& param);

}  // namespace psse
