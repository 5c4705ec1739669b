#pragma once

#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "psse/measurement.hpp"
#include "psse/metrics.hpp"

namespace psse {

struct DeterministicConfig {
  double mu = 200.0;   // prox-linear stepsize
  double rho = 100.0;  // ADMM penalty
  int inner_iters = 150;
  int max_outer = 100;
  double tol = 1e-10;
  // Early exit once both consensus residuals ||w~ - w|| and ||u~ - u|| fall
  // below this value.
  std::optional<double> inner_tol;
  // Weight on the l1 term inside the ADMM u~-update; the shrinkage threshold
  // is l1_weight / rho. 0.5 gives the S_{1/(2 rho)} closed form, 1.0 solves
  // the linearized subproblem exactly as stated.
  double l1_weight = 0.5;

  void validate() const;
};

/// Coefficients of the convex model around v:
///   A row m = (2 mu / M) v^H H_m,  c_m = (mu / M) (z_m - v^H H_m v).
struct Linearization {
  Eigen::MatrixXcd A;
  Eigen::VectorXd c;
};

Linearization linearize(const MeasurementSet& set, const VoltageState& v, double mu);

/// Value of weight * ||Re(A w) - c||_1 + 1/2 ||w||^2.
double subproblem_objective(const Linearization& lin, const Eigen::VectorXcd& w, double weight = 1.0);

struct AdmmResidual {
  double w_gap = 0.0;  // ||w~ - w||
  double u_gap = 0.0;  // ||u~ - u||
};

struct SubproblemResult {
  Eigen::VectorXcd w;
  int iterations = 0;
  AdmmResidual residual;
};

/// ADMM on  min ||Re(u) - c||_1 + 1/2 ||w||^2  s.t.  A w = u, from zero
/// initialization. `residual_trace`, when given, receives one entry per cycle.
SubproblemResult solve_subproblem(const Linearization& lin, const DeterministicConfig& config,
                                  std::vector<AdmmResidual>* residual_trace = nullptr);

/// Prox-linear outer loop v <- v + w*. Stops after max_outer iterations or
/// when ||v_t - v_{t-1}|| / sqrt(N) <= tol.
SolveResult solve_deterministic(const MeasurementSet& set, const DeterministicConfig& config,
                                const VoltageState& v0,
                                const std::optional<Truth>& truth = std::nullopt);

}  // namespace psse
