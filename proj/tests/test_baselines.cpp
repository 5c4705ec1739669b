#include <doctest.h>

#include <cmath>

#include "psse/baselines.hpp"
#include "test_support.hpp"

using namespace psse;
using psse::test::case118;
using psse::test::case14;

namespace {

MeasurementSet make_set(const NetworkCase& network, const VoltageState& truth, int types,
                        const NoiseSpec& noise = {}) {
  const auto model = build_admittance(network);
  return simulate(model, truth, full_plan(model, ordered_types(types)), noise);
}

VoltageState zero_reference_phase(VoltageState v, int ref) { return v * std::polar(1.0, -std::arg(v(ref))); }

}  // namespace

TEST_CASE("real parameterization round trip") {
  const RealParameterization p{5, 2};
  CHECK(p.size() == 9);
  CHECK(p.imag_column(0) == 5);
  CHECK(p.imag_column(2) == -1);
  CHECK(p.imag_column(4) == 8);
  Rng rng(1);
  const auto v = zero_reference_phase(test::random_state(rng, 5), 2);
  const auto x = p.to_real(v);
  CHECK(x.size() == 9);
  CHECK((p.to_complex(x) - v).norm() <= 1e-15);
  CHECK((p.to_real(p.to_complex(x)) - x).norm() == 0.0);
}

TEST_CASE("real and complex evaluations agree") {
  Rng rng(2);
  const int ref = case118().reference_bus();
  const RealParameterization p{118, ref};
  const auto set = make_set(case118(), case118().stored_profile(), 7);
  for (int trial = 0; trial < 5; ++trial) {
    const auto v = zero_reference_phase(test::random_state(rng, 118), ref);
    const auto values = measurement_values(set, p.to_complex(p.to_real(v)));
    for (int m = 0; m < set.size(); ++m)
      CHECK(std::abs(values(m) - evaluate(set.records[m].matrix, v)) <= 1e-12 * (1 + std::abs(values(m))));
  }
}

TEST_CASE("real Jacobian matches central finite differences") {
  Rng rng(3);
  const int ref = case14().reference_bus();
  const RealParameterization p{14, ref};
  const auto set = normalize(make_set(case14(), case14().stored_profile(), 7));
  const double eps = 1e-6;
  for (int trial = 0; trial < 10; ++trial) {
    const auto v = zero_reference_phase(test::random_state(rng, 14), ref);
    const auto x = p.to_real(v);
    const auto jac = real_jacobian(set, v, p);
    for (int k = 0; k < p.size(); ++k) {
      Eigen::VectorXd e = Eigen::VectorXd::Zero(p.size());
      e(k) = eps;
      const Eigen::VectorXd fd =
          (measurement_values(set, p.to_complex(x + e)) - measurement_values(set, p.to_complex(x - e))) / (2 * eps);
      for (int m = 0; m < set.size(); ++m)
        CHECK(std::abs(jac(m, k) - fd(m)) <= 1e-6 * std::max(1.0, std::abs(fd(m))));
    }
  }
}

TEST_CASE("inverse variance weights") {
  const auto set = make_set(case14(), case14().stored_profile(), 7);
  const auto noise = NoiseSpec::by_class(0.004, 0.008, 0.01, 1);
  const auto w = inverse_variance_weights(set, noise);
  for (int m = 0; m < set.size(); ++m) {
    const double sigma = noise.stddev(set.records[m].kind);
    CHECK(w(m) == doctest::Approx(1.0 / (sigma * sigma)));
  }
  const auto normed = normalize(set);
  const auto wn = inverse_variance_weights(normed, noise);
  for (int m = 0; m < set.size(); ++m)
    CHECK(wn(m) == doctest::Approx(w(m) * normed.records[m].norm_factor * normed.records[m].norm_factor));
  CHECK(inverse_variance_weights(set, NoiseSpec{}).minCoeff() == 1.0);
}

TEST_CASE("Gauss-Newton on noiseless 14-bus data") {
  const auto set = make_set(case14(), case14().stored_profile(), 3);
  const int ref = case14().reference_bus();
  const Truth truth{case14().stored_profile(), ref};
  const auto weights = Eigen::VectorXd::Ones(set.size()).eval();
  for (const auto& v0 : {VoltageState(VoltageState::Ones(14)), measured_magnitude_start(set)}) {
    const auto result = gauss_newton_wls(set, weights, v0, ref, {}, truth);
    CHECK(result.converged);
    CHECK(result.iterations <= 6);
    CHECK(rmse(result.estimate, truth.voltages, ref) <= 1e-8);
    CHECK(result.estimate(ref).imag() == 0.0);

    // Stationarity J^T W r = 0 at the solution.
    const RealParameterization p{14, ref};
    const Eigen::VectorXd r = [&] {
      Eigen::VectorXd z(set.size());
      for (int m = 0; m < set.size(); ++m) z(m) = set.records[m].z;
      return (z - measurement_values(set, result.estimate)).eval();
    }();
    CHECK((real_jacobian(set, result.estimate, p).transpose() * weights.asDiagonal() * r).norm() <= 1e-8);
  }
}

TEST_CASE("IRLS on noiseless 14-bus data") {
  const auto set = make_set(case14(), case14().stored_profile(), 3);
  const int ref = case14().reference_bus();
  const Truth truth{case14().stored_profile(), ref};
  BaselineConfig config;
  config.max_iters = 50;
  const auto result = irls_lav(set, measured_magnitude_start(set), ref, config, truth);
  CHECK(result.iterations <= 50);
  CHECK(rmse(result.estimate, truth.voltages, ref) <= 1e-8);
  CHECK(result.trace.rows.size() == static_cast<std::size_t>(result.iterations + 1));
}

TEST_CASE("uniform residuals make the first IRLS step an unweighted Gauss-Newton step") {
  Rng rng(4);
  const int ref = case14().reference_bus();
  const auto v0 = zero_reference_phase(test::random_state(rng, 14), ref);
  auto set = make_set(case14(), case14().stored_profile(), 5);
  for (auto& r : set.records) r.z = evaluate(r.matrix, v0) + 0.01;
  BaselineConfig config;
  config.max_iters = 1;
  const auto irls = irls_lav(set, v0, ref, config);
  const auto gn = weighted_gauss_newton_step(set, Eigen::VectorXd::Ones(set.size()), v0, {14, ref});
  CHECK((irls.estimate - gn).norm() <= 1e-10 * gn.norm());
}

TEST_CASE("unobservable systems are reported") {
  const auto model = build_admittance(case14());
  const MeasurementKind kinds[] = {MeasurementKind::Vsq};
  const auto set = simulate(model, case14().stored_profile(), full_plan(model, kinds), NoiseSpec{});
  const int ref = case14().reference_bus();
  CHECK_THROWS_AS(gauss_newton_wls(set, Eigen::VectorXd::Ones(14), VoltageState::Ones(14), ref), SolverError);
  CHECK_THROWS_AS(irls_lav(set, VoltageState::Ones(14), ref), SolverError);
}

TEST_CASE("argument checks") {
  const auto set = make_set(case14(), case14().stored_profile(), 3);
  CHECK_THROWS(gauss_newton_wls(set, Eigen::VectorXd::Ones(3), VoltageState::Ones(14), 0));
  CHECK_THROWS(gauss_newton_wls(set, Eigen::VectorXd::Zero(set.size()), VoltageState::Ones(14), 0));
  BaselineConfig config;
  config.epsilon = 0.0;
  CHECK_THROWS(irls_lav(set, VoltageState::Ones(14), 0, config));
  CHECK_THROWS(irls_lav(set, VoltageState::Ones(5), 0));
}
