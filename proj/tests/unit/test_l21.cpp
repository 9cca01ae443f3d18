#include <doctest.h>

#include "instances.hpp"

#include <mmv/error.hpp>
#include <mmv/l21.hpp>

#include <cmath>

using namespace mmv;

namespace {

Eigen::MatrixXd gaussian_matrix(Index rows, Index cols, RngStream& rng) {
  Eigen::MatrixXd m(rows, cols);
  for (Index k = 0; k < m.size(); ++k) m.data()[k] = rng.normal();
  return m;
}

// Largest violation of the subgradient optimality conditions.
double kkt_residual(const ForwardModel& fm, const MeasurementSet& y, const Eigen::MatrixXd& X, double lambda) {
  const Eigen::MatrixXd g = fm.H.transpose() * (y.Y - fm.H * X);
  double worst = 0.0;
  for (Index i = 0; i < X.rows(); ++i) {
    const double w = lambda * std::sqrt(fm.v(i));
    const double nx = X.row(i).norm();
    if (nx > 0.0)
      worst = std::max(worst, (g.row(i) - w * X.row(i) / nx).norm());
    else
      worst = std::max(worst, std::max(0.0, g.row(i).norm() - w));
  }
  return worst;
}

}  // namespace

TEST_SUITE("baseline-l21") {
  TEST_CASE("full shrinkage above lambda_max") {
    RngStream rng(1, 0);
    const ForwardModel fm = make_forward_model(gaussian_matrix(6, 10, rng));
    const MeasurementSet y = make_measurements(gaussian_matrix(6, 4, rng));
    const double lmax = lambda_max(fm, y);
    double expect = 0.0;
    for (Index i = 0; i < 10; ++i)
      expect = std::max(expect, (fm.H.col(i).transpose() * y.Y).norm() / std::sqrt(fm.v(i)));
    CHECK(lmax == doctest::Approx(expect).epsilon(1e-12));
    CHECK(solve_l21(fm, y, lmax).X.norm() == 0.0);
    CHECK(solve_l21(fm, y, 2.0 * lmax).X.norm() == 0.0);
    CHECK(solve_l21(fm, y, 0.9 * lmax).X.norm() > 0.0);
    CHECK_THROWS_AS(solve_l21(fm, y, 0.0), Error);
  }

  TEST_CASE("orthonormal columns: row-wise soft threshold") {
    RngStream rng(2, 0);
    const Eigen::HouseholderQR<Eigen::MatrixXd> qr(gaussian_matrix(8, 5, rng));
    const Eigen::MatrixXd Q = qr.householderQ() * Eigen::MatrixXd::Identity(8, 5);
    ForwardModel fm = make_forward_model(Q);
    fm.v.setOnes();
    const MeasurementSet y = make_measurements(gaussian_matrix(8, 1, rng));
    const double lambda = 0.4;
    const L21Result res = solve_l21(fm, y, lambda);
    const Eigen::VectorXd b = Q.transpose() * y.Y.col(0);
    for (Index i = 0; i < 5; ++i) {
      const double expect = std::copysign(std::max(0.0, std::abs(b(i)) - lambda), b(i));
      CHECK(std::abs(res.X(i, 0) - expect) <= 1e-8);
    }
    CHECK(res.converged);
  }

  TEST_CASE("vanishing penalty approaches least squares") {
    RngStream rng(3, 0);
    const ForwardModel fm = make_forward_model(gaussian_matrix(12, 4, rng));
    const MeasurementSet y = make_measurements(gaussian_matrix(12, 3, rng));
    const Eigen::MatrixXd ls = fm.H.colPivHouseholderQr().solve(y.Y);
    const L21Result res = solve_l21(fm, y, 1e-7 * lambda_max(fm, y));
    CHECK((res.X - ls).norm() <= 1e-5 * ls.norm());
  }

  TEST_CASE("monotone history, KKT and scaling") {
    RngStream rng(4, 0);
    const ForwardModel fm = make_forward_model(gaussian_matrix(7, 12, rng));
    const MeasurementSet y = make_measurements(gaussian_matrix(7, 3, rng));
    const double lambda = 0.3 * lambda_max(fm, y);
    const L21Result res = solve_l21(fm, y, lambda);
    REQUIRE(res.converged);
    for (std::size_t k = 1; k < res.history.size(); ++k) CHECK(res.history[k] <= res.history[k - 1]);
    CHECK(res.history.back() == doctest::Approx(l21_objective(fm, y, res.X, lambda)).epsilon(1e-12));
    CHECK(kkt_residual(fm, y, res.X, lambda) <= 1e-6 * lambda);

    const MeasurementSet y3 = make_measurements(3.0 * y.Y);
    const L21Result scaled = solve_l21(fm, y3, 3.0 * lambda);
    CHECK((scaled.X - 3.0 * res.X).norm() <= 1e-6 * res.X.norm());

    const L21Result warm = solve_l21(fm, y, lambda, {}, &res.X);
    CHECK(warm.iterations <= res.iterations);
    CHECK((warm.X - res.X).norm() <= 1e-6 * res.X.norm());

    L21Options few;
    few.max_iters = 3;
    const L21Result capped = solve_l21(fm, y, lambda, few);
    CHECK(!capped.converged);
    CHECK(capped.iterations == 3);
  }

  TEST_CASE("spectral norm") {
    RngStream rng(5, 0);
    const Eigen::MatrixXd H = gaussian_matrix(9, 14, rng);
    const double exact = Eigen::JacobiSVD<Eigen::MatrixXd>(H).singularValues()(0);
    CHECK(squared_spectral_norm(H) == doctest::Approx(exact * exact).epsilon(1e-5));
  }

  TEST_CASE("discrepancy principle") {
    RngStream rng(6, 0);
    const Eigen::MatrixXd H = gaussian_matrix(20, 40, rng);
    const Problem prob = fixture::problem_with_support(H, {4, 17, 30}, 30, 30.0, 11);
    const MeasurementSet y = prob.measurements();
    const double target = 20.0 * 30.0 * prob.truth.sigma_sq_true;
    const DiscrepancyResult d = select_lambda_discrepancy(prob.fm, y, target);
    CHECK(d.within_tolerance);
    CHECK(std::abs(d.residual_energy - target) <= 0.1 * target);
    CHECK(d.solves <= 30);
    CHECK(d.residual_energy == doctest::Approx((prob.fm.H * d.solution.X - y.Y).squaredNorm()).epsilon(1e-12));
    CHECK(active_support(d.solution.X, 0.01) == prob.truth.z_true);

    const DiscrepancyResult all = select_lambda_discrepancy(prob.fm, y, y.Y.squaredNorm());
    CHECK(all.lambda == doctest::Approx(lambda_max(prob.fm, y)));
    CHECK(all.solution.X.norm() == 0.0);

    try {
      select_lambda_discrepancy(prob.fm, make_measurements(gaussian_matrix(20, 30, rng)), 0.0);
      FAIL("expected Bracketing");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::Bracketing);
    }
  }

  TEST_CASE("active support") {
    CHECK(active_support(Eigen::MatrixXd::Zero(3, 2)) == Support{0, 0, 0});
    Eigen::MatrixXd x(3, 2);
    x << 100, 0, 1, 0, 0, -0.5;
    CHECK(active_support(x) == Support{1, 0, 0});
    CHECK(active_support(x, 0.0) == Support{1, 1, 1});
    x(2, 1) = 0.0;
    CHECK(active_support(x, 0.0) == Support{1, 1, 0});
  }
}
