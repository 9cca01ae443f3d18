#include <doctest.h>

#include "instances.hpp"

#include <mmv/error.hpp>
#include <mmv/gibbs.hpp>
#include <mmv/model.hpp>

#include <cmath>
#include <limits>
#include <numeric>

using namespace mmv;

TEST_SUITE("model-core") {
  TEST_CASE("depth weights") {
    CHECK(compute_depth_weights(Eigen::MatrixXd::Identity(2, 2)).isApprox(Eigen::Vector2d(1, 1)));

    Eigen::MatrixXd h(2, 1);
    h << 3, 4;
    CHECK(compute_depth_weights(h)(0) == doctest::Approx(25.0));
    CHECK(compute_depth_weights(h, DepthWeight::Norm)(0) == doctest::Approx(5.0));

    RngStream rng(11, 0);
    Eigen::MatrixXd r(5, 8);
    for (Index i = 0; i < r.size(); ++i) r.data()[i] = rng.normal();
    const Eigen::VectorXd v = compute_depth_weights(r);
    for (Index j = 0; j < 8; ++j) {
      double acc = 0.0;
      for (Index m = 0; m < 5; ++m) acc += r(m, j) * r(m, j);
      CHECK(v(j) == doctest::Approx(acc).epsilon(1e-14));
    }

    Eigen::MatrixXd z = Eigen::MatrixXd::Ones(3, 3);
    z.col(1).setZero();
    try {
      compute_depth_weights(z);
      FAIL("expected ZeroColumn");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::ZeroColumn);
    }
  }

  TEST_CASE("loaders validate dimensions and finiteness") {
    CHECK_THROWS_AS(make_forward_model(Eigen::MatrixXd(0, 3)), Error);
    Eigen::MatrixXd bad = Eigen::MatrixXd::Ones(2, 2);
    bad(0, 1) = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(make_forward_model(bad), Error);
    CHECK_THROWS_AS(make_measurements(bad), Error);
    CHECK_THROWS_AS(make_measurements(Eigen::MatrixXd::Ones(2, 2), -1.0), Error);
    const ForwardModel fm = make_forward_model(Eigen::MatrixXd::Ones(3, 2));
    const MeasurementSet y = make_measurements(Eigen::MatrixXd::Ones(2, 4));
    try {
      check_compatible(fm, y);
      FAIL("expected DimensionMismatch");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::DimensionMismatch);
    }
  }

  TEST_CASE("refresh_residual") {
    RngStream rng(3, 0);
    Eigen::MatrixXd H(4, 6), Y(4, 3);
    for (Index i = 0; i < H.size(); ++i) H.data()[i] = rng.normal();
    for (Index i = 0; i < Y.size(); ++i) Y.data()[i] = rng.normal();
    const ForwardModel fm = make_forward_model(H);
    const MeasurementSet y = make_measurements(Y);

    LatentState s = fixture::random_state(fm, y, rng, 0.0);
    s.residual.setZero();
    refresh_residual(s, fm, y);
    CHECK(s.residual.isApprox(Y));

    s = fixture::random_state(fm, y, rng, 0.6);
    s.residual.setZero();
    const double drift = refresh_residual(s, fm, y);
    const Eigen::MatrixXd dense = Y - H * s.X;
    CHECK((s.residual - dense).cwiseAbs().maxCoeff() < 1e-13);
    CHECK(drift == doctest::Approx(dense.cwiseAbs().maxCoeff()));

    s.z.assign(6, 0);
    try {
      refresh_residual(s, fm, y);
      FAIL("expected InvariantViolation");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::InvariantViolation);
    }
  }

  TEST_CASE("joint log density") {
    RngStream rng(5, 0);
    HyperPriorConfig cfg;
    for (int rep = 0; rep < 10; ++rep) {
      Eigen::MatrixXd H(2, 2), Y(2, 1);
      for (Index i = 0; i < H.size(); ++i) H.data()[i] = rng.normal();
      for (Index i = 0; i < Y.size(); ++i) Y.data()[i] = rng.normal();
      const ForwardModel fm = make_forward_model(H);
      const MeasurementSet y = make_measurements(Y);
      const LatentState s1 = fixture::random_state(fm, y, rng);
      const LatentState s2 = fixture::random_state(fm, y, rng);
      const double impl = joint_log_density(s1, fm, y, cfg) - joint_log_density(s2, fm, y, cfg);
      const double lit = oracle::literal_joint_log_density(fixture::to_tiny(fm, y, s1), s1.tau_sq, 1.0, 1.0) -
                         oracle::literal_joint_log_density(fixture::to_tiny(fm, y, s2), s2.tau_sq, 1.0, 1.0);
      CHECK(std::abs(impl - lit) <= 1e-12 * std::max(1.0, std::abs(lit)));
    }
  }

  TEST_CASE("zero rows carry no likelihood term and omega = 0 is a boundary") {
    RngStream rng(8, 0);
    Eigen::MatrixXd H = Eigen::MatrixXd::Random(3, 4);
    const ForwardModel fm = make_forward_model(H);
    const MeasurementSet y = make_measurements(Eigen::MatrixXd::Random(3, 2));
    LatentState s = fixture::random_state(fm, y, rng, 0.5);
    s.z = {1, 0, 1, 0};
    s.X.row(1).setZero();
    s.X.row(3).setZero();
    LatentState scaled = s;
    scaled.X.row(1) *= 5.0;
    scaled.X.row(3) *= 5.0;
    CHECK(joint_log_density(s, fm, y, {}) == joint_log_density(scaled, fm, y, {}));

    s.omega = 0.0;
    CHECK(joint_log_density(s, fm, y, {}) == -std::numeric_limits<double>::infinity());
  }

  TEST_CASE("joint log density is permutation invariant") {
    RngStream rng(9, 0);
    Eigen::MatrixXd H(4, 6), Y(4, 3);
    for (Index i = 0; i < H.size(); ++i) H.data()[i] = rng.normal();
    for (Index i = 0; i < Y.size(); ++i) Y.data()[i] = rng.normal();
    const ForwardModel fm = make_forward_model(H);
    const MeasurementSet y = make_measurements(Y);
    const LatentState s = fixture::random_state(fm, y, rng);
    std::vector<Index> perm(6);
    std::iota(perm.begin(), perm.end(), 0);
    std::swap(perm[0], perm[4]);
    std::swap(perm[1], perm[5]);
    Eigen::MatrixXd Hp(4, 6);
    LatentState sp = s;
    for (Index k = 0; k < 6; ++k) {
      Hp.col(k) = H.col(perm[k]);
      sp.X.row(k) = s.X.row(perm[k]);
      sp.z[k] = s.z[perm[k]];
      sp.tau_sq(k) = s.tau_sq(perm[k]);
    }
    const ForwardModel fmp = make_forward_model(Hp);
    CHECK(joint_log_density(s, fm, y, {}) == doctest::Approx(joint_log_density(sp, fmp, y, {})).epsilon(1e-12));
  }

  TEST_CASE("residual cache drift stays tiny over 10 N row updates") {
    RngStream rng(10, 0);
    const Index M = 100, N = 40, T = 100;
    Eigen::MatrixXd H(M, N), Y(M, T);
    for (Index i = 0; i < H.size(); ++i) H.data()[i] = rng.normal();
    for (Index i = 0; i < Y.size(); ++i) Y.data()[i] = 3.0 * rng.normal();
    const ForwardModel fm = make_forward_model(H);
    const MeasurementSet y = make_measurements(Y);
    LatentState s = initialize_state(fm, y, {}, rng);
    for (Index k = 0; k < 10 * N; ++k) sample_row(k % N, s, fm, rng);
    const double drift = refresh_residual(s, fm, y);
    CHECK(drift <= 1e-8 * Y.cwiseAbs().maxCoeff());
  }
}
