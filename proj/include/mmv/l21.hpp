#pragma once

#include "mmv/model.hpp"

#include <vector>

namespace mmv {

/// Weighted group lasso:
///   minimize 1/2 ||HX - Y||_F^2 + lambda * sum_i sqrt(v_i) ||x_i||_2
/// solved by FISTA with function-value restart and row-wise block
/// soft-thresholding.
struct L21Options {
  long max_iters = 20000;
  /// Stop when |F_k - F_{k+1}| <= tol * max(1, |F_k|) on a non-restarted step.
  double tol = 1e-12;
  /// ...and the subgradient optimality violation is at most kkt_tol * lambda * min_i sqrt(v_i).
  double kkt_tol = 1e-7;
  /// Relative tolerance of the power iteration for ||H||_2^2.
  double power_tol = 1e-6;
};

struct L21Result {
  Eigen::MatrixXd X;
  double lambda = 0.0;
  std::vector<double> history;  // objective after every iteration, non-increasing
  long iterations = 0;
  bool converged = false;       // false: max_iters hit, X is the best iterate
};

double l21_objective(const ForwardModel& fm, const MeasurementSet& y, const Eigen::MatrixXd& X, double lambda);

/// Largest eigenvalue of H^T H by power iteration.
double squared_spectral_norm(const Eigen::MatrixXd& H, double rel_tol = 1e-6);

/// Smallest lambda for which X = 0 is optimal: max_i ||h_i^T Y|| / sqrt(v_i).
double lambda_max(const ForwardModel& fm, const MeasurementSet& y);

/// `warm_start` (N x T) seeds the iterations when given.
L21Result solve_l21(const ForwardModel& fm, const MeasurementSet& y, double lambda, const L21Options& opts = {},
                    const Eigen::MatrixXd* warm_start = nullptr);

struct DiscrepancyOptions {
  double rel_tol = 0.1;
  int max_solves = 30;
  /// Lower end of the bracket as a fraction of lambda_max.
  double lambda_floor = 1e-6;
  L21Options solver;
};

struct DiscrepancyResult {
  double lambda = 0.0;
  L21Result solution;
  double residual_energy = 0.0;
  int solves = 0;
  bool within_tolerance = false;
};

/// Bisection on log lambda until |‖HX - Y‖^2 - noise_energy| <= rel_tol *
/// noise_energy. Throws Bracketing if the smallest lambda still leaves the
/// residual above the target. When even X = 0 is below the target,
/// lambda_max is returned.
DiscrepancyResult select_lambda_discrepancy(const ForwardModel& fm, const MeasurementSet& y, double noise_energy,
                                            const DiscrepancyOptions& opts = {});

/// z_i = 1 iff ||x_i||^2 > threshold * max_j ||x_j||^2.
Support active_support(const Eigen::MatrixXd& X, double threshold = 1e-4);

}  // namespace mmv
