#include "mmv/l21.hpp"

#include "mmv/error.hpp"

#include <algorithm>
#include <cmath>

namespace mmv {

namespace {

Eigen::VectorXd penalty_weights(const ForwardModel& fm) { return fm.v.cwiseSqrt(); }

double penalty(const Eigen::MatrixXd& X, const Eigen::VectorXd& w) {
  return w.dot(X.rowwise().norm());
}

// Row-wise block soft threshold with per-row thresholds `thresh`.
void block_soft_threshold(Eigen::MatrixXd& X, const Eigen::VectorXd& thresh) {
  for (Index i = 0; i < X.rows(); ++i) {
    const double nrm = X.row(i).norm();
    if (nrm <= thresh(i))
      X.row(i).setZero();
    else
      X.row(i) *= 1.0 - thresh(i) / nrm;
  }
}

}  // namespace

double l21_objective(const ForwardModel& fm, const MeasurementSet& y, const Eigen::MatrixXd& X, double lambda) {
  return 0.5 * (fm.H * X - y.Y).squaredNorm() + lambda * penalty(X, penalty_weights(fm));
}

double squared_spectral_norm(const Eigen::MatrixXd& H, double rel_tol) {
  Eigen::VectorXd u(H.cols());
  for (Index j = 0; j < u.size(); ++j) u(j) = 1.0 + 1.0 / static_cast<double>(j + 1);
  u.normalize();
  double est = 0.0;
  for (int k = 0; k < 10000; ++k) {
    Eigen::VectorXd w = H.transpose() * (H * u);
    const double next = w.norm();
    if (next == 0.0) return 0.0;
    u = w / next;
    if (std::abs(next - est) <= rel_tol * next) return next;
    est = next;
  }
  return est;
}

double lambda_max(const ForwardModel& fm, const MeasurementSet& y) {
  check_compatible(fm, y);
  const Eigen::MatrixXd corr = fm.H.transpose() * y.Y;
  return (corr.rowwise().norm().array() / penalty_weights(fm).array()).maxCoeff();
}

L21Result solve_l21(const ForwardModel& fm, const MeasurementSet& y, double lambda, const L21Options& opts,
                    const Eigen::MatrixXd* warm_start) {
  check_compatible(fm, y);
  if (!(lambda > 0.0) || !std::isfinite(lambda)) throw Error(ErrorKind::BadParam, "lambda must be finite and > 0");
  if (!(opts.tol > 0.0)) throw Error(ErrorKind::BadParam, "tol must be > 0");
  if (opts.max_iters < 1) throw Error(ErrorKind::BadParam, "max_iters must be >= 1");

  const Index n = fm.sources();
  const Index t = y.samples();
  const Eigen::VectorXd w = penalty_weights(fm);
  // Slight inflation keeps the step at or below 1/L despite the power-iteration tolerance.
  const double lip = squared_spectral_norm(fm.H, opts.power_tol) * (1.0 + 10.0 * opts.power_tol);
  const double step = 1.0 / lip;
  const Eigen::VectorXd thresh = (lambda * step) * w;
  // Twice the gradient-mapping norm bounds the optimality violation of the new iterate.
  const double kkt_scale = 0.5 * opts.kkt_tol * lambda * w.minCoeff();

  L21Result res;
  res.lambda = lambda;
  Eigen::MatrixXd x = Eigen::MatrixXd::Zero(n, t);
  if (warm_start) {
    if (warm_start->rows() != n || warm_start->cols() != t)
      throw Error(ErrorKind::DimensionMismatch, "warm start must be N x T");
    x = *warm_start;
  }
  Eigen::MatrixXd hx = fm.H * x;
  double f_x = 0.5 * (hx - y.Y).squaredNorm() + lambda * penalty(x, w);

  Eigen::MatrixXd yk = x, hy = hx;
  Eigen::MatrixXd x_next(n, t), hx_next(fm.sensors(), t);
  double momentum = 1.0;

  for (long k = 0; k < opts.max_iters; ++k) {
    x_next = yk - step * (fm.H.transpose() * (hy - y.Y));
    block_soft_threshold(x_next, thresh);
    double mapping = (x_next - yk).norm() * lip;
    hx_next.noalias() = fm.H * x_next;
    double f_next = 0.5 * (hx_next - y.Y).squaredNorm() + lambda * penalty(x_next, w);

    bool restarted = false;
    if (f_next > f_x) {
      // Function-value restart: drop momentum and take a plain proximal step from x.
      restarted = true;
      momentum = 1.0;
      x_next = x - step * (fm.H.transpose() * (hx - y.Y));
      block_soft_threshold(x_next, thresh);
      mapping = (x_next - x).norm() * lip;
      hx_next.noalias() = fm.H * x_next;
      f_next = 0.5 * (hx_next - y.Y).squaredNorm() + lambda * penalty(x_next, w);
      if (f_next > f_x) {
        // No descent possible at this precision.
        res.history.push_back(f_x);
        res.iterations = k + 1;
        res.converged = true;
        break;
      }
    }

    const double m_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * momentum * momentum));
    const double beta = (momentum - 1.0) / m_next;
    yk = x_next + beta * (x_next - x);
    hy = hx_next + beta * (hx_next - hx);
    momentum = m_next;

    const double change = f_x - f_next;
    x.swap(x_next);
    hx.swap(hx_next);
    f_x = f_next;
    res.history.push_back(f_x);
    res.iterations = k + 1;
    const bool stalled = change <= opts.tol * std::max(1.0, std::abs(f_x));
    if (!restarted && stalled && (mapping <= kkt_scale || change == 0.0)) {
      res.converged = true;
      break;
    }
  }
  res.X = std::move(x);
  return res;
}

DiscrepancyResult select_lambda_discrepancy(const ForwardModel& fm, const MeasurementSet& y, double noise_energy,
                                            const DiscrepancyOptions& opts) {
  check_compatible(fm, y);
  if (!(noise_energy >= 0.0) || !std::isfinite(noise_energy))
    throw Error(ErrorKind::BadParam, "noise energy must be finite and >= 0");
  if (opts.max_solves < 2) throw Error(ErrorKind::BadParam, "max_solves must be >= 2");

  const double band = opts.rel_tol * noise_energy;
  auto residual_of = [&](const Eigen::MatrixXd& X) { return (fm.H * X - y.Y).squaredNorm(); };

  DiscrepancyResult out;
  const double hi0 = lambda_max(fm, y);
  const double y_energy = y.Y.squaredNorm();
  if (!(hi0 > 0.0)) throw Error(ErrorKind::BadParam, "Y is orthogonal to every column of H");
  if (y_energy <= noise_energy + band) {
    out.lambda = hi0;
    out.solution.X = Eigen::MatrixXd::Zero(fm.sources(), y.samples());
    out.solution.lambda = hi0;
    out.solution.converged = true;
    out.residual_energy = y_energy;
    out.within_tolerance = y_energy >= noise_energy - band;
    return out;
  }

  double lo = hi0 * opts.lambda_floor;
  L21Result sol = solve_l21(fm, y, lo, opts.solver);
  out.solves = 1;
  double res_lo = residual_of(sol.X);
  if (res_lo > noise_energy + band)
    throw Error(ErrorKind::Bracketing, "residual at the smallest lambda (" + std::to_string(res_lo) +
                                           ") stays above the noise energy " + std::to_string(noise_energy));

  auto keep = [&](double lambda, L21Result&& s, double r) {
    if (out.solves == 1 || std::abs(r - noise_energy) < std::abs(out.residual_energy - noise_energy)) {
      out.lambda = lambda;
      out.solution = std::move(s);
      out.residual_energy = r;
    }
  };
  const Eigen::MatrixXd lo_x = sol.X;
  keep(lo, std::move(sol), res_lo);
  if (std::abs(res_lo - noise_energy) <= band) {
    out.within_tolerance = true;
    return out;
  }

  double hi = hi0;
  Eigen::MatrixXd warm = lo_x;
  while (out.solves < opts.max_solves) {
    const double mid = std::sqrt(lo * hi);
    L21Result s = solve_l21(fm, y, mid, opts.solver, &warm);
    ++out.solves;
    const double r = residual_of(s.X);
    warm = s.X;
    keep(mid, std::move(s), r);
    if (std::abs(r - noise_energy) <= band) {
      out.within_tolerance = true;
      break;
    }
    (r < noise_energy ? lo : hi) = mid;
  }
  return out;
}

Support active_support(const Eigen::MatrixXd& X, double threshold) {
  if (!(threshold >= 0.0)) throw Error(ErrorKind::BadParam, "threshold must be >= 0");
  const Eigen::VectorXd energy = X.rowwise().squaredNorm();
  Support z(static_cast<std::size_t>(X.rows()), 0);
  if (X.rows() == 0) return z;
  const double cut = threshold * energy.maxCoeff();
  for (Index i = 0; i < X.rows(); ++i) z[static_cast<std::size_t>(i)] = energy(i) > cut ? 1 : 0;
  return z;
}

}  // namespace mmv
