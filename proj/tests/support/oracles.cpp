#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

namespace oracle {

double simpson(const std::function<double(double)>& f, double lo, double hi, int n) {
  if (n % 2) ++n;
  const double h = (hi - lo) / n;
  double s = f(lo) + f(hi);
  for (int k = 1; k < n; ++k) s += (k % 2 ? 4.0 : 2.0) * f(lo + k * h);
  return s * h / 3.0;
}

double log_sum_exp(const std::vector<double>& v) {
  double m = -std::numeric_limits<double>::infinity();
  for (double x : v) m = std::max(m, x);
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (double x : v) s += std::exp(x - m);
  return m + std::log(s);
}

namespace {

std::vector<double> simpson_weights(int n) {
  std::vector<double> w(static_cast<std::size_t>(n) + 1);
  for (int k = 0; k <= n; ++k) w[static_cast<std::size_t>(k)] = (k == 0 || k == n) ? 1.0 : (k % 2 ? 4.0 : 2.0);
  return w;
}

}  // namespace

double log_integral_box(const std::function<double(const Eigen::VectorXd&)>& log_f, const Eigen::VectorXd& lo,
                        const Eigen::VectorXd& hi, int n) {
  if (n % 2) ++n;
  const long dim = lo.size();
  if (dim == 0) return log_f(Eigen::VectorXd());
  const auto w = simpson_weights(n);
  const Eigen::VectorXd h = (hi - lo) / n;
  std::vector<double> terms;
  Eigen::VectorXd x(dim);
  if (dim == 1) {
    terms.reserve(w.size());
    for (int k = 0; k <= n; ++k) {
      x(0) = lo(0) + k * h(0);
      terms.push_back(log_f(x) + std::log(w[static_cast<std::size_t>(k)]));
    }
    return log_sum_exp(terms) + std::log(h(0) / 3.0);
  }
  if (dim == 2) {
    terms.reserve(w.size() * w.size());
    for (int j = 0; j <= n; ++j)
      for (int k = 0; k <= n; ++k) {
        x(0) = lo(0) + j * h(0);
        x(1) = lo(1) + k * h(1);
        terms.push_back(log_f(x) + std::log(w[static_cast<std::size_t>(j)] * w[static_cast<std::size_t>(k)]));
      }
    return log_sum_exp(terms) + std::log(h(0) / 3.0) + std::log(h(1) / 3.0);
  }
  throw std::invalid_argument("log_integral_box supports up to two dimensions");
}

double collapsed_log_integral(const TinyProblem& p, const std::vector<long>& rows,
                              const std::vector<std::uint8_t>& z_r, const std::vector<double>& tau_r, int n) {
  const long N = p.H.cols();
  const double s2 = p.sigma_sq;
  const double shape = 0.5 * (static_cast<double>(p.Y.cols()) + 1.0);

  // Fixed part of the fit: rows outside r at their current values.
  Eigen::VectorXd base = p.Y.col(0);
  for (long i = 0; i < N; ++i) {
    if (std::find(rows.begin(), rows.end(), i) != rows.end()) continue;
    if (p.z[static_cast<std::size_t>(i)]) base -= p.H.col(i) * p.X(i, 0);
  }
  std::vector<long> act;
  std::vector<double> act_tau;
  double log_const = 0.0;
  for (std::size_t k = 0; k < rows.size(); ++k) {
    const double rate = 0.5 * p.v(rows[k]) * p.a;
    const double t = tau_r[k];
    log_const += shape * std::log(rate) - std::lgamma(shape) + (shape - 1.0) * std::log(t) - rate * t;
    if (z_r[k]) {
      log_const += std::log(p.omega);
      act.push_back(rows[k]);
      act_tau.push_back(t);
    } else {
      log_const += std::log1p(-p.omega);
    }
  }

  auto log_f = [&](const Eigen::VectorXd& x) {
    Eigen::VectorXd res = base;
    double lp = 0.0;
    for (std::size_t k = 0; k < act.size(); ++k) {
      res -= p.H.col(act[k]) * x(static_cast<long>(k));
      const double var = s2 * act_tau[k];
      lp += -0.5 * std::log(2.0 * std::numbers::pi * var) - 0.5 * x(static_cast<long>(k)) * x(static_cast<long>(k)) / var;
    }
    return lp - 0.5 * res.squaredNorm() / s2;
  };

  // Box around the maximizer of the Gaussian integrand, 14 standard deviations wide.
  const long d = static_cast<long>(act.size());
  Eigen::VectorXd lo(d), hi(d);
  if (d > 0) {
    Eigen::MatrixXd prec(d, d);
    Eigen::VectorXd rhs(d);
    for (long j = 0; j < d; ++j) {
      rhs(j) = p.H.col(act[static_cast<std::size_t>(j)]).dot(base) / s2;
      for (long k = 0; k < d; ++k)
        prec(j, k) = p.H.col(act[static_cast<std::size_t>(j)]).dot(p.H.col(act[static_cast<std::size_t>(k)])) / s2;
      prec(j, j) += 1.0 / (s2 * act_tau[static_cast<std::size_t>(j)]);
    }
    const Eigen::VectorXd center = prec.ldlt().solve(rhs);
    const Eigen::MatrixXd cov = prec.inverse();
    for (long j = 0; j < d; ++j) {
      const double half = 14.0 * std::sqrt(cov(j, j));
      lo(j) = center(j) - half;
      hi(j) = center(j) + half;
    }
  }
  return log_const + log_integral_box(log_f, lo, hi, n);
}

double active_probability_quadrature(const TinyProblem& p, long i, double tau_sq) {
  const double s2 = p.sigma_sq;
  Eigen::VectorXd r = p.Y.col(0);
  for (long j = 0; j < p.H.cols(); ++j)
    if (j != i && p.z[static_cast<std::size_t>(j)]) r -= p.H.col(j) * p.X(j, 0);
  const Eigen::VectorXd h = p.H.col(i);
  const double var = s2 * tau_sq;
  // Integrate exp of the log integrand relative to its value at the center.
  const double hh = h.squaredNorm();
  const double center = h.dot(r) / (hh + 1.0 / tau_sq);
  const double sd = std::sqrt(s2 / (hh + 1.0 / tau_sq));
  auto log_g = [&](double x) {
    return -0.5 * std::log(2.0 * std::numbers::pi * var) - 0.5 * x * x / var - 0.5 * (r - h * x).squaredNorm() / s2;
  };
  const double ref = log_g(center);
  const double integral =
      simpson([&](double x) { return std::exp(log_g(x) - ref); }, center - 14.0 * sd, center + 14.0 * sd, 4000);
  const double log_k1 = std::log(p.omega) + ref + std::log(integral);
  const double log_k0 = std::log1p(-p.omega) - 0.5 * r.squaredNorm() / s2;
  const double m = std::max(log_k0, log_k1);
  return std::exp(log_k1 - m) / (std::exp(log_k0 - m) + std::exp(log_k1 - m));
}

double literal_joint_log_density(const TinyProblem& p, const Eigen::VectorXd& tau_sq, double alpha, double beta) {
  const long M = p.H.rows(), N = p.H.cols(), T = p.Y.cols();
  const double pi = std::numbers::pi;
  double lp = 0.0;
  for (long t = 0; t < T; ++t)
    for (long m = 0; m < M; ++m) {
      double fit = 0.0;
      for (long i = 0; i < N; ++i) fit += p.H(m, i) * p.X(i, t);
      const double e = p.Y(m, t) - fit;
      lp += std::log(1.0 / std::sqrt(2.0 * pi * p.sigma_sq)) - e * e / (2.0 * p.sigma_sq);
    }
  for (long i = 0; i < N; ++i) {
    if (p.z[static_cast<std::size_t>(i)]) {
      lp += std::log(p.omega);
      for (long t = 0; t < T; ++t) {
        const double var = p.sigma_sq * tau_sq(i);
        lp += std::log(1.0 / std::sqrt(2.0 * pi * var)) - p.X(i, t) * p.X(i, t) / (2.0 * var);
      }
    } else {
      lp += std::log(1.0 - p.omega);
    }
    const double k = (static_cast<double>(T) + 1.0) / 2.0;
    const double rate = p.v(i) * p.a / 2.0;
    lp += std::log(std::pow(rate, k) / std::tgamma(k) * std::pow(tau_sq(i), k - 1.0) * std::exp(-rate * tau_sq(i)));
  }
  lp += std::log(1.0 / p.sigma_sq);
  lp += std::log(std::pow(beta, alpha) / std::tgamma(alpha) * std::pow(p.a, alpha - 1.0) * std::exp(-beta * p.a));
  return lp;
}

GigCdf::GigCdf(double lambda, double chi, double psi) {
  // Density in u = log x is exp(lambda u - (psi e^u + chi e^-u) / 2).
  auto log_g = [&](double u) { return lambda * u - 0.5 * (psi * std::exp(u) + chi * std::exp(-u)); };
  double mode_u = 0.0;
  {
    double lo = -60.0, hi = 60.0;
    for (int k = 0; k < 200; ++k) {
      const double mid = 0.5 * (lo + hi);
      const double slope = lambda - 0.5 * (psi * std::exp(mid) - chi * std::exp(-mid));
      (slope > 0 ? lo : hi) = mid;
    }
    mode_u = 0.5 * (lo + hi);
  }
  const double ref = log_g(mode_u);
  u_lo_ = mode_u - 40.0;
  const int n = 80000;
  du_ = 80.0 / n;
  cdf_.assign(static_cast<std::size_t>(n) + 1, 0.0);
  double prev = std::exp(log_g(u_lo_) - ref);
  double acc = 0.0, first = 0.0;
  double prev_x = prev * std::exp(u_lo_);
  for (int k = 1; k <= n; ++k) {
    const double u = u_lo_ + k * du_;
    const double cur = std::exp(log_g(u) - ref);
    const double cur_x = cur * std::exp(u);
    acc += 0.5 * (prev + cur) * du_;
    first += 0.5 * (prev_x + cur_x) * du_;
    cdf_[static_cast<std::size_t>(k)] = acc;
    prev = cur;
    prev_x = cur_x;
  }
  for (double& c : cdf_) c /= acc;
  mean_ = first / acc;
}

double GigCdf::operator()(double x) const {
  if (x <= 0.0) return 0.0;
  const double pos = (std::log(x) - u_lo_) / du_;
  if (pos <= 0.0) return 0.0;
  const auto k = static_cast<std::size_t>(pos);
  if (k + 1 >= cdf_.size()) return 1.0;
  const double frac = pos - static_cast<double>(k);
  return cdf_[k] + frac * (cdf_[k + 1] - cdf_[k]);
}

std::vector<double> exact_support_posterior(const Eigen::MatrixXd& H, const Eigen::MatrixXd& Y,
                                            const Eigen::VectorXd& v, double alpha, double beta,
                                            double log_tau_step, double log_tau_range) {
  const long M = H.rows(), N = H.cols(), T = Y.cols();
  const double s = 0.5 * (static_cast<double>(T) + 1.0);
  const double half_mt = 0.5 * static_cast<double>(M * T);
  std::vector<double> grid;
  for (double u = -log_tau_range; u <= log_tau_range + 1e-12; u += log_tau_step) grid.push_back(u);
  const std::size_t G = grid.size();

  std::vector<double> log_post(std::size_t{1} << N);
  for (std::size_t mask = 0; mask < log_post.size(); ++mask) {
    std::vector<long> S;
    for (long i = 0; i < N; ++i)
      if (mask >> i & 1u) S.push_back(i);
    const auto k = static_cast<double>(S.size());
    const double log_beta_fn = std::lgamma(1.0 + k) + std::lgamma(1.0 + N - k) - std::lgamma(2.0 + N);
    const double log_a_part = alpha * std::log(beta) - std::lgamma(alpha) + std::lgamma(alpha + k * s);

    std::size_t total = 1;
    for (std::size_t q = 0; q < S.size(); ++q) total *= G;
    std::vector<double> terms;
    terms.reserve(total);
    std::vector<std::size_t> idx(S.size(), 0);
    for (std::size_t cell = 0; cell < total; ++cell) {
      std::size_t rem = cell;
      for (std::size_t q = 0; q < S.size(); ++q) {
        idx[q] = rem % G;
        rem /= G;
      }
      Eigen::MatrixXd C = Eigen::MatrixXd::Identity(M, M);
      double rate = beta;
      double lt = 0.0;
      for (std::size_t q = 0; q < S.size(); ++q) {
        const double u = grid[idx[q]];
        const double tau = std::exp(u);
        const long i = S[q];
        C += tau * H.col(i) * H.col(i).transpose();
        rate += 0.5 * v(i) * tau;
        // prior factor (v/2)^s tau^(s-1) / Gamma(s), times the Jacobian tau of u = log tau
        lt += s * std::log(0.5 * v(i)) + s * u - std::lgamma(s);
        const bool edge = idx[q] == 0 || idx[q] + 1 == G;
        lt += std::log(edge ? 0.5 * log_tau_step : log_tau_step);
      }
      const Eigen::LDLT<Eigen::MatrixXd> f(C);
      const double logdet = f.vectorD().array().log().sum();
      double Q = 0.0;
      for (long t = 0; t < T; ++t) Q += Y.col(t).dot(f.solve(Y.col(t)));
      lt += -(alpha + k * s) * std::log(rate) - 0.5 * static_cast<double>(T) * logdet - half_mt * std::log(0.5 * Q);
      terms.push_back(lt);
    }
    log_post[mask] = log_beta_fn + log_a_part + std::lgamma(half_mt) + log_sum_exp(terms);
  }
  const double norm = log_sum_exp(log_post);
  std::vector<double> out(log_post.size());
  for (std::size_t m = 0; m < out.size(); ++m) out[m] = std::exp(log_post[m] - norm);
  return out;
}

double batch_means_se(const std::vector<double>& x, int batches) {
  const std::size_t len = x.size() / static_cast<std::size_t>(batches);
  if (len == 0) throw std::invalid_argument("too few samples for batch means");
  std::vector<double> means;
  for (int b = 0; b < batches; ++b) {
    double m = 0.0;
    for (std::size_t k = 0; k < len; ++k) m += x[b * len + k];
    means.push_back(m / static_cast<double>(len));
  }
  double mu = 0.0;
  for (double m : means) mu += m;
  mu /= batches;
  double ss = 0.0;
  for (double m : means) ss += (m - mu) * (m - mu);
  return std::sqrt(ss / (batches - 1) / batches);
}

double ks_distance(std::vector<double> sample, const std::function<double(double)>& cdf) {
  std::sort(sample.begin(), sample.end());
  const double n = static_cast<double>(sample.size());
  double d = 0.0;
  for (std::size_t k = 0; k < sample.size(); ++k) {
    const double F = cdf(sample[k]);
    d = std::max({d, F - static_cast<double>(k) / n, static_cast<double>(k + 1) / n - F});
  }
  return d;
}

double total_variation(const std::vector<double>& p, const std::vector<double>& q) {
  double tv = 0.0;
  for (std::size_t k = 0; k < p.size(); ++k) tv += std::abs(p[k] - q[k]);
  return 0.5 * tv;
}

}  // namespace oracle
