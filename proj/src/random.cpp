#include "mmv/random.hpp"

#include "mmv/error.hpp"

#include <cmath>
#include <numbers>
#include <string>

namespace mmv {

RngStream::RngStream(std::uint64_t seed, std::uint64_t stream_id)
    : seed_(seed), stream_id_(stream_id) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream_id),
                    static_cast<std::uint32_t>(stream_id >> 32), 0x6d6d7631u};
  engine_.seed(seq);
}

double RngStream::uniform() {
  // (k + 0.5) / 2^53 never hits 0 or 1.
  return (static_cast<double>(engine_() >> 11) + 0.5) * 0x1.0p-53;
}

double RngStream::normal() { return normal_(engine_); }

double RngStream::gamma_unit(double shape) {
  return gamma_(engine_, std::gamma_distribution<double>::param_type(shape, 1.0));
}

std::size_t RngStream::index(std::size_t n) {
  if (n == 0) throw Error(ErrorKind::BadParam, "index(0)");
  const std::uint64_t bound = static_cast<std::uint64_t>(n);
  const std::uint64_t limit = max() - (max() % bound);
  std::uint64_t x;
  do {
    x = engine_();
  } while (x >= limit);
  return static_cast<std::size_t>(x % bound);
}

namespace {

void require_positive(double v, const char* name) {
  if (!(v > 0.0) || !std::isfinite(v))
    throw Error(ErrorKind::BadParam, std::string(name) + " must be finite and > 0, got " +
                                         std::to_string(v));
}

// Density kernel of the standardized GIG law, h(x) = x^(lambda-1) exp(-omega/2 (x + 1/x)).
double gig_mode(double lambda, double omega) {
  if (lambda >= 1.0) return (std::sqrt((lambda - 1.0) * (lambda - 1.0) + omega * omega) + (lambda - 1.0)) / omega;
  return omega / (std::sqrt((1.0 - lambda) * (1.0 - lambda) + omega * omega) + (1.0 - lambda));
}

// Ratio-of-uniforms without mode shift (Hormann & Leydold 2014, alg. 1).
double gig_rou_noshift(RngStream& rng, double lambda, double omega) {
  const double t = 0.5 * (lambda - 1.0);
  const double s = 0.25 * omega;
  const double xm = gig_mode(lambda, omega);
  const double nc = t * std::log(xm) - s * (xm + 1.0 / xm);
  const double ym = ((lambda + 1.0) + std::sqrt((lambda + 1.0) * (lambda + 1.0) + omega * omega)) / omega;
  const double um = std::exp(0.5 * (lambda + 1.0) * std::log(ym) - s * (ym + 1.0 / ym) - nc);
  while (true) {
    const double u = um * rng.uniform();
    const double v = rng.uniform();
    const double x = u / v;
    if (std::log(v) <= t * std::log(x) - s * (x + 1.0 / x) - nc) return x;
  }
}

// Ratio-of-uniforms with mode shift (Dagpunar / Lehner form).
double gig_rou_shift(RngStream& rng, double lambda, double omega) {
  const double t = 0.5 * (lambda - 1.0);
  const double s = 0.25 * omega;
  const double xm = gig_mode(lambda, omega);
  const double nc = t * std::log(xm) - s * (xm + 1.0 / xm);

  // Extremes of (x - xm) sqrt(h(x)) are roots of x^3 + a x^2 + b x + c.
  const double a = -(2.0 * (lambda + 1.0) / omega + xm);
  const double b = 2.0 * (lambda - 1.0) * xm / omega - 1.0;
  const double c = xm;
  const double p = b - a * a / 3.0;
  const double q = 2.0 * a * a * a / 27.0 - a * b / 3.0 + c;
  const double fi = std::acos(-q / (2.0 * std::sqrt(-(p * p * p) / 27.0)));
  const double fak = 2.0 * std::sqrt(-p / 3.0);
  const double y1 = fak * std::cos(fi / 3.0) - a / 3.0;
  const double y2 = fak * std::cos(fi / 3.0 + 4.0 / 3.0 * std::numbers::pi) - a / 3.0;
  const double uplus = (y1 - xm) * std::exp(t * std::log(y1) - s * (y1 + 1.0 / y1) - nc);
  const double uminus = (y2 - xm) * std::exp(t * std::log(y2) - s * (y2 + 1.0 / y2) - nc);

  while (true) {
    const double u = uminus + rng.uniform() * (uplus - uminus);
    const double v = rng.uniform();
    const double x = u / v + xm;
    if (x <= 0.0) continue;
    if (std::log(v) <= t * std::log(x) - s * (x + 1.0 / x) - nc) return x;
  }
}

// Rejection from a three-piece hat for 0 <= lambda < 1 and small omega
// (Hormann & Leydold 2014, alg. 3).
double gig_small_omega(RngStream& rng, double lambda, double beta) {
  const double xm = gig_mode(lambda, beta);
  const double x0 = beta / (1.0 - lambda);
  const double xs = std::max(x0, 2.0 / beta);

  const double k1 = std::exp((lambda - 1.0) * std::log(xm) - 0.5 * beta * (xm + 1.0 / xm));
  const double area1 = k1 * x0;

  double k2 = 0.0, area2 = 0.0;
  if (x0 < 2.0 / beta) {
    k2 = std::exp(-beta);
    area2 = lambda == 0.0 ? k2 * std::log(2.0 / (beta * beta))
                          : k2 * (std::pow(2.0 / beta, lambda) - std::pow(x0, lambda)) / lambda;
  }
  const double k3 = std::pow(xs, lambda - 1.0);
  const double area3 = 2.0 * k3 * std::exp(-xs * beta / 2.0) / beta;
  const double total = area1 + area2 + area3;

  while (true) {
    double v = total * rng.uniform();
    double x, hx;
    if (v <= area1) {
      x = x0 * v / area1;
      hx = k1;
    } else if (v <= area1 + area2) {
      v -= area1;
      x = lambda == 0.0 ? beta * std::exp(v * std::exp(beta))
                        : std::pow(std::pow(x0, lambda) + v * lambda / k2, 1.0 / lambda);
      hx = k2 * std::pow(x, lambda - 1.0);
    } else {
      v -= area1 + area2;
      x = -2.0 / beta * std::log(std::exp(-xs * beta / 2.0) - v * beta / (2.0 * k3));
      hx = k3 * std::exp(-x * beta / 2.0);
    }
    const double u = rng.uniform() * hx;
    if (std::log(u) <= (lambda - 1.0) * std::log(x) - beta / 2.0 * (x + 1.0 / x)) return x;
  }
}

// Standardized GIG(lambda, omega, omega) for lambda >= 0, omega > 0.
double sample_standard_gig(RngStream& rng, double lambda, double omega) {
  if (lambda >= 1.0 || omega > 1.0) return gig_rou_shift(rng, lambda, omega);
  if (omega >= std::min(0.5, 2.0 / 3.0 * std::sqrt(1.0 - lambda)))
    return gig_rou_noshift(rng, lambda, omega);
  return gig_small_omega(rng, lambda, omega);
}

double log_bessel_k(double nu, double x) {
  nu = std::abs(nu);
  if (nu == 0.5) return 0.5 * std::log(std::numbers::pi / (2.0 * x)) - x;
  const double k = std::cyl_bessel_k(nu, x);
  if (!(k > 0.0) || !std::isfinite(k))
    throw Error(ErrorKind::NonFinite, "Bessel K out of range for nu=" + std::to_string(nu) +
                                          ", x=" + std::to_string(x));
  return std::log(k);
}

}  // namespace

void validate(const GigParams& p) {
  if (!std::isfinite(p.lambda) || !std::isfinite(p.chi) || !std::isfinite(p.psi) || p.chi < 0.0 ||
      p.psi < 0.0)
    throw Error(ErrorKind::BadParam, "GIG parameters must be finite with chi, psi >= 0");
  const bool ok = (p.lambda > 0.0 && p.psi > 0.0) || (p.psi > 0.0 && p.chi > 0.0) ||
                  (p.lambda < 0.0 && p.chi > 0.0);
  if (!ok)
    throw Error(ErrorKind::BadParam, "inadmissible GIG parameters (lambda=" +
                                         std::to_string(p.lambda) + ", chi=" + std::to_string(p.chi) +
                                         ", psi=" + std::to_string(p.psi) + ")");
}

double sample_gamma(RngStream& rng, double shape, double rate) {
  require_positive(shape, "gamma shape");
  require_positive(rate, "gamma rate");
  return rng.gamma_unit(shape) / rate;
}

double sample_inverse_gamma(RngStream& rng, double shape, double scale) {
  require_positive(shape, "inverse-gamma shape");
  require_positive(scale, "inverse-gamma scale");
  return scale / rng.gamma_unit(shape);
}

double sample_beta(RngStream& rng, double a, double b) {
  require_positive(a, "beta a");
  require_positive(b, "beta b");
  const double x = rng.gamma_unit(a);
  const double y = rng.gamma_unit(b);
  return x / (x + y);
}

double sample_inverse_gaussian(RngStream& rng, double mu, double shape) {
  require_positive(mu, "inverse-Gaussian mean");
  require_positive(shape, "inverse-Gaussian shape");
  const double nu = rng.normal();
  const double w = mu * nu * nu / (2.0 * shape);
  // Smaller root of the MSH quadratic, written without cancellation.
  const double x = mu / (1.0 + w + std::sqrt(w * w + 2.0 * w));
  return rng.uniform() <= mu / (mu + x) ? x : mu * mu / x;
}

double sample_gig(RngStream& rng, const GigParams& p) {
  validate(p);
  if (p.chi == 0.0) return sample_gamma(rng, p.lambda, p.psi / 2.0);
  if (p.psi == 0.0) return 1.0 / sample_gamma(rng, -p.lambda, p.chi / 2.0);
  if (p.lambda == 0.5) {
    // 1/X ~ GIG(-1/2, psi, chi), which is inverse Gaussian.
    return 1.0 / sample_inverse_gaussian(rng, std::sqrt(p.psi / p.chi), p.psi);
  }
  if (p.lambda < 0.0) return 1.0 / sample_gig(rng, {-p.lambda, p.psi, p.chi});
  const double omega = std::sqrt(p.psi * p.chi);
  const double alpha = std::sqrt(p.chi / p.psi);
  return alpha * sample_standard_gig(rng, p.lambda, omega);
}

Eigen::VectorXd sample_gaussian_vector(RngStream& rng, const Eigen::Ref<const Eigen::VectorXd>& mean,
                                       double variance) {
  require_positive(variance, "Gaussian variance");
  const double sd = std::sqrt(variance);
  Eigen::VectorXd out(mean.size());
  for (Eigen::Index t = 0; t < mean.size(); ++t) out(t) = mean(t) + sd * rng.normal();
  return out;
}

Eigen::VectorXd sample_correlated_gaussian(RngStream& rng,
                                           const Eigen::Ref<const Eigen::VectorXd>& mean,
                                           const Eigen::Ref<const Eigen::MatrixXd>& precision) {
  const auto n = mean.size();
  if (precision.rows() != n || precision.cols() != n)
    throw Error(ErrorKind::DimensionMismatch, "precision must be square and match the mean");
  const double scale = std::max(1.0, precision.cwiseAbs().maxCoeff());
  if ((precision - precision.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale)
    throw Error(ErrorKind::NotSPD, "precision is not symmetric");
  Eigen::LLT<Eigen::MatrixXd> llt(precision);
  if (llt.info() != Eigen::Success) throw Error(ErrorKind::NotSPD, "precision is not positive definite");
  Eigen::VectorXd e(n);
  for (Eigen::Index i = 0; i < n; ++i) e(i) = rng.normal();
  // precision = L L^T, so L^-T e has covariance precision^-1.
  return mean + llt.matrixU().solve(e);
}

double gamma_log_pdf(double x, double shape, double rate) {
  if (!(x > 0.0)) return -std::numeric_limits<double>::infinity();
  return shape * std::log(rate) - std::lgamma(shape) + (shape - 1.0) * std::log(x) - rate * x;
}

double inverse_gamma_log_pdf(double x, double shape, double scale) {
  if (!(x > 0.0)) return -std::numeric_limits<double>::infinity();
  return shape * std::log(scale) - std::lgamma(shape) - (shape + 1.0) * std::log(x) - scale / x;
}

double gig_log_pdf(double x, const GigParams& p) {
  validate(p);
  if (!(x > 0.0)) return -std::numeric_limits<double>::infinity();
  if (p.chi == 0.0) return gamma_log_pdf(x, p.lambda, p.psi / 2.0);
  if (p.psi == 0.0) return inverse_gamma_log_pdf(x, -p.lambda, p.chi / 2.0);
  const double omega = std::sqrt(p.psi * p.chi);
  const double log_norm = 0.5 * p.lambda * std::log(p.psi / p.chi) - std::log(2.0) -
                          log_bessel_k(p.lambda, omega);
  return log_norm + (p.lambda - 1.0) * std::log(x) - 0.5 * (p.psi * x + p.chi / x);
}

double gig_mean(const GigParams& p) {
  validate(p);
  if (p.chi == 0.0) return 2.0 * p.lambda / p.psi;
  if (p.psi == 0.0) {
    if (p.lambda >= -1.0) return std::numeric_limits<double>::infinity();
    return (p.chi / 2.0) / (-p.lambda - 1.0);
  }
  const double omega = std::sqrt(p.psi * p.chi);
  const double alpha = std::sqrt(p.chi / p.psi);
  if (p.lambda == 0.5) return alpha * (1.0 + 1.0 / omega);
  return alpha * std::exp(log_bessel_k(p.lambda + 1.0, omega) - log_bessel_k(p.lambda, omega));
}

}  // namespace mmv
