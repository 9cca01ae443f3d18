#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <random>

namespace mmv {

/// One independent pseudo-random stream. Streams are keyed by a master seed
/// and a stream id (the chain index for sampler chains); the engine is a
/// 64-bit Mersenne Twister seeded through std::seed_seq from both keys.
/// Not thread-safe: each stream has exactly one owner.
class RngStream {
 public:
  using result_type = std::uint64_t;

  RngStream(std::uint64_t seed, std::uint64_t stream_id);

  static constexpr result_type min() { return std::mt19937_64::min(); }
  static constexpr result_type max() { return std::mt19937_64::max(); }
  result_type operator()() { return engine_(); }

  /// Uniform on the open interval (0, 1), 53-bit resolution.
  double uniform();
  /// Standard normal.
  double normal();
  /// Gamma(shape, rate = 1).
  double gamma_unit(double shape);
  /// Uniform integer in [0, n).
  std::size_t index(std::size_t n);

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream_id() const { return stream_id_; }

 private:
  std::uint64_t seed_;
  std::uint64_t stream_id_;
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::gamma_distribution<double> gamma_{1.0, 1.0};
};

/// Parameters of the generalized inverse Gaussian law with density
/// proportional to x^(lambda-1) exp(-(psi x + chi / x) / 2) on x > 0.
struct GigParams {
  double lambda = 0.5;
  double chi = 1.0;
  double psi = 1.0;
};

/// Throws BadParam unless the parameters define a proper GIG law.
void validate(const GigParams& p);

double sample_gamma(RngStream& rng, double shape, double rate);
double sample_inverse_gamma(RngStream& rng, double shape, double scale);
double sample_beta(RngStream& rng, double a, double b);
/// Inverse Gaussian with mean `mu` and shape `shape` (Michael-Schucany-Haas).
double sample_inverse_gaussian(RngStream& rng, double mu, double shape);
double sample_gig(RngStream& rng, const GigParams& p);

/// Draw from N(mean, variance * I).
Eigen::VectorXd sample_gaussian_vector(RngStream& rng, const Eigen::Ref<const Eigen::VectorXd>& mean,
                                       double variance);

/// Draw from N(mean, precision^-1). The precision must be symmetric
/// positive definite (NotSPD otherwise).
Eigen::VectorXd sample_correlated_gaussian(RngStream& rng,
                                           const Eigen::Ref<const Eigen::VectorXd>& mean,
                                           const Eigen::Ref<const Eigen::MatrixXd>& precision);

// Log densities, normalized.
double gamma_log_pdf(double x, double shape, double rate);
double inverse_gamma_log_pdf(double x, double shape, double scale);
double gig_log_pdf(double x, const GigParams& p);
/// Mean of the GIG law, via Bessel-function ratios.
double gig_mean(const GigParams& p);

}  // namespace mmv
