#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <vector>

namespace mmv {

using Index = Eigen::Index;
using Support = std::vector<std::uint8_t>;

enum class DepthWeight { Norm, NormSquared };

/// Forward operator H (sensors x sources) with its per-source depth weights.
/// Immutable after construction; shared read-only across chains.
struct ForwardModel {
  Eigen::MatrixXd H;
  /// Depth weights v_i used by the tau^2 and a conditionals.
  Eigen::VectorXd v;
  /// (h^i)^T h^i, needed by the row conditionals whatever the depth weighting.
  Eigen::VectorXd col_sq_norm;

  Index sensors() const { return H.rows(); }
  Index sources() const { return H.cols(); }
};

/// v_i = ||h^i||^2 (default) or ||h^i||. Throws ZeroColumn for a zero column.
Eigen::VectorXd compute_depth_weights(const Eigen::MatrixXd& H,
                                      DepthWeight mode = DepthWeight::NormSquared);

/// Validates H (non-empty, finite, no zero columns) and fills the weights.
ForwardModel make_forward_model(Eigen::MatrixXd H, DepthWeight mode = DepthWeight::NormSquared);

struct MeasurementSet {
  Eigen::MatrixXd Y;
  std::optional<double> sample_rate_hz;

  Index sensors() const { return Y.rows(); }
  Index samples() const { return Y.cols(); }
};

MeasurementSet make_measurements(Eigen::MatrixXd Y, std::optional<double> sample_rate_hz = {});

/// Throws DimensionMismatch unless Y has as many rows as H.
void check_compatible(const ForwardModel& fm, const MeasurementSet& y);

/// Hyperprior parameters. `a ~ Gamma(alpha, beta)`. The noise variance gets
/// the Jeffreys prior 1/sigma^2 when sigma_shape == sigma_scale == 0, and a
/// proper InvGamma(sigma_shape, sigma_scale) otherwise.
struct HyperPriorConfig {
  double alpha = 1.0;
  double beta = 1.0;
  double sigma_shape = 0.0;
  double sigma_scale = 0.0;

  bool jeffreys_noise_prior() const { return sigma_shape == 0.0 && sigma_scale == 0.0; }
};

void validate(const HyperPriorConfig& cfg);

/// Complete sampler state of one chain.
struct LatentState {
  Eigen::MatrixXd X;         // N x T
  Support z;                 // N indicators
  Eigen::VectorXd tau_sq;    // N
  double sigma_sq = 1.0;
  double a = 1.0;
  double omega = 0.5;
  Eigen::MatrixXd residual;  // M x T cache of Y - H X

  Index sources() const { return X.rows(); }
  Index samples() const { return X.cols(); }
  Index support_size() const;
};

/// Throws InvariantViolation if some inactive row of X is not exactly zero
/// or some tau^2 is not finite and positive.
void check_state(const LatentState& state);

/// Y - H X computed from scratch, touching active rows only.
Eigen::MatrixXd compute_residual(const LatentState& state, const ForwardModel& fm,
                                 const MeasurementSet& y);

/// Recomputes the cached residual and returns the max-abs drift between the
/// old cache and the fresh value.
double refresh_residual(LatentState& state, const ForwardModel& fm, const MeasurementSet& y);

/// Log of the unnormalized joint posterior of (X, z, tau^2, sigma^2, a, omega)
/// given Y. Returns -inf on the boundary of the support (e.g. omega = 0 with
/// an active row); throws NonFinite for NaN or +inf. By default the residual
/// is recomputed; pass `use_cached_residual` to trust the cache.
double joint_log_density(const LatentState& state, const ForwardModel& fm, const MeasurementSet& y,
                         const HyperPriorConfig& cfg, bool use_cached_residual = false);

/// Log of the noise-variance prior (up to a constant for Jeffreys).
double noise_prior_log_density(double sigma_sq, const HyperPriorConfig& cfg);

}  // namespace mmv
