#pragma once

#include "mmv/model.hpp"
#include "mmv/random.hpp"

namespace mmv {

/// Sufficient statistics of the conditional of row i given X_{-i}.
struct RowConditionalStats {
  Eigen::VectorXd mu;       // length T
  double sigma_i_sq = 0.0;  // sigma_n^2 tau_i^2 / (1 + tau_i^2 ||h^i||^2)
  double log_k0 = 0.0;
  double log_k1 = 0.0;

  /// P(z_i = 1 | Y, X_{-i}, ...) = k1 / (k0 + k1), evaluated as a logistic.
  double prob_active() const;
};

struct SweepOptions {
  /// Visit rows in a fresh random order each sweep instead of i = 0..N-1.
  bool random_row_order = false;
};

/// Uses the cached residual; row i of X is added back so that the
/// statistics condition on X_{-i} only.
RowConditionalStats row_conditional_stats(Index i, const LatentState& state, const ForwardModel& fm);

/// Samples z_i with x_i integrated out, then x_i | z_i, and patches the
/// residual cache with the rank-one change.
void sample_row(Index i, LatentState& state, const ForwardModel& fm, RngStream& rng);

/// Gamma((T+1)/2, v_i a / 2) when z_i = 0, GIG(1/2, v_i a, ||x_i||^2 / sigma^2)
/// when z_i = 1. A numerically zero active row falls back to the gamma law.
double sample_tau_sq(Index i, const LatentState& state, const ForwardModel& fm, RngStream& rng);

/// InvGamma((M + ||z||_0) T / 2, (||HX - Y||^2 + sum_{z_i=1} ||x_i||^2 / tau_i^2) / 2),
/// shifted by the proper noise prior when one is configured.
double sample_sigma_sq(const LatentState& state, const ForwardModel& fm, const HyperPriorConfig& cfg,
                       RngStream& rng);

/// Shape and scale used by sample_sigma_sq.
std::pair<double, double> sigma_sq_conditional(const LatentState& state, const HyperPriorConfig& cfg);

/// Beta(1 + ||z||_0, 1 + N - ||z||_0).
double sample_omega(const LatentState& state, RngStream& rng);

/// Gamma(N(T+1)/2 + alpha, sum_i v_i tau_i^2 / 2 + beta).
double sample_a(const LatentState& state, const ForwardModel& fm, const HyperPriorConfig& cfg,
                RngStream& rng);

/// Shape and rate used by sample_a.
std::pair<double, double> a_conditional(const LatentState& state, const ForwardModel& fm,
                                        const HyperPriorConfig& cfg);

/// X = 0, z = 0, a and tau^2 drawn from their priors, sigma^2 from its
/// conditional given X = 0 and omega from its conditional given z = 0.
LatentState initialize_state(const ForwardModel& fm, const MeasurementSet& y,
                             const HyperPriorConfig& cfg, RngStream& rng);

/// One sweep: sigma^2, omega, then (tau_i^2, z_i, x_i) for every row, then a.
/// The residual cache is recomputed from scratch at the end of the sweep.
void gibbs_sweep(LatentState& state, const ForwardModel& fm, const MeasurementSet& y,
                 const HyperPriorConfig& cfg, RngStream& rng, const SweepOptions& opts = {});

}  // namespace mmv
