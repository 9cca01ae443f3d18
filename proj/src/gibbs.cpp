#include "mmv/gibbs.hpp"

#include "mmv/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace mmv {

double RowConditionalStats::prob_active() const {
  if (log_k1 == -std::numeric_limits<double>::infinity()) return 0.0;
  if (log_k0 == -std::numeric_limits<double>::infinity()) return 1.0;
  const double d = log_k1 - log_k0;
  return d >= 0.0 ? 1.0 / (1.0 + std::exp(-d)) : std::exp(d) / (1.0 + std::exp(d));
}

namespace {

// Fills `mu` and returns (sigma_i^2, log_k0, log_k1).
struct RowScalars {
  double sigma_i_sq, log_k0, log_k1;
};

RowScalars row_stats_into(Index i, const LatentState& state, const ForwardModel& fm,
                          Eigen::Ref<Eigen::RowVectorXd> mu) {
  const double hh = fm.col_sq_norm(i);
  const double tau = state.tau_sq(i);
  const double s2 = state.sigma_sq;
  const double t = static_cast<double>(state.samples());

  // (h^i)^T (Y - H X_{-i}) = (h^i)^T R + ||h^i||^2 x_i
  mu.noalias() = fm.H.col(i).transpose() * state.residual;
  if (state.z[i]) mu += hh * state.X.row(i);

  const double shrink = 1.0 + tau * hh;  // sigma^2 tau^2 / sigma_i^2
  const double sigma_i_sq = s2 * tau / shrink;
  mu *= sigma_i_sq / s2;

  RowScalars out;
  out.sigma_i_sq = sigma_i_sq;
  out.log_k0 = std::log1p(-state.omega);
  out.log_k1 = std::log(state.omega) - 0.5 * t * std::log(shrink) + 0.5 * mu.squaredNorm() / sigma_i_sq;
  return out;
}

double logistic_prob(double log_k0, double log_k1) {
  RowConditionalStats s;
  s.log_k0 = log_k0;
  s.log_k1 = log_k1;
  return s.prob_active();
}

void sample_row_impl(Index i, LatentState& state, const ForwardModel& fm, RngStream& rng,
                     Eigen::RowVectorXd& mu, Eigen::RowVectorXd& delta) {
  const RowScalars rs = row_stats_into(i, state, fm, mu);
  const bool was_active = state.z[i] != 0;
  const bool active = rng.uniform() < logistic_prob(rs.log_k0, rs.log_k1);

  if (active) {
    const double sd = std::sqrt(rs.sigma_i_sq);
    for (Index t = 0; t < mu.size(); ++t) mu(t) += sd * rng.normal();
    if (was_active)
      delta = mu - state.X.row(i);
    else
      delta = mu;
    state.X.row(i) = mu;
    state.residual.noalias() -= fm.H.col(i) * delta;
  } else if (was_active) {
    state.residual.noalias() += fm.H.col(i) * state.X.row(i);
    state.X.row(i).setZero();
  }
  state.z[i] = active ? 1 : 0;
}

}  // namespace

RowConditionalStats row_conditional_stats(Index i, const LatentState& state, const ForwardModel& fm) {
  if (i < 0 || i >= state.sources()) throw Error(ErrorKind::BadParam, "row index out of range");
  RowConditionalStats out;
  Eigen::RowVectorXd mu(state.samples());
  const RowScalars rs = row_stats_into(i, state, fm, mu);
  out.mu = mu.transpose();
  out.sigma_i_sq = rs.sigma_i_sq;
  out.log_k0 = rs.log_k0;
  out.log_k1 = rs.log_k1;
  return out;
}

void sample_row(Index i, LatentState& state, const ForwardModel& fm, RngStream& rng) {
  if (i < 0 || i >= state.sources()) throw Error(ErrorKind::BadParam, "row index out of range");
  Eigen::RowVectorXd mu(state.samples()), delta(state.samples());
  sample_row_impl(i, state, fm, rng, mu, delta);
}

double sample_tau_sq(Index i, const LatentState& state, const ForwardModel& fm, RngStream& rng) {
  const double t = static_cast<double>(state.samples());
  const double rate_term = fm.v(i) * state.a;
  if (state.z[i]) {
    const double chi = state.X.row(i).squaredNorm() / state.sigma_sq;
    if (chi > 0.0 && std::isfinite(chi)) return sample_gig(rng, {0.5, chi, rate_term});
  }
  return sample_gamma(rng, 0.5 * (t + 1.0), 0.5 * rate_term);
}

std::pair<double, double> sigma_sq_conditional(const LatentState& state, const HyperPriorConfig& cfg) {
  const double m = static_cast<double>(state.residual.rows());
  const double t = static_cast<double>(state.samples());
  double penalty = 0.0;
  Index k = 0;
  for (Index i = 0; i < state.sources(); ++i) {
    if (!state.z[i]) continue;
    ++k;
    penalty += state.X.row(i).squaredNorm() / state.tau_sq(i);
  }
  const double shape = 0.5 * (m + static_cast<double>(k)) * t + cfg.sigma_shape;
  const double scale = 0.5 * (state.residual.squaredNorm() + penalty) + cfg.sigma_scale;
  return {shape, scale};
}

double sample_sigma_sq(const LatentState& state, const ForwardModel&, const HyperPriorConfig& cfg,
                       RngStream& rng) {
  const auto [shape, scale] = sigma_sq_conditional(state, cfg);
  return sample_inverse_gamma(rng, shape, scale);
}

double sample_omega(const LatentState& state, RngStream& rng) {
  const double k = static_cast<double>(state.support_size());
  const double n = static_cast<double>(state.sources());
  return sample_beta(rng, 1.0 + k, 1.0 + n - k);
}

std::pair<double, double> a_conditional(const LatentState& state, const ForwardModel& fm,
                                        const HyperPriorConfig& cfg) {
  const double n = static_cast<double>(state.sources());
  const double t = static_cast<double>(state.samples());
  if (!(state.tau_sq.array() > 0.0).all())
    throw Error(ErrorKind::BadParam, "tau_sq must be positive to update a");
  const double shape = 0.5 * n * (t + 1.0) + cfg.alpha;
  const double rate = 0.5 * fm.v.dot(state.tau_sq) + cfg.beta;
  return {shape, rate};
}

double sample_a(const LatentState& state, const ForwardModel& fm, const HyperPriorConfig& cfg,
                RngStream& rng) {
  const auto [shape, rate] = a_conditional(state, fm, cfg);
  return sample_gamma(rng, shape, rate);
}

LatentState initialize_state(const ForwardModel& fm, const MeasurementSet& y,
                             const HyperPriorConfig& cfg, RngStream& rng) {
  check_compatible(fm, y);
  validate(cfg);
  const Index n = fm.sources();
  const Index t = y.samples();
  LatentState s;
  s.X = Eigen::MatrixXd::Zero(n, t);
  s.z.assign(static_cast<std::size_t>(n), 0);
  s.residual = y.Y;
  s.a = sample_gamma(rng, cfg.alpha, cfg.beta);
  s.tau_sq.resize(n);
  for (Index i = 0; i < n; ++i)
    s.tau_sq(i) = sample_gamma(rng, 0.5 * (static_cast<double>(t) + 1.0), 0.5 * fm.v(i) * s.a);
  s.sigma_sq = sample_sigma_sq(s, fm, cfg, rng);
  s.omega = sample_omega(s, rng);
  return s;
}

void gibbs_sweep(LatentState& state, const ForwardModel& fm, const MeasurementSet& y,
                 const HyperPriorConfig& cfg, RngStream& rng, const SweepOptions& opts) {
  const Index n = state.sources();
  state.sigma_sq = sample_sigma_sq(state, fm, cfg, rng);
  state.omega = sample_omega(state, rng);

  Eigen::RowVectorXd mu(state.samples()), delta(state.samples());
  auto visit = [&](Index i) {
    state.tau_sq(i) = sample_tau_sq(i, state, fm, rng);
    sample_row_impl(i, state, fm, rng, mu, delta);
  };
  if (opts.random_row_order) {
    std::vector<Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), Index{0});
    for (std::size_t k = order.size(); k > 1; --k) std::swap(order[k - 1], order[rng.index(k)]);
    for (Index i : order) visit(i);
  } else {
    for (Index i = 0; i < n; ++i) visit(i);
  }

  state.a = sample_a(state, fm, cfg, rng);
  state.residual = compute_residual(state, fm, y);
}

}  // namespace mmv
