#include "mmv/model.hpp"

#include "mmv/error.hpp"
#include "mmv/random.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <string>

namespace mmv {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

void require_finite(const Eigen::MatrixXd& m, const char* what) {
  if (!m.allFinite()) throw Error(ErrorKind::NonFinite, std::string(what) + " contains non-finite entries");
}

}  // namespace

Eigen::VectorXd compute_depth_weights(const Eigen::MatrixXd& H, DepthWeight mode) {
  Eigen::VectorXd v = H.colwise().squaredNorm().transpose();
  for (Index i = 0; i < v.size(); ++i)
    if (!(v(i) > 0.0)) throw Error(ErrorKind::ZeroColumn, "column " + std::to_string(i) + " of H is zero");
  if (mode == DepthWeight::Norm) v = v.cwiseSqrt();
  return v;
}

ForwardModel make_forward_model(Eigen::MatrixXd H, DepthWeight mode) {
  if (H.rows() < 1 || H.cols() < 1) throw Error(ErrorKind::DimensionMismatch, "H must be non-empty");
  require_finite(H, "H");
  ForwardModel fm;
  fm.v = compute_depth_weights(H, mode);
  fm.col_sq_norm = H.colwise().squaredNorm().transpose();
  fm.H = std::move(H);
  return fm;
}

MeasurementSet make_measurements(Eigen::MatrixXd Y, std::optional<double> sample_rate_hz) {
  if (Y.rows() < 1 || Y.cols() < 1) throw Error(ErrorKind::DimensionMismatch, "Y must be non-empty");
  require_finite(Y, "Y");
  if (sample_rate_hz && !(*sample_rate_hz > 0.0))
    throw Error(ErrorKind::BadParam, "sample rate must be positive");
  return {std::move(Y), sample_rate_hz};
}

void check_compatible(const ForwardModel& fm, const MeasurementSet& y) {
  if (fm.sensors() != y.sensors())
    throw Error(ErrorKind::DimensionMismatch, "H has " + std::to_string(fm.sensors()) +
                                                  " rows but Y has " + std::to_string(y.sensors()));
}

void validate(const HyperPriorConfig& cfg) {
  if (!(cfg.alpha > 0.0) || !(cfg.beta > 0.0))
    throw Error(ErrorKind::BadParam, "hyperprior alpha and beta must be positive");
  if (!cfg.jeffreys_noise_prior() && !(cfg.sigma_shape > 0.0 && cfg.sigma_scale > 0.0))
    throw Error(ErrorKind::BadParam, "noise prior needs shape and scale both positive (or both zero)");
}

Index LatentState::support_size() const {
  Index k = 0;
  for (auto zi : z) k += zi != 0;
  return k;
}

void check_state(const LatentState& state) {
  const Index n = state.sources();
  if (static_cast<Index>(state.z.size()) != n || state.tau_sq.size() != n)
    throw Error(ErrorKind::DimensionMismatch, "state vectors disagree on N");
  for (Index i = 0; i < n; ++i) {
    if (!state.z[i] && (state.X.row(i).array() != 0.0).any())
      throw Error(ErrorKind::InvariantViolation,
                  "row " + std::to_string(i) + " of X is nonzero but z_i = 0");
    if (!(state.tau_sq(i) > 0.0) || !std::isfinite(state.tau_sq(i)))
      throw Error(ErrorKind::InvariantViolation, "tau_sq[" + std::to_string(i) + "] not finite positive");
  }
}

Eigen::MatrixXd compute_residual(const LatentState& state, const ForwardModel& fm,
                                 const MeasurementSet& y) {
  check_compatible(fm, y);
  if (state.sources() != fm.sources() || state.samples() != y.samples())
    throw Error(ErrorKind::DimensionMismatch, "state X is not N x T");
  Eigen::MatrixXd r = y.Y;
  for (Index i = 0; i < state.sources(); ++i)
    if (state.z[i]) r.noalias() -= fm.H.col(i) * state.X.row(i);
  return r;
}

double refresh_residual(LatentState& state, const ForwardModel& fm, const MeasurementSet& y) {
  check_state(state);
  Eigen::MatrixXd fresh = compute_residual(state, fm, y);
  double drift = 0.0;
  if (state.residual.rows() == fresh.rows() && state.residual.cols() == fresh.cols())
    drift = (state.residual - fresh).cwiseAbs().maxCoeff();
  else
    drift = std::numeric_limits<double>::infinity();
  state.residual = std::move(fresh);
  return drift;
}

double noise_prior_log_density(double sigma_sq, const HyperPriorConfig& cfg) {
  if (!(sigma_sq > 0.0)) return kNegInf;
  if (cfg.jeffreys_noise_prior()) return -std::log(sigma_sq);
  return inverse_gamma_log_pdf(sigma_sq, cfg.sigma_shape, cfg.sigma_scale);
}

double joint_log_density(const LatentState& state, const ForwardModel& fm, const MeasurementSet& y,
                         const HyperPriorConfig& cfg, bool use_cached_residual) {
  check_state(state);
  const Index n = state.sources();
  const double m = static_cast<double>(fm.sensors());
  const double t = static_cast<double>(y.samples());
  const double s2 = state.sigma_sq;
  if (!(s2 > 0.0) || !(state.a > 0.0)) return kNegInf;
  if (state.omega < 0.0 || state.omega > 1.0) return kNegInf;

  const double rss = use_cached_residual ? state.residual.squaredNorm()
                                         : compute_residual(state, fm, y).squaredNorm();
  constexpr double log2pi = 1.8378770664093454836;
  double lp = -0.5 * m * t * (log2pi + std::log(s2)) - 0.5 * rss / s2;

  const double tau_shape = 0.5 * (t + 1.0);
  for (Index i = 0; i < n; ++i) {
    const double tau = state.tau_sq(i);
    if (state.z[i]) {
      lp += std::log(state.omega);
      lp += -0.5 * t * (log2pi + std::log(s2 * tau)) - 0.5 * state.X.row(i).squaredNorm() / (s2 * tau);
    } else {
      lp += std::log1p(-state.omega);
    }
    lp += gamma_log_pdf(tau, tau_shape, 0.5 * fm.v(i) * state.a);
  }
  lp += noise_prior_log_density(s2, cfg);
  lp += gamma_log_pdf(state.a, cfg.alpha, cfg.beta);
  if (std::isnan(lp) || lp == std::numeric_limits<double>::infinity())
    throw Error(ErrorKind::NonFinite, "joint log density is not finite");
  return lp;
}

}  // namespace mmv
