#include "mmv/moves.hpp"

#include "mmv/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace mmv {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;
constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// Tolerance on |corr| >= gamma so that exactly collinear columns qualify at gamma = 1.
constexpr double kCorrSlack = 1e-12;

std::vector<Index> active_indices(const Support& z) {
  std::vector<Index> out;
  for (std::size_t i = 0; i < z.size(); ++i)
    if (z[i]) out.push_back(static_cast<Index>(i));
  return out;
}

Eigen::MatrixXd gather_columns(const Eigen::MatrixXd& H, const std::vector<Index>& cols) {
  Eigen::MatrixXd out(H.rows(), static_cast<Index>(cols.size()));
  for (std::size_t k = 0; k < cols.size(); ++k) out.col(static_cast<Index>(k)) = H.col(cols[k]);
  return out;
}

// Partition of r (positions into ctx.rows) by the given support values.
std::vector<Index> active_positions(const Support& z_r) {
  std::vector<Index> out;
  for (std::size_t k = 0; k < z_r.size(); ++k)
    if (z_r[k]) out.push_back(static_cast<Index>(k));
  return out;
}

double row_prior_terms(const Support& z_r, const Eigen::VectorXd& tau_r, const CollapsedContext& ctx,
                       double t) {
  double lp = 0.0;
  for (std::size_t k = 0; k < ctx.rows.size(); ++k) {
    const Index i = ctx.rows[k];
    lp += z_r[k] ? std::log(ctx.omega) : std::log1p(-ctx.omega);
    lp += gamma_log_pdf(tau_r(static_cast<Index>(k)), 0.5 * (t + 1.0), 0.5 * ctx.fm->v(i) * ctx.a);
  }
  return lp;
}

// Joint log density restricted to the rows of r with X_r given explicitly
// (rows of `x_active` follow the active positions of z_r).
double local_joint_log_density(const Support& z_r, const Eigen::VectorXd& tau_r,
                               const Eigen::MatrixXd& x_active, const CollapsedContext& ctx) {
  const double t = static_cast<double>(ctx.D.cols());
  const double s2 = ctx.sigma_sq;
  Eigen::MatrixXd fit = ctx.D;
  Index row = 0;
  double lp = row_prior_terms(z_r, tau_r, ctx, t);
  for (std::size_t k = 0; k < ctx.rows.size(); ++k) {
    if (!z_r[k]) continue;
    const double tau = tau_r(static_cast<Index>(k));
    fit.noalias() += ctx.fm->H.col(ctx.rows[k]) * x_active.row(row);
    lp += -0.5 * t * (kLog2Pi + std::log(s2 * tau)) - 0.5 * x_active.row(row).squaredNorm() / (s2 * tau);
    ++row;
  }
  lp += -0.5 * fit.squaredNorm() / s2;
  return lp;
}

// Log density of tau_r under the conditional used to propose it: GIG given
// the active rows, gamma prior otherwise.
double tau_proposal_log_pdf(const Support& z_r, const Eigen::VectorXd& tau_r,
                            const Eigen::MatrixXd& x_active, const CollapsedContext& ctx) {
  const double t = static_cast<double>(ctx.D.cols());
  double lp = 0.0;
  Index row = 0;
  for (std::size_t k = 0; k < ctx.rows.size(); ++k) {
    const double psi = ctx.fm->v(ctx.rows[k]) * ctx.a;
    const double tau = tau_r(static_cast<Index>(k));
    if (z_r[k]) {
      const double chi = x_active.row(row++).squaredNorm() / ctx.sigma_sq;
      lp += chi > 0.0 ? gig_log_pdf(tau, {0.5, chi, psi}) : gamma_log_pdf(tau, 0.5 * (t + 1.0), 0.5 * psi);
    } else {
      lp += gamma_log_pdf(tau, 0.5 * (t + 1.0), 0.5 * psi);
    }
  }
  return lp;
}

template <typename T>
std::vector<T> gather(const std::vector<T>& v, const std::vector<Index>& idx) {
  std::vector<T> out;
  out.reserve(idx.size());
  for (Index i : idx) out.push_back(v[static_cast<std::size_t>(i)]);
  return out;
}

Eigen::VectorXd gather(const Eigen::VectorXd& v, const std::vector<Index>& idx) {
  Eigen::VectorXd out(static_cast<Index>(idx.size()));
  for (std::size_t k = 0; k < idx.size(); ++k) out(static_cast<Index>(k)) = v(idx[k]);
  return out;
}

// Rows of X for the active positions of the current support on r.
Eigen::MatrixXd current_active_rows(const LatentState& state, const std::vector<Index>& rows) {
  std::vector<Index> act;
  for (Index i : rows)
    if (state.z[static_cast<std::size_t>(i)]) act.push_back(i);
  Eigen::MatrixXd out(static_cast<Index>(act.size()), state.samples());
  for (std::size_t k = 0; k < act.size(); ++k) out.row(static_cast<Index>(k)) = state.X.row(act[k]);
  return out;
}

// Writes (z_r, tau_r, X_r) into the state and recomputes the residual.
void commit_rows(LatentState& state, const CollapsedContext& ctx, const Support& z_r,
                 const Eigen::VectorXd& tau_r, const CollapsedRowPosterior& post,
                 const Eigen::MatrixXd& x_active, const ForwardModel& fm, const MeasurementSet& y) {
  for (std::size_t k = 0; k < ctx.rows.size(); ++k) {
    const Index i = ctx.rows[k];
    state.z[static_cast<std::size_t>(i)] = z_r[k];
    state.tau_sq(i) = tau_r(static_cast<Index>(k));
    state.X.row(i).setZero();
  }
  for (std::size_t k = 0; k < post.active.size(); ++k)
    state.X.row(ctx.rows[static_cast<std::size_t>(post.active[k])]) = x_active.row(static_cast<Index>(k));
  state.residual = compute_residual(state, fm, y);
}

}  // namespace

Eigen::MatrixXd column_correlations(const Eigen::MatrixXd& H) {
  Eigen::MatrixXd centered = H.rowwise() - H.colwise().mean();
  Eigen::VectorXd norms = centered.colwise().norm().transpose();
  for (Index j = 0; j < centered.cols(); ++j) {
    if (norms(j) > 0.0)
      centered.col(j) /= norms(j);
    else
      centered.col(j).setZero();
  }
  Eigen::MatrixXd c = centered.transpose() * centered;
  return c;
}

NeighborGraph build_neighbor_graph(const ForwardModel& fm, double gamma) {
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw Error(ErrorKind::BadParam, "gamma must lie in [0, 1]");
  for (Index j = 0; j < fm.sources(); ++j)
    if (fm.H.col(j).squaredNorm() == 0.0)
      throw Error(ErrorKind::ZeroColumn, "column " + std::to_string(j) + " of H is zero");
  const Eigen::MatrixXd corr = column_correlations(fm.H);
  NeighborGraph g;
  g.gamma = gamma;
  g.adjacency.resize(static_cast<std::size_t>(fm.sources()));
  for (Index i = 0; i < fm.sources(); ++i)
    for (Index j = 0; j < fm.sources(); ++j)
      if (j != i && std::abs(corr(i, j)) >= gamma - kCorrSlack) g.adjacency[static_cast<std::size_t>(i)].push_back(j);
  return g;
}

Support propose_shift_support(const Support& z, const NeighborGraph& graph, int K, RngStream& rng) {
  if (K < 1) throw Error(ErrorKind::BadParam, "K must be >= 1");
  std::vector<Index> pool = active_indices(z);
  if (pool.empty()) throw Error(ErrorKind::EmptySupport, "no active index to shift");
  const std::size_t picks = std::min(static_cast<std::size_t>(K), pool.size());
  Support z_bar = z;
  for (std::size_t k = 0; k < picks; ++k) {
    const std::size_t j = k + rng.index(pool.size() - k);
    std::swap(pool[k], pool[j]);
    const Index old_idx = pool[k];
    const auto& neigh = graph.neighbors(old_idx);
    const std::size_t pick = rng.index(neigh.size() + 1);
    const Index new_idx = pick == 0 ? old_idx : neigh[pick - 1];
    z_bar[static_cast<std::size_t>(old_idx)] = 0;
    z_bar[static_cast<std::size_t>(new_idx)] = 1;
  }
  return z_bar;
}

double shift_kernel_log_prob(const Support& from, const Support& to, const NeighborGraph& graph, int K) {
  if (from.size() != to.size()) throw Error(ErrorKind::DimensionMismatch, "support sizes differ");
  const std::vector<Index> pool = active_indices(from);
  if (pool.empty()) return kNegInf;
  const std::size_t picks = std::min(static_cast<std::size_t>(K), pool.size());

  std::vector<Index> diff;
  for (std::size_t i = 0; i < from.size(); ++i)
    if (from[i] != to[i]) diff.push_back(static_cast<Index>(i));

  constexpr std::size_t kMaxLeaves = 20'000'000;
  std::size_t leaves = 0;
  double total = 0.0;
  Support work = from;
  std::vector<Index> touched;
  std::vector<char> used(pool.size(), 0);

  auto matches = [&]() {
    for (Index i : diff)
      if (work[static_cast<std::size_t>(i)] != to[static_cast<std::size_t>(i)]) return false;
    for (Index i : touched)
      if (work[static_cast<std::size_t>(i)] != to[static_cast<std::size_t>(i)]) return false;
    return true;
  };

  auto recurse = [&](auto& self, std::size_t depth, double prob) -> void {
    if (depth == picks) {
      if (++leaves > kMaxLeaves)
        throw Error(ErrorKind::BadParam, "shift kernel enumeration too large for strict correction");
      if (matches()) total += prob;
      return;
    }
    const double p_old = 1.0 / static_cast<double>(pool.size() - depth);
    for (std::size_t a = 0; a < pool.size(); ++a) {
      if (used[a]) continue;
      used[a] = 1;
      const Index old_idx = pool[a];
      const auto& neigh = graph.neighbors(old_idx);
      const double p_new = 1.0 / static_cast<double>(neigh.size() + 1);
      for (std::size_t b = 0; b <= neigh.size(); ++b) {
        const Index new_idx = b == 0 ? old_idx : neigh[b - 1];
        const auto saved_old = work[static_cast<std::size_t>(old_idx)];
        const auto saved_new = work[static_cast<std::size_t>(new_idx)];
        work[static_cast<std::size_t>(old_idx)] = 0;
        work[static_cast<std::size_t>(new_idx)] = 1;
        touched.push_back(old_idx);
        touched.push_back(new_idx);
        self(self, depth + 1, prob * p_old * p_new);
        touched.pop_back();
        touched.pop_back();
        work[static_cast<std::size_t>(new_idx)] = saved_new;
        work[static_cast<std::size_t>(old_idx)] = saved_old;
      }
      used[a] = 0;
    }
  };
  recurse(recurse, 0, 1.0);
  return total > 0.0 ? std::log(total) : kNegInf;
}

CollapsedContext make_collapsed_context(const LatentState& state, const ForwardModel& fm,
                                        std::vector<Index> rows) {
  CollapsedContext ctx;
  ctx.fm = &fm;
  ctx.rows = std::move(rows);
  ctx.sigma_sq = state.sigma_sq;
  ctx.a = state.a;
  ctx.omega = state.omega;
  // D = H X - Y - H_r X_r = -(residual + H_r X_r)
  ctx.D = -state.residual;
  for (Index i : ctx.rows)
    if (state.z[static_cast<std::size_t>(i)]) ctx.D.noalias() -= fm.H.col(i) * state.X.row(i);
  return ctx;
}

CollapsedRowPosterior collapsed_row_posterior(const Support& z_r, const Eigen::VectorXd& tau_r,
                                              const CollapsedContext& ctx) {
  if (z_r.size() != ctx.rows.size() || tau_r.size() != static_cast<Index>(ctx.rows.size()))
    throw Error(ErrorKind::DimensionMismatch, "z_r / tau_r must match the collapsed rows");
  CollapsedRowPosterior post;
  post.active = active_positions(z_r);
  const auto c1 = static_cast<Index>(post.active.size());
  std::vector<Index> cols;
  for (Index k : post.active) cols.push_back(ctx.rows[static_cast<std::size_t>(k)]);
  const Eigen::MatrixXd h1 = gather_columns(ctx.fm->H, cols);

  Eigen::MatrixXd precision = h1.transpose() * h1;
  for (Index k = 0; k < c1; ++k) {
    const double tau = tau_r(post.active[static_cast<std::size_t>(k)]);
    if (!(tau > 0.0) || !std::isfinite(tau)) throw Error(ErrorKind::NotSPD, "degenerate tau in collapsed block");
    precision(k, k) += 1.0 / tau;
  }
  post.precision_factor.compute(precision);
  if (post.precision_factor.info() != Eigen::Success)
    throw Error(ErrorKind::NotSPD, "collapsed precision is not positive definite");
  // mu = P^-1 H_I1^T (Y - H_{-r} X_{-r}) = -P^-1 H_I1^T D
  post.mean = post.precision_factor.solve(-(h1.transpose() * ctx.D));
  return post;
}

Eigen::MatrixXd sample_collapsed_rows(const CollapsedRowPosterior& post, double sigma_sq, RngStream& rng) {
  const Index c1 = post.mean.rows();
  const Index t = post.mean.cols();
  Eigen::MatrixXd e(c1, t);
  for (Index col = 0; col < t; ++col)
    for (Index k = 0; k < c1; ++k) e(k, col) = rng.normal();
  if (c1 == 0) return e;
  // Covariance per time sample is sigma^2 P^-1 = sigma^2 L^-T L^-1.
  return post.mean + std::sqrt(sigma_sq) * Eigen::MatrixXd(post.precision_factor.matrixU().solve(e));
}

double collapsed_rows_log_pdf(const CollapsedRowPosterior& post, double sigma_sq, const Eigen::MatrixXd& x) {
  const Index c1 = post.mean.rows();
  const Index t = post.mean.cols();
  if (c1 == 0) return 0.0;
  const Eigen::MatrixXd l = post.precision_factor.matrixL();
  const double log_det_p = 2.0 * l.diagonal().array().log().sum();
  const Eigen::MatrixXd w = post.precision_factor.matrixU() * (x - post.mean);
  return -0.5 * static_cast<double>(c1 * t) * (kLog2Pi + std::log(sigma_sq)) +
         0.5 * static_cast<double>(t) * log_det_p - 0.5 * w.squaredNorm() / sigma_sq;
}

double collapsed_log_density(const Support& z_r, const Eigen::VectorXd& tau_r, const CollapsedContext& ctx) {
  const double t = static_cast<double>(ctx.D.cols());
  const double s2 = ctx.sigma_sq;
  const CollapsedRowPosterior post = collapsed_row_posterior(z_r, tau_r, ctx);

  // With P = H_I1^T H_I1 + diag(1/tau_I1) and Sigma = sigma^2 P^-1:
  //   -(T C1 / 2) log sigma^2 + (T/2) log|Sigma| = -(T/2) log|P|
  //   sum_t K^t = (||D||^2 - <B, P^-1 B>) / sigma^2 with B = H_I1^T D
  double log_det_p = 0.0;
  double quad = 0.0;
  if (!post.active.empty()) {
    const Eigen::MatrixXd l = post.precision_factor.matrixL();
    log_det_p = 2.0 * l.diagonal().array().log().sum();
    // <B, P^-1 B> = <P mu, mu> where mu = -P^-1 B
    const Eigen::MatrixXd lt_mu = post.precision_factor.matrixU() * post.mean;
    quad = lt_mu.squaredNorm();
  }
  double lp = row_prior_terms(z_r, tau_r, ctx, t);
  lp -= 0.5 * t * log_det_p;
  for (Index k : post.active) lp -= 0.5 * t * std::log(tau_r(k));
  lp -= 0.5 * (ctx.D.squaredNorm() - quad) / s2;
  return lp;
}

ShiftProposal propose_multiple_shift(const LatentState& state, const ForwardModel& fm,
                                     const NeighborGraph& graph, int K, RngStream& rng) {
  ShiftProposal p;
  p.z_bar = propose_shift_support(state.z, graph, K, rng);
  p.tau_bar_sq = state.tau_sq;
  for (std::size_t i = 0; i < p.z_bar.size(); ++i) {
    if (p.z_bar[i] == state.z[i]) continue;
    p.changed.push_back(static_cast<Index>(i));
    (p.z_bar[i] ? p.I1 : p.I0).push_back(static_cast<Index>(i));
  }
  if (p.changed.empty()) {
    p.x_bar.resize(0, state.samples());
    return p;
  }

  const CollapsedContext ctx = make_collapsed_context(state, fm, p.changed);
  const Support zr_bar = gather(p.z_bar, p.changed);
  const Eigen::VectorXd tau_r = gather(state.tau_sq, p.changed);
  const CollapsedRowPosterior post = collapsed_row_posterior(zr_bar, tau_r, ctx);
  p.x_bar = sample_collapsed_rows(post, state.sigma_sq, rng);

  const double t = static_cast<double>(state.samples());
  Index row = 0;
  for (std::size_t k = 0; k < p.changed.size(); ++k) {
    const Index i = p.changed[k];
    const double psi = fm.v(i) * state.a;
    if (zr_bar[k]) {
      const double chi = p.x_bar.row(row++).squaredNorm() / state.sigma_sq;
      p.tau_bar_sq(i) = chi > 0.0 ? sample_gig(rng, {0.5, chi, psi}) : sample_gamma(rng, 0.5 * (t + 1.0), 0.5 * psi);
    } else {
      p.tau_bar_sq(i) = sample_gamma(rng, 0.5 * (t + 1.0), 0.5 * psi);
    }
  }
  return p;
}

MoveResult accept_shift(LatentState& state, const ShiftProposal& proposal, const ForwardModel& fm,
                        const MeasurementSet& y, const NeighborGraph& graph, const MoveOptions& opts,
                        RngStream& rng) {
  MoveResult res;
  res.proposed = true;
  if (proposal.changed.empty()) {
    res.identity = true;
    res.accepted = true;
    return res;
  }
  const CollapsedContext ctx = make_collapsed_context(state, fm, proposal.changed);
  const Support zr = gather(state.z, proposal.changed);
  const Support zr_bar = gather(proposal.z_bar, proposal.changed);
  const Eigen::VectorXd tau_r = gather(state.tau_sq, proposal.changed);
  const Eigen::VectorXd tau_r_bar = gather(proposal.tau_bar_sq, proposal.changed);

  double log_ratio = 0.0;
  if (!opts.strict_mh_correction) {
    log_ratio = collapsed_log_density(zr_bar, tau_r_bar, ctx) - collapsed_log_density(zr, tau_r, ctx);
  } else {
    // Joint-space MH on (z_r, tau_r, X_r) with the auxiliary X_bar draw.
    const Eigen::MatrixXd x_cur = current_active_rows(state, proposal.changed);
    const double target = local_joint_log_density(zr_bar, tau_r_bar, proposal.x_bar, ctx) -
                          local_joint_log_density(zr, tau_r, x_cur, ctx);
    const double kernel = shift_kernel_log_prob(proposal.z_bar, state.z, graph, opts.K) -
                          shift_kernel_log_prob(state.z, proposal.z_bar, graph, opts.K);
    const CollapsedRowPosterior fwd = collapsed_row_posterior(zr_bar, tau_r, ctx);
    const CollapsedRowPosterior rev = collapsed_row_posterior(zr, tau_r_bar, ctx);
    const double q_fwd = collapsed_rows_log_pdf(fwd, ctx.sigma_sq, proposal.x_bar) +
                         tau_proposal_log_pdf(zr_bar, tau_r_bar, proposal.x_bar, ctx);
    const double q_rev = collapsed_rows_log_pdf(rev, ctx.sigma_sq, x_cur) +
                         tau_proposal_log_pdf(zr, tau_r, x_cur, ctx);
    log_ratio = target + kernel + q_rev - q_fwd;
  }
  res.log_ratio = log_ratio;
  const double u = rng.uniform();
  if (std::isnan(log_ratio) || !(std::log(u) < std::min(0.0, log_ratio))) return res;

  res.accepted = true;
  const CollapsedRowPosterior post = collapsed_row_posterior(zr_bar, tau_r_bar, ctx);
  const Eigen::MatrixXd x_new = sample_collapsed_rows(post, ctx.sigma_sq, rng);
  commit_rows(state, ctx, zr_bar, tau_r_bar, post, x_new, fm, y);
  return res;
}

MoveResult multiple_shift_move(LatentState& state, const ForwardModel& fm, const MeasurementSet& y,
                               const NeighborGraph& graph, const MoveOptions& opts, RngStream& rng) {
  if (state.support_size() == 0) return {};
  const ShiftProposal proposal = propose_multiple_shift(state, fm, graph, opts.K, rng);
  return accept_shift(state, proposal, fm, y, graph, opts, rng);
}

double exchange_log_ratio(const LatentState& state, const Support& donor_z, const Eigen::VectorXd& donor_tau,
                          const ForwardModel& fm, std::vector<Index>* changed) {
  std::vector<Index> rows;
  for (std::size_t i = 0; i < donor_z.size(); ++i)
    if (donor_z[i] != state.z[i] || donor_tau(static_cast<Index>(i)) != state.tau_sq(static_cast<Index>(i)))
      rows.push_back(static_cast<Index>(i));
  if (changed) *changed = rows;
  if (rows.empty()) return 0.0;
  const CollapsedContext ctx = make_collapsed_context(state, fm, rows);
  return collapsed_log_density(gather(donor_z, rows), gather(donor_tau, rows), ctx) -
         collapsed_log_density(gather(state.z, rows), gather(state.tau_sq, rows), ctx);
}

ExchangeResult inter_chain_exchange(std::vector<LatentState>& states, const ForwardModel& fm,
                                    const MeasurementSet& y, RngStream& master,
                                    std::vector<RngStream>& chain_rngs) {
  const std::size_t L = states.size();
  if (chain_rngs.size() != L) throw Error(ErrorKind::DimensionMismatch, "one RNG stream per chain required");
  ExchangeResult out;
  out.donor.resize(L);
  out.accepted.assign(L, false);

  std::vector<Support> snap_z;
  std::vector<Eigen::VectorXd> snap_tau;
  snap_z.reserve(L);
  snap_tau.reserve(L);
  for (const auto& s : states) {
    snap_z.push_back(s.z);
    snap_tau.push_back(s.tau_sq);
  }

  std::vector<std::size_t> c(L);
  std::iota(c.begin(), c.end(), std::size_t{0});
  for (std::size_t i = 0; i < L; ++i) {
    const std::size_t pick = master.index(c.size());
    const std::size_t k = c[pick];
    c.erase(c.begin() + static_cast<std::ptrdiff_t>(pick));
    out.donor[i] = k;

    std::vector<Index> rows;
    const double log_ratio = exchange_log_ratio(states[i], snap_z[k], snap_tau[k], fm, &rows);
    const double u = master.uniform();
    if (rows.empty()) {
      out.accepted[i] = true;
      continue;
    }
    if (std::isnan(log_ratio) || !(std::log(u) < std::min(0.0, log_ratio))) continue;

    out.accepted[i] = true;
    LatentState& s = states[i];
    const CollapsedContext ctx = make_collapsed_context(s, fm, rows);
    const Support zr = gather(snap_z[k], rows);
    const Eigen::VectorXd tr = gather(snap_tau[k], rows);
    const CollapsedRowPosterior post = collapsed_row_posterior(zr, tr, ctx);
    const Eigen::MatrixXd x_new = sample_collapsed_rows(post, ctx.sigma_sq, chain_rngs[i]);
    commit_rows(s, ctx, zr, tr, post, x_new, fm, y);
  }
  return out;
}

}  // namespace mmv
