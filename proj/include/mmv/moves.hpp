#pragma once

#include "mmv/model.hpp"
#include "mmv/random.hpp"

#include <vector>

namespace mmv {

/// Correlation neighborhoods: j is a neighbor of i iff j != i and
/// |corr(h^i, h^j)| >= gamma, with corr the Pearson correlation of columns.
struct NeighborGraph {
  double gamma = 0.8;
  std::vector<std::vector<Index>> adjacency;  // sorted ascending

  const std::vector<Index>& neighbors(Index i) const { return adjacency[static_cast<std::size_t>(i)]; }
  Index size() const { return static_cast<Index>(adjacency.size()); }
};

/// Pearson correlation of every pair of columns (N x N). Columns with zero
/// variance correlate 0 with everything.
Eigen::MatrixXd column_correlations(const Eigen::MatrixXd& H);

NeighborGraph build_neighbor_graph(const ForwardModel& fm, double gamma);

/// Proposed support/scale pair plus the bookkeeping the acceptance step needs.
struct ShiftProposal {
  Support z_bar;
  Eigen::VectorXd tau_bar_sq;  // length N; equal to the current tau^2 outside `changed`
  std::vector<Index> changed;  // r = {i : z_i != z_bar_i}, ascending
  std::vector<Index> I0;       // rows of r with z_bar = 0
  std::vector<Index> I1;       // rows of r with z_bar = 1
  Eigen::MatrixXd x_bar;       // |I1| x T auxiliary draw used to generate tau_bar

  Index C0() const { return static_cast<Index>(I0.size()); }
  Index C1() const { return static_cast<Index>(I1.size()); }
};

/// The support part of the multiple-shift kernel: K distinct active indices
/// (fewer if the support is smaller) are drawn without replacement; each is
/// switched off and a uniformly chosen member of {itself} U neigh(itself) is
/// switched on. Throws EmptySupport when z has no active entry.
Support propose_shift_support(const Support& z, const NeighborGraph& graph, int K, RngStream& rng);

/// log q(to | from) of the support kernel above, by exhaustive enumeration
/// of draw sequences. -inf if `to` is unreachable.
double shift_kernel_log_prob(const Support& from, const Support& to, const NeighborGraph& graph, int K);

/// Everything held fixed while the rows `rows` are integrated out: the
/// partial residual D = H_{-r} X_{-r} - Y and the chain's scalars.
struct CollapsedContext {
  const ForwardModel* fm = nullptr;
  std::vector<Index> rows;
  Eigen::MatrixXd D;  // M x T
  double sigma_sq = 1.0;
  double a = 1.0;
  double omega = 0.5;
};

CollapsedContext make_collapsed_context(const LatentState& state, const ForwardModel& fm,
                                        std::vector<Index> rows);

/// Log of f(tau_r^2, z_r | Y, X_{-r}, a, sigma^2, omega) up to a constant
/// that depends only on the context. `z_r` and `tau_r` are indexed like
/// `ctx.rows`. Throws NotSPD if the integrated block is numerically singular.
double collapsed_log_density(const Support& z_r, const Eigen::VectorXd& tau_r,
                             const CollapsedContext& ctx);

/// Gaussian conditional of the active rows of r (per time sample they share
/// one covariance). `active` lists positions into ctx.rows.
struct CollapsedRowPosterior {
  std::vector<Index> active;
  Eigen::LLT<Eigen::MatrixXd> precision_factor;  // of H_I1^T H_I1 + diag(1 / tau_I1)
  Eigen::MatrixXd mean;                          // |active| x T
};

CollapsedRowPosterior collapsed_row_posterior(const Support& z_r, const Eigen::VectorXd& tau_r,
                                              const CollapsedContext& ctx);

/// Draws the active rows of r; rows are in the order of `post.active`.
Eigen::MatrixXd sample_collapsed_rows(const CollapsedRowPosterior& post, double sigma_sq,
                                      RngStream& rng);

/// Log density of `x` (|active| x T) under the collapsed row posterior.
double collapsed_rows_log_pdf(const CollapsedRowPosterior& post, double sigma_sq,
                              const Eigen::MatrixXd& x);

struct MoveOptions {
  int K = 2;
  /// Include the proposal-density corrections (support kernel asymmetry
  /// and the tau^2 draw) so the move is exactly reversible.
  bool strict_mh_correction = false;
};

/// Builds a full shift proposal: support from propose_shift_support, then
/// X_bar on the newly active rows given the current tau^2, then tau_bar^2 on
/// the changed rows from their conditionals given X_bar.
ShiftProposal propose_multiple_shift(const LatentState& state, const ForwardModel& fm,
                                     const NeighborGraph& graph, int K, RngStream& rng);

struct MoveResult {
  bool proposed = false;  // false when the support was empty
  bool accepted = false;
  bool identity = false;  // z_bar == z
  double log_ratio = 0.0;
};

/// Metropolis-Hastings decision for a shift proposal. On acceptance (z, tau^2)
/// on the changed rows are replaced and those rows of X are redrawn from
/// their joint Gaussian conditional; the residual is then recomputed.
MoveResult accept_shift(LatentState& state, const ShiftProposal& proposal, const ForwardModel& fm,
                        const MeasurementSet& y, const NeighborGraph& graph,
                        const MoveOptions& opts, RngStream& rng);

/// propose_multiple_shift + accept_shift; an empty support skips the move.
MoveResult multiple_shift_move(LatentState& state, const ForwardModel& fm, const MeasurementSet& y,
                               const NeighborGraph& graph, const MoveOptions& opts, RngStream& rng);

/// log f(z_k, tau_k | Y, X_{-r}, a, sigma^2, omega) - log f(z, tau | ...) for
/// a receiving chain `state` and a donor pair, with r the rows where either
/// the support or tau^2 differ. Returns the rows of r through `changed`.
double exchange_log_ratio(const LatentState& state, const Support& donor_z,
                          const Eigen::VectorXd& donor_tau, const ForwardModel& fm,
                          std::vector<Index>* changed = nullptr);

struct ExchangeResult {
  std::vector<std::size_t> donor;
  std::vector<bool> accepted;
};

/// One round of inter-chain proposals. Donor pairs are read from a snapshot
/// taken before any chain changes; each chain i draws its donor from a
/// shuffled list without replacement (self-draws are identity moves). The
/// permutation and accept/reject uniforms come from `master`; redraws of X
/// use each chain's own stream.
ExchangeResult inter_chain_exchange(std::vector<LatentState>& states, const ForwardModel& fm,
                                    const MeasurementSet& y, RngStream& master,
                                    std::vector<RngStream>& chain_rngs);

}  // namespace mmv
