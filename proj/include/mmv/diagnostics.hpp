#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <vector>

namespace mmv {

/// Gelman-Rubin potential scale reduction of one scalar across chains.
/// Every chain must hold the same number n >= 10 of retained samples and
/// there must be at least two chains.
///
///   W = mean of the within-chain variances, B = n * variance of the chain means
///   R = sqrt(((n - 1) / n * W + B / n) / W), floored at 1
///
/// Throws DegenerateTrace when W == 0.
double psrf(const std::vector<std::vector<double>>& chains);

/// Max of psrf over every column of per-chain sample matrices (rows are
/// retained iterations, columns are the entries of X). Columns that are
/// constant across all chains are skipped; a column that is constant within
/// each chain but differs between chains yields +inf. Returns 1 if every
/// column is skipped.
double max_psrf_x(const std::vector<Eigen::MatrixXd>& chains);

struct PsrfPoint {
  std::size_t samples = 0;  // per chain
  double value = 0.0;       // NaN if the prefix is degenerate
};

/// psrf on growing prefixes of the traces, at `checkpoints` evenly spaced
/// lengths ending at the full length. Prefixes shorter than 10 are skipped.
std::vector<PsrfPoint> psrf_curve(const std::vector<std::vector<double>>& chains, std::size_t checkpoints);

struct Histogram {
  double lo = 0.0;
  double hi = 0.0;
  std::vector<std::size_t> counts;

  double bin_width() const { return counts.empty() ? 0.0 : (hi - lo) / static_cast<double>(counts.size()); }
};

/// Equal-width histogram over [min, max] of the finite values; the last bin
/// is closed. A constant sample puts everything in the first bin.
Histogram make_histogram(const std::vector<double>& values, std::size_t bins);

}  // namespace mmv
