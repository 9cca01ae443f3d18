#include "mmv/diagnostics.hpp"

#include "mmv/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace mmv {

namespace {

struct Variances {
  double within = 0.0;
  double between = 0.0;  // B / n, the variance of the chain means
  double n = 0.0;
};

template <typename Get>
Variances chain_variances(std::size_t n_chains, std::size_t n, Get&& get) {
  std::vector<double> means(n_chains, 0.0);
  double within = 0.0;
  for (std::size_t c = 0; c < n_chains; ++c) {
    double mean = 0.0;
    for (std::size_t k = 0; k < n; ++k) mean += get(c, k);
    mean /= static_cast<double>(n);
    double ss = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      const double d = get(c, k) - mean;
      ss += d * d;
    }
    within += ss / static_cast<double>(n - 1);
    means[c] = mean;
  }
  within /= static_cast<double>(n_chains);
  double grand = 0.0;
  for (double m : means) grand += m;
  grand /= static_cast<double>(n_chains);
  double between = 0.0;
  for (double m : means) between += (m - grand) * (m - grand);
  between /= static_cast<double>(n_chains - 1);
  return {within, between, static_cast<double>(n)};
}

double psrf_from(const Variances& v) {
  const double pooled = (v.n - 1.0) / v.n * v.within + v.between;
  return std::max(1.0, std::sqrt(pooled / v.within));
}

void check_shape(std::size_t n_chains, std::size_t n) {
  if (n_chains < 2) throw Error(ErrorKind::BadParam, "psrf needs at least two chains");
  if (n < 10) throw Error(ErrorKind::BadParam, "psrf needs at least 10 samples per chain");
}

double psrf_prefix(const std::vector<std::vector<double>>& chains, std::size_t n) {
  const Variances v = chain_variances(chains.size(), n, [&](std::size_t c, std::size_t k) { return chains[c][k]; });
  if (!(v.within > 0.0)) throw Error(ErrorKind::DegenerateTrace, "within-chain variance is zero");
  return psrf_from(v);
}

}  // namespace

double psrf(const std::vector<std::vector<double>>& chains) {
  const std::size_t n = chains.empty() ? 0 : chains.front().size();
  check_shape(chains.size(), n);
  for (const auto& c : chains)
    if (c.size() != n) throw Error(ErrorKind::DimensionMismatch, "chains differ in length");
  return psrf_prefix(chains, n);
}

double max_psrf_x(const std::vector<Eigen::MatrixXd>& chains) {
  const auto n = static_cast<std::size_t>(chains.empty() ? 0 : chains.front().rows());
  check_shape(chains.size(), n);
  const Eigen::Index cols = chains.front().cols();
  for (const auto& c : chains)
    if (static_cast<std::size_t>(c.rows()) != n || c.cols() != cols)
      throw Error(ErrorKind::DimensionMismatch, "X traces differ in shape");
  double worst = 1.0;
  for (Eigen::Index j = 0; j < cols; ++j) {
    const Variances v = chain_variances(chains.size(), n, [&](std::size_t c, std::size_t k) {
      return chains[c](static_cast<Eigen::Index>(k), j);
    });
    if (v.within > 0.0)
      worst = std::max(worst, psrf_from(v));
    else if (v.between > 0.0)
      return std::numeric_limits<double>::infinity();
  }
  return worst;
}

std::vector<PsrfPoint> psrf_curve(const std::vector<std::vector<double>>& chains, std::size_t checkpoints) {
  std::vector<PsrfPoint> out;
  if (chains.empty() || checkpoints == 0) return out;
  const std::size_t n = chains.front().size();
  for (const auto& c : chains)
    if (c.size() != n) throw Error(ErrorKind::DimensionMismatch, "chains differ in length");
  if (chains.size() < 2) throw Error(ErrorKind::BadParam, "psrf needs at least two chains");
  for (std::size_t k = 1; k <= checkpoints; ++k) {
    const std::size_t len = n * k / checkpoints;
    if (len < 10) continue;
    if (!out.empty() && out.back().samples == len) continue;
    PsrfPoint p;
    p.samples = len;
    try {
      p.value = psrf_prefix(chains, len);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::DegenerateTrace) throw;
      p.value = std::numeric_limits<double>::quiet_NaN();
    }
    out.push_back(p);
  }
  return out;
}

Histogram make_histogram(const std::vector<double>& values, std::size_t bins) {
  if (bins == 0) throw Error(ErrorKind::BadParam, "histogram needs at least one bin");
  Histogram h;
  h.counts.assign(bins, 0);
  bool any = false;
  for (double x : values) {
    if (!std::isfinite(x)) continue;
    h.lo = any ? std::min(h.lo, x) : x;
    h.hi = any ? std::max(h.hi, x) : x;
    any = true;
  }
  if (!any) return h;
  const double width = h.hi - h.lo;
  for (double x : values) {
    if (!std::isfinite(x)) continue;
    std::size_t b = 0;
    if (width > 0.0) b = std::min(bins - 1, static_cast<std::size_t>((x - h.lo) / width * static_cast<double>(bins)));
    ++h.counts[b];
  }
  return h;
}

}  // namespace mmv
