#pragma once

#include "mmv/diagnostics.hpp"
#include "mmv/model.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

namespace mmv {

struct RunConfig {
  int n_chains = 8;
  long n_iters = 2000;
  /// Defaults to n_iters / 2.
  std::optional<long> burn_in;
  long thinning = 1;
  int K = 2;
  double gamma = 0.8;
  double exchange_p = 0.001;
  std::uint64_t seed = 1;
  /// Chain c draws from stream `stream_offset + c`.
  std::uint64_t stream_offset = 0;
  bool shift_moves = true;
  bool strict_mh_correction = false;
  bool random_row_order = false;
  bool record_full_x = false;
  int jobs = 1;
  std::size_t histogram_bins = 50;
  DepthWeight depth_weight = DepthWeight::NormSquared;
  HyperPriorConfig hyper;

  long resolved_burn_in() const { return burn_in.value_or(n_iters / 2); }
  long retained_per_chain() const { return (n_iters - resolved_burn_in()) / thinning; }
};

void validate(const RunConfig& cfg);

/// Stream id of the coordinator stream that drives exchange coins, donor
/// permutations and exchange acceptance.
inline constexpr std::uint64_t kMasterStream = ~std::uint64_t{0};

using PackedSupport = std::vector<std::uint64_t>;

PackedSupport pack_support(const Support& z);
Support unpack_support(const PackedSupport& packed, Index n);

struct PackedSupportHash {
  std::size_t operator()(const PackedSupport& p) const noexcept;
};

/// Streaming statistics of the samples that visited one support pattern.
struct PatternStats {
  Support pattern;
  std::vector<Index> rows;  // active rows, ascending
  long count = 0;
  Eigen::MatrixXd x_mean;   // rows.size() x T
  Eigen::MatrixXd x_m2;     // sum of squared deviations
  Eigen::VectorXd tau_sq_mean;
  double sigma_sq_mean = 0.0;
  double a_mean = 0.0;
  double omega_mean = 0.0;

  void add(const Eigen::MatrixXd& X, const Eigen::VectorXd& tau_sq, double sigma_sq, double a, double omega);
  /// Pooled statistics of two disjoint sample sets of the same pattern.
  void merge(const PatternStats& other);
};

struct ChainTrace {
  std::size_t chain = 0;
  Index sources = 0;
  Index samples = 0;

  // One entry per retained iteration.
  std::vector<long> iteration;
  std::vector<std::uint32_t> pattern_id;
  std::vector<double> support_size;
  std::vector<double> a;
  std::vector<double> omega;
  std::vector<double> sigma_sq;
  std::vector<double> tau_sq_mean;
  std::vector<double> log_density;
  /// Row-major N*T values per retained iteration (entry i*T + t); empty
  /// unless full-X recording is on.
  std::vector<double> x_flat;

  std::vector<PatternStats> patterns;
  std::unordered_map<PackedSupport, std::uint32_t, PackedSupportHash> pattern_index;

  long shift_proposed = 0;
  long shift_accepted = 0;
  long exchange_proposed = 0;
  long exchange_accepted = 0;

  std::size_t retained() const { return iteration.size(); }
  const Support& support_at(std::size_t k) const { return patterns[pattern_id[k]].pattern; }
  /// retained x (N*T) matrix of the full-X record.
  Eigen::MatrixXd x_trace() const;

  void record(long it, const LatentState& state, double log_density, bool full_x);
};

struct ModeEntry {
  Support pattern;
  long count = 0;
  double frequency = 0.0;
};

struct HyperEstimates {
  double a = 0.0;
  double omega = 0.0;
  double sigma_sq = 0.0;
  Eigen::VectorXd tau_sq;
};

struct PsrfReport {
  std::optional<double> a;
  std::optional<double> omega;
  std::optional<double> sigma_sq;
  std::optional<double> support_size;
  std::optional<double> max_x;
};

struct PosteriorSummary {
  Support z_hat;
  std::vector<ModeEntry> mode_table;  // most frequent first, MAP pattern at the front
  long retained = 0;
  Eigen::MatrixXd x_hat;
  Eigen::MatrixXd x_std;
  HyperEstimates hyper_hats;
  std::map<std::string, Histogram> histograms;
  PsrfReport psrf;
  double shift_acceptance = 0.0;
  double exchange_acceptance = 0.0;
};

struct MmseEstimate {
  Eigen::MatrixXd x_hat;
  Eigen::MatrixXd x_std;  // population standard deviation per entry
  HyperEstimates hyper_hats;
  long count = 0;
};

struct RunResult {
  std::vector<ChainTrace> traces;
  PosteriorSummary summary;
};

/// Runs cfg.n_chains chains. Each iteration is one Gibbs sweep, one
/// multiple-shift move, and with probability exchange_p an exchange round
/// across all chains. Results do not depend on cfg.jobs.
RunResult run(const ForwardModel& fm, const MeasurementSet& y, const RunConfig& cfg);

/// Pooled pattern counts sorted by decreasing count, then by pattern.
std::vector<ModeEntry> mode_table(const std::vector<ChainTrace>& traces);

/// Most frequent retained pattern. Ties go to the pattern with the higher
/// joint log density at its conditional posterior mean, then to the
/// lexicographically smaller pattern.
Support map_support(const std::vector<ChainTrace>& traces, const ForwardModel& fm, const MeasurementSet& y,
                    const HyperPriorConfig& hyper);

/// Averages over the retained samples whose support equals z_hat. Throws
/// BadParam if no sample visited z_hat.
MmseEstimate mmse_conditional(const std::vector<ChainTrace>& traces, const Support& z_hat);

PosteriorSummary summarize(const std::vector<ChainTrace>& traces, const ForwardModel& fm, const MeasurementSet& y,
                           const RunConfig& cfg);

/// Columns: iteration, support_size, a, omega, sigma_sq, tau_sq_mean, log_density.
std::string trace_csv(const ChainTrace& trace);

struct ScalarTrace {
  std::vector<std::string> columns;
  std::vector<std::vector<double>> values;  // one vector per column
};

ScalarTrace read_trace_csv(const std::filesystem::path& path);

/// Deterministic JSON rendering of a summary.
std::string summary_json(const PosteriorSummary& summary);

}  // namespace mmv
