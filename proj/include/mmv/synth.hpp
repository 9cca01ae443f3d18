#pragma once

#include "mmv/chains.hpp"
#include "mmv/l21.hpp"
#include "mmv/model.hpp"
#include "mmv/random.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace mmv {

struct ExperimentSpec {
  Index N = 100;
  Index M = 30;
  /// Defaults to round(duration_s * fs_hz).
  std::optional<Index> T;
  int P = 3;
  double freq_lo_hz = 5.0;
  double freq_hi_hz = 20.0;
  double duration_s = 0.5;
  double fs_hz = 200.0;
  /// No noise when unset.
  std::optional<double> snr_db = 30.0;
  bool equalize_energy = true;
  bool decay = true;
  std::uint64_t seed = 1;

  Index samples() const;
};

void validate(const ExperimentSpec& spec);

struct GroundTruth {
  Eigen::MatrixXd X_true;
  Support z_true;
  double sigma_sq_true = 0.0;
  Eigen::MatrixXd Y;
  std::vector<double> freqs_hz;  // per active source, in ascending row order
};

struct Problem {
  ForwardModel fm;
  GroundTruth truth;
  MeasurementSet measurements() const { return make_measurements(truth.Y, std::nullopt); }
};

/// s[t] = exp(-t / d) sin(2 pi f t / fs) for t = 0..n-1 with n = round(duration * fs).
/// With decay, d = (n - 1) / ln 20 so the envelope at the last sample is 5% of
/// its start; without, the envelope is 1.
Eigen::VectorXd gen_damped_sinusoid(double f_hz, double fs_hz, double duration_s, bool decay = true);

/// M x N matrix of i.i.d. standard normal entries.
Eigen::MatrixXd random_operator(Index M, Index N, RngStream& rng);

/// Draws the operator (unless `op` is given), a support of P distinct rows,
/// damped sinusoids with uniform frequencies, and noise at the requested SNR.
Problem gen_problem(const ExperimentSpec& spec, const Eigen::MatrixXd* op = nullptr,
                    DepthWeight depth = DepthWeight::NormSquared);

/// 10 log10(||HX||^2 / ||Y - HX||^2); +inf when noiseless.
double realized_snr_db(const ForwardModel& fm, const GroundTruth& truth);

/// Indices of the (at most) P nonzero rows with the largest measurement energy
/// ||h_i||^2 ||x_i||^2, as a support. Ties go to the lower index.
Support top_energy_support(const ForwardModel& fm, const Eigen::MatrixXd& X, int P);

/// |z_est & z_true| / P. z_est must have at most P active entries.
double recovery_rate(const Support& z_true, const Support& z_est, int P);

/// ||H X_rest||^2 / ||H X||^2 where X_rest zeroes the top-P energy rows; 0 when X = 0.
double residual_energy_proportion(const ForwardModel& fm, const Eigen::MatrixXd& X_est, int P);

enum class Method { Gibbs, L21 };

std::string to_string(Method m);
Method parse_method(const std::string& name);

struct BenchConfig {
  ExperimentSpec base;
  int p_max = 8;
  int reps = 10;
  std::vector<Method> methods{Method::Gibbs, Method::L21};
  RunConfig sampler;
  DiscrepancyOptions l21;
  /// Fraction of lambda_max used for noiseless cells, where the discrepancy
  /// target would be zero.
  double noiseless_lambda_fraction = 1e-3;
  int jobs = 1;
  /// Per-cell results are committed here and reused on a re-run; empty keeps
  /// everything in memory.
  std::filesystem::path cell_dir;
  std::optional<Eigen::MatrixXd> op;
};

struct CellResult {
  int P = 0;
  int rep = 0;
  Method method = Method::Gibbs;
  std::uint64_t seed = 0;
  double recovery = 0.0;
  double residual_energy = 0.0;
  double snr_db = 0.0;
};

struct BenchRow {
  int P = 0;
  Method method = Method::Gibbs;
  int n = 0;
  double recovery_mean = 0.0;
  double recovery_se = 0.0;
  double residual_mean = 0.0;
  double residual_se = 0.0;
};

struct BenchResult {
  std::vector<CellResult> cells;  // ordered by (P, rep, method)
  std::vector<BenchRow> rows;     // ordered by (P, method)
  int cells_reused = 0;
};

/// Seed of cell (P, rep), independent of execution order.
std::uint64_t cell_seed(std::uint64_t base_seed, int P, int rep);

CellResult run_cell(const BenchConfig& cfg, int P, int rep, Method method);

BenchResult run_benchmark(const BenchConfig& cfg);

std::vector<BenchRow> aggregate(const std::vector<CellResult>& cells, const std::vector<Method>& methods);

std::string cells_csv(const std::vector<CellResult>& cells);
std::string bench_csv(const std::vector<BenchRow>& rows);

}  // namespace mmv
