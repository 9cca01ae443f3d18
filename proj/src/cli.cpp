#include "mmv/cli.hpp"

#include "mmv/chains.hpp"
#include "mmv/config.hpp"
#include "mmv/diagnostics.hpp"
#include "mmv/error.hpp"
#include "mmv/l21.hpp"
#include "mmv/matrix_io.hpp"
#include "mmv/synth.hpp"

#include <CLI11.hpp>
#include <json.hpp>
#include <openssl/evp.h>

#include <algorithm>
#include <chrono>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <memory>
#include <regex>
#include <sstream>

#ifndef MMV_VERSION
#define MMV_VERSION "0.0.0"
#endif

namespace mmv {

namespace fs = std::filesystem;

std::string sha256_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), &EVP_MD_CTX_free);
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1)
    throw Error(ErrorKind::Io, "sha256 init failed");
  std::vector<char> buf(1 << 16);
  while (in) {
    in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (in.gcount() > 0) EVP_DigestUpdate(ctx.get(), buf.data(), static_cast<std::size_t>(in.gcount()));
  }
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx.get(), md, &len);
  std::ostringstream hex;
  for (unsigned int k = 0; k < len; ++k) hex << std::hex << std::setw(2) << std::setfill('0') << int(md[k]);
  return hex.str();
}

namespace {

using Clock = std::chrono::steady_clock;

// Collects what every command reports in manifest.json.
class Manifest {
 public:
  Manifest(std::string command, fs::path out_dir) : command_(std::move(command)), out_(std::move(out_dir)) {}

  void input(const std::string& role, const fs::path& path) {
    inputs_.push_back({{"role", role}, {"path", path.string()}, {"sha256", sha256_file(path)}});
  }
  void output(const fs::path& name) { outputs_.push_back(name.generic_string()); }
  void phase(const std::string& name, Clock::time_point since) {
    timings_[name] = std::chrono::duration<double>(Clock::now() - since).count();
  }
  void set(const std::string& key, nlohmann::json value) { extra_[key] = std::move(value); }

  // Writes `contents` to out/name atomically and records it.
  void write(const fs::path& name, const std::string& contents) {
    write_file_atomic(out_ / name, contents);
    output(name);
  }
  void write_matrix_file(const fs::path& name, const Eigen::MatrixXd& m) {
    write_matrix(out_ / name, m);
    output(name);
  }

  void commit(const std::string& config_text) {
    nlohmann::ordered_json j;
    j["command"] = command_;
    j["version"] = MMV_VERSION;
    for (auto& [k, v] : extra_.items()) j[k] = v;
    j["config"] = config_text;
    j["inputs"] = inputs_;
    j["outputs"] = outputs_;
    j["timings_s"] = timings_;
    write_file_atomic(out_ / "manifest.json", j.dump(1) + "\n");
  }

 private:
  std::string command_;
  fs::path out_;
  nlohmann::json inputs_ = nlohmann::json::array();
  std::vector<std::string> outputs_;
  nlohmann::ordered_json timings_ = nlohmann::ordered_json::object();
  nlohmann::ordered_json extra_ = nlohmann::ordered_json::object();
};

struct CommonArgs {
  std::string config;
  std::string out;
  int jobs = 1;
  std::optional<std::uint64_t> seed;
};

AppConfig load_app_config(const CommonArgs& args) {
  AppConfig cfg;
  if (!args.config.empty()) {
    if (!fs::exists(args.config)) throw Error(ErrorKind::Config, "--config: file not found: " + args.config);
    cfg = build_app_config(load_config_file(args.config), args.config);
  }
  apply_seed_override(cfg);
  if (args.seed) {
    cfg.sampler.seed = *args.seed;
    cfg.experiment.seed = *args.seed;
  }
  cfg.sampler.jobs = args.jobs;
  return cfg;
}

fs::path prepare_out(const std::string& out) {
  if (out.empty()) throw Error(ErrorKind::Config, "--out is required");
  fs::create_directories(out);
  return fs::path(out);
}

void require_file(const std::string& flag, const std::string& path) {
  if (path.empty()) throw Error(ErrorKind::Config, flag + " is required");
  if (!fs::is_regular_file(path)) throw Error(ErrorKind::Config, flag + ": file not found: " + path);
}

int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::NonFinite:
    case ErrorKind::NotSPD:
    case ErrorKind::Bracketing:
    case ErrorKind::DegenerateTrace:
    case ErrorKind::InvariantViolation:
    case ErrorKind::EmptySupport:
      return kExitNumeric;
    default:
      return kExitConfig;
  }
}

std::string mode_table_csv(const PosteriorSummary& s) {
  std::ostringstream o;
  o << "rank,count,frequency,support\n";
  for (std::size_t k = 0; k < s.mode_table.size(); ++k) {
    const auto& e = s.mode_table[k];
    o << k << ',' << e.count << ',' << format_double(e.frequency) << ',';
    bool first = true;
    for (std::size_t i = 0; i < e.pattern.size(); ++i)
      if (e.pattern[i]) {
        o << (first ? "" : " ") << i;
        first = false;
      }
    o << '\n';
  }
  return o.str();
}

int cmd_sample(const CommonArgs& common, const std::string& op_path, const std::string& y_path,
               std::optional<double> sample_rate, std::ostream& out) {
  require_file("--operator", op_path);
  require_file("--measurements", y_path);
  const AppConfig cfg = load_app_config(common);
  const fs::path dir = prepare_out(common.out);
  Manifest man("sample", dir);
  man.input("operator", op_path);
  man.input("measurements", y_path);
  man.set("seed", cfg.sampler.seed);
  man.set("jobs", cfg.sampler.jobs);

  auto t0 = Clock::now();
  const ForwardModel fm = make_forward_model(read_matrix(op_path), cfg.sampler.depth_weight);
  const MeasurementSet y = make_measurements(read_matrix(y_path), sample_rate);
  check_compatible(fm, y);
  man.phase("load", t0);

  t0 = Clock::now();
  const RunResult res = run(fm, y, cfg.sampler);
  man.phase("sample", t0);

  t0 = Clock::now();
  for (const auto& tr : res.traces) man.write("trace_chain" + std::to_string(tr.chain) + ".csv", trace_csv(tr));
  man.write("summary.json", summary_json(res.summary));
  man.write("mode_table.csv", mode_table_csv(res.summary));
  man.write_matrix_file("x_hat.csv", res.summary.x_hat);
  man.write_matrix_file("x_std.csv", res.summary.x_std);
  man.phase("write", t0);
  man.commit(render_config(cfg));

  out << "z_hat:";
  for (std::size_t i = 0; i < res.summary.z_hat.size(); ++i)
    if (res.summary.z_hat[i]) out << ' ' << i;
  out << "\nMAP frequency: " << (res.summary.mode_table.empty() ? 0.0 : res.summary.mode_table.front().frequency)
      << "\n";
  return kExitOk;
}

int cmd_baseline(const CommonArgs& common, const std::string& op_path, const std::string& y_path,
                 const std::string& lambda_arg, std::optional<double> noise_energy_arg, std::ostream& out) {
  require_file("--operator", op_path);
  require_file("--measurements", y_path);
  AppConfig cfg = load_app_config(common);
  if (!lambda_arg.empty()) {
    if (lambda_arg == "auto") {
      cfg.l21.lambda.reset();
    } else {
      try {
        std::size_t used = 0;
        cfg.l21.lambda = std::stod(lambda_arg, &used);
        if (used != lambda_arg.size()) throw std::invalid_argument("trailing");
      } catch (const std::exception&) {
        throw Error(ErrorKind::Config, "--lambda must be a number or auto, got '" + lambda_arg + "'");
      }
    }
  }
  if (noise_energy_arg) cfg.l21.noise_energy = noise_energy_arg;
  if (!cfg.l21.lambda && !cfg.l21.noise_energy)
    throw Error(ErrorKind::Config, "--lambda auto needs --noise-energy (or [l21] noise_energy)");

  const fs::path dir = prepare_out(common.out);
  Manifest man("baseline", dir);
  man.input("operator", op_path);
  man.input("measurements", y_path);

  auto t0 = Clock::now();
  const ForwardModel fm = make_forward_model(read_matrix(op_path), cfg.sampler.depth_weight);
  const MeasurementSet y = make_measurements(read_matrix(y_path));
  check_compatible(fm, y);
  man.phase("load", t0);

  t0 = Clock::now();
  L21Result sol;
  nlohmann::ordered_json info;
  if (cfg.l21.lambda) {
    sol = solve_l21(fm, y, *cfg.l21.lambda, cfg.l21.discrepancy.solver);
  } else {
    DiscrepancyResult dr = select_lambda_discrepancy(fm, y, *cfg.l21.noise_energy, cfg.l21.discrepancy);
    info["solves"] = dr.solves;
    info["within_tolerance"] = dr.within_tolerance;
    info["noise_energy"] = *cfg.l21.noise_energy;
    sol = std::move(dr.solution);
  }
  man.phase("solve", t0);

  const Eigen::MatrixXd fit = fm.H * sol.X - y.Y;
  info["lambda"] = sol.lambda;
  info["iterations"] = sol.iterations;
  info["converged"] = sol.converged;
  info["objective"] = sol.history.empty() ? l21_objective(fm, y, sol.X, sol.lambda) : sol.history.back();
  info["residual_energy"] = fit.squaredNorm();
  nlohmann::json support = nlohmann::json::array();
  const Support z = active_support(sol.X);
  for (std::size_t i = 0; i < z.size(); ++i)
    if (z[i]) support.push_back(i);
  info["support"] = support;

  std::ostringstream hist;
  hist << "iteration,objective\n";
  for (std::size_t k = 0; k < sol.history.size(); ++k) hist << k + 1 << ',' << format_double(sol.history[k]) << '\n';
  man.write_matrix_file("x_l21.csv", sol.X);
  man.write("history.csv", hist.str());
  man.write("baseline.json", info.dump(1) + "\n");
  man.commit(render_config(cfg));
  out << "lambda: " << sol.lambda << "\nconverged: " << (sol.converged ? "yes" : "no") << "\n";
  return kExitOk;
}

int cmd_bench(const CommonArgs& common, std::optional<int> pmax, std::optional<int> reps,
              std::optional<double> snr_db, const std::string& methods, const std::string& op_path,
              std::ostream& out) {
  AppConfig cfg = load_app_config(common);
  if (pmax) cfg.bench.p_max = *pmax;
  if (reps) cfg.bench.reps = *reps;
  if (snr_db) {
    if (std::isinf(*snr_db) && *snr_db > 0)
      cfg.experiment.snr_db.reset();
    else
      cfg.experiment.snr_db = *snr_db;
  }
  if (!methods.empty()) {
    cfg.bench.methods.clear();
    std::stringstream ss(methods);
    for (std::string m; std::getline(ss, m, ',');) cfg.bench.methods.push_back(parse_method(m));
  }
  const fs::path dir = prepare_out(common.out);
  Manifest man("bench", dir);

  BenchConfig bc;
  bc.base = cfg.experiment;
  bc.p_max = cfg.bench.p_max;
  bc.reps = cfg.bench.reps;
  bc.methods = cfg.bench.methods;
  bc.sampler = cfg.sampler;
  bc.l21 = cfg.l21.discrepancy;
  bc.noiseless_lambda_fraction = cfg.bench.noiseless_lambda_fraction;
  bc.jobs = common.jobs;
  bc.cell_dir = dir / "cells";
  if (!op_path.empty()) {
    require_file("--operator", op_path);
    man.input("operator", op_path);
    bc.op = read_matrix(op_path);
    bc.base.M = bc.op->rows();
    bc.base.N = bc.op->cols();
  }
  man.set("seed", cfg.experiment.seed);
  man.set("jobs", common.jobs);

  const auto t0 = Clock::now();
  const BenchResult res = run_benchmark(bc);
  man.phase("bench", t0);
  man.set("cells_reused", res.cells_reused);
  man.write("cells.csv", cells_csv(res.cells));
  man.write("bench.csv", bench_csv(res.rows));
  man.commit(render_config(cfg));
  out << bench_csv(res.rows);
  return kExitOk;
}

int cmd_diag(const CommonArgs& common, const std::string& traces_dir, std::optional<std::size_t> bins,
             std::optional<std::size_t> checkpoints, std::ostream& out) {
  if (traces_dir.empty()) throw Error(ErrorKind::Config, "--traces is required");
  if (!fs::is_directory(traces_dir)) throw Error(ErrorKind::Config, "--traces: not a directory: " + traces_dir);
  AppConfig cfg = load_app_config(common);
  if (bins) cfg.diag.bins = *bins;
  if (checkpoints) cfg.diag.checkpoints = *checkpoints;
  if (cfg.diag.bins < 1) throw Error(ErrorKind::Config, "--bins must be >= 1");
  if (cfg.diag.checkpoints < 1) throw Error(ErrorKind::Config, "--checkpoints must be >= 1");

  std::vector<std::pair<int, fs::path>> files;
  const std::regex pattern("trace_chain([0-9]+)\\.csv");
  for (const auto& entry : fs::directory_iterator(traces_dir)) {
    std::smatch m;
    const std::string name = entry.path().filename().string();
    if (std::regex_match(name, m, pattern)) files.emplace_back(std::stoi(m[1]), entry.path());
  }
  if (files.empty()) throw Error(ErrorKind::Config, "--traces: no trace_chain*.csv files in " + traces_dir);
  std::sort(files.begin(), files.end());

  const fs::path dir = prepare_out(common.out);
  Manifest man("diag", dir);
  std::vector<ScalarTrace> traces;
  for (const auto& [c, path] : files) {
    man.input("trace", path);
    traces.push_back(read_trace_csv(path));
  }
  const auto& cols = traces.front().columns;
  for (const auto& tr : traces)
    if (tr.columns != cols || tr.values.front().size() != traces.front().values.front().size())
      throw Error(ErrorKind::Config, "trace files disagree in columns or length");

  std::ostringstream psrf_out;
  psrf_out << "scalar,samples,psrf\n";
  for (std::size_t col = 0; col < cols.size(); ++col) {
    if (cols[col] == "iteration") continue;
    std::vector<std::vector<double>> per_chain;
    for (const auto& tr : traces) per_chain.push_back(tr.values[col]);
    if (per_chain.size() >= 2)
      for (const PsrfPoint& p : psrf_curve(per_chain, cfg.diag.checkpoints))
        psrf_out << cols[col] << ',' << p.samples << ',' << format_double(p.value) << '\n';

    std::vector<double> pooled;
    for (const auto& v : per_chain) pooled.insert(pooled.end(), v.begin(), v.end());
    const Histogram h = make_histogram(pooled, cfg.diag.bins);
    std::ostringstream ho;
    ho << "bin_lo,bin_hi,count\n";
    for (std::size_t b = 0; b < h.counts.size(); ++b)
      ho << format_double(h.lo + h.bin_width() * static_cast<double>(b)) << ','
         << format_double(b + 1 == h.counts.size() ? h.hi : h.lo + h.bin_width() * static_cast<double>(b + 1)) << ','
         << h.counts[b] << '\n';
    man.write("hist_" + cols[col] + ".csv", ho.str());
  }
  man.write("psrf.csv", psrf_out.str());
  man.commit(render_config(cfg));
  out << "chains: " << traces.size() << "\n";
  return kExitOk;
}

int cmd_generate(const CommonArgs& common, const std::string& op_path, std::ostream& out) {
  const AppConfig cfg = load_app_config(common);
  const fs::path dir = prepare_out(common.out);
  Manifest man("generate", dir);
  std::optional<Eigen::MatrixXd> op;
  ExperimentSpec spec = cfg.experiment;
  if (!op_path.empty()) {
    require_file("--operator", op_path);
    man.input("operator", op_path);
    op = read_matrix(op_path);
    spec.M = op->rows();
    spec.N = op->cols();
  }
  const auto t0 = Clock::now();
  const Problem prob = gen_problem(spec, op ? &*op : nullptr, cfg.sampler.depth_weight);
  man.phase("generate", t0);
  man.write_matrix_file("H.csv", prob.fm.H);
  man.write_matrix_file("Y.csv", prob.truth.Y);
  man.write_matrix_file("X_true.csv", prob.truth.X_true);
  nlohmann::ordered_json truth;
  truth["seed"] = spec.seed;
  truth["snr_db_requested"] = spec.snr_db ? nlohmann::json(*spec.snr_db) : nlohmann::json("inf");
  const double snr = realized_snr_db(prob.fm, prob.truth);
  truth["snr_db_realized"] = std::isinf(snr) ? nlohmann::json("inf") : nlohmann::json(snr);
  truth["sigma_sq"] = prob.truth.sigma_sq_true;
  truth["noise_energy"] = prob.truth.sigma_sq_true * static_cast<double>(spec.M * spec.samples());
  nlohmann::json support = nlohmann::json::array();
  for (std::size_t i = 0; i < prob.truth.z_true.size(); ++i)
    if (prob.truth.z_true[i]) support.push_back(i);
  truth["support"] = support;
  truth["freqs_hz"] = prob.truth.freqs_hz;
  man.write("truth.json", truth.dump(1) + "\n");
  man.set("seed", spec.seed);
  man.commit(render_config(cfg));
  out << "support: " << support.dump() << "\n";
  return kExitOk;
}

void add_common(CLI::App* cmd, CommonArgs& common, bool with_config = true) {
  if (with_config) cmd->add_option("--config", common.config, "Run configuration file");
  cmd->add_option("--out", common.out, "Output directory")->required();
  cmd->add_option("--jobs", common.jobs, "Worker threads")->check(CLI::PositiveNumber);
  cmd->add_option("--seed", common.seed, "Seed (overrides config and MMV_SEED)");
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Sparse MMV source reconstruction with a Bernoulli-Laplace Gibbs sampler"};
  app.set_version_flag("--version", std::string(MMV_VERSION));
  app.require_subcommand(1);

  CommonArgs common;
  std::string op_path, y_path, lambda_arg, methods, traces_dir;
  std::optional<double> sample_rate, noise_energy, snr_db;
  std::optional<int> pmax, reps;
  std::optional<std::size_t> bins, checkpoints;

  auto* sample = app.add_subcommand("sample", "Run the multi-chain sampler");
  sample->add_option("--operator", op_path, "Forward operator matrix file");
  sample->add_option("--measurements", y_path, "Measurement matrix file");
  sample->add_option("--sample-rate", sample_rate, "Sampling rate in Hz (metadata)");
  add_common(sample, common);

  auto* baseline = app.add_subcommand("baseline", "Solve the weighted l21 baseline");
  baseline->add_option("--operator", op_path, "Forward operator matrix file");
  baseline->add_option("--measurements", y_path, "Measurement matrix file");
  baseline->add_option("--lambda", lambda_arg, "Regularization weight or auto");
  baseline->add_option("--noise-energy", noise_energy, "Expected ||E||^2 for --lambda auto");
  add_common(baseline, common);

  auto* bench = app.add_subcommand("bench", "Synthetic recovery benchmark");
  bench->add_option("--pmax", pmax, "Largest number of active sources");
  bench->add_option("--reps", reps, "Repetitions per P");
  bench->add_option("--snr-db", snr_db, "Signal-to-noise ratio in dB (inf for noiseless)");
  bench->add_option("--methods", methods, "Comma-separated list of gibbs,l21");
  bench->add_option("--operator", op_path, "Use this operator instead of random ones");
  add_common(bench, common);

  auto* diag = app.add_subcommand("diag", "PSRF curves and histograms from sample traces");
  diag->add_option("--traces", traces_dir, "Output directory of a sample run");
  diag->add_option("--bins", bins, "Histogram bins");
  diag->add_option("--checkpoints", checkpoints, "Number of PSRF checkpoints");
  add_common(diag, common);

  auto* generate = app.add_subcommand("generate", "Write a synthetic problem");
  generate->add_option("--operator", op_path, "Use this operator instead of a random one");
  add_common(generate, common);

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForVersion&) {
    out << MMV_VERSION << "\n";
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kExitConfig;
  }

  try {
    if (app.got_subcommand(sample)) return cmd_sample(common, op_path, y_path, sample_rate, out);
    if (app.got_subcommand(baseline)) return cmd_baseline(common, op_path, y_path, lambda_arg, noise_energy, out);
    if (app.got_subcommand(bench)) return cmd_bench(common, pmax, reps, snr_db, methods, op_path, out);
    if (app.got_subcommand(diag)) return cmd_diag(common, traces_dir, bins, checkpoints, out);
    if (app.got_subcommand(generate)) return cmd_generate(common, op_path, out);
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return exit_code_for(e.kind());
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return kExitConfig;
  }
  return kExitConfig;
}

}  // namespace mmv
