#include "mmv/synth.hpp"

#include "mmv/error.hpp"
#include "mmv/matrix_io.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <fstream>
#include <limits>
#include <numbers>
#include <numeric>
#include <sstream>
#include <thread>

namespace mmv {

Index ExperimentSpec::samples() const {
  return T.value_or(static_cast<Index>(std::llround(duration_s * fs_hz)));
}

void validate(const ExperimentSpec& spec) {
  if (spec.N < 1 || spec.M < 1) throw Error(ErrorKind::BadParam, "N and M must be >= 1");
  if (spec.P < 0 || spec.P > spec.N) throw Error(ErrorKind::BadParam, "P must lie in [0, N]");
  if (!(spec.fs_hz > 0.0) || !(spec.duration_s > 0.0))
    throw Error(ErrorKind::BadParam, "fs_hz and duration_s must be > 0");
  if (spec.samples() < 1) throw Error(ErrorKind::BadParam, "T must be >= 1");
  if (!(spec.freq_lo_hz > 0.0) || spec.freq_hi_hz < spec.freq_lo_hz)
    throw Error(ErrorKind::BadParam, "frequency range must satisfy 0 < lo <= hi");
  if (spec.snr_db && !std::isfinite(*spec.snr_db)) throw Error(ErrorKind::BadParam, "snr_db must be finite");
}

Eigen::VectorXd gen_damped_sinusoid(double f_hz, double fs_hz, double duration_s, bool decay) {
  if (!(fs_hz > 0.0) || !(duration_s > 0.0) || !(f_hz >= 0.0))
    throw Error(ErrorKind::BadParam, "sinusoid needs f >= 0, fs > 0, duration > 0");
  const auto n = static_cast<Index>(std::llround(duration_s * fs_hz));
  if (n < 1) throw Error(ErrorKind::BadParam, "sinusoid would have no samples");
  const double rate = decay && n > 1 ? std::log(20.0) / static_cast<double>(n - 1) : 0.0;
  Eigen::VectorXd s(n);
  for (Index t = 0; t < n; ++t) {
    const double tt = static_cast<double>(t);
    s(t) = std::exp(-rate * tt) * std::sin(2.0 * std::numbers::pi * f_hz * tt / fs_hz);
  }
  return s;
}

Eigen::MatrixXd random_operator(Index M, Index N, RngStream& rng) {
  Eigen::MatrixXd H(M, N);
  for (Index j = 0; j < N; ++j)
    for (Index i = 0; i < M; ++i) H(i, j) = rng.normal();
  return H;
}

Problem gen_problem(const ExperimentSpec& spec, const Eigen::MatrixXd* op, DepthWeight depth) {
  validate(spec);
  RngStream rng(spec.seed, 0);
  const Index t = spec.samples();
  Eigen::MatrixXd H;
  if (op) {
    if (op->rows() != spec.M || op->cols() != spec.N)
      throw Error(ErrorKind::DimensionMismatch, "operator must be M x N");
    H = *op;
  } else {
    H = random_operator(spec.M, spec.N, rng);
  }
  Problem prob{make_forward_model(std::move(H), depth), {}};
  GroundTruth& g = prob.truth;

  std::vector<Index> pool(static_cast<std::size_t>(spec.N));
  std::iota(pool.begin(), pool.end(), Index{0});
  for (std::size_t k = 0; k < static_cast<std::size_t>(spec.P); ++k)
    std::swap(pool[k], pool[k + rng.index(pool.size() - k)]);
  std::vector<Index> active(pool.begin(), pool.begin() + spec.P);
  std::sort(active.begin(), active.end());

  g.X_true = Eigen::MatrixXd::Zero(spec.N, t);
  g.z_true.assign(static_cast<std::size_t>(spec.N), 0);
  const double target = static_cast<double>(spec.M * t);
  for (Index i : active) {
    const double f = spec.freq_lo_hz + (spec.freq_hi_hz - spec.freq_lo_hz) * rng.uniform();
    Eigen::VectorXd s = gen_damped_sinusoid(f, spec.fs_hz, static_cast<double>(t) / spec.fs_hz, spec.decay);
    if (s.squaredNorm() == 0.0) s(0) = 1.0;
    if (spec.equalize_energy) s *= std::sqrt(target / (prob.fm.col_sq_norm(i) * s.squaredNorm()));
    g.X_true.row(i) = s.transpose();
    g.z_true[static_cast<std::size_t>(i)] = 1;
    g.freqs_hz.push_back(f);
  }

  const Eigen::MatrixXd clean = prob.fm.H * g.X_true;
  g.Y = clean;
  if (spec.snr_db) {
    g.sigma_sq_true = clean.squaredNorm() / (target * std::pow(10.0, *spec.snr_db / 10.0));
    const double sd = std::sqrt(g.sigma_sq_true);
    for (Index c = 0; c < t; ++c)
      for (Index r = 0; r < spec.M; ++r) g.Y(r, c) += sd * rng.normal();
  }
  return prob;
}

double realized_snr_db(const ForwardModel& fm, const GroundTruth& truth) {
  const Eigen::MatrixXd clean = fm.H * truth.X_true;
  const double noise = (truth.Y - clean).squaredNorm();
  if (noise == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(clean.squaredNorm() / noise);
}

namespace {

std::vector<Index> top_energy_rows(const ForwardModel& fm, const Eigen::MatrixXd& X, int P) {
  if (X.rows() != fm.sources()) throw Error(ErrorKind::DimensionMismatch, "X must have N rows");
  if (P < 0) throw Error(ErrorKind::BadParam, "P must be >= 0");
  const Eigen::VectorXd energy = fm.col_sq_norm.cwiseProduct(X.rowwise().squaredNorm());
  std::vector<Index> rows;
  for (Index i = 0; i < X.rows(); ++i)
    if (energy(i) > 0.0) rows.push_back(i);
  std::stable_sort(rows.begin(), rows.end(), [&](Index a, Index b) { return energy(a) > energy(b); });
  if (rows.size() > static_cast<std::size_t>(P)) rows.resize(static_cast<std::size_t>(P));
  return rows;
}

}  // namespace

Support top_energy_support(const ForwardModel& fm, const Eigen::MatrixXd& X, int P) {
  Support z(static_cast<std::size_t>(X.rows()), 0);
  for (Index i : top_energy_rows(fm, X, P)) z[static_cast<std::size_t>(i)] = 1;
  return z;
}

double recovery_rate(const Support& z_true, const Support& z_est, int P) {
  if (z_true.size() != z_est.size()) throw Error(ErrorKind::DimensionMismatch, "supports differ in length");
  if (P < 1) throw Error(ErrorKind::BadParam, "P must be >= 1");
  int hits = 0, est = 0;
  for (std::size_t i = 0; i < z_true.size(); ++i) {
    est += z_est[i] != 0;
    hits += z_est[i] && z_true[i];
  }
  if (est > P) throw Error(ErrorKind::BadParam, "estimated support has more than P entries; rank it first");
  return static_cast<double>(hits) / static_cast<double>(P);
}

double residual_energy_proportion(const ForwardModel& fm, const Eigen::MatrixXd& X_est, int P) {
  const Eigen::MatrixXd full = fm.H * X_est;
  const double total = full.squaredNorm();
  if (total == 0.0) return 0.0;
  Eigen::MatrixXd rest = X_est;
  for (Index i : top_energy_rows(fm, X_est, P)) rest.row(i).setZero();
  return (fm.H * rest).squaredNorm() / total;
}

std::string to_string(Method m) { return m == Method::Gibbs ? "gibbs" : "l21"; }

Method parse_method(const std::string& name) {
  if (name == "gibbs") return Method::Gibbs;
  if (name == "l21") return Method::L21;
  throw Error(ErrorKind::Config, "unknown method '" + name + "' (expected gibbs or l21)");
}

std::uint64_t cell_seed(std::uint64_t base_seed, int P, int rep) {
  // splitmix64 finalizer over the packed key
  std::uint64_t x = base_seed ^ (static_cast<std::uint64_t>(static_cast<std::uint32_t>(P)) << 32 |
                                 static_cast<std::uint32_t>(rep));
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

CellResult run_cell(const BenchConfig& cfg, int P, int rep, Method method) {
  ExperimentSpec spec = cfg.base;
  spec.P = P;
  spec.seed = cell_seed(cfg.base.seed, P, rep);
  const Problem prob = gen_problem(spec, cfg.op ? &*cfg.op : nullptr, cfg.sampler.depth_weight);
  const MeasurementSet y = prob.measurements();

  Eigen::MatrixXd X_est;
  if (method == Method::Gibbs) {
    RunConfig rc = cfg.sampler;
    rc.seed = spec.seed;
    rc.jobs = 1;
    X_est = run(prob.fm, y, rc).summary.x_hat;
  } else if (prob.truth.sigma_sq_true > 0.0) {
    const double noise_energy = static_cast<double>(y.sensors() * y.samples()) * prob.truth.sigma_sq_true;
    X_est = select_lambda_discrepancy(prob.fm, y, noise_energy, cfg.l21).solution.X;
  } else {
    X_est = solve_l21(prob.fm, y, cfg.noiseless_lambda_fraction * lambda_max(prob.fm, y), cfg.l21.solver).X;
  }

  CellResult c;
  c.P = P;
  c.rep = rep;
  c.method = method;
  c.seed = spec.seed;
  c.recovery = P > 0 ? recovery_rate(prob.truth.z_true, top_energy_support(prob.fm, X_est, P), P) : 1.0;
  c.residual_energy = residual_energy_proportion(prob.fm, X_est, P);
  c.snr_db = realized_snr_db(prob.fm, prob.truth);
  return c;
}

namespace {

constexpr const char* kCellHeader = "P,rep,method,seed,recovery,residual_energy,snr_db";

std::string cell_row(const CellResult& c) {
  std::ostringstream out;
  out << c.P << ',' << c.rep << ',' << to_string(c.method) << ',' << c.seed << ',' << format_double(c.recovery)
      << ',' << format_double(c.residual_energy) << ',' << format_double(c.snr_db);
  return out.str();
}

std::filesystem::path cell_path(const std::filesystem::path& dir, int P, int rep, Method m) {
  return dir / ("cell_P" + std::to_string(P) + "_r" + std::to_string(rep) + "_" + to_string(m) + ".csv");
}

std::optional<CellResult> load_cell(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) return std::nullopt;
  std::string header, row;
  if (!std::getline(in, header) || header != kCellHeader || !std::getline(in, row)) return std::nullopt;
  std::stringstream ss(row);
  std::vector<std::string> f;
  for (std::string cell; std::getline(ss, cell, ',');) f.push_back(cell);
  if (f.size() != 7) return std::nullopt;
  try {
    CellResult c;
    c.P = std::stoi(f[0]);
    c.rep = std::stoi(f[1]);
    c.method = parse_method(f[2]);
    c.seed = std::stoull(f[3]);
    c.recovery = std::stod(f[4]);
    c.residual_energy = std::stod(f[5]);
    c.snr_db = f[6] == "inf" ? std::numeric_limits<double>::infinity() : std::stod(f[6]);
    return c;
  } catch (const std::exception&) {
    return std::nullopt;
  }
}

}  // namespace

BenchResult run_benchmark(const BenchConfig& cfg) {
  if (cfg.p_max < 1 || cfg.reps < 1) throw Error(ErrorKind::BadParam, "p_max and reps must be >= 1");
  if (cfg.methods.empty()) throw Error(ErrorKind::BadParam, "no benchmark method selected");
  if (cfg.jobs < 1) throw Error(ErrorKind::BadParam, "jobs must be >= 1");
  if (!cfg.cell_dir.empty()) std::filesystem::create_directories(cfg.cell_dir);

  struct Task {
    int P, rep;
    Method method;
  };
  std::vector<Task> tasks;
  for (int P = 1; P <= cfg.p_max; ++P)
    for (int rep = 0; rep < cfg.reps; ++rep)
      for (Method m : cfg.methods) tasks.push_back({P, rep, m});

  BenchResult out;
  out.cells.resize(tasks.size());
  std::vector<char> done(tasks.size(), 0);
  if (!cfg.cell_dir.empty())
    for (std::size_t k = 0; k < tasks.size(); ++k) {
      const Task& t = tasks[k];
      auto c = load_cell(cell_path(cfg.cell_dir, t.P, t.rep, t.method));
      if (c && c->P == t.P && c->rep == t.rep && c->method == t.method &&
          c->seed == cell_seed(cfg.base.seed, t.P, t.rep)) {
        out.cells[k] = *c;
        done[k] = 1;
        ++out.cells_reused;
      }
    }

  std::vector<std::exception_ptr> errors(tasks.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t k = next++; k < tasks.size(); k = next++) {
      if (done[k]) continue;
      try {
        const Task& t = tasks[k];
        out.cells[k] = run_cell(cfg, t.P, t.rep, t.method);
        if (!cfg.cell_dir.empty())
          write_file_atomic(cell_path(cfg.cell_dir, t.P, t.rep, t.method),
                            std::string(kCellHeader) + "\n" + cell_row(out.cells[k]) + "\n");
      } catch (...) {
        errors[k] = std::current_exception();
      }
    }
  };
  const auto n_workers = std::min<std::size_t>(static_cast<std::size_t>(cfg.jobs), tasks.size());
  if (n_workers <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < n_workers; ++w) pool.emplace_back(worker);
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);

  out.rows = aggregate(out.cells, cfg.methods);
  return out;
}

std::vector<BenchRow> aggregate(const std::vector<CellResult>& cells, const std::vector<Method>& methods) {
  std::vector<BenchRow> rows;
  int p_max = 0;
  for (const auto& c : cells) p_max = std::max(p_max, c.P);
  for (int P = 1; P <= p_max; ++P)
    for (Method m : methods) {
      std::vector<double> rec, res;
      for (const auto& c : cells)
        if (c.P == P && c.method == m) {
          rec.push_back(c.recovery);
          res.push_back(c.residual_energy);
        }
      if (rec.empty()) continue;
      auto mean_se = [](const std::vector<double>& v) {
        const double n = static_cast<double>(v.size());
        const double mean = std::accumulate(v.begin(), v.end(), 0.0) / n;
        if (v.size() < 2) return std::pair{mean, 0.0};
        double ss = 0.0;
        for (double x : v) ss += (x - mean) * (x - mean);
        return std::pair{mean, std::sqrt(ss / (n - 1.0) / n)};
      };
      BenchRow r;
      r.P = P;
      r.method = m;
      r.n = static_cast<int>(rec.size());
      std::tie(r.recovery_mean, r.recovery_se) = mean_se(rec);
      std::tie(r.residual_mean, r.residual_se) = mean_se(res);
      rows.push_back(r);
    }
  return rows;
}

std::string cells_csv(const std::vector<CellResult>& cells) {
  std::string out = std::string(kCellHeader) + "\n";
  for (const auto& c : cells) out += cell_row(c) + "\n";
  return out;
}

std::string bench_csv(const std::vector<BenchRow>& rows) {
  std::ostringstream out;
  out << "P,method,n,recovery_mean,recovery_se,residual_energy_mean,residual_energy_se\n";
  for (const auto& r : rows)
    out << r.P << ',' << to_string(r.method) << ',' << r.n << ',' << format_double(r.recovery_mean) << ','
        << format_double(r.recovery_se) << ',' << format_double(r.residual_mean) << ','
        << format_double(r.residual_se) << '\n';
  return out.str();
}

}  // namespace mmv
