#include "mmv/chains.hpp"

#include "mmv/error.hpp"
#include "mmv/gibbs.hpp"
#include "mmv/matrix_io.hpp"
#include "mmv/moves.hpp"
#include "mmv/random.hpp"

#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <fstream>
#include <sstream>
#include <thread>

namespace mmv {

void validate(const RunConfig& cfg) {
  if (cfg.n_chains < 1) throw Error(ErrorKind::BadParam, "n_chains must be >= 1");
  if (cfg.n_iters < 1) throw Error(ErrorKind::BadParam, "n_iters must be >= 1");
  const long burn = cfg.resolved_burn_in();
  if (burn < 0 || burn >= cfg.n_iters) throw Error(ErrorKind::BadParam, "burn_in must lie in [0, n_iters)");
  if (cfg.thinning < 1) throw Error(ErrorKind::BadParam, "thinning must be >= 1");
  if (cfg.K < 1) throw Error(ErrorKind::BadParam, "K must be >= 1");
  if (!(cfg.gamma >= 0.0 && cfg.gamma <= 1.0)) throw Error(ErrorKind::BadParam, "gamma must lie in [0, 1]");
  if (!(cfg.exchange_p >= 0.0 && cfg.exchange_p <= 1.0))
    throw Error(ErrorKind::BadParam, "exchange_p must lie in [0, 1]");
  if (cfg.jobs < 1) throw Error(ErrorKind::BadParam, "jobs must be >= 1");
  if (cfg.histogram_bins < 1) throw Error(ErrorKind::BadParam, "histogram_bins must be >= 1");
  validate(cfg.hyper);
}

PackedSupport pack_support(const Support& z) {
  PackedSupport p((z.size() + 63) / 64, 0);
  for (std::size_t i = 0; i < z.size(); ++i)
    if (z[i]) p[i / 64] |= std::uint64_t{1} << (i % 64);
  return p;
}

Support unpack_support(const PackedSupport& packed, Index n) {
  Support z(static_cast<std::size_t>(n), 0);
  for (std::size_t i = 0; i < z.size(); ++i) z[i] = (packed[i / 64] >> (i % 64)) & 1u;
  return z;
}

std::size_t PackedSupportHash::operator()(const PackedSupport& p) const noexcept {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (std::uint64_t w : p) {
    h ^= w + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2);
    h *= 0x100000001b3ull;
  }
  return static_cast<std::size_t>(h);
}

void PatternStats::add(const Eigen::MatrixXd& X, const Eigen::VectorXd& tau_sq, double sigma_sq, double a,
                       double omega) {
  ++count;
  const double w = 1.0 / static_cast<double>(count);
  for (std::size_t k = 0; k < rows.size(); ++k) {
    const auto r = static_cast<Index>(k);
    const Eigen::RowVectorXd delta = X.row(rows[k]) - x_mean.row(r);
    x_mean.row(r) += w * delta;
    x_m2.row(r) += delta.cwiseProduct(X.row(rows[k]) - x_mean.row(r));
  }
  tau_sq_mean += w * (tau_sq - tau_sq_mean);
  sigma_sq_mean += w * (sigma_sq - sigma_sq_mean);
  a_mean += w * (a - a_mean);
  omega_mean += w * (omega - omega_mean);
}

void PatternStats::merge(const PatternStats& other) {
  if (other.count == 0) return;
  if (count == 0) {
    *this = other;
    return;
  }
  const double na = static_cast<double>(count);
  const double nb = static_cast<double>(other.count);
  const double n = na + nb;
  const Eigen::MatrixXd delta = other.x_mean - x_mean;
  x_m2 += other.x_m2 + delta.cwiseProduct(delta) * (na * nb / n);
  x_mean += delta * (nb / n);
  tau_sq_mean += (other.tau_sq_mean - tau_sq_mean) * (nb / n);
  sigma_sq_mean += (other.sigma_sq_mean - sigma_sq_mean) * (nb / n);
  a_mean += (other.a_mean - a_mean) * (nb / n);
  omega_mean += (other.omega_mean - omega_mean) * (nb / n);
  count += other.count;
}

Eigen::MatrixXd ChainTrace::x_trace() const {
  const Index width = sources * samples;
  const auto n = static_cast<Index>(retained());
  if (x_flat.size() != static_cast<std::size_t>(width * n))
    throw Error(ErrorKind::BadParam, "full X was not recorded for this trace");
  return Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(x_flat.data(), n,
                                                                                                   width);
}

void ChainTrace::record(long it, const LatentState& state, double lp, bool full_x) {
  PackedSupport key = pack_support(state.z);
  auto found = pattern_index.find(key);
  std::uint32_t id;
  if (found == pattern_index.end()) {
    id = static_cast<std::uint32_t>(patterns.size());
    PatternStats ps;
    ps.pattern = state.z;
    for (Index i = 0; i < state.sources(); ++i)
      if (state.z[static_cast<std::size_t>(i)]) ps.rows.push_back(i);
    ps.x_mean = Eigen::MatrixXd::Zero(static_cast<Index>(ps.rows.size()), state.samples());
    ps.x_m2 = ps.x_mean;
    ps.tau_sq_mean = Eigen::VectorXd::Zero(state.sources());
    patterns.push_back(std::move(ps));
    pattern_index.emplace(std::move(key), id);
  } else {
    id = found->second;
  }
  patterns[id].add(state.X, state.tau_sq, state.sigma_sq, state.a, state.omega);

  iteration.push_back(it);
  pattern_id.push_back(id);
  support_size.push_back(static_cast<double>(patterns[id].rows.size()));
  a.push_back(state.a);
  omega.push_back(state.omega);
  sigma_sq.push_back(state.sigma_sq);
  tau_sq_mean.push_back(state.tau_sq.mean());
  log_density.push_back(lp);
  if (full_x)
    for (Index i = 0; i < state.sources(); ++i)
      for (Index t = 0; t < state.samples(); ++t) x_flat.push_back(state.X(i, t));
}

namespace {

struct ChainWorker {
  LatentState state;
  RngStream rng;
  ChainTrace trace;
};

bool is_retained(long it, long burn, long thinning) {
  return it >= burn && (it - burn + 1) % thinning == 0;
}

// Runs fn(c) for every chain on up to `jobs` threads; rethrows the exception
// of the lowest failing chain.
template <typename Fn>
void for_each_chain(std::size_t n_chains, int jobs, Fn&& fn) {
  const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(jobs), n_chains);
  std::vector<std::exception_ptr> errors(n_chains);
  if (workers <= 1) {
    for (std::size_t c = 0; c < n_chains; ++c) {
      try {
        fn(c);
      } catch (...) {
        errors[c] = std::current_exception();
      }
    }
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::jthread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w)
      pool.emplace_back([&] {
        for (std::size_t c = next++; c < n_chains; c = next++) {
          try {
            fn(c);
          } catch (...) {
            errors[c] = std::current_exception();
          }
        }
      });
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

MmseEstimate estimate_from(const PatternStats& ps, Index n, Index t) {
  MmseEstimate est;
  est.count = ps.count;
  est.x_hat = Eigen::MatrixXd::Zero(n, t);
  est.x_std = Eigen::MatrixXd::Zero(n, t);
  for (std::size_t k = 0; k < ps.rows.size(); ++k) {
    const auto r = static_cast<Index>(k);
    est.x_hat.row(ps.rows[k]) = ps.x_mean.row(r);
    est.x_std.row(ps.rows[k]) = (ps.x_m2.row(r) / static_cast<double>(ps.count)).cwiseMax(0.0).cwiseSqrt();
  }
  est.hyper_hats.a = ps.a_mean;
  est.hyper_hats.omega = ps.omega_mean;
  est.hyper_hats.sigma_sq = ps.sigma_sq_mean;
  est.hyper_hats.tau_sq = ps.tau_sq_mean;
  return est;
}

// Pooled statistics per pattern across all chains, keyed by packed support.
std::map<PackedSupport, PatternStats> pooled_patterns(const std::vector<ChainTrace>& traces) {
  std::map<PackedSupport, PatternStats> pooled;
  for (const auto& tr : traces)
    for (const auto& ps : tr.patterns) pooled[pack_support(ps.pattern)].merge(ps);
  return pooled;
}

double density_at_mean(const PatternStats& ps, const ForwardModel& fm, const MeasurementSet& y,
                       const HyperPriorConfig& hyper) {
  LatentState s;
  s.z = ps.pattern;
  s.X = Eigen::MatrixXd::Zero(fm.sources(), y.samples());
  for (std::size_t k = 0; k < ps.rows.size(); ++k) s.X.row(ps.rows[k]) = ps.x_mean.row(static_cast<Index>(k));
  s.tau_sq = ps.tau_sq_mean;
  s.sigma_sq = ps.sigma_sq_mean;
  s.a = ps.a_mean;
  s.omega = ps.omega_mean;
  return joint_log_density(s, fm, y, hyper);
}

bool support_less(const Support& a, const Support& b) {
  return std::lexicographical_compare(a.begin(), a.end(), b.begin(), b.end());
}

std::optional<double> safe_psrf(const std::vector<std::vector<double>>& chains) {
  try {
    return psrf(chains);
  } catch (const Error&) {
    return std::nullopt;
  }
}

}  // namespace

std::vector<ModeEntry> mode_table(const std::vector<ChainTrace>& traces) {
  std::map<PackedSupport, ModeEntry> counts;
  long total = 0;
  for (const auto& tr : traces)
    for (const auto& ps : tr.patterns) {
      ModeEntry& e = counts[pack_support(ps.pattern)];
      e.pattern = ps.pattern;
      e.count += ps.count;
      total += ps.count;
    }
  std::vector<ModeEntry> out;
  out.reserve(counts.size());
  for (auto& [key, e] : counts) {
    e.frequency = total > 0 ? static_cast<double>(e.count) / static_cast<double>(total) : 0.0;
    out.push_back(std::move(e));
  }
  std::sort(out.begin(), out.end(), [](const ModeEntry& a, const ModeEntry& b) {
    if (a.count != b.count) return a.count > b.count;
    return support_less(a.pattern, b.pattern);
  });
  return out;
}

Support map_support(const std::vector<ChainTrace>& traces, const ForwardModel& fm, const MeasurementSet& y,
                    const HyperPriorConfig& hyper) {
  const std::vector<ModeEntry> table = mode_table(traces);
  if (table.empty()) throw Error(ErrorKind::BadParam, "no retained samples");
  std::size_t tied = 1;
  while (tied < table.size() && table[tied].count == table.front().count) ++tied;
  if (tied == 1) return table.front().pattern;

  const auto pooled = pooled_patterns(traces);
  std::size_t best = 0;
  double best_lp = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < tied; ++k) {
    const double lp = density_at_mean(pooled.at(pack_support(table[k].pattern)), fm, y, hyper);
    // table is already in lexicographic order within a tie, so strict > keeps the smaller pattern
    if (lp > best_lp) {
      best_lp = lp;
      best = k;
    }
  }
  return table[best].pattern;
}

MmseEstimate mmse_conditional(const std::vector<ChainTrace>& traces, const Support& z_hat) {
  if (traces.empty()) throw Error(ErrorKind::BadParam, "no traces");
  const PackedSupport key = pack_support(z_hat);
  PatternStats pooled;
  for (const auto& tr : traces) {
    auto it = tr.pattern_index.find(key);
    if (it != tr.pattern_index.end()) pooled.merge(tr.patterns[it->second]);
  }
  if (pooled.count == 0) throw Error(ErrorKind::BadParam, "no retained sample has the requested support");
  return estimate_from(pooled, traces.front().sources, traces.front().samples);
}

PosteriorSummary summarize(const std::vector<ChainTrace>& traces, const ForwardModel& fm, const MeasurementSet& y,
                           const RunConfig& cfg) {
  PosteriorSummary s;
  s.mode_table = mode_table(traces);
  s.z_hat = map_support(traces, fm, y, cfg.hyper);
  auto map_pos = std::find_if(s.mode_table.begin(), s.mode_table.end(),
                              [&](const ModeEntry& e) { return e.pattern == s.z_hat; });
  std::rotate(s.mode_table.begin(), map_pos, map_pos + 1);
  for (const auto& e : s.mode_table) s.retained += e.count;

  const MmseEstimate est = mmse_conditional(traces, s.z_hat);
  s.x_hat = est.x_hat;
  s.x_std = est.x_std;
  s.hyper_hats = est.hyper_hats;

  std::vector<double> all_a, all_omega, all_sigma, all_tau;
  for (const auto& tr : traces) {
    all_a.insert(all_a.end(), tr.a.begin(), tr.a.end());
    all_omega.insert(all_omega.end(), tr.omega.begin(), tr.omega.end());
    all_sigma.insert(all_sigma.end(), tr.sigma_sq.begin(), tr.sigma_sq.end());
    all_tau.insert(all_tau.end(), tr.tau_sq_mean.begin(), tr.tau_sq_mean.end());
  }
  s.histograms["a"] = make_histogram(all_a, cfg.histogram_bins);
  s.histograms["omega"] = make_histogram(all_omega, cfg.histogram_bins);
  s.histograms["sigma_sq"] = make_histogram(all_sigma, cfg.histogram_bins);
  s.histograms["tau_sq_mean"] = make_histogram(all_tau, cfg.histogram_bins);

  if (traces.size() >= 2 && traces.front().retained() >= 10) {
    auto gather = [&](auto member) {
      std::vector<std::vector<double>> out;
      for (const auto& tr : traces) out.push_back(tr.*member);
      return out;
    };
    s.psrf.a = safe_psrf(gather(&ChainTrace::a));
    s.psrf.omega = safe_psrf(gather(&ChainTrace::omega));
    s.psrf.sigma_sq = safe_psrf(gather(&ChainTrace::sigma_sq));
    s.psrf.support_size = safe_psrf(gather(&ChainTrace::support_size));
    if (cfg.record_full_x) {
      std::vector<Eigen::MatrixXd> xs;
      for (const auto& tr : traces) xs.push_back(tr.x_trace());
      s.psrf.max_x = max_psrf_x(xs);
    }
  }

  long sp = 0, sa = 0, ep = 0, ea = 0;
  for (const auto& tr : traces) {
    sp += tr.shift_proposed;
    sa += tr.shift_accepted;
    ep += tr.exchange_proposed;
    ea += tr.exchange_accepted;
  }
  s.shift_acceptance = sp > 0 ? static_cast<double>(sa) / static_cast<double>(sp) : 0.0;
  s.exchange_acceptance = ep > 0 ? static_cast<double>(ea) / static_cast<double>(ep) : 0.0;
  return s;
}

RunResult run(const ForwardModel& fm, const MeasurementSet& y, const RunConfig& cfg) {
  validate(cfg);
  check_compatible(fm, y);
  const auto n_chains = static_cast<std::size_t>(cfg.n_chains);
  const long burn = cfg.resolved_burn_in();

  const NeighborGraph graph = cfg.shift_moves ? build_neighbor_graph(fm, cfg.gamma) : NeighborGraph{};
  MoveOptions move_opts;
  move_opts.K = cfg.K;
  move_opts.strict_mh_correction = cfg.strict_mh_correction;
  SweepOptions sweep_opts;
  sweep_opts.random_row_order = cfg.random_row_order;

  RngStream master(cfg.seed, kMasterStream);
  std::vector<long> exchange_at;
  if (n_chains >= 2 && cfg.exchange_p > 0.0)
    for (long it = 0; it < cfg.n_iters; ++it)
      if (master.uniform() < cfg.exchange_p) exchange_at.push_back(it);

  std::vector<ChainWorker> chains;
  chains.reserve(n_chains);
  for (std::size_t c = 0; c < n_chains; ++c) {
    RngStream rng(cfg.seed, cfg.stream_offset + c);
    LatentState state = initialize_state(fm, y, cfg.hyper, rng);
    ChainTrace trace;
    trace.chain = c;
    trace.sources = fm.sources();
    trace.samples = y.samples();
    chains.push_back({std::move(state), std::move(rng), std::move(trace)});
  }

  auto record = [&](ChainWorker& w, long it) {
    if (!is_retained(it, burn, cfg.thinning)) return;
    const double lp = joint_log_density(w.state, fm, y, cfg.hyper, true);
    w.trace.record(it, w.state, lp, cfg.record_full_x);
  };
  auto step = [&](ChainWorker& w) {
    gibbs_sweep(w.state, fm, y, cfg.hyper, w.rng, sweep_opts);
    if (cfg.shift_moves) {
      const MoveResult mr = multiple_shift_move(w.state, fm, y, graph, move_opts, w.rng);
      w.trace.shift_proposed += mr.proposed;
      w.trace.shift_accepted += mr.accepted && !mr.identity;
    }
  };

  long start = 0;
  auto run_segment = [&](long end_exclusive, bool last_unrecorded) {
    for_each_chain(n_chains, cfg.jobs, [&](std::size_t c) {
      ChainWorker& w = chains[c];
      for (long it = start; it < end_exclusive; ++it) {
        step(w);
        if (!(last_unrecorded && it + 1 == end_exclusive)) record(w, it);
      }
    });
  };

  for (long ex : exchange_at) {
    run_segment(ex + 1, true);
    std::vector<LatentState> states;
    std::vector<RngStream> rngs;
    states.reserve(n_chains);
    rngs.reserve(n_chains);
    for (auto& w : chains) {
      states.push_back(std::move(w.state));
      rngs.push_back(std::move(w.rng));
    }
    const ExchangeResult er = inter_chain_exchange(states, fm, y, master, rngs);
    for (std::size_t c = 0; c < n_chains; ++c) {
      chains[c].state = std::move(states[c]);
      chains[c].rng = std::move(rngs[c]);
      chains[c].trace.exchange_proposed += er.donor[c] != c;
      chains[c].trace.exchange_accepted += er.donor[c] != c && er.accepted[c];
      record(chains[c], ex);
    }
    start = ex + 1;
  }
  run_segment(cfg.n_iters, false);

  RunResult result;
  result.traces.reserve(n_chains);
  for (auto& w : chains) result.traces.push_back(std::move(w.trace));
  result.summary = summarize(result.traces, fm, y, cfg);
  return result;
}

std::string trace_csv(const ChainTrace& trace) {
  std::ostringstream out;
  out << "iteration,support_size,a,omega,sigma_sq,tau_sq_mean,log_density\n";
  for (std::size_t k = 0; k < trace.retained(); ++k) {
    out << trace.iteration[k] << ',' << format_double(trace.support_size[k]) << ',' << format_double(trace.a[k])
        << ',' << format_double(trace.omega[k]) << ',' << format_double(trace.sigma_sq[k]) << ','
        << format_double(trace.tau_sq_mean[k]) << ',' << format_double(trace.log_density[k]) << '\n';
  }
  return out.str();
}

ScalarTrace read_trace_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
  ScalarTrace tr;
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorKind::Io, path.string() + " is empty");
  {
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) tr.columns.push_back(cell);
  }
  tr.values.resize(tr.columns.size());
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::size_t col = 0;
    while (std::getline(ss, cell, ',')) {
      if (col >= tr.columns.size())
        throw Error(ErrorKind::Io, path.string() + ":" + std::to_string(lineno) + ": too many fields");
      try {
        tr.values[col].push_back(std::stod(cell));
      } catch (const std::exception&) {
        throw Error(ErrorKind::Io, path.string() + ":" + std::to_string(lineno) + ": bad number '" + cell + "'");
      }
      ++col;
    }
    if (col != tr.columns.size())
      throw Error(ErrorKind::Io, path.string() + ":" + std::to_string(lineno) + ": too few fields");
  }
  return tr;
}

namespace {

nlohmann::json support_json(const Support& z) {
  nlohmann::json idx = nlohmann::json::array();
  for (std::size_t i = 0; i < z.size(); ++i)
    if (z[i]) idx.push_back(i);
  return idx;
}

nlohmann::json matrix_json(const Eigen::MatrixXd& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Index i = 0; i < m.rows(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

nlohmann::json optional_json(const std::optional<double>& v) {
  if (!v) return nullptr;
  if (std::isinf(*v)) return "inf";
  return *v;
}

}  // namespace

std::string summary_json(const PosteriorSummary& s) {
  nlohmann::ordered_json j;
  j["sources"] = s.z_hat.size();
  j["retained"] = s.retained;
  j["z_hat"] = support_json(s.z_hat);
  nlohmann::json modes = nlohmann::json::array();
  for (const auto& e : s.mode_table)
    modes.push_back({{"support", support_json(e.pattern)}, {"count", e.count}, {"frequency", e.frequency}});
  j["mode_table"] = std::move(modes);
  j["hyper"] = {{"a", s.hyper_hats.a},
                {"omega", s.hyper_hats.omega},
                {"sigma_sq", s.hyper_hats.sigma_sq},
                {"tau_sq", std::vector<double>(s.hyper_hats.tau_sq.data(),
                                               s.hyper_hats.tau_sq.data() + s.hyper_hats.tau_sq.size())}};
  j["psrf"] = {{"a", optional_json(s.psrf.a)},
               {"omega", optional_json(s.psrf.omega)},
               {"sigma_sq", optional_json(s.psrf.sigma_sq)},
               {"support_size", optional_json(s.psrf.support_size)},
               {"max_x", optional_json(s.psrf.max_x)}};
  j["acceptance"] = {{"shift", s.shift_acceptance}, {"exchange", s.exchange_acceptance}};
  nlohmann::ordered_json hist;
  for (const auto& [name, h] : s.histograms) hist[name] = {{"lo", h.lo}, {"hi", h.hi}, {"counts", h.counts}};
  j["histograms"] = std::move(hist);
  j["x_hat"] = matrix_json(s.x_hat);
  j["x_std"] = matrix_json(s.x_std);
  return j.dump(1) + "\n";
}

}  // namespace mmv
