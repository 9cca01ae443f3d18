#include "mmv/config.hpp"

#include "mmv/error.hpp"
#include "mmv/matrix_io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <limits>
#include <sstream>

namespace mmv {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string normalize_key(std::string k) {
  std::replace(k.begin(), k.end(), '-', '_');
  return k;
}

[[noreturn]] void fail(const std::string& source, int line, const std::string& msg) {
  throw Error(ErrorKind::Config, source + ":" + std::to_string(line) + ": " + msg);
}

template <typename T>
T parse_integer(const std::string& text, const std::string& source, int line) {
  T v{};
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size()) fail(source, line, "expected an integer, got '" + text + "'");
  return v;
}

double parse_real(const std::string& text, const std::string& source, int line) {
  if (text == "inf") return std::numeric_limits<double>::infinity();
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size()) fail(source, line, "expected a number, got '" + text + "'");
  return v;
}

bool parse_bool(const std::string& text, const std::string& source, int line) {
  if (text == "true" || text == "on" || text == "yes" || text == "1") return true;
  if (text == "false" || text == "off" || text == "no" || text == "0") return false;
  fail(source, line, "expected true or false, got '" + text + "'");
}

using Setter = std::function<void(AppConfig&, const std::string&, const std::string&, int)>;
using SectionTable = std::map<std::string, std::map<std::string, Setter>>;

const SectionTable& section_table() {
  static const SectionTable table = [] {
    SectionTable t;
    auto& s = t["sampler"];
    s["n_chains"] = [](AppConfig& c, auto& v, auto& src, int l) { c.sampler.n_chains = parse_integer<int>(v, src, l); };
    s["n_iters"] = [](AppConfig& c, auto& v, auto& src, int l) { c.sampler.n_iters = parse_integer<long>(v, src, l); };
    s["burn_in"] = [](AppConfig& c, auto& v, auto& src, int l) { c.sampler.burn_in = parse_integer<long>(v, src, l); };
    s["thinning"] = [](AppConfig& c, auto& v, auto& src, int l) { c.sampler.thinning = parse_integer<long>(v, src, l); };
    s["K"] = [](AppConfig& c, auto& v, auto& src, int l) { c.sampler.K = parse_integer<int>(v, src, l); };
    s["gamma"] = [](AppConfig& c, auto& v, auto& src, int l) { c.sampler.gamma = parse_real(v, src, l); };
    s["exchange_p"] = [](AppConfig& c, auto& v, auto& src, int l) { c.sampler.exchange_p = parse_real(v, src, l); };
    s["seed"] = [](AppConfig& c, auto& v, auto& src, int l) {
      c.sampler.seed = parse_integer<std::uint64_t>(v, src, l);
    };
    s["shift_moves"] = [](AppConfig& c, auto& v, auto& src, int l) { c.sampler.shift_moves = parse_bool(v, src, l); };
    s["strict_mh_correction"] = [](AppConfig& c, auto& v, auto& src, int l) {
      c.sampler.strict_mh_correction = parse_bool(v, src, l);
    };
    s["random_row_order"] = [](AppConfig& c, auto& v, auto& src, int l) {
      c.sampler.random_row_order = parse_bool(v, src, l);
    };
    s["record_full_x"] = [](AppConfig& c, auto& v, auto& src, int l) {
      c.sampler.record_full_x = parse_bool(v, src, l);
    };
    s["histogram_bins"] = [](AppConfig& c, auto& v, auto& src, int l) {
      c.sampler.histogram_bins = parse_integer<std::size_t>(v, src, l);
    };

    auto& p = t["prior"];
    p["alpha"] = [](AppConfig& c, auto& v, auto& src, int l) { c.sampler.hyper.alpha = parse_real(v, src, l); };
    p["beta"] = [](AppConfig& c, auto& v, auto& src, int l) { c.sampler.hyper.beta = parse_real(v, src, l); };
    p["sigma_shape"] = [](AppConfig& c, auto& v, auto& src, int l) {
      c.sampler.hyper.sigma_shape = parse_real(v, src, l);
    };
    p["sigma_scale"] = [](AppConfig& c, auto& v, auto& src, int l) {
      c.sampler.hyper.sigma_scale = parse_real(v, src, l);
    };

    t["model"]["depth_weight"] = [](AppConfig& c, auto& v, auto& src, int l) {
      if (v == "norm")
        c.sampler.depth_weight = DepthWeight::Norm;
      else if (v == "norm-squared" || v == "norm_squared")
        c.sampler.depth_weight = DepthWeight::NormSquared;
      else
        fail(src, l, "depth_weight must be norm or norm-squared");
    };

    auto& q = t["l21"];
    q["lambda"] = [](AppConfig& c, auto& v, auto& src, int l) {
      if (v == "auto")
        c.l21.lambda.reset();
      else
        c.l21.lambda = parse_real(v, src, l);
    };
    q["noise_energy"] = [](AppConfig& c, auto& v, auto& src, int l) { c.l21.noise_energy = parse_real(v, src, l); };
    q["max_iters"] = [](AppConfig& c, auto& v, auto& src, int l) {
      c.l21.discrepancy.solver.max_iters = parse_integer<long>(v, src, l);
    };
    q["tol"] = [](AppConfig& c, auto& v, auto& src, int l) { c.l21.discrepancy.solver.tol = parse_real(v, src, l); };
    q["rel_tol"] = [](AppConfig& c, auto& v, auto& src, int l) { c.l21.discrepancy.rel_tol = parse_real(v, src, l); };
    q["max_solves"] = [](AppConfig& c, auto& v, auto& src, int l) {
      c.l21.discrepancy.max_solves = parse_integer<int>(v, src, l);
    };

    auto& e = t["experiment"];
    e["N"] = [](AppConfig& c, auto& v, auto& src, int l) { c.experiment.N = parse_integer<Index>(v, src, l); };
    e["M"] = [](AppConfig& c, auto& v, auto& src, int l) { c.experiment.M = parse_integer<Index>(v, src, l); };
    e["T"] = [](AppConfig& c, auto& v, auto& src, int l) { c.experiment.T = parse_integer<Index>(v, src, l); };
    e["P"] = [](AppConfig& c, auto& v, auto& src, int l) { c.experiment.P = parse_integer<int>(v, src, l); };
    e["freq_lo_hz"] = [](AppConfig& c, auto& v, auto& src, int l) { c.experiment.freq_lo_hz = parse_real(v, src, l); };
    e["freq_hi_hz"] = [](AppConfig& c, auto& v, auto& src, int l) { c.experiment.freq_hi_hz = parse_real(v, src, l); };
    e["duration_s"] = [](AppConfig& c, auto& v, auto& src, int l) { c.experiment.duration_s = parse_real(v, src, l); };
    e["fs_hz"] = [](AppConfig& c, auto& v, auto& src, int l) { c.experiment.fs_hz = parse_real(v, src, l); };
    e["snr_db"] = [](AppConfig& c, auto& v, auto& src, int l) {
      const double snr = parse_real(v, src, l);
      if (std::isinf(snr) && snr > 0)
        c.experiment.snr_db.reset();
      else
        c.experiment.snr_db = snr;
    };
    e["equalize_energy"] = [](AppConfig& c, auto& v, auto& src, int l) {
      c.experiment.equalize_energy = parse_bool(v, src, l);
    };
    e["decay"] = [](AppConfig& c, auto& v, auto& src, int l) { c.experiment.decay = parse_bool(v, src, l); };
    e["seed"] = [](AppConfig& c, auto& v, auto& src, int l) {
      c.experiment.seed = parse_integer<std::uint64_t>(v, src, l);
    };

    auto& b = t["bench"];
    b["p_max"] = [](AppConfig& c, auto& v, auto& src, int l) { c.bench.p_max = parse_integer<int>(v, src, l); };
    b["reps"] = [](AppConfig& c, auto& v, auto& src, int l) { c.bench.reps = parse_integer<int>(v, src, l); };
    b["methods"] = [](AppConfig& c, auto& v, auto& src, int l) {
      c.bench.methods.clear();
      std::stringstream ss(v);
      for (std::string m; std::getline(ss, m, ',');) {
        try {
          c.bench.methods.push_back(parse_method(trim(m)));
        } catch (const Error& err) {
          fail(src, l, err.what());
        }
      }
    };
    b["noiseless_lambda_fraction"] = [](AppConfig& c, auto& v, auto& src, int l) {
      c.bench.noiseless_lambda_fraction = parse_real(v, src, l);
    };

    auto& d = t["diag"];
    d["bins"] = [](AppConfig& c, auto& v, auto& src, int l) { c.diag.bins = parse_integer<std::size_t>(v, src, l); };
    d["checkpoints"] = [](AppConfig& c, auto& v, auto& src, int l) {
      c.diag.checkpoints = parse_integer<std::size_t>(v, src, l);
    };
    return t;
  }();
  return table;
}

}  // namespace

ConfigSections parse_config_text(const std::string& text, const std::string& source) {
  ConfigSections out;
  std::istringstream in(text);
  std::string raw;
  std::string section;
  int line = 0;
  while (std::getline(in, raw)) {
    ++line;
    const auto hash = raw.find('#');
    const std::string s = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (s.empty()) continue;
    if (s.front() == '[') {
      if (s.back() != ']') fail(source, line, "unterminated section header");
      section = normalize_key(trim(s.substr(1, s.size() - 2)));
      if (section.empty()) fail(source, line, "empty section name");
      out[section];
      continue;
    }
    const auto eq = s.find('=');
    if (eq == std::string::npos) fail(source, line, "expected key = value");
    if (section.empty()) fail(source, line, "key outside of any [section]");
    const std::string key = normalize_key(trim(s.substr(0, eq)));
    const std::string value = trim(s.substr(eq + 1));
    if (key.empty()) fail(source, line, "empty key");
    auto& sec = out[section];
    if (sec.contains(key)) fail(source, line, "duplicate key '" + key + "'");
    sec[key] = {value, line};
  }
  return out;
}

ConfigSections load_config_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot open config file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str(), path.string());
}

AppConfig build_app_config(const ConfigSections& sections, const std::string& source) {
  AppConfig cfg;
  const SectionTable& table = section_table();
  for (const auto& [name, entries] : sections) {
    auto sec = table.find(name);
    if (sec == table.end()) {
      const int line = entries.empty() ? 0 : entries.begin()->second.line;
      fail(source, line, "unknown section [" + name + "]");
    }
    for (const auto& [key, entry] : entries) {
      auto setter = sec->second.find(key);
      if (setter == sec->second.end()) fail(source, entry.line, "unknown key '" + key + "' in [" + name + "]");
      setter->second(cfg, entry.value, source, entry.line);
    }
  }
  return cfg;
}

bool apply_seed_override(AppConfig& cfg) {
  const char* env = std::getenv("MMV_SEED");
  if (!env || !*env) return false;
  const std::string text(env);
  std::uint64_t seed = 0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), seed);
  if (ec != std::errc() || ptr != text.data() + text.size())
    throw Error(ErrorKind::Config, "MMV_SEED must be an unsigned integer, got '" + text + "'");
  cfg.sampler.seed = seed;
  cfg.experiment.seed = seed;
  return true;
}

std::string render_config(const AppConfig& c) {
  std::ostringstream o;
  auto b = [](bool v) { return v ? "true" : "false"; };
  auto d = [](double v) { return format_double(v); };
  const RunConfig& s = c.sampler;
  o << "[sampler]\n"
    << "n_chains = " << s.n_chains << "\n"
    << "n_iters = " << s.n_iters << "\n"
    << "burn_in = " << s.resolved_burn_in() << "\n"
    << "thinning = " << s.thinning << "\n"
    << "K = " << s.K << "\n"
    << "gamma = " << d(s.gamma) << "\n"
    << "exchange_p = " << d(s.exchange_p) << "\n"
    << "seed = " << s.seed << "\n"
    << "shift_moves = " << b(s.shift_moves) << "\n"
    << "strict_mh_correction = " << b(s.strict_mh_correction) << "\n"
    << "random_row_order = " << b(s.random_row_order) << "\n"
    << "record_full_x = " << b(s.record_full_x) << "\n"
    << "histogram_bins = " << s.histogram_bins << "\n";
  o << "[prior]\n"
    << "alpha = " << d(s.hyper.alpha) << "\n"
    << "beta = " << d(s.hyper.beta) << "\n"
    << "sigma_shape = " << d(s.hyper.sigma_shape) << "\n"
    << "sigma_scale = " << d(s.hyper.sigma_scale) << "\n";
  o << "[model]\n"
    << "depth_weight = " << (s.depth_weight == DepthWeight::Norm ? "norm" : "norm-squared") << "\n";
  o << "[l21]\n"
    << "lambda = " << (c.l21.lambda ? d(*c.l21.lambda) : std::string("auto")) << "\n";
  if (c.l21.noise_energy) o << "noise_energy = " << d(*c.l21.noise_energy) << "\n";
  o << "max_iters = " << c.l21.discrepancy.solver.max_iters << "\n"
    << "tol = " << d(c.l21.discrepancy.solver.tol) << "\n"
    << "rel_tol = " << d(c.l21.discrepancy.rel_tol) << "\n"
    << "max_solves = " << c.l21.discrepancy.max_solves << "\n";
  const ExperimentSpec& e = c.experiment;
  o << "[experiment]\n"
    << "N = " << e.N << "\n"
    << "M = " << e.M << "\n"
    << "T = " << e.samples() << "\n"
    << "P = " << e.P << "\n"
    << "freq_lo_hz = " << d(e.freq_lo_hz) << "\n"
    << "freq_hi_hz = " << d(e.freq_hi_hz) << "\n"
    << "duration_s = " << d(e.duration_s) << "\n"
    << "fs_hz = " << d(e.fs_hz) << "\n"
    << "snr_db = " << (e.snr_db ? d(*e.snr_db) : std::string("inf")) << "\n"
    << "equalize_energy = " << b(e.equalize_energy) << "\n"
    << "decay = " << b(e.decay) << "\n"
    << "seed = " << e.seed << "\n";
  o << "[bench]\n"
    << "p_max = " << c.bench.p_max << "\n"
    << "reps = " << c.bench.reps << "\n"
    << "methods = ";
  for (std::size_t k = 0; k < c.bench.methods.size(); ++k) o << (k ? "," : "") << to_string(c.bench.methods[k]);
  o << "\n"
    << "noiseless_lambda_fraction = " << d(c.bench.noiseless_lambda_fraction) << "\n";
  o << "[diag]\n"
    << "bins = " << c.diag.bins << "\n"
    << "checkpoints = " << c.diag.checkpoints << "\n";
  return o.str();
}

}  // namespace mmv
