#pragma once

#include "mmv/chains.hpp"
#include "mmv/l21.hpp"
#include "mmv/synth.hpp"

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace mmv {

// Run configuration files are flat `key = value` lines grouped under
// `[section]` headers. `#` starts a comment. Dashes in keys are read as
// underscores. Unknown sections or keys are errors.
//
//   [sampler]     n_chains n_iters burn_in thinning K gamma exchange_p seed
//                 shift_moves strict_mh_correction random_row_order
//                 record_full_x histogram_bins
//   [prior]       alpha beta sigma_shape sigma_scale
//   [model]       depth_weight (norm | norm-squared)
//   [l21]         lambda (number | auto) noise_energy max_iters tol
//                 rel_tol max_solves
//   [experiment]  N M T P freq_lo_hz freq_hi_hz duration_s fs_hz snr_db
//                 (number | inf) equalize_energy decay seed
//   [bench]       p_max reps methods noiseless_lambda_fraction
//   [diag]        bins checkpoints

struct ConfigEntry {
  std::string value;
  int line = 0;
};

using ConfigSections = std::map<std::string, std::map<std::string, ConfigEntry>>;

ConfigSections parse_config_text(const std::string& text, const std::string& source = "<config>");
ConfigSections load_config_file(const std::filesystem::path& path);

struct L21Settings {
  std::optional<double> lambda;  // unset: discrepancy principle
  std::optional<double> noise_energy;
  DiscrepancyOptions discrepancy;
};

struct BenchSettings {
  int p_max = 8;
  int reps = 10;
  std::vector<Method> methods{Method::Gibbs, Method::L21};
  double noiseless_lambda_fraction = 1e-3;
};

struct DiagSettings {
  std::size_t bins = 50;
  std::size_t checkpoints = 20;
};

struct AppConfig {
  RunConfig sampler;
  L21Settings l21;
  ExperimentSpec experiment;
  BenchSettings bench;
  DiagSettings diag;
};

/// Applies the sections on top of the defaults. Throws Config naming the
/// offending line for unknown keys or unparsable values.
AppConfig build_app_config(const ConfigSections& sections, const std::string& source = "<config>");

/// MMV_SEED, when set, replaces both the sampler and the experiment seed.
/// Returns true if the variable was applied.
bool apply_seed_override(AppConfig& cfg);

/// Canonical `key = value` rendering of every setting.
std::string render_config(const AppConfig& cfg);

}  // namespace mmv
