#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace mmv {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitNumeric = 3;

/// Hex SHA-256 of a file's bytes.
std::string sha256_file(const std::filesystem::path& path);

/// Entry point of the `mmv` tool. `args` excludes the program name.
/// Subcommands: sample, baseline, bench, diag, generate.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace mmv
