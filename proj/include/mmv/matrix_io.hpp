#pragma once

#include <Eigen/Dense>

#include <filesystem>
#include <string>

namespace mmv {

// Two on-disk matrix formats are supported:
//
//   CSV     first line "<rows>,<cols>", then one line per matrix row with
//           comma-separated values.
//   binary  16-byte header: magic "MMV1", u32 rows, u32 cols, u32 reserved
//           (zero), followed by rows*cols little-endian float64 values in
//           row-major order.
//
// Both loaders reject non-finite entries.

enum class MatrixFormat { Csv, Binary };

/// Chooses the format from the extension: ".bin" / ".mmv" are binary,
/// everything else CSV.
MatrixFormat format_for_path(const std::filesystem::path& path);

Eigen::MatrixXd read_matrix(const std::filesystem::path& path);
Eigen::MatrixXd read_matrix_csv(const std::filesystem::path& path);
Eigen::MatrixXd read_matrix_binary(const std::filesystem::path& path);

void write_matrix(const std::filesystem::path& path, const Eigen::MatrixXd& m);
void write_matrix_csv(const std::filesystem::path& path, const Eigen::MatrixXd& m);
void write_matrix_binary(const std::filesystem::path& path, const Eigen::MatrixXd& m);

/// Writes `contents` to a sibling temporary file and renames it over `path`.
void write_file_atomic(const std::filesystem::path& path, const std::string& contents);

/// Shortest round-trip decimal representation of a double.
std::string format_double(double value);

}  // namespace mmv
