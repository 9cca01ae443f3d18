#include "mmv/matrix_io.hpp"

#include "mmv/error.hpp"

#include <array>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

namespace mmv {

namespace {

constexpr std::array<char, 4> kMagic = {'M', 'M', 'V', '1'};

static_assert(std::endian::native == std::endian::little,
              "binary matrix I/O assumes a little-endian host");

double parse_double(std::string_view token, const std::filesystem::path& path) {
  while (!token.empty() && (token.front() == ' ' || token.front() == '\t')) token.remove_prefix(1);
  while (!token.empty() && (token.back() == ' ' || token.back() == '\t' || token.back() == '\r'))
    token.remove_suffix(1);
  double value = 0.0;
  auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), value);
  if (ec != std::errc() || ptr != token.data() + token.size())
    throw Error(ErrorKind::Io, path.string() + ": cannot parse value '" + std::string(token) + "'");
  if (!std::isfinite(value))
    throw Error(ErrorKind::NonFinite, path.string() + ": non-finite entry");
  return value;
}

std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    auto pos = line.find(',', start);
    if (pos == std::string_view::npos) {
      out.push_back(line.substr(start));
      break;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return out;
}

long parse_dim(std::string_view token, const std::filesystem::path& path) {
  double d = parse_double(token, path);
  if (d < 1 || d != std::floor(d) || d > 0xFFFFFFFFu)
    throw Error(ErrorKind::Io, path.string() + ": invalid dimension in header");
  return static_cast<long>(d);
}

}  // namespace

MatrixFormat format_for_path(const std::filesystem::path& path) {
  auto ext = path.extension().string();
  return (ext == ".bin" || ext == ".mmv") ? MatrixFormat::Binary : MatrixFormat::Csv;
}

Eigen::MatrixXd read_matrix(const std::filesystem::path& path) {
  return format_for_path(path) == MatrixFormat::Binary ? read_matrix_binary(path)
                                                       : read_matrix_csv(path);
}

Eigen::MatrixXd read_matrix_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorKind::Io, path.string() + ": empty file");
  auto header = split_commas(line);
  if (header.size() != 2) throw Error(ErrorKind::Io, path.string() + ": header must be 'rows,cols'");
  const long rows = parse_dim(header[0], path);
  const long cols = parse_dim(header[1], path);

  Eigen::MatrixXd m(rows, cols);
  long r = 0;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    if (r >= rows) throw Error(ErrorKind::Io, path.string() + ": more rows than header states");
    auto fields = split_commas(line);
    if (static_cast<long>(fields.size()) != cols)
      throw Error(ErrorKind::Io, path.string() + ": row " + std::to_string(r) + " has " +
                                     std::to_string(fields.size()) + " values, expected " +
                                     std::to_string(cols));
    for (long c = 0; c < cols; ++c) m(r, c) = parse_double(fields[c], path);
    ++r;
  }
  if (r != rows) throw Error(ErrorKind::Io, path.string() + ": fewer rows than header states");
  return m;
}

Eigen::MatrixXd read_matrix_binary(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
  std::array<char, 16> header{};
  if (!in.read(header.data(), header.size()))
    throw Error(ErrorKind::Io, path.string() + ": truncated header");
  if (std::memcmp(header.data(), kMagic.data(), kMagic.size()) != 0)
    throw Error(ErrorKind::Io, path.string() + ": bad magic (expected MMV1)");
  std::uint32_t rows = 0, cols = 0;
  std::memcpy(&rows, header.data() + 4, 4);
  std::memcpy(&cols, header.data() + 8, 4);
  if (rows == 0 || cols == 0) throw Error(ErrorKind::Io, path.string() + ": zero dimension");

  std::vector<double> buf(static_cast<std::size_t>(rows) * cols);
  if (!in.read(reinterpret_cast<char*>(buf.data()),
               static_cast<std::streamsize>(buf.size() * sizeof(double))))
    throw Error(ErrorKind::Io, path.string() + ": truncated payload");
  if (in.peek() != std::char_traits<char>::eof())
    throw Error(ErrorKind::Io, path.string() + ": trailing bytes after payload");

  Eigen::MatrixXd m(rows, cols);
  for (std::uint32_t r = 0; r < rows; ++r)
    for (std::uint32_t c = 0; c < cols; ++c) {
      double v = buf[static_cast<std::size_t>(r) * cols + c];
      if (!std::isfinite(v)) throw Error(ErrorKind::NonFinite, path.string() + ": non-finite entry");
      m(r, c) = v;
    }
  return m;
}

std::string format_double(double value) {
  std::array<char, 32> buf{};
  auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), value);
  (void)ec;
  return std::string(buf.data(), ptr);
}

void write_file_atomic(const std::filesystem::path& path, const std::string& contents) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::Io, "cannot write " + tmp.string());
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!out) throw Error(ErrorKind::Io, "write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

void write_matrix(const std::filesystem::path& path, const Eigen::MatrixXd& m) {
  if (format_for_path(path) == MatrixFormat::Binary)
    write_matrix_binary(path, m);
  else
    write_matrix_csv(path, m);
}

void write_matrix_csv(const std::filesystem::path& path, const Eigen::MatrixXd& m) {
  std::ostringstream os;
  os << m.rows() << ',' << m.cols() << '\n';
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      if (c) os << ',';
      os << format_double(m(r, c));
    }
    os << '\n';
  }
  write_file_atomic(path, os.str());
}

void write_matrix_binary(const std::filesystem::path& path, const Eigen::MatrixXd& m) {
  if (m.rows() > 0xFFFFFFFFL || m.cols() > 0xFFFFFFFFL)
    throw Error(ErrorKind::BadParam, "matrix too large for MMV1 header");
  std::string out(16 + sizeof(double) * m.size(), '\0');
  std::memcpy(out.data(), kMagic.data(), 4);
  const auto rows = static_cast<std::uint32_t>(m.rows());
  const auto cols = static_cast<std::uint32_t>(m.cols());
  std::memcpy(out.data() + 4, &rows, 4);
  std::memcpy(out.data() + 8, &cols, 4);
  char* p = out.data() + 16;
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      double v = m(r, c);
      std::memcpy(p, &v, sizeof(double));
      p += sizeof(double);
    }
  write_file_atomic(path, out);
}

}  // namespace mmv
