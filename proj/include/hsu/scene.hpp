#pragma once

// Hyperspectral scene data model and file I/O.
//
// Pixels are flattened row-major: pixel (row, col) of a w x h image has
// sequential index n = row * w + col, so horizontal neighbors are n +/- 1 and
// vertical neighbors are n +/- w. All indices are 0-based.

#include <Eigen/Dense>

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "hsu/error.hpp"

namespace hsu {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

struct GridIndex {
  int row;
  int col;
  bool operator==(const GridIndex&) const = default;
};

inline int flatten_index(int row, int col, int w, int h) {
  if (w <= 0 || h <= 0) throw InvalidArgument("flatten_index: grid must be non-empty");
  if (row < 0 || row >= h || col < 0 || col >= w) {
    throw InvalidArgument("flatten_index: (" + std::to_string(row) + "," + std::to_string(col) +
                          ") outside " + std::to_string(w) + "x" + std::to_string(h) + " grid");
  }
  return row * w + col;
}

inline GridIndex unflatten_index(int n, int w, int h) {
  if (w <= 0 || h <= 0) throw InvalidArgument("unflatten_index: grid must be non-empty");
  if (n < 0 || n >= w * h) throw InvalidArgument("unflatten_index: index out of range");
  return {n / w, n % w};
}

// L x N reflectance matrix plus grid geometry. Column n is pixel n's spectrum.
class SceneCube {
 public:
  SceneCube() = default;

  SceneCube(int width, int height, Matrix data) : width_(width), height_(height), data_(std::move(data)) {
    if (width_ <= 0 || height_ <= 0) throw InvalidArgument("SceneCube: grid must be non-empty");
    if (data_.cols() != static_cast<Eigen::Index>(width_) * height_) {
      throw InvalidArgument("SceneCube: data has " + std::to_string(data_.cols()) + " columns, grid needs " +
                            std::to_string(width_ * height_));
    }
    if (data_.rows() < 1) throw InvalidArgument("SceneCube: at least one band required");
    if (!data_.allFinite()) throw InvalidArgument("SceneCube: non-finite reflectance");
  }

  int width() const { return width_; }
  int height() const { return height_; }
  int bands() const { return static_cast<int>(data_.rows()); }
  int pixels() const { return static_cast<int>(data_.cols()); }
  const Matrix& data() const { return data_; }
  auto pixel(int n) const { return data_.col(n); }

 private:
  int width_ = 0;
  int height_ = 0;
  Matrix data_;
};

// L x R endmember signatures. Row l holds the R endmember values at band l.
class EndmemberMatrix {
 public:
  EndmemberMatrix() = default;

  explicit EndmemberMatrix(Matrix m) : m_(std::move(m)) {
    if (m_.rows() < 1 || m_.cols() < 1) throw InvalidArgument("EndmemberMatrix: empty matrix");
    if (!m_.allFinite()) throw InvalidArgument("EndmemberMatrix: non-finite entry");
  }

  int bands() const { return static_cast<int>(m_.rows()); }
  int count() const { return static_cast<int>(m_.cols()); }
  const Matrix& matrix() const { return m_; }

 private:
  Matrix m_;
};

// R x N fractional abundances, one column per pixel.
struct AbundanceMatrix {
  Matrix values;

  int endmembers() const { return static_cast<int>(values.rows()); }
  int pixels() const { return static_cast<int>(values.cols()); }

  // Largest violation of the active constraint set (nonnegativity and,
  // optionally, unit column sums).
  double constraint_violation(bool sum_to_one) const {
    double worst = 0.0;
    if (values.size() == 0) return worst;
    worst = std::max(worst, -values.minCoeff());
    if (sum_to_one) {
      worst = std::max(worst, (values.colwise().sum().array() - 1.0).abs().maxCoeff());
    }
    return worst;
  }
};

// Uniform-stride selection of k out of `bands` band indices: i * bands / k.
inline std::vector<int> band_stride(int bands, int k) {
  if (k <= 0 || k > bands) {
    throw InvalidArgument("band_stride: requested " + std::to_string(k) + " of " + std::to_string(bands) + " bands");
  }
  std::vector<int> idx(k);
  for (int i = 0; i < k; ++i) idx[i] = static_cast<int>((static_cast<long long>(i) * bands) / k);
  return idx;
}

inline Matrix select_rows(const Matrix& m, const std::vector<int>& rows) {
  Matrix out(static_cast<Eigen::Index>(rows.size()), m.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = m.row(rows[i]);
  return out;
}

namespace detail {

inline std::string format_double(double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

inline double parse_double(std::string_view tok, const std::string& where) {
  tok = trim(tok);
  double v = 0.0;
  auto res = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (res.ec != std::errc{} || res.ptr != tok.data() + tok.size()) {
    throw IoError(where + ": cannot parse number '" + std::string(tok) + "'");
  }
  if (!std::isfinite(v)) throw IoError(where + ": non-finite value");
  return v;
}

inline std::ifstream open_in(const std::filesystem::path& path, std::ios::openmode mode = std::ios::in) {
  std::ifstream in(path, mode);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  return in;
}

inline std::ofstream open_out(const std::filesystem::path& path, std::ios::openmode mode = std::ios::out) {
  std::ofstream out(path, mode);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  return out;
}

}  // namespace detail

// Numeric CSV: one matrix row per line, '#' comment lines and blank lines skipped.
inline Matrix read_csv_matrix(const std::filesystem::path& path) {
  auto in = detail::open_in(path);
  std::vector<std::vector<double>> rows;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto view = detail::trim(line);
    if (view.empty() || view.front() == '#') continue;
    const std::string where = path.string() + ":" + std::to_string(lineno);
    std::vector<double> row;
    std::size_t start = 0;
    while (true) {
      auto comma = view.find(',', start);
      row.push_back(detail::parse_double(view.substr(start, comma - start), where));
      if (comma == std::string_view::npos) break;
      start = comma + 1;
    }
    if (!rows.empty() && row.size() != rows.front().size()) {
      throw IoError(where + ": ragged row (" + std::to_string(row.size()) + " columns, expected " +
                    std::to_string(rows.front().size()) + ")");
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw IoError(path.string() + ": no data rows");
  Matrix m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.front().size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows[i].size(); ++j) m(i, j) = rows[i][j];
  return m;
}

inline void write_csv_matrix(const Matrix& m, const std::filesystem::path& path, std::string_view comment = {}) {
  auto out = detail::open_out(path);
  if (!comment.empty()) out << "# " << comment << '\n';
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      if (j) out << ',';
      out << detail::format_double(m(i, j));
    }
    out << '\n';
  }
  if (!out) throw IoError("write failed: " + path.string());
}

// HSC cube: one JSON header line {"w":..,"h":..,"bands":..}, then bands*N
// little-endian float64 values, band-major (each band's N pixels contiguous).
inline void save_cube(const SceneCube& cube, const std::filesystem::path& path) {
  auto out = detail::open_out(path, std::ios::out | std::ios::binary);
  nlohmann::json header = {{"w", cube.width()}, {"h", cube.height()}, {"bands", cube.bands()}};
  out << header.dump() << '\n';
  const Matrix& d = cube.data();
  std::vector<char> buf(static_cast<std::size_t>(d.cols()) * sizeof(double));
  for (Eigen::Index l = 0; l < d.rows(); ++l) {
    for (Eigen::Index n = 0; n < d.cols(); ++n) {
      auto bits = std::bit_cast<std::uint64_t>(d(l, n));
      if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap64(bits);
      std::memcpy(buf.data() + n * sizeof(double), &bits, sizeof(bits));
    }
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  }
  if (!out) throw IoError("write failed: " + path.string());
}

inline SceneCube load_cube(const std::filesystem::path& path) {
  auto in = detail::open_in(path, std::ios::in | std::ios::binary);
  std::string header_line;
  if (!std::getline(in, header_line)) throw IoError(path.string() + ": missing header");
  int w = 0, h = 0, bands = 0;
  try {
    auto header = nlohmann::json::parse(header_line);
    w = header.at("w").get<int>();
    h = header.at("h").get<int>();
    bands = header.at("bands").get<int>();
  } catch (const nlohmann::json::exception& e) {
    throw IoError(path.string() + ": malformed header: " + e.what());
  }
  if (w <= 0 || h <= 0 || bands <= 0) throw IoError(path.string() + ": header dimensions must be positive");
  const std::size_t n = static_cast<std::size_t>(w) * static_cast<std::size_t>(h);
  const std::size_t expected = n * static_cast<std::size_t>(bands) * sizeof(double);
  std::vector<char> payload((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (payload.size() != expected) {
    throw IoError(path.string() + ": dimension mismatch, header implies " + std::to_string(expected) +
                  " payload bytes, found " + std::to_string(payload.size()));
  }
  Matrix d(bands, static_cast<Eigen::Index>(n));
  for (int l = 0; l < bands; ++l) {
    for (std::size_t p = 0; p < n; ++p) {
      std::uint64_t bits;
      std::memcpy(&bits, payload.data() + (static_cast<std::size_t>(l) * n + p) * sizeof(double), sizeof(bits));
      if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap64(bits);
      double v = std::bit_cast<double>(bits);
      if (!std::isfinite(v)) throw IoError(path.string() + ": non-finite value in payload");
      d(l, static_cast<Eigen::Index>(p)) = v;
    }
  }
  return SceneCube(w, h, std::move(d));
}

// Endmember CSV: L rows (bands), R columns (endmembers).
inline EndmemberMatrix load_endmembers(const std::filesystem::path& path) {
  return EndmemberMatrix(read_csv_matrix(path));
}

inline void save_endmembers(const EndmemberMatrix& m, const std::filesystem::path& path) {
  write_csv_matrix(m.matrix(), path, "endmembers: rows = bands, columns = endmembers");
}

inline AbundanceMatrix load_abundances(const std::filesystem::path& path) {
  return AbundanceMatrix{read_csv_matrix(path)};
}

// Export-time validation: negative entries beyond `tol` are rejected, and
// with `sum_to_one` every column must sum to 1 within `tol`.
inline void check_abundances_for_export(const AbundanceMatrix& a, bool sum_to_one, double tol = 1e-6) {
  if (a.values.size() == 0) throw InvalidArgument("abundance export: empty matrix");
  if (!a.values.allFinite()) throw InvalidArgument("abundance export: non-finite entry");
  if (a.values.minCoeff() < -tol) throw InvalidArgument("abundance export: negative abundance");
  if (sum_to_one) {
    double dev = (a.values.colwise().sum().array() - 1.0).abs().maxCoeff();
    if (dev > tol) throw InvalidArgument("abundance export: column sum deviates from 1 by " + std::to_string(dev));
  }
}

// Abundance CSV: R rows, N columns in flatten order.
inline void save_abundances(const AbundanceMatrix& a, const std::filesystem::path& path, int w, int h,
                            bool sum_to_one = false) {
  if (static_cast<long long>(w) * h != a.pixels()) throw InvalidArgument("save_abundances: geometry mismatch");
  check_abundances_for_export(a, sum_to_one);
  write_csv_matrix(a.values, path);
}

// Gray level for an abundance: round-half-up of a * 255, clamped to [0, 255].
inline std::uint8_t abundance_to_gray(double a) {
  double g = std::floor(a * 255.0 + 0.5);
  return static_cast<std::uint8_t>(std::clamp(g, 0.0, 255.0));
}

// One binary P5 PGM per endmember: <stem>_<i>.pgm in `dir`. Returns the paths written.
inline std::vector<std::filesystem::path> save_abundance_maps(const AbundanceMatrix& a,
                                                              const std::filesystem::path& dir,
                                                              const std::string& stem, int w, int h) {
  if (static_cast<long long>(w) * h != a.pixels()) throw InvalidArgument("save_abundance_maps: geometry mismatch");
  check_abundances_for_export(a, false);
  std::vector<std::filesystem::path> written;
  std::vector<char> pixels(static_cast<std::size_t>(a.pixels()));
  for (int r = 0; r < a.endmembers(); ++r) {
    auto path = dir / (stem + "_" + std::to_string(r) + ".pgm");
    auto out = detail::open_out(path, std::ios::out | std::ios::binary);
    out << "P5\n" << w << ' ' << h << "\n255\n";
    for (int n = 0; n < a.pixels(); ++n) pixels[n] = static_cast<char>(abundance_to_gray(a.values(r, n)));
    out.write(pixels.data(), static_cast<std::streamsize>(pixels.size()));
    if (!out) throw IoError("write failed: " + path.string());
    written.push_back(std::move(path));
  }
  return written;
}

}  // namespace hsu
