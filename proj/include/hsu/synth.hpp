#pragma once

// Seeded synthetic scenes: spatially correlated abundance maps, linear /
// bilinear / post-nonlinear mixtures, white Gaussian noise at a target SNR,
// and a small built-in library of smooth spectra.

#include <Eigen/Dense>

#include <cmath>
#include <complex>
#include <cstdint>
#include <limits>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "hsu/error.hpp"
#include "hsu/fft.hpp"
#include "hsu/scene.hpp"

namespace hsu {

enum class MixtureModel { linear, bilinear, pnmm };

inline MixtureModel parse_mixture_model(const std::string& s) {
  if (s == "linear") return MixtureModel::linear;
  if (s == "bilinear") return MixtureModel::bilinear;
  if (s == "pnmm") return MixtureModel::pnmm;
  throw InvalidArgument("unknown mixture model '" + s + "' (expected linear, bilinear or pnmm)");
}

inline std::string to_string(MixtureModel m) {
  switch (m) {
    case MixtureModel::linear: return "linear";
    case MixtureModel::bilinear: return "bilinear";
    case MixtureModel::pnmm: return "pnmm";
  }
  return "?";
}

struct MixtureSpec {
  MixtureModel model = MixtureModel::bilinear;
  double pnmm_exponent = 0.7;
  double snr_db = 20.0;  // +inf disables noise
  std::uint64_t seed = 0;
};

enum class FieldPattern { patches, smooth };

inline FieldPattern parse_field_pattern(const std::string& s) {
  if (s == "patches") return FieldPattern::patches;
  if (s == "smooth" || s == "smooth-field") return FieldPattern::smooth;
  throw InvalidArgument("unknown abundance pattern '" + s + "' (expected patches or smooth)");
}

inline std::string to_string(FieldPattern p) { return p == FieldPattern::patches ? "patches" : "smooth"; }

struct AbundanceFieldSpec {
  FieldPattern pattern = FieldPattern::patches;
  int width = 50;
  int height = 50;
  int endmembers = 5;
  int patch_size = 5;
  double pure_fraction = 0.1;      // patches drawn as pure pixels
  double correlation_length = 4.0;  // smooth-field Gaussian std, in pixels
  double contrast = 2.0;            // smooth-field log-abundance scale
  std::uint64_t seed = 0;
};

namespace detail {

// Periodic Gaussian blur of an h x w field; sigma = 0 is the identity.
inline std::vector<double> periodic_gaussian_blur(const std::vector<double>& field, int w, int h, double sigma) {
  if (sigma <= 0.0) return field;
  RealFft2d fft(w, h);
  const int sw = fft.spectrum_width();
  std::vector<std::complex<double>> transfer(fft.spectrum_size());
  const double c = 2.0 * std::numbers::pi * std::numbers::pi * sigma * sigma;
  for (int ky = 0; ky < h; ++ky) {
    const double fy = static_cast<double>(std::min(ky, h - ky)) / h;
    for (int kx = 0; kx < sw; ++kx) {
      const double fx = static_cast<double>(kx) / w;
      transfer[static_cast<std::size_t>(ky) * sw + kx] = std::exp(-c * (fx * fx + fy * fy));
    }
  }
  std::vector<double> out(field.size());
  fft.apply_multiplier(field, out, transfer);
  return out;
}

}  // namespace detail

inline AbundanceMatrix gen_abundances(const AbundanceFieldSpec& spec) {
  const int w = spec.width, h = spec.height, ends = spec.endmembers;
  if (w <= 0 || h <= 0) throw InvalidArgument("gen_abundances: grid must be non-empty");
  if (ends < 2) throw InvalidArgument("gen_abundances: at least 2 endmembers required");
  const int n_pix = w * h;
  Matrix a(ends, n_pix);
  std::mt19937_64 rng(spec.seed);

  if (spec.pattern == FieldPattern::patches) {
    const int s = spec.patch_size;
    if (s < 1 || s > w || s > h) throw InvalidArgument("gen_abundances: patch size must be in [1, min(w, h)]");
    if (spec.pure_fraction < 0.0 || spec.pure_fraction > 1.0) {
      throw InvalidArgument("gen_abundances: pure fraction must be in [0, 1]");
    }
    const int bw = (w + s - 1) / s;
    const int bh = (h + s - 1) / s;
    std::uniform_int_distribution<int> pick(0, ends - 1);
    std::uniform_real_distribution<double> dominant_level(0.6, 1.0);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::vector<Vector> blocks;
    blocks.reserve(static_cast<std::size_t>(bw) * bh);
    for (int b = 0; b < bw * bh; ++b) {
      const int dom = pick(rng);
      double level = dominant_level(rng);
      if (unit(rng) < spec.pure_fraction) level = 1.0;
      Vector col = Vector::Constant(ends, (1.0 - level) / (ends - 1));
      col(dom) = level;
      blocks.push_back(col);
    }
    for (int row = 0; row < h; ++row)
      for (int col = 0; col < w; ++col) a.col(row * w + col) = blocks[(row / s) * bw + col / s];
    return AbundanceMatrix{std::move(a)};
  }

  if (!(spec.correlation_length >= 0.0)) throw InvalidArgument("gen_abundances: correlation length must be >= 0");
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (int r = 0; r < ends; ++r) {
    std::vector<double> field(static_cast<std::size_t>(n_pix));
    for (double& v : field) v = gauss(rng);
    field = detail::periodic_gaussian_blur(field, w, h, spec.correlation_length);
    double mean = 0.0;
    for (double v : field) mean += v;
    mean /= n_pix;
    double var = 0.0;
    for (double v : field) var += (v - mean) * (v - mean);
    const double sd = std::sqrt(var / n_pix);
    const double scale = sd > 0.0 ? spec.contrast / sd : 0.0;
    for (int n = 0; n < n_pix; ++n) a(r, n) = std::exp(scale * (field[n] - mean));
  }
  for (int n = 0; n < n_pix; ++n) a.col(n) /= a.col(n).sum();
  return AbundanceMatrix{std::move(a)};
}

// Noiseless mixture r_n of the abundance columns.
//   linear:   M alpha
//   bilinear: M alpha + sum_{i<j} alpha_i alpha_j (m_i .* m_j)
//   pnmm:     (M alpha)^p, entrywise
inline SceneCube mix(const AbundanceMatrix& abund, const EndmemberMatrix& endmembers, const MixtureSpec& spec,
                     int width, int height) {
  const Matrix& m = endmembers.matrix();
  const Matrix& a = abund.values;
  if (a.rows() != m.cols()) throw InvalidArgument("mix: abundance rows differ from endmember count");
  if (static_cast<long long>(width) * height != a.cols()) throw InvalidArgument("mix: geometry mismatch");
  Matrix r = m * a;
  switch (spec.model) {
    case MixtureModel::linear:
      break;
    case MixtureModel::bilinear:
      for (Eigen::Index i = 0; i < m.cols(); ++i) {
        for (Eigen::Index j = i + 1; j < m.cols(); ++j) {
          const Vector cross = m.col(i).cwiseProduct(m.col(j));
          const Eigen::RowVectorXd weight = a.row(i).cwiseProduct(a.row(j));
          r.noalias() += cross * weight;
        }
      }
      break;
    case MixtureModel::pnmm:
      if (!(spec.pnmm_exponent > 0.0)) throw InvalidArgument("mix: pnmm exponent must be > 0");
      if (r.minCoeff() < 0.0) throw InvalidArgument("mix: pnmm requires a nonnegative linear mixture");
      r = r.array().pow(spec.pnmm_exponent).matrix();
      break;
  }
  return SceneCube(width, height, std::move(r));
}

inline double mean_power(const Matrix& x) { return x.squaredNorm() / static_cast<double>(x.size()); }

// Adds i.i.d. N(0, sigma^2) with sigma^2 = mean(r^2) / 10^(snr/10). One
// generator stream, consumed in storage order.
inline SceneCube add_noise(const SceneCube& cube, double snr_db, std::uint64_t seed) {
  if (std::isinf(snr_db) && snr_db > 0.0) return cube;
  if (!std::isfinite(snr_db)) throw InvalidArgument("add_noise: SNR must be finite or +inf");
  const double power = mean_power(cube.data());
  if (power == 0.0) throw InvalidArgument("add_noise: all-zero cube has no defined SNR");
  const double sigma = std::sqrt(power / std::pow(10.0, snr_db / 10.0));
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, sigma);
  Matrix noisy = cube.data();
  for (Eigen::Index i = 0; i < noisy.size(); ++i) noisy.data()[i] += gauss(rng);
  return SceneCube(cube.width(), cube.height(), std::move(noisy));
}

inline double realized_snr_db(const SceneCube& noisy, const SceneCube& clean) {
  const Matrix diff = noisy.data() - clean.data();
  const double noise = mean_power(diff);
  if (noise == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(mean_power(clean.data()) / noise);
}

// R distinct library columns, uniformly without replacement (partial Fisher-Yates).
inline EndmemberMatrix pick_endmembers(const Matrix& library, int count, std::uint64_t seed) {
  if (count < 1) throw InvalidArgument("pick_endmembers: count must be >= 1");
  if (count > library.cols()) {
    throw InvalidArgument("pick_endmembers: requested " + std::to_string(count) + " endmembers from a library of " +
                          std::to_string(library.cols()));
  }
  std::vector<int> idx(static_cast<std::size_t>(library.cols()));
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<int>(i);
  std::mt19937_64 rng(seed);
  Matrix out(library.rows(), count);
  for (int i = 0; i < count; ++i) {
    std::uniform_int_distribution<int> pick(i, static_cast<int>(idx.size()) - 1);
    std::swap(idx[i], idx[pick(rng)]);
    out.col(i) = library.col(idx[i]);
  }
  return EndmemberMatrix(std::move(out));
}

inline constexpr int kLibraryBands = 224;
inline constexpr int kLibrarySize = 16;
inline constexpr std::uint64_t kLibrarySeed = 20140504;

// Smooth reflectance-like spectra in [0.02, 0.98]: a sloped baseline plus a
// few Gaussian absorption/reflection features.
inline Matrix synthetic_library(int bands = kLibraryBands, int count = kLibrarySize,
                                std::uint64_t seed = kLibrarySeed) {
  if (bands < 1 || count < 1) throw InvalidArgument("synthetic_library: empty library");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> base(0.6, 0.95);
  std::uniform_real_distribution<double> slope(-0.3, 0.3);
  std::uniform_real_distribution<double> amp(-0.2, 0.2);
  std::uniform_real_distribution<double> center(0.0, 1.0);
  std::uniform_real_distribution<double> width(0.04, 0.2);
  Matrix lib(bands, count);
  for (int c = 0; c < count; ++c) {
    const double b0 = base(rng);
    const double b1 = slope(rng);
    double amps[4], centers[4], widths[4];
    for (int f = 0; f < 4; ++f) {
      amps[f] = amp(rng);
      centers[f] = center(rng);
      widths[f] = width(rng);
    }
    for (int l = 0; l < bands; ++l) {
      const double t = bands > 1 ? static_cast<double>(l) / (bands - 1) : 0.0;
      double v = b0 + b1 * (t - 0.5);
      for (int f = 0; f < 4; ++f) {
        const double z = (t - centers[f]) / widths[f];
        v += amps[f] * std::exp(-0.5 * z * z);
      }
      lib(l, c) = std::clamp(v, 0.02, 0.98);
    }
  }
  return lib;
}

}  // namespace hsu
