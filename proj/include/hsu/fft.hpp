#pragma once

// Thin RAII wrapper over FFTW's 2D real-to-complex transforms on an h x w
// row-major grid (the pixel flatten order).

#include <fftw3.h>

#include <algorithm>
#include <complex>
#include <memory>
#include <mutex>
#include <span>
#include <vector>

#include "hsu/error.hpp"

namespace hsu::detail {

// FFTW planning touches global state; execution on new-array buffers does not.
inline std::mutex& fftw_planner_mutex() {
  static std::mutex m;
  return m;
}

template <typename T>
struct FftwFree {
  void operator()(T* p) const { fftw_free(p); }
};

template <typename T>
using FftwBuffer = std::unique_ptr<T[], FftwFree<T>>;

template <typename T>
FftwBuffer<T> fftw_alloc(std::size_t count) {
  void* raw = fftw_malloc(sizeof(T) * std::max<std::size_t>(count, 1));
  if (!raw) throw std::bad_alloc();
  return FftwBuffer<T>(static_cast<T*>(raw));
}

class RealFft2d {
 public:
  RealFft2d(int width, int height) : w_(width), h_(height) {
    if (w_ <= 0 || h_ <= 0) throw InvalidArgument("RealFft2d: grid must be non-empty");
    auto real = fftw_alloc<double>(real_size());
    auto spec = fftw_alloc<fftw_complex>(spectrum_size());
    std::lock_guard lock(fftw_planner_mutex());
    forward_ = fftw_plan_dft_r2c_2d(h_, w_, real.get(), spec.get(), FFTW_ESTIMATE);
    backward_ = fftw_plan_dft_c2r_2d(h_, w_, spec.get(), real.get(), FFTW_ESTIMATE);
    if (!forward_ || !backward_) throw Error("RealFft2d: FFTW planning failed");
  }

  RealFft2d(const RealFft2d&) = delete;
  RealFft2d& operator=(const RealFft2d&) = delete;

  ~RealFft2d() {
    std::lock_guard lock(fftw_planner_mutex());
    if (forward_) fftw_destroy_plan(forward_);
    if (backward_) fftw_destroy_plan(backward_);
  }

  int width() const { return w_; }
  int height() const { return h_; }
  std::size_t real_size() const { return static_cast<std::size_t>(w_) * h_; }
  // Half-spectrum: h rows of (w/2 + 1) frequencies.
  int spectrum_width() const { return w_ / 2 + 1; }
  std::size_t spectrum_size() const { return static_cast<std::size_t>(h_) * spectrum_width(); }

  // out = IDFT( DFT(in) .* multiplier ), multiplier indexed [ky * (w/2+1) + kx].
  // The multiplier must be the half-spectrum of a real, even-symmetric operator.
  void apply_multiplier(std::span<const double> in, std::span<double> out,
                        std::span<const std::complex<double>> multiplier) const {
    auto real = fftw_alloc<double>(real_size());
    auto spec = fftw_alloc<fftw_complex>(spectrum_size());
    std::copy(in.begin(), in.end(), real.get());
    fftw_execute_dft_r2c(forward_, real.get(), spec.get());
    const double norm = 1.0 / static_cast<double>(real_size());
    for (std::size_t i = 0; i < spectrum_size(); ++i) {
      std::complex<double> z(spec[i][0], spec[i][1]);
      z *= multiplier[i] * norm;
      spec[i][0] = z.real();
      spec[i][1] = z.imag();
    }
    fftw_execute_dft_c2r(backward_, spec.get(), real.get());
    std::copy(real.get(), real.get() + real_size(), out.begin());
  }

  std::vector<std::complex<double>> forward(std::span<const double> in) const {
    auto real = fftw_alloc<double>(real_size());
    auto spec = fftw_alloc<fftw_complex>(spectrum_size());
    std::copy(in.begin(), in.end(), real.get());
    fftw_execute_dft_r2c(forward_, real.get(), spec.get());
    std::vector<std::complex<double>> out(spectrum_size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = {spec[i][0], spec[i][1]};
    return out;
  }

 private:
  int w_;
  int h_;
  fftw_plan forward_ = nullptr;
  fftw_plan backward_ = nullptr;
};

}  // namespace hsu::detail
