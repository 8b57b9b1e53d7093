#pragma once

// Discrete Fourier transforms of arbitrary length: iterative radix-2 for powers of two,
// Bluestein's chirp-z reduction to a power-of-two convolution otherwise.

#include <cmath>
#include <complex>
#include <cstddef>
#include <numbers>
#include <span>
#include <vector>

#include "seed/errors.hpp"

namespace seed {

/// Per-bin complex spectrum stored as separate real and imaginary arrays.
struct ComplexSpectrum {
  std::vector<double> re;
  std::vector<double> im;

  std::size_t size() const { return re.size(); }
  std::complex<double> bin(std::size_t k) const { return {re[k], im[k]}; }
};

namespace detail {

inline bool is_power_of_two(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

inline void fft_radix2(std::vector<std::complex<double>>& a, bool inverse) {
  const std::size_t n = a.size();
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double angle = (inverse ? 2.0 : -2.0) * std::numbers::pi / static_cast<double>(len);
    for (std::size_t i = 0; i < n; i += len) {
      for (std::size_t j = 0; j < len / 2; ++j) {
        // Twiddles from the angle directly rather than by repeated multiplication,
        // which drifts for long transforms.
        const std::complex<double> w = std::polar(1.0, angle * static_cast<double>(j));
        const auto u = a[i + j];
        const auto v = a[i + j + len / 2] * w;
        a[i + j] = u + v;
        a[i + j + len / 2] = u - v;
      }
    }
  }
}

inline void fft_bluestein(std::vector<std::complex<double>>& a, bool inverse) {
  const std::size_t n = a.size();
  std::size_t m = 1;
  while (m < 2 * n - 1) m <<= 1;
  const double sign = inverse ? 1.0 : -1.0;
  std::vector<std::complex<double>> chirp(n);
  for (std::size_t k = 0; k < n; ++k) {
    // k^2 mod 2n keeps the angle argument small for large k.
    const auto k2 = static_cast<double>((k * k) % (2 * n));
    chirp[k] = std::polar(1.0, sign * std::numbers::pi * k2 / static_cast<double>(n));
  }
  std::vector<std::complex<double>> x(m), y(m);
  for (std::size_t k = 0; k < n; ++k) x[k] = a[k] * chirp[k];
  y[0] = std::conj(chirp[0]);
  for (std::size_t k = 1; k < n; ++k) y[k] = y[m - k] = std::conj(chirp[k]);
  fft_radix2(x, false);
  fft_radix2(y, false);
  for (std::size_t i = 0; i < m; ++i) x[i] *= y[i];
  fft_radix2(x, true);
  const double inv_m = 1.0 / static_cast<double>(m);
  for (std::size_t k = 0; k < n; ++k) a[k] = x[k] * inv_m * chirp[k];
}

}  // namespace detail

/// Unnormalized DFT in place; the inverse direction is scaled by 1/n.
inline void fft_inplace(std::vector<std::complex<double>>& a, bool inverse = false) {
  const std::size_t n = a.size();
  if (n < 2) throw InputError("fft needs at least 2 samples, got " + std::to_string(n));
  if (detail::is_power_of_two(n)) {
    detail::fft_radix2(a, inverse);
  } else {
    detail::fft_bluestein(a, inverse);
  }
  if (inverse) {
    const double inv = 1.0 / static_cast<double>(n);
    for (auto& v : a) v *= inv;
  }
}

/// X_k = sum_t x_t exp(-2 pi i k t / L), all L bins.
inline ComplexSpectrum fft_real(std::span<const double> x) {
  if (x.size() < 2) throw InputError("fft_real needs at least 2 samples, got " + std::to_string(x.size()));
  std::vector<std::complex<double>> a(x.begin(), x.end());
  fft_inplace(a);
  ComplexSpectrum out{std::vector<double>(a.size()), std::vector<double>(a.size())};
  for (std::size_t k = 0; k < a.size(); ++k) {
    out.re[k] = a[k].real();
    out.im[k] = a[k].imag();
  }
  return out;
}

/// Inverse of fft_real; returns the real part (the imaginary part vanishes for spectra
/// of real inputs).
inline std::vector<double> ifft_real(const ComplexSpectrum& spectrum) {
  if (spectrum.re.size() != spectrum.im.size()) throw ShapeError("spectrum re/im lengths differ");
  std::vector<std::complex<double>> a(spectrum.size());
  for (std::size_t k = 0; k < a.size(); ++k) a[k] = spectrum.bin(k);
  fft_inplace(a, true);
  std::vector<double> out(a.size());
  for (std::size_t k = 0; k < a.size(); ++k) out[k] = a[k].real();
  return out;
}

}  // namespace seed
