#pragma once

#include <cmath>
#include <complex>
#include <numbers>
#include <vector>

#include "seed/rng.hpp"
#include "seed/tensor.hpp"

namespace seed::testing {

inline Tensor random_tensor(Shape shape, Rng& rng, double sd = 1.0, bool requires_grad = true) {
  const std::size_t n = numel(shape);
  return Tensor(std::move(shape), rng.normal_vector(n, sd), requires_grad);
}

inline std::vector<double> to_vector(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

/// O(L^2) DFT by direct summation.
inline std::vector<std::complex<double>> naive_dft(const std::vector<double>& x) {
  const std::size_t n = x.size();
  std::vector<std::complex<double>> out(n);
  for (std::size_t k = 0; k < n; ++k) {
    std::complex<double> acc = 0.0;
    for (std::size_t t = 0; t < n; ++t) {
      const double angle = -2.0 * std::numbers::pi * static_cast<double>(k * t) / static_cast<double>(n);
      acc += x[t] * std::complex<double>(std::cos(angle), std::sin(angle));
    }
    out[k] = acc;
  }
  return out;
}

/// Shannon entropy of |DFT(x - mean)|^2 normalized by log L, from the naive DFT.
inline double naive_spectral_entropy(std::vector<double> x) {
  double m = 0.0;
  for (double v : x) m += v;
  m /= static_cast<double>(x.size());
  for (double& v : x) v -= m;
  const auto spec = naive_dft(x);
  double total = 0.0;
  std::vector<double> p(spec.size());
  for (std::size_t k = 0; k < spec.size(); ++k) total += p[k] = std::norm(spec[k]);
  double h = 0.0;
  for (double v : p) {
    if (v > 0.0) h -= (v / total) * std::log(v / total);
  }
  return h / std::log(static_cast<double>(x.size()));
}

}  // namespace seed::testing
