#pragma once

// Dependency evaluation in the frequency domain: shaping filter, power spectral density,
// normalized spectral entropy, plus the autocorrelation tooling used to relate entropy to
// classical lag structure.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <map>
#include <numbers>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "seed/errors.hpp"
#include "seed/fft.hpp"
#include "seed/rng.hpp"
#include "seed/tensor.hpp"

namespace seed {

/// Learnable per-bin complex multiplier applied to a length-L spectrum.
struct ShapingFilter {
  std::vector<std::complex<double>> weights;

  static ShapingFilter identity(std::size_t length) {
    return ShapingFilter{std::vector<std::complex<double>>(length, {1.0, 0.0})};
  }
  std::size_t size() const { return weights.size(); }
};

/// One normalized spectral entropy per variable, each in [0, 1].
struct EntropyVector {
  std::vector<double> values;

  std::size_t size() const { return values.size(); }
  double operator[](std::size_t i) const { return values[i]; }
};

enum class MeanHandling { remove, keep };

/// Centered energy below this fraction of raw energy counts as a constant series.
inline constexpr double kDegenerateEnergyRatio = 1e-20;

inline ComplexSpectrum apply_filter(const ComplexSpectrum& spectrum, const ShapingFilter& filter) {
  if (spectrum.size() != filter.size() || spectrum.im.size() != spectrum.re.size()) {
    throw ShapeError("apply_filter: spectrum has " + std::to_string(spectrum.size()) + " bins, filter has " +
                     std::to_string(filter.size()));
  }
  ComplexSpectrum out{std::vector<double>(spectrum.size()), std::vector<double>(spectrum.size())};
  for (std::size_t k = 0; k < spectrum.size(); ++k) {
    const auto v = spectrum.bin(k) * filter.weights[k];
    out.re[k] = v.real();
    out.im[k] = v.imag();
  }
  return out;
}

namespace detail {

inline std::vector<double> centered(std::span<const double> x, MeanHandling mean) {
  std::vector<double> out(x.begin(), x.end());
  if (mean == MeanHandling::remove) {
    const double mu = std::accumulate(out.begin(), out.end(), 0.0) / static_cast<double>(out.size());
    for (auto& v : out) v -= mu;
  }
  return out;
}

inline bool negligible_energy(std::span<const double> raw, std::span<const double> centered_values) {
  double raw_energy = 0.0, energy = 0.0;
  for (double v : raw) raw_energy += v * v;
  for (double v : centered_values) energy += v * v;
  return energy == 0.0 || energy <= kDegenerateEnergyRatio * raw_energy;
}

}  // namespace detail

/// |S_k|^2 over all L bins of the (optionally filtered) spectrum.
inline std::vector<double> power_spectrum(std::span<const double> x, const ShapingFilter* filter = nullptr,
                                          MeanHandling mean = MeanHandling::remove) {
  auto spectrum = fft_real(detail::centered(x, mean));
  if (filter != nullptr) spectrum = apply_filter(spectrum, *filter);
  std::vector<double> power(spectrum.size());
  for (std::size_t k = 0; k < power.size(); ++k) {
    power[k] = spectrum.re[k] * spectrum.re[k] + spectrum.im[k] * spectrum.im[k];
  }
  return power;
}

/// -sum p log p / log n for p = power / sum(power).
inline double entropy_of_power(std::span<const double> power) {
  if (power.size() < 2) throw InputError("spectral entropy needs at least 2 bins");
  const double total = std::accumulate(power.begin(), power.end(), 0.0);
  if (!(total > 0.0)) throw DegenerateInputError("spectral entropy: total power is zero");
  double h = 0.0;
  for (double v : power) {
    const double p = v / total;
    if (p > 0.0) h -= p * std::log(p);
  }
  return h / std::log(static_cast<double>(power.size()));
}

/// Normalized spectral entropy of one series. Throws DegenerateInputError for a constant
/// series (after mean removal) or a filter that annihilates every bin.
inline double spectral_entropy(std::span<const double> x, const ShapingFilter* filter = nullptr,
                               MeanHandling mean = MeanHandling::remove) {
  if (x.size() < 2) throw InputError("spectral_entropy needs L >= 2, got " + std::to_string(x.size()));
  if (filter != nullptr && filter->size() != x.size()) {
    throw ShapeError("spectral_entropy: filter length " + std::to_string(filter->size()) + " != series length " +
                     std::to_string(x.size()));
  }
  const auto c = detail::centered(x, mean);
  if (detail::negligible_energy(x, c)) throw DegenerateInputError("spectral_entropy: series has no variation");
  return entropy_of_power(power_spectrum(x, filter, mean));
}

/// Same as spectral_entropy, with degenerate inputs mapped to 0 (a constant is perfectly
/// self-predictable).
inline double spectral_entropy_or_zero(std::span<const double> x, const ShapingFilter* filter = nullptr,
                                       MeanHandling mean = MeanHandling::remove) {
  try {
    return spectral_entropy(x, filter, mean);
  } catch (const DegenerateInputError&) {
    return 0.0;
  }
}

/// Per-variable entropies of a C x L window.
inline EntropyVector evaluate_dependencies(const Tensor& window, const ShapingFilter& filter) {
  if (window.ndim() != 2 || window.dim(0) < 1 || window.dim(1) < 2) {
    throw ShapeError("evaluate_dependencies: expected C x L window with L >= 2, got " + to_string(window.shape()));
  }
  const std::size_t c = window.dim(0), l = window.dim(1);
  EntropyVector out;
  for (std::size_t i = 0; i < c; ++i) out.values.push_back(spectral_entropy(window.data().subspan(i * l, l), &filter));
  return out;
}

// ---------------------------------------------------------------------------------------
// Autocorrelation

/// Biased autocovariance r(tau) = (1/L) sum_t x~_t x~_{t+tau} of the mean-removed series,
/// for tau = 0..max_lag.
inline std::vector<double> autocovariance(std::span<const double> x, std::size_t max_lag) {
  if (max_lag >= x.size()) throw InputError("autocovariance: max_lag must be < series length");
  const auto c = detail::centered(x, MeanHandling::remove);
  const double n = static_cast<double>(x.size());
  std::vector<double> r(max_lag + 1, 0.0);
  for (std::size_t tau = 0; tau <= max_lag; ++tau) {
    double s = 0.0;
    for (std::size_t t = 0; t + tau < c.size(); ++t) s += c[t] * c[t + tau];
    r[tau] = s / n;
  }
  return r;
}

/// Normalized ACF R(tau)/R(0) for lags 1..max_lag.
inline std::vector<double> autocorrelation(std::span<const double> x, std::size_t max_lag) {
  const auto r = autocovariance(x, max_lag);
  const auto c = detail::centered(x, MeanHandling::remove);
  if (detail::negligible_energy(x, c) || !(r[0] > 0.0)) {
    throw DegenerateInputError("autocorrelation: zero-variance series");
  }
  std::vector<double> acf(max_lag);
  for (std::size_t tau = 1; tau <= max_lag; ++tau) acf[tau - 1] = r[tau] / r[0];
  return acf;
}

/// Largest ACF value over lags 1..max_lag.
inline double acf_peak(std::span<const double> x, std::size_t max_lag) {
  if (max_lag < 1) throw InputError("acf_peak needs max_lag >= 1");
  const auto acf = autocorrelation(x, max_lag);
  return *std::max_element(acf.begin(), acf.end());
}

/// |X_k|^2 / L of the mean-removed series.
inline std::vector<double> periodogram(std::span<const double> x) {
  auto p = power_spectrum(x, nullptr, MeanHandling::remove);
  for (auto& v : p) v /= static_cast<double>(x.size());
  return p;
}

/// Fourier transform of a symmetric autocovariance sequence evaluated at the L DFT bins:
/// S_k = r(0) + 2 sum_{tau>=1} r(tau) cos(2 pi k tau / L). `acov` holds lags 0..L-1.
inline std::vector<double> spectrum_from_autocovariance(std::span<const double> acov) {
  const std::size_t n = acov.size();
  std::vector<double> s(n, 0.0);
  for (std::size_t k = 0; k < n; ++k) {
    double v = acov[0];
    for (std::size_t tau = 1; tau < n; ++tau) {
      const auto phase = static_cast<double>((k * tau) % n);
      v += 2.0 * acov[tau] * std::cos(2.0 * std::numbers::pi * phase / static_cast<double>(n));
    }
    s[k] = v;
  }
  return s;
}

// ---------------------------------------------------------------------------------------
// Periodic-plus-noise generator and the ACF/entropy study

/// x_t = (1 - alpha) sin(2 pi t / period) + alpha eps_t, eps_t ~ N(0, 1).
struct SyntheticSpec {
  double alpha = 0.0;
  std::size_t period = 24;
  std::size_t length = 512;
  std::uint64_t seed = 0;

  void validate() const {
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw InputError("synthetic: alpha must lie in [0, 1]");
    if (period < 2) throw InputError("synthetic: period must be >= 2");
    if (length < 2 * period) throw InputError("synthetic: length must be >= 2 * period");
  }
};

inline std::vector<double> generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  std::vector<double> x(spec.length);
  for (std::size_t t = 0; t < spec.length; ++t) {
    const double periodic =
        std::sin(2.0 * std::numbers::pi * static_cast<double>(t) / static_cast<double>(spec.period));
    const double noise = rng.normal();
    x[t] = (1.0 - spec.alpha) * periodic + spec.alpha * noise;
  }
  return x;
}

struct StudyRow {
  double alpha = 0.0;
  double acf_peak = 0.0;
  double spectral_entropy = 0.0;
};

/// For each alpha, generate a series from `base` (alpha replaced) and record the ACF peak
/// over lags 1..max_lag (default 2 * period) and the unfiltered spectral entropy.
inline std::vector<StudyRow> acf_entropy_study(std::span<const double> alphas, SyntheticSpec base,
                                               std::size_t max_lag = 0) {
  if (alphas.empty()) throw InputError("acf_entropy_study: empty alpha grid");
  if (max_lag == 0) max_lag = std::min(2 * base.period, base.length - 1);
  std::vector<StudyRow> rows;
  for (double a : alphas) {
    base.alpha = a;
    const auto x = generate_synthetic(base);
    rows.push_back({a, acf_peak(x, max_lag), spectral_entropy(x)});
  }
  return rows;
}

/// Inclusive grid lo, lo+step, ..., hi (hi kept when it lies within step/1000 of a point).
inline std::vector<double> alpha_grid(double lo, double hi, double step) {
  if (!(step > 0.0) || hi < lo) throw InputError("alpha grid needs step > 0 and hi >= lo");
  std::vector<double> out;
  const auto count = static_cast<std::size_t>(std::floor((hi - lo) / step + 1e-3)) + 1;
  for (std::size_t i = 0; i < count; ++i) out.push_back(std::min(hi, lo + static_cast<double>(i) * step));
  return out;
}

// ---------------------------------------------------------------------------------------
// Differentiable route: DFT as a product with cosine/sine bases

/// L x L real bases with Re X = x C and Im X = x S. Zeroing the k = 0 column is exactly
/// mean removal, since every other bin ignores a constant offset.
struct DftBasis {
  Tensor cos;
  Tensor neg_sin;
};

inline const DftBasis& dft_basis(std::size_t length, MeanHandling mean) {
  thread_local std::map<std::pair<std::size_t, bool>, DftBasis> cache;
  const auto key = std::make_pair(length, mean == MeanHandling::remove);
  if (auto it = cache.find(key); it != cache.end()) return it->second;
  std::vector<double> c(length * length), s(length * length);
  for (std::size_t t = 0; t < length; ++t) {
    for (std::size_t k = 0; k < length; ++k) {
      const auto phase = static_cast<double>((k * t) % length);
      const double angle = 2.0 * std::numbers::pi * phase / static_cast<double>(length);
      const bool dropped = key.second && k == 0;
      c[t * length + k] = dropped ? 0.0 : std::cos(angle);
      s[t * length + k] = dropped ? 0.0 : -std::sin(angle);
    }
  }
  return cache
      .emplace(key, DftBasis{Tensor({length, length}, std::move(c)), Tensor({length, length}, std::move(s))})
      .first->second;
}

/// Differentiable normalized spectral entropy over the last dimension of x. When both
/// filter tensors are given (shape [L]) the spectrum is multiplied by re + i*im first.
/// Constant rows yield 0.
inline Tensor spectral_entropy_rows(const Tensor& x, const Tensor* filter_re = nullptr,
                                    const Tensor* filter_im = nullptr, MeanHandling mean = MeanHandling::remove) {
  const std::size_t length = x.dim(-1);
  if (length < 2) throw InputError("spectral entropy needs L >= 2");
  const auto& basis = dft_basis(length, mean);
  Tensor re = matmul(x, basis.cos);
  Tensor im = matmul(x, basis.neg_sin);
  if (filter_re != nullptr && filter_im != nullptr) {
    Tensor fr = mul_trailing(re, *filter_re) - mul_trailing(im, *filter_im);
    Tensor fi = mul_trailing(re, *filter_im) + mul_trailing(im, *filter_re);
    re = std::move(fr);
    im = std::move(fi);
  }
  Tensor power = square(re) + square(im);

  const std::size_t rows = x.size() / length;
  std::vector<double> keep(power.size(), 1.0);
  bool any_degenerate = false;
  for (std::size_t r = 0; r < rows; ++r) {
    const auto row = x.data().subspan(r * length, length);
    if (detail::negligible_energy(row, detail::centered(row, mean))) {
      any_degenerate = true;
      std::fill_n(keep.begin() + static_cast<std::ptrdiff_t>(r * length), length, 0.0);
    }
  }
  if (any_degenerate) power = mul(power, Tensor(power.shape(), std::move(keep)));
  return normalized_entropy_last(power);
}

}  // namespace seed
