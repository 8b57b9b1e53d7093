#pragma once

// CSV ingestion, the benchmark split registry, chronological splitting and window
// enumeration.

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <iomanip>
#include <limits>
#include <memory>
#include <numbers>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "seed/errors.hpp"
#include "seed/rng.hpp"
#include "seed/tensor.hpp"

namespace seed {

struct SplitRatio {
  double train = 7.0;
  double val = 1.0;
  double test = 2.0;

  /// Parses "6:2:2".
  static SplitRatio parse(std::string_view text) {
    SplitRatio r;
    double* parts[] = {&r.train, &r.val, &r.test};
    std::size_t pos = 0;
    for (int i = 0; i < 3; ++i) {
      const std::size_t end = i < 2 ? text.find(':', pos) : text.size();
      if (end == std::string_view::npos) throw ConfigError("split must look like a:b:c, got '" + std::string(text) + "'");
      const auto field = text.substr(pos, end - pos);
      const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), *parts[i]);
      if (ec != std::errc() || ptr != field.data() + field.size() || !(*parts[i] >= 0.0)) {
        throw ConfigError("invalid split component '" + std::string(field) + "'");
      }
      pos = end + 1;
    }
    if (!(r.train > 0.0 && r.val > 0.0 && r.test > 0.0)) throw ConfigError("split components must be positive");
    return r;
  }

  std::string to_string() const {
    std::ostringstream os;
    os << train << ':' << val << ':' << test;
    return os.str();
  }
};

/// A multivariate series, time-major: values[t * cols + c].
struct Dataset {
  std::string name;
  std::vector<std::string> columns;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;
  SplitRatio split_ratio;
  std::string frequency;
  std::size_t rejected_rows = 0;

  double at(std::size_t t, std::size_t c) const { return values[t * cols + c]; }
};

struct RegistryEntry {
  std::string name;
  SplitRatio split;
  std::string frequency;
};

/// Benchmark datasets and their chronological split ratios.
inline const std::vector<RegistryEntry>& dataset_registry() {
  static const std::vector<RegistryEntry> entries = {
      {"ETTh1", {6, 2, 2}, "1h"},      {"ETTh2", {6, 2, 2}, "1h"},      {"ETTm1", {6, 2, 2}, "15min"},
      {"ETTm2", {6, 2, 2}, "15min"},   {"Weather", {7, 1, 2}, "10min"}, {"ECL", {7, 1, 2}, "1h"},
      {"Traffic", {7, 1, 2}, "1h"},    {"Solar", {7, 1, 2}, "10min"},   {"PEMS03", {3, 1, 1}, "5min"},
      {"PEMS04", {3, 1, 1}, "5min"},   {"PEMS07", {3, 1, 1}, "5min"},   {"PEMS08", {3, 1, 1}, "5min"},
  };
  return entries;
}

inline std::optional<RegistryEntry> registry_lookup(std::string_view name) {
  for (const auto& e : dataset_registry()) {
    if (e.name == name) return e;
  }
  return std::nullopt;
}

/// Overrides read from a JSON file with keys `name`, `split`, `date_col`.
struct DatasetOverride {
  std::string name;
  std::optional<SplitRatio> split;
  std::optional<bool> date_col;
};

inline DatasetOverride load_dataset_override(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open dataset config '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("dataset config '" + path + "': " + e.what());
  }
  DatasetOverride o;
  o.name = j.value("name", std::string());
  if (j.contains("split")) o.split = SplitRatio::parse(j.at("split").get<std::string>());
  if (j.contains("date_col")) o.date_col = j.at("date_col").get<bool>();
  return o;
}

struct CsvOptions {
  bool date_col = false;  // skip the first column
  std::string name;
};

namespace detail {

inline std::vector<std::string_view> split_csv_line(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t pos = 0;
  while (true) {
    const std::size_t comma = line.find(',', pos);
    out.push_back(line.substr(pos, comma == std::string_view::npos ? std::string_view::npos : comma - pos));
    if (comma == std::string_view::npos) break;
    pos = comma + 1;
  }
  return out;
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

}  // namespace detail

/// Header row first; every remaining column parsed as a double. Rows holding any
/// non-finite value (nan, inf, empty cell) are rejected and counted; anything else that
/// fails to parse is an error naming its row and column.
inline Dataset load_csv(const std::string& path, const CsvOptions& options = {}) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path + "'");
  Dataset ds;
  ds.name = options.name;
  std::string line;
  if (!std::getline(in, line) || detail::trim(line).empty()) throw DataError("'" + path + "' is empty");
  auto header = detail::split_csv_line(detail::trim(line));
  const std::size_t skip = options.date_col ? 1 : 0;
  if (header.size() <= skip) throw DataError("'" + path + "' has no value columns");
  for (std::size_t i = skip; i < header.size(); ++i) ds.columns.emplace_back(detail::trim(header[i]));
  ds.cols = ds.columns.size();

  std::size_t row_number = 1;
  std::vector<double> row(ds.cols);
  while (std::getline(in, line)) {
    ++row_number;
    const auto trimmed = detail::trim(line);
    if (trimmed.empty()) continue;
    const auto fields = detail::split_csv_line(trimmed);
    if (fields.size() != header.size()) {
      throw DataError(path + ":" + std::to_string(row_number) + ": expected " + std::to_string(header.size()) +
                      " fields, got " + std::to_string(fields.size()));
    }
    bool finite = true;
    for (std::size_t c = 0; c < ds.cols; ++c) {
      const auto field = detail::trim(fields[c + skip]);
      if (field.empty()) {
        finite = false;
        continue;
      }
      std::string text(field);
      char* end = nullptr;
      const double v = std::strtod(text.c_str(), &end);
      if (end == text.c_str() || *end != '\0') {
        throw DataError(path + ": row " + std::to_string(row_number) + ", column " + std::to_string(c + skip + 1) +
                        " ('" + text + "') is not a number");
      }
      if (!std::isfinite(v)) finite = false;
      row[c] = v;
    }
    if (!finite) {
      ++ds.rejected_rows;
      continue;
    }
    ds.values.insert(ds.values.end(), row.begin(), row.end());
    ++ds.rows;
  }
  if (ds.rows == 0) throw DataError("'" + path + "' has a header but no usable rows");
  if (auto entry = registry_lookup(ds.name)) {
    ds.split_ratio = entry->split;
    ds.frequency = entry->frequency;
  }
  return ds;
}

/// Writes with round-trip precision; with date_col a synthetic integer index column
/// named "date" is prepended.
inline void save_csv(const std::string& path, const Dataset& ds, bool date_col = false) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write '" + path + "'");
  if (date_col) out << "date,";
  for (std::size_t c = 0; c < ds.cols; ++c) {
    out << (c ? "," : "") << (c < ds.columns.size() ? ds.columns[c] : "v" + std::to_string(c));
  }
  out << '\n' << std::setprecision(std::numeric_limits<double>::max_digits10);
  for (std::size_t t = 0; t < ds.rows; ++t) {
    if (date_col) out << t << ',';
    for (std::size_t c = 0; c < ds.cols; ++c) out << (c ? "," : "") << ds.at(t, c);
    out << '\n';
  }
}

/// Target range [begin, end) of a split; lookbacks may start as early as context_begin.
struct Segment {
  std::size_t context_begin = 0;
  std::size_t begin = 0;
  std::size_t end = 0;

  std::size_t length() const { return end - context_begin; }
};

struct Splits {
  Segment train, val, test;
};

/// Segment sizes for `length` rows: val and test are floor(length * share), train takes
/// the rest (rounding toward train).
inline std::array<std::size_t, 3> split_sizes(std::size_t length, const SplitRatio& ratio) {
  const double total = ratio.train + ratio.val + ratio.test;
  const auto val = static_cast<std::size_t>(std::floor(static_cast<double>(length) * ratio.val / total + 1e-9));
  const auto test = static_cast<std::size_t>(std::floor(static_cast<double>(length) * ratio.test / total + 1e-9));
  return {length - val - test, val, test};
}

/// Chronological train/val/test segments. Validation and test lookbacks reach back
/// `lookback` steps into the preceding segment; targets never overlap.
inline Splits split(std::size_t length, const SplitRatio& ratio, std::size_t lookback, std::size_t horizon) {
  const auto [n_train, n_val, n_test] = split_sizes(length, ratio);
  Splits s;
  s.train = {0, 0, n_train};
  s.val = {n_train >= lookback ? n_train - lookback : 0, n_train, n_train + n_val};
  s.test = {n_train + n_val >= lookback ? n_train + n_val - lookback : 0, n_train + n_val, length};
  const std::pair<const char*, const Segment*> named[] = {{"train", &s.train}, {"val", &s.val}, {"test", &s.test}};
  for (const auto& [label, seg] : named) {
    if (seg->length() < lookback + horizon) {
      throw DataError(std::string(label) + " segment holds " + std::to_string(seg->length()) + " steps, fewer than L+T=" +
                      std::to_string(lookback + horizon));
    }
  }
  return s;
}

inline Splits split(const Dataset& ds, const SplitRatio& ratio, std::size_t lookback, std::size_t horizon) {
  return split(ds.rows, ratio, lookback, horizon);
}

inline std::size_t window_count(std::size_t length, std::size_t lookback, std::size_t horizon, std::size_t stride) {
  if (stride == 0) throw ConfigError("window stride must be >= 1");
  if (length < lookback + horizon) {
    throw DataError("segment of " + std::to_string(length) + " steps is shorter than L+T=" +
                    std::to_string(lookback + horizon));
  }
  return (length - lookback - horizon) / stride + 1;
}

/// Window start offsets (absolute row indices) for a segment, chronological.
inline std::vector<std::size_t> window_starts(const Segment& seg, std::size_t lookback, std::size_t horizon,
                                              std::size_t stride = 1) {
  const std::size_t count = window_count(seg.length(), lookback, horizon, stride);
  std::vector<std::size_t> starts(count);
  for (std::size_t i = 0; i < count; ++i) starts[i] = seg.context_begin + i * stride;
  return starts;
}

struct WindowSample {
  Tensor lookback;  // C x L
  Tensor target;    // C x T
  std::size_t start = 0;
};

/// Copies one window out of a time-major dataset, transposed to variable-major.
inline std::pair<std::vector<double>, std::vector<double>> extract_window(const Dataset& ds, std::size_t start,
                                                                           std::size_t lookback, std::size_t horizon) {
  std::vector<double> x(ds.cols * lookback), y(ds.cols * horizon);
  for (std::size_t c = 0; c < ds.cols; ++c) {
    for (std::size_t t = 0; t < lookback; ++t) x[c * lookback + t] = ds.at(start + t, c);
    for (std::size_t t = 0; t < horizon; ++t) y[c * horizon + t] = ds.at(start + lookback + t, c);
  }
  return {std::move(x), std::move(y)};
}

inline std::vector<WindowSample> windows(const Dataset& ds, const Segment& seg, std::size_t lookback,
                                         std::size_t horizon, std::size_t stride = 1) {
  if (seg.end > ds.rows) throw DataError("segment extends past the end of the dataset");
  std::vector<WindowSample> out;
  for (std::size_t start : window_starts(seg, lookback, horizon, stride)) {
    auto [x, y] = extract_window(ds, start, lookback, horizon);
    out.push_back({Tensor({ds.cols, lookback}, std::move(x)), Tensor({ds.cols, horizon}, std::move(y)), start});
  }
  return out;
}

/// Stacks windows starting at `starts` into [B, C, L] inputs and [B, C, T] targets.
inline std::pair<Tensor, Tensor> make_batch(const Dataset& ds, std::span<const std::size_t> starts,
                                            std::size_t lookback, std::size_t horizon) {
  const std::size_t b = starts.size(), c = ds.cols;
  std::vector<double> x, y;
  x.reserve(b * c * lookback);
  y.reserve(b * c * horizon);
  for (std::size_t s : starts) {
    auto [xi, yi] = extract_window(ds, s, lookback, horizon);
    x.insert(x.end(), xi.begin(), xi.end());
    y.insert(y.end(), yi.begin(), yi.end());
  }
  return {Tensor({b, c, lookback}, std::move(x)), Tensor({b, c, horizon}, std::move(y))};
}

/// Per-column z-scoring fitted on the training rows only.
struct Standardizer {
  std::vector<double> mean;
  std::vector<double> std;

  static Standardizer fit(const Dataset& ds, const Segment& train) {
    Standardizer s{std::vector<double>(ds.cols, 0.0), std::vector<double>(ds.cols, 0.0)};
    const auto n = static_cast<double>(train.end - train.begin);
    for (std::size_t c = 0; c < ds.cols; ++c) {
      double mu = 0.0;
      for (std::size_t t = train.begin; t < train.end; ++t) mu += ds.at(t, c);
      mu /= n;
      double var = 0.0;
      for (std::size_t t = train.begin; t < train.end; ++t) var += (ds.at(t, c) - mu) * (ds.at(t, c) - mu);
      var /= n;
      s.mean[c] = mu;
      s.std[c] = var > 0.0 ? std::sqrt(var) : 1.0;
    }
    return s;
  }

  Dataset apply(const Dataset& ds) const {
    Dataset out = ds;
    for (std::size_t t = 0; t < ds.rows; ++t) {
      for (std::size_t c = 0; c < ds.cols; ++c) out.values[t * ds.cols + c] = (ds.at(t, c) - mean[c]) / std[c];
    }
    return out;
  }
};

// ---------------------------------------------------------------------------------------
// Synthetic datasets

enum class SynthKind { sine, mixed, noise };

struct SynthSpec {
  SynthKind kind = SynthKind::mixed;
  std::size_t length = 4000;
  std::size_t channels = 8;
  double noise = 0.0;  // additive N(0, noise^2) on periodic channels
  std::uint64_t seed = 0;
};

inline std::size_t synth_period(std::size_t channel) {
  static constexpr std::size_t periods[] = {24, 12, 48, 32, 16, 36, 20, 60};
  return periods[channel % std::size(periods)];
}

/// `sine`: every channel a unit sinusoid with its own period and phase; `noise`: every
/// channel N(0,1); `mixed`: first half sine, second half noise.
inline Dataset make_synthetic_dataset(const SynthSpec& spec) {
  if (spec.channels == 0 || spec.length < 2) throw InputError("synthetic dataset needs channels >= 1, length >= 2");
  Rng rng(spec.seed);
  Dataset ds;
  ds.name = "synthetic";
  ds.rows = spec.length;
  ds.cols = spec.channels;
  ds.values.assign(ds.rows * ds.cols, 0.0);
  const std::size_t periodic =
      spec.kind == SynthKind::sine ? spec.channels : spec.kind == SynthKind::noise ? 0 : spec.channels / 2;
  for (std::size_t c = 0; c < ds.cols; ++c) {
    ds.columns.push_back((c < periodic ? "sine" : "noise") + std::to_string(c));
    const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
    const auto period = static_cast<double>(synth_period(c));
    for (std::size_t t = 0; t < ds.rows; ++t) {
      double v = 0.0;
      if (c < periodic) {
        v = std::sin(2.0 * std::numbers::pi * static_cast<double>(t) / period + phase);
        if (spec.noise > 0.0) v += spec.noise * rng.normal();
      } else {
        v = rng.normal();
      }
      ds.values[t * ds.cols + c] = v;
    }
  }
  return ds;
}

}  // namespace seed
