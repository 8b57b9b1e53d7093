#pragma once

// Binary checkpoint: magic, format version, model config as JSON, then every parameter
// as (name, shape, little-endian float64 values) in registration order.

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "seed/config.hpp"
#include "seed/errors.hpp"
#include "seed/model.hpp"

namespace seed {

inline constexpr char kCheckpointMagic[8] = {'S', 'E', 'E', 'D', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail {

inline void write_u64(std::ostream& os, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 8);
}

inline std::uint64_t read_u64(std::istream& is) {
  unsigned char b[8];
  if (!is.read(reinterpret_cast<char*>(b), 8)) throw DataError("checkpoint truncated");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

inline void write_string(std::ostream& os, const std::string& s) {
  write_u64(os, s.size());
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string read_string(std::istream& is, std::size_t limit = std::size_t{1} << 24) {
  const std::uint64_t n = read_u64(is);
  if (n > limit) throw DataError("checkpoint string length " + std::to_string(n) + " is implausible");
  std::string s(n, '\0');
  if (!is.read(s.data(), static_cast<std::streamsize>(n))) throw DataError("checkpoint truncated");
  return s;
}

}  // namespace detail

inline void save_checkpoint(const std::string& path, const SeedModel& model) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot write checkpoint '" + path + "'");
  os.write(kCheckpointMagic, sizeof kCheckpointMagic);
  detail::write_u64(os, kCheckpointVersion);
  detail::write_string(os, nlohmann::json(model.config()).dump());
  detail::write_u64(os, model.parameters().size());
  for (const auto& p : model.parameters()) {
    detail::write_string(os, p.name);
    detail::write_u64(os, p.value.ndim());
    for (std::size_t d : p.value.shape()) detail::write_u64(os, d);
    for (double v : p.value.data()) detail::write_u64(os, std::bit_cast<std::uint64_t>(v));
  }
  if (!os) throw DataError("failed writing checkpoint '" + path + "'");
}

/// Reads the stored config only.
inline ModelConfig read_checkpoint_config(std::istream& is, const std::string& path) {
  char magic[sizeof kCheckpointMagic];
  if (!is.read(magic, sizeof magic) || std::memcmp(magic, kCheckpointMagic, sizeof magic) != 0) {
    throw DataError("'" + path + "' is not a checkpoint");
  }
  const std::uint64_t version = detail::read_u64(is);
  if (version != kCheckpointVersion) {
    throw DataError("checkpoint version " + std::to_string(version) + " unsupported");
  }
  try {
    return nlohmann::json::parse(detail::read_string(is)).get<ModelConfig>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("checkpoint config unreadable: ") + e.what());
  }
}

/// Rebuilds the model from the stored config and copies the stored parameters in.
inline SeedModel load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open checkpoint '" + path + "'");
  SeedModel model(read_checkpoint_config(is, path));
  const std::uint64_t count = detail::read_u64(is);
  const auto& params = model.parameters();
  if (count != params.size()) {
    throw ConfigError("checkpoint has " + std::to_string(count) + " tensors, model expects " +
                      std::to_string(params.size()));
  }
  for (const auto& p : params) {
    const std::string name = detail::read_string(is);
    if (name != p.name) throw ConfigError("checkpoint tensor '" + name + "' where '" + p.name + "' expected");
    const std::uint64_t nd = detail::read_u64(is);
    if (nd > 8) throw DataError("checkpoint tensor '" + name + "' has implausible rank");
    Shape shape(nd);
    for (auto& d : shape) d = detail::read_u64(is);
    if (shape != p.value.shape()) {
      throw ConfigError("checkpoint tensor '" + name + "' has shape " + to_string(shape) + ", expected " +
                        to_string(p.value.shape()));
    }
    Tensor t = p.value;
    auto values = t.data_mut();
    for (auto& v : values) v = std::bit_cast<double>(detail::read_u64(is));
  }
  return model;
}

}  // namespace seed
