#pragma once

#include <string>

#include "byte_io.hpp"
#include "model.hpp"

namespace seqpix {

// SPPM layout (all integers little-endian u32, reals little-endian f64):
//   "SPPM" version flags n_x n_h width height permutation[n_x]
//   x_ave[n_x] b_h[n_h] b_y[n_x] U[n_h][n_x] V[n_x][n_h] R[n_x][n_x]
// flags: bit0 use_uv, bit1 use_r, bit2 subtract_mean. R is present only when
// use_r is set; n_h is 0 when use_uv is clear.
inline constexpr std::string_view kModelMagic = "SPPM";
inline constexpr std::uint32_t kModelVersion = 1;

inline std::uint32_t variant_flags(const Variant& v) {
  return (v.use_uv ? 1u : 0u) | (v.use_r ? 2u : 0u) | (v.subtract_mean ? 4u : 0u);
}

inline Bytes serialize_model(const Model& m) {
  ByteWriter w;
  w.tag(kModelMagic);
  w.u32(kModelVersion);
  w.u32(variant_flags(m.variant));
  w.u32(static_cast<std::uint32_t>(m.n_x));
  w.u32(static_cast<std::uint32_t>(m.n_h));
  w.u32(static_cast<std::uint32_t>(m.width));
  w.u32(static_cast<std::uint32_t>(m.height));
  for (auto p : m.permutation) w.u32(p);
  for (double x : m.x_ave) w.f64(x);
  for (double x : m.b_h) w.f64(x);
  for (double x : m.b_y) w.f64(x);
  for (std::size_t i = 0; i < m.n_h; ++i)
    for (std::size_t q = 0; q < m.n_x; ++q) w.f64(m.u(i, q));
  for (double x : m.v) w.f64(x);
  if (m.variant.use_r)
    for (std::size_t p = 0; p < m.n_x; ++p)
      for (std::size_t q = 0; q < m.n_x; ++q) w.f64(m.r(p, q));
  return std::move(w).bytes();
}

inline Model deserialize_model(std::span<const std::uint8_t> bytes) {
  ByteReader rd(bytes, ErrorCode::BadModelFile);
  if (!rd.expect_tag(kModelMagic)) fail(ErrorCode::BadModelFile, "missing SPPM magic");
  const auto version = rd.u32();
  if (version != kModelVersion) fail(ErrorCode::UnsupportedVersion, "SPPM version " + std::to_string(version));
  const auto flags = rd.u32();
  if (flags & ~7u) fail(ErrorCode::BadModelFile, "unknown flag bits");
  Variant variant{(flags & 1u) != 0, (flags & 2u) != 0, (flags & 4u) != 0};
  const std::size_t n_x = rd.u32(), n_h = rd.u32(), width = rd.u32(), height = rd.u32();
  if (n_x == 0 || n_x != width * height || n_x > (1u << 20) || n_h > (1u << 20))
    fail(ErrorCode::BadModelFile, "inconsistent dimensions");
  if (!variant.use_uv && n_h != 0) fail(ErrorCode::BadModelFile, "n_h must be 0 without the UV path");
  const std::size_t expected = 4 * n_x + 8 * (2 * n_x + n_h + 2 * n_h * n_x + (variant.use_r ? n_x * n_x : 0));
  if (rd.remaining() != expected) fail(ErrorCode::BadModelFile, "payload size mismatch");

  Model m = Model::zeros(width, height, n_h, variant);
  for (auto& p : m.permutation) p = rd.u32();
  for (auto& x : m.x_ave) x = rd.f64();
  for (auto& x : m.b_h) x = rd.f64();
  for (auto& x : m.b_y) x = rd.f64();
  for (std::size_t i = 0; i < n_h; ++i)
    for (std::size_t q = 0; q < n_x; ++q) m.u(i, q) = rd.f64();
  for (auto& x : m.v) x = rd.f64();
  if (variant.use_r)
    for (std::size_t p = 0; p < n_x; ++p)
      for (std::size_t q = 0; q < n_x; ++q) m.r(p, q) = rd.f64();
  try {
    validate(m);
  } catch (const Error& e) {
    fail(ErrorCode::BadModelFile, e.what());
  }
  return m;
}

inline void save_model(const std::string& path, const Model& m) { write_file(path, serialize_model(m)); }

inline Model load_model(const std::string& path) {
  const auto bytes = read_file(path);
  return deserialize_model(bytes);
}

}  // namespace seqpix
