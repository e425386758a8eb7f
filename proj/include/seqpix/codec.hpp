#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <variant>
#include <vector>

#include "baselines.hpp"
#include "byte_io.hpp"
#include "coder.hpp"
#include "dataset.hpp"
#include "model.hpp"
#include "model_io.hpp"

namespace seqpix {

using Predictor = std::variant<Model, ConstantModel, PixelProbTable, CenterCodebook, ContextTable>;

inline std::string_view predictor_tag(const Predictor& p) {
  struct {
    std::string_view operator()(const Model&) const { return kModelMagic; }
    std::string_view operator()(const ConstantModel&) const { return kConstantTag; }
    std::string_view operator()(const PixelProbTable&) const { return kPixelTag; }
    std::string_view operator()(const CenterCodebook&) const { return kCentersTag; }
    std::string_view operator()(const ContextTable&) const { return kContextTag; }
  } v;
  return std::visit(v, p);
}

inline Bytes serialize_predictor(const Predictor& p) {
  return std::visit(
      [](const auto& x) -> Bytes {
        if constexpr (std::is_same_v<std::decay_t<decltype(x)>, Model>) return serialize_model(x);
        else return serialize(x);
      },
      p);
}

/// 64-bit FNV-1a of the serialized predictor.
inline std::uint64_t predictor_hash(const Predictor& p) { return fnv1a64(serialize_predictor(p)); }

inline std::pair<std::size_t, std::size_t> predictor_shape(const Predictor& p) {
  return std::visit([](const auto& x) { return std::pair{x.width, x.height}; }, p);
}

inline Predictor deserialize_predictor(std::span<const std::uint8_t> bytes) {
  auto starts = [&](std::string_view tag) {
    return bytes.size() >= tag.size() && std::equal(tag.begin(), tag.end(), bytes.begin());
  };
  if (starts(kModelMagic)) return deserialize_model(bytes);
  if (starts(kConstantTag)) return deserialize_constant(bytes);
  if (starts(kPixelTag)) return deserialize_pixel(bytes);
  if (starts(kCentersTag)) return deserialize_centers(bytes);
  if (starts(kContextTag)) return deserialize_context(bytes);
  fail(ErrorCode::BadModelFile, "unrecognized predictor file");
}

inline Predictor load_predictor(const std::string& path) { return deserialize_predictor(read_file(path)); }

inline void save_predictor(const std::string& path, const Predictor& p) { write_file(path, serialize_predictor(p)); }

// ---------------------------------------------------------------------------
// Cursors walk one image in the predictor's coding order. The encoder and the
// decoder drive the same cursor, so a decoder only ever sees probabilities
// computed from bits it has already decoded.
// ---------------------------------------------------------------------------

namespace detail {

class ModelCursor {
 public:
  explicit ModelCursor(const Model& m)
      : m_(m), state_(init_sweep(m)), h_(m.n_h), img_{std::vector<std::uint8_t>(m.n_x, 0), m.width, m.height, 0} {
    refresh();
  }
  bool done() const { return state_.k >= m_.n_x; }
  double p_one() const { return p_; }
  std::uint8_t coded_bit(const BinaryImage& original) const { return original.pixels[m_.permutation[state_.k]]; }
  void push(std::uint8_t bit) {
    img_.pixels[m_.permutation[state_.k]] = bit;
    consume_pixel(m_, state_, state_.k, bit);
    refresh();
  }
  BinaryImage take() && { return std::move(img_); }

 private:
  void refresh() {
    if (done()) return;
    hidden_activations(state_, h_);
    p_ = clamp_probability(sigmoid(output_logit(m_, state_, h_)));
  }

  const Model& m_;
  SweepState state_;
  std::vector<double> h_;
  BinaryImage img_;
  double p_ = 0.5;
};

// Raster-order cursor; Prob(k, decoded_pixels) gives P(coded bit = 1) and
// Map(k, coded) gives the pixel value.
template <typename Prob, typename Map>
class RasterCursor {
 public:
  RasterCursor(std::size_t width, std::size_t height, Prob prob, Map map)
      : prob_(prob), map_(map), img_{std::vector<std::uint8_t>(width * height, 0), width, height, 0} {}
  bool done() const { return k_ >= img_.pixels.size(); }
  double p_one() const { return prob_(k_, img_); }
  std::uint8_t coded_bit(const BinaryImage& original) const { return map_(k_, original.pixels[k_]); }
  void push(std::uint8_t coded) {
    img_.pixels[k_] = map_(k_, coded);
    ++k_;
  }
  BinaryImage take() && { return std::move(img_); }

 private:
  Prob prob_;
  Map map_;
  BinaryImage img_;
  std::size_t k_ = 0;
};

template <typename Prob, typename Map>
RasterCursor<Prob, Map> raster_cursor(std::size_t w, std::size_t h, Prob prob, Map map) {
  return RasterCursor<Prob, Map>(w, h, prob, map);
}

inline auto identity_map() {
  return [](std::size_t, std::uint8_t b) -> std::uint8_t { return b; };
}

// Calls fn(cursor) with a cursor for the predictor.
template <typename Fn>
decltype(auto) with_cursor(const Predictor& pred, std::uint32_t center, Fn&& fn) {
  return std::visit(
      [&](const auto& p) -> decltype(auto) {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, Model>) {
          ModelCursor c(p);
          return fn(c);
        } else if constexpr (std::is_same_v<T, ConstantModel>) {
          auto c = raster_cursor(p.width, p.height, [&p](std::size_t, const BinaryImage&) { return p.p; }, identity_map());
          return fn(c);
        } else if constexpr (std::is_same_v<T, PixelProbTable>) {
          auto c = raster_cursor(p.width, p.height, [&p](std::size_t k, const BinaryImage&) { return p.p[k]; },
                                 identity_map());
          return fn(c);
        } else if constexpr (std::is_same_v<T, CenterCodebook>) {
          const auto ctr = p.center(center);
          const auto mism = p.mismatch_row(center);
          auto c = raster_cursor(
              p.width, p.height, [mism](std::size_t k, const BinaryImage&) { return mism[k]; },
              [ctr](std::size_t k, std::uint8_t b) -> std::uint8_t { return b ^ ctr[k]; });
          return fn(c);
        } else {
          auto c = raster_cursor(
              p.width, p.height,
              [&p](std::size_t k, const BinaryImage& img) {
                return p.p[context_index(img.pixels, p.width, p.height, k % p.width, k / p.width)];
              },
              identity_map());
          return fn(c);
        }
      },
      pred);
}

}  // namespace detail

struct EncodedImage {
  CodeBuffer code;
  std::optional<std::uint32_t> center;  // nearest-center predictor only
  double analytic_bits = std::numeric_limits<double>::quiet_NaN();  // not serialized
  std::size_t side_bits = 0;            // raw bits stored outside the arithmetic code

  double actual_bits() const { return static_cast<double>(code.bit_count + side_bits); }
};

inline EncodedImage encode_image(const Predictor& pred, const BinaryImage& img) {
  const auto [w, h] = predictor_shape(pred);
  if (img.width != w || img.height != h || img.size() != w * h) fail(ErrorCode::ShapeMismatch, "image shape differs from predictor");
  EncodedImage out;
  std::uint32_t center = 0;
  double analytic = 0.0;
  if (const auto* book = std::get_if<CenterCodebook>(&pred)) {
    center = static_cast<std::uint32_t>(nearest_center(*book, img));
    out.center = center;
    out.side_bits = center_index_bits(book->size());
    analytic += std::log2(static_cast<double>(book->size()));
  }
  ArithmeticEncoder enc;
  detail::with_cursor(pred, center, [&](auto& cursor) {
    while (!cursor.done()) {
      const double p = cursor.p_one();
      const std::uint8_t bit = cursor.coded_bit(img);
      analytic += code_length_bits(bit, p);
      enc.encode(bit, quantize_prob(p));
      cursor.push(bit);
    }
    return 0;
  });
  out.code = std::move(enc).finish();
  out.analytic_bits = analytic;
  return out;
}

inline BinaryImage decode_image(const Predictor& pred, const EncodedImage& rec) {
  std::uint32_t center = 0;
  if (const auto* book = std::get_if<CenterCodebook>(&pred)) {
    if (!rec.center || *rec.center >= book->size()) fail(ErrorCode::CorruptRecord, "missing or invalid center index");
    center = *rec.center;
  }
  try {
    ArithmeticDecoder dec(rec.code);
    return detail::with_cursor(pred, center, [&](auto& cursor) {
      while (!cursor.done()) cursor.push(dec.decode(quantize_prob(cursor.p_one())));
      return std::move(cursor).take();
    });
  } catch (const Error& e) {
    if (e.code() == ErrorCode::TruncatedBuffer) fail(ErrorCode::CorruptRecord, e.what());
    throw;
  }
}

// ---------------------------------------------------------------------------
// Container:
//   "SPPC" version tag[8] hash:u64 count width height
//   per record: bit_count:u64 [center:u32 when tag is CENTR] payload_len:u32 payload
// ---------------------------------------------------------------------------

inline constexpr std::string_view kContainerMagic = "SPPC";
inline constexpr std::uint32_t kContainerVersion = 1;

struct CodecContainer {
  std::string predictor_tag;
  std::uint64_t predictor_hash = 0;
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<EncodedImage> records;

  double mean_actual_bits() const {
    double s = 0;
    for (const auto& r : records) s += r.actual_bits();
    return records.empty() ? 0.0 : s / static_cast<double>(records.size());
  }
  double mean_analytic_bits() const {
    double s = 0;
    for (const auto& r : records) s += r.analytic_bits;
    return records.empty() ? 0.0 : s / static_cast<double>(records.size());
  }
};

namespace detail {

template <typename Fn>
void parallel_for(std::size_t n, unsigned threads, Fn&& fn) {
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, n));
  if (threads <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::jthread> pool;
  const std::size_t chunk = (n + threads - 1) / threads;
  for (unsigned t = 0; t < threads; ++t) {
    const std::size_t b = t * chunk, e = std::min(n, b + chunk);
    if (b < e)
      pool.emplace_back([&fn, b, e] {
        for (std::size_t i = b; i < e; ++i) fn(i);
      });
  }
}

}  // namespace detail

inline CodecContainer compress_dataset(const Predictor& pred, std::span<const BinaryImage> images, unsigned threads = 0) {
  const auto [w, h] = predictor_shape(pred);
  CodecContainer c{std::string(predictor_tag(pred)), predictor_hash(pred), w, h, {}};
  for (const auto& img : images)
    if (img.width != w || img.height != h) fail(ErrorCode::ShapeMismatch, "image shape differs from predictor");
  c.records.resize(images.size());
  detail::parallel_for(images.size(), threads, [&](std::size_t i) { c.records[i] = encode_image(pred, images[i]); });
  return c;
}

inline std::vector<BinaryImage> decompress_dataset(const CodecContainer& c, const Predictor& pred, unsigned threads = 0) {
  if (c.predictor_tag != predictor_tag(pred) || c.predictor_hash != predictor_hash(pred))
    fail(ErrorCode::HashMismatch, "container was written with a different predictor");
  const auto [w, h] = predictor_shape(pred);
  if (c.width != w || c.height != h) fail(ErrorCode::CorruptRecord, "container dimensions differ from predictor");
  std::vector<BinaryImage> out(c.records.size());
  detail::parallel_for(c.records.size(), threads, [&](std::size_t i) { out[i] = decode_image(pred, c.records[i]); });
  return out;
}

inline Bytes serialize_container(const CodecContainer& c) {
  ByteWriter w;
  w.tag(kContainerMagic);
  w.u32(kContainerVersion);
  std::string tag = c.predictor_tag;
  tag.resize(8, '\0');
  w.tag(tag);
  w.u64(c.predictor_hash);
  w.u32(static_cast<std::uint32_t>(c.records.size()));
  w.u32(static_cast<std::uint32_t>(c.width));
  w.u32(static_cast<std::uint32_t>(c.height));
  const bool has_center = c.predictor_tag == kCentersTag;
  for (const auto& r : c.records) {
    w.u64(r.code.bit_count);
    if (has_center) w.u32(r.center.value_or(0));
    w.u32(static_cast<std::uint32_t>(r.code.payload.size()));
    w.raw(r.code.payload);
  }
  return std::move(w).bytes();
}

inline CodecContainer deserialize_container(std::span<const std::uint8_t> bytes) {
  ByteReader rd(bytes, ErrorCode::CorruptRecord);
  if (!rd.expect_tag(kContainerMagic)) fail(ErrorCode::BadMagic, "not an SPPC container");
  const auto version = rd.u32();
  if (version != kContainerVersion) fail(ErrorCode::UnsupportedVersion, "SPPC version " + std::to_string(version));
  CodecContainer c;
  auto tag = rd.raw(8);
  c.predictor_tag.assign(tag.begin(), tag.end());
  c.predictor_tag.erase(c.predictor_tag.find_last_not_of('\0') + 1);
  c.predictor_hash = rd.u64();
  const std::size_t count = rd.u32();
  c.width = rd.u32();
  c.height = rd.u32();
  const bool has_center = c.predictor_tag == kCentersTag;
  c.records.reserve(std::min<std::size_t>(count, rd.remaining() / 12 + 1));
  for (std::size_t i = 0; i < count; ++i) {
    EncodedImage r;
    r.code.bit_count = rd.u64();
    if (has_center) r.center = rd.u32();
    const std::size_t len = rd.u32();
    auto payload = rd.raw(len);
    r.code.payload.assign(payload.begin(), payload.end());
    if (len != (r.code.bit_count + 7) / 8) fail(ErrorCode::CorruptRecord, "record " + std::to_string(i) + " length mismatch");
    c.records.push_back(std::move(r));
  }
  if (rd.remaining() != 0) fail(ErrorCode::CorruptRecord, "trailing bytes after last record");
  return c;
}

}  // namespace seqpix
