#pragma once

#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "byte_io.hpp"
#include "coder.hpp"
#include "dataset.hpp"
#include "errors.hpp"
#include "model.hpp"
#include "random.hpp"

namespace seqpix {

inline constexpr double kDefaultBaselineEpsilon = 1e-4;

namespace detail {

inline void require_nonempty_same_shape(std::span<const BinaryImage> images) {
  if (images.empty()) fail(ErrorCode::EmptySet, "empty training set");
  for (const auto& img : images)
    if (img.width != images.front().width || img.height != images.front().height || img.size() != img.width * img.height)
      fail(ErrorCode::ShapeMismatch, "training images differ in shape");
}

inline void require_shape(const BinaryImage& img, std::size_t width, std::size_t height) {
  if (img.width != width || img.height != height || img.size() != width * height)
    fail(ErrorCode::ShapeMismatch, "image is " + std::to_string(img.width) + "x" + std::to_string(img.height) +
                                       ", predictor expects " + std::to_string(width) + "x" + std::to_string(height));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// One probability for every pixel.
// ---------------------------------------------------------------------------

struct ConstantModel {
  double p = 0.5;
  double epsilon = kDefaultBaselineEpsilon;
  std::size_t width = 0;
  std::size_t height = 0;
};

/// The training-set mean of all pixels, which maximizes training likelihood.
inline ConstantModel fit_constant_p(std::span<const BinaryImage> train, double epsilon = kDefaultBaselineEpsilon) {
  detail::require_nonempty_same_shape(train);
  std::uint64_t ones = 0, total = 0;
  for (const auto& img : train) {
    for (auto b : img.pixels) ones += b;
    total += img.size();
  }
  const double mean = static_cast<double>(ones) / static_cast<double>(total);
  return {clamp_probability(mean, epsilon), epsilon, train.front().width, train.front().height};
}

inline double constant_bits(const ConstantModel& m, const BinaryImage& img) {
  detail::require_shape(img, m.width, m.height);
  std::size_t ones = 0;
  for (auto b : img.pixels) ones += b;
  return static_cast<double>(ones) * code_length_bits(1, m.p) +
         static_cast<double>(img.size() - ones) * code_length_bits(0, m.p);
}

// ---------------------------------------------------------------------------
// One probability per pixel position.
// ---------------------------------------------------------------------------

struct PixelProbTable {
  std::vector<double> p;
  double epsilon = kDefaultBaselineEpsilon;
  std::size_t width = 0;
  std::size_t height = 0;
};

inline PixelProbTable fit_pixel_p(std::span<const BinaryImage> train, double epsilon = kDefaultBaselineEpsilon) {
  detail::require_nonempty_same_shape(train);
  PixelProbTable t{mean_image(train), epsilon, train.front().width, train.front().height};
  for (auto& x : t.p) x = clamp_probability(x, epsilon);
  return t;
}

inline double pixel_bits(const PixelProbTable& t, const BinaryImage& img) {
  detail::require_shape(img, t.width, t.height);
  double bits = 0.0;
  for (std::size_t i = 0; i < img.size(); ++i) bits += code_length_bits(img.pixels[i], t.p[i]);
  return bits;
}

// ---------------------------------------------------------------------------
// Nearest-center coder: a center index plus the XOR difference, each
// difference bit coded with a per-center, per-pixel mismatch probability.
// ---------------------------------------------------------------------------

/// Images packed into 64-bit words for Hamming distances.
class PackedImages {
 public:
  PackedImages() = default;
  explicit PackedImages(std::size_t n_x) : n_x_(n_x), words_((n_x + 63) / 64) {}

  void push(std::span<const std::uint8_t> pixels) {
    const std::size_t base = data_.size();
    data_.resize(base + words_, 0);
    for (std::size_t p = 0; p < pixels.size(); ++p)
      if (pixels[p]) data_[base + p / 64] |= std::uint64_t{1} << (p % 64);
  }

  std::size_t size() const { return words_ == 0 ? 0 : data_.size() / words_; }
  std::size_t words() const { return words_; }
  std::span<const std::uint64_t> row(std::size_t i) const { return {data_.data() + i * words_, words_}; }

 private:
  std::size_t n_x_ = 0;
  std::size_t words_ = 0;
  std::vector<std::uint64_t> data_;
};

inline std::size_t hamming(std::span<const std::uint64_t> a, std::span<const std::uint64_t> b) {
  std::size_t d = 0;
  for (std::size_t w = 0; w < a.size(); ++w) d += static_cast<std::size_t>(std::popcount(a[w] ^ b[w]));
  return d;
}

/// Nearest row of `centers` to `query`; ties go to the lowest index.
inline std::size_t nearest_row(const PackedImages& centers, std::span<const std::uint64_t> query) {
  std::size_t best = 0, best_d = std::numeric_limits<std::size_t>::max();
  for (std::size_t c = 0; c < centers.size(); ++c) {
    const std::size_t d = hamming(centers.row(c), query);
    if (d < best_d) {
      best_d = d;
      best = c;
    }
  }
  return best;
}

struct CenterCodebook {
  std::size_t width = 0;
  std::size_t height = 0;
  double epsilon = kDefaultBaselineEpsilon;
  std::vector<std::uint8_t> centers;  // n_centers * n_x
  std::vector<double> mismatch;       // n_centers * n_x, clamped P(pixel differs from center)
  PackedImages packed;

  std::size_t n_x() const { return width * height; }
  std::size_t size() const { return n_x() == 0 ? 0 : centers.size() / n_x(); }
  std::span<const std::uint8_t> center(std::size_t c) const { return {centers.data() + c * n_x(), n_x()}; }
  std::span<const double> mismatch_row(std::size_t c) const { return {mismatch.data() + c * n_x(), n_x()}; }

  void rebuild_packed() {
    packed = PackedImages(n_x());
    for (std::size_t c = 0; c < size(); ++c) packed.push(center(c));
  }
};

/// Fixed-width index cost, ceil(log2 N).
inline std::size_t center_index_bits(std::size_t n_centers) {
  return n_centers <= 1 ? 0 : static_cast<std::size_t>(std::bit_width(n_centers - 1));
}

namespace detail {

inline std::vector<std::size_t> sample_without_replacement(std::size_t population, std::size_t count, Rng& rng) {
  std::vector<std::size_t> idx(population);
  for (std::size_t i = 0; i < population; ++i) idx[i] = i;
  for (std::size_t i = 0; i < count; ++i) {
    const auto j = i + static_cast<std::size_t>(uniform_index(rng, population - i));
    std::swap(idx[i], idx[j]);
  }
  idx.resize(count);
  return idx;
}

// Centers chosen from `train`, each training image assigned to its nearest
// center, mismatch counts accumulated per center.
struct CenterStatistics {
  CenterCodebook book;                 // mismatch left empty
  std::vector<std::uint32_t> counts;   // n_centers * n_x
  std::vector<std::uint32_t> assigned;
};

inline CenterStatistics center_statistics(std::span<const BinaryImage> train, std::span<const std::size_t> members,
                                          std::size_t n_centers, Rng& rng) {
  const auto& first = train[members.front()];
  CenterStatistics st;
  st.book.width = first.width;
  st.book.height = first.height;
  const std::size_t n_x = first.size();
  for (auto i : detail::sample_without_replacement(members.size(), n_centers, rng)) {
    const auto& px = train[members[i]].pixels;
    st.book.centers.insert(st.book.centers.end(), px.begin(), px.end());
  }
  st.book.rebuild_packed();
  st.counts.assign(n_centers * n_x, 0);
  st.assigned.assign(n_centers, 0);
  PackedImages query(n_x);
  for (auto m : members) {
    query = PackedImages(n_x);
    query.push(train[m].pixels);
    const std::size_t c = nearest_row(st.book.packed, query.row(0));
    ++st.assigned[c];
    const auto center = st.book.center(c);
    auto* row = st.counts.data() + c * n_x;
    const auto& px = train[m].pixels;
    for (std::size_t p = 0; p < n_x; ++p) row[p] += px[p] ^ center[p];
  }
  return st;
}

inline void fill_mismatch(CenterCodebook& book, const CenterStatistics& st, double epsilon) {
  const std::size_t n_x = book.n_x();
  book.epsilon = epsilon;
  book.mismatch.assign(st.counts.size(), epsilon);
  for (std::size_t c = 0; c < st.assigned.size(); ++c) {
    if (st.assigned[c] == 0) continue;
    for (std::size_t p = 0; p < n_x; ++p)
      book.mismatch[c * n_x + p] =
          clamp_probability(static_cast<double>(st.counts[c * n_x + p]) / st.assigned[c], epsilon);
  }
}

}  // namespace detail

inline CenterCodebook fit_centers(std::span<const BinaryImage> train, std::size_t n_centers, double epsilon,
                                  std::uint64_t seed) {
  detail::require_nonempty_same_shape(train);
  if (n_centers == 0 || n_centers > train.size())
    fail(ErrorCode::TooManyCenters, std::to_string(n_centers) + " centers from " + std::to_string(train.size()) +
                                        " training images");
  std::vector<std::size_t> members(train.size());
  for (std::size_t i = 0; i < members.size(); ++i) members[i] = i;
  Rng rng(seed);
  auto st = detail::center_statistics(train, members, n_centers, rng);
  CenterCodebook book = std::move(st.book);
  detail::fill_mismatch(book, st, epsilon);
  return book;
}

inline std::size_t nearest_center(const CenterCodebook& book, const BinaryImage& img) {
  detail::require_shape(img, book.width, book.height);
  PackedImages q(book.n_x());
  q.push(img.pixels);
  return nearest_row(book.packed, q.row(0));
}

struct CenterEncoding {
  std::size_t center = 0;
  double bits = 0.0;              // log2 N + difference bits
  double difference_bits = 0.0;
  std::size_t index_bits = 0;     // ceil(log2 N), as stored
  std::vector<BitProb> stream;    // XOR difference in raster order
};

inline CenterEncoding encode_with_centers(const CenterCodebook& book, const BinaryImage& img) {
  CenterEncoding enc;
  enc.center = nearest_center(book, img);
  const auto center = book.center(enc.center);
  const auto mism = book.mismatch_row(enc.center);
  enc.stream.reserve(img.size());
  for (std::size_t p = 0; p < img.size(); ++p) {
    const std::uint8_t d = img.pixels[p] ^ center[p];
    enc.stream.push_back({d, mism[p]});
    enc.difference_bits += code_length_bits(d, mism[p]);
  }
  enc.index_bits = center_index_bits(book.size());
  enc.bits = std::log2(static_cast<double>(book.size())) + enc.difference_bits;
  return enc;
}

struct CrossValidationResult {
  std::size_t best_n_centers = 0;
  double best_epsilon = 0.0;
  double best_bits = std::numeric_limits<double>::infinity();
  // mean validation bits, indexed [n_index][eps_index]; infinity where N exceeds the fold size
  std::vector<std::vector<double>> grid_bits;
};

/// k-fold cross-validation over (N, epsilon) inside the training split.
inline CrossValidationResult crossvalidate_epsilon(std::span<const BinaryImage> train,
                                                   std::span<const std::size_t> n_centers_grid,
                                                   std::span<const double> epsilon_grid, std::uint64_t seed,
                                                   std::size_t folds = 5) {
  detail::require_nonempty_same_shape(train);
  if (n_centers_grid.empty() || epsilon_grid.empty()) fail(ErrorCode::InvalidArgument, "empty grid");
  folds = std::clamp<std::size_t>(folds, 2, train.size());
  const std::size_t n_x = train.front().size();

  Rng rng(seed);
  std::vector<std::size_t> order(train.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  shuffle(std::span<std::size_t>(order), rng);

  CrossValidationResult result;
  result.grid_bits.assign(n_centers_grid.size(), std::vector<double>(epsilon_grid.size(), 0.0));
  std::vector<std::vector<std::size_t>> counted(n_centers_grid.size(), std::vector<std::size_t>(epsilon_grid.size(), 0));

  for (std::size_t f = 0; f < folds; ++f) {
    std::vector<std::size_t> fit, held;
    for (std::size_t i = 0; i < order.size(); ++i) (i % folds == f ? held : fit).push_back(order[i]);
    if (fit.empty() || held.empty()) continue;
    for (std::size_t ni = 0; ni < n_centers_grid.size(); ++ni) {
      const std::size_t n_centers = n_centers_grid[ni];
      if (n_centers == 0 || n_centers > fit.size()) continue;
      Rng fold_rng(seed ^ (0x9E3779B97F4A7C15ULL * (f + 1)) ^ (n_centers << 20));
      const auto st = detail::center_statistics(train, fit, n_centers, fold_rng);
      const double index_cost = std::log2(static_cast<double>(n_centers));

      std::vector<std::size_t> nearest(held.size());
      PackedImages q(n_x);
      for (std::size_t h = 0; h < held.size(); ++h) {
        q = PackedImages(n_x);
        q.push(train[held[h]].pixels);
        nearest[h] = nearest_row(st.book.packed, q.row(0));
      }
      for (std::size_t ei = 0; ei < epsilon_grid.size(); ++ei) {
        const double eps = epsilon_grid[ei];
        // Per center: cost of an all-zero difference, then per-pixel delta for a 1.
        std::vector<double> base(n_centers, std::numeric_limits<double>::quiet_NaN());
        auto rate = [&](std::size_t c, std::size_t p) {
          return st.assigned[c] == 0
                     ? eps
                     : clamp_probability(static_cast<double>(st.counts[c * n_x + p]) / st.assigned[c], eps);
        };
        double total = 0.0;
        for (std::size_t h = 0; h < held.size(); ++h) {
          const std::size_t c = nearest[h];
          if (std::isnan(base[c])) {
            double s = 0.0;
            for (std::size_t p = 0; p < n_x; ++p) s += code_length_bits(0, rate(c, p));
            base[c] = s;
          }
          double bits = index_cost + base[c];
          const auto center = st.book.center(c);
          const auto& px = train[held[h]].pixels;
          for (std::size_t p = 0; p < n_x; ++p)
            if (px[p] != center[p]) {
              const double m = rate(c, p);
              bits += code_length_bits(1, m) - code_length_bits(0, m);
            }
          total += bits;
        }
        result.grid_bits[ni][ei] += total;
        counted[ni][ei] += held.size();
      }
    }
  }
  for (std::size_t ni = 0; ni < n_centers_grid.size(); ++ni)
    for (std::size_t ei = 0; ei < epsilon_grid.size(); ++ei) {
      auto& cell = result.grid_bits[ni][ei];
      cell = counted[ni][ei] == 0 ? std::numeric_limits<double>::infinity() : cell / counted[ni][ei];
      if (cell < result.best_bits) {
        result.best_bits = cell;
        result.best_n_centers = n_centers_grid[ni];
        result.best_epsilon = epsilon_grid[ei];
      }
    }
  return result;
}

// ---------------------------------------------------------------------------
// Ten-pixel causal context model.
// ---------------------------------------------------------------------------

struct ContextOffset {
  int dy;
  int dx;
};

/// Bit i of the context index is the pixel at kContextTemplate[i].
inline constexpr std::array<ContextOffset, 10> kContextTemplate{{
    {0, -1}, {0, -2}, {-1, -2}, {-1, -1}, {-1, 0}, {-1, 1}, {-1, 2}, {-2, -1}, {-2, 0}, {-2, 1},
}};
inline constexpr std::size_t kContextCount = std::size_t{1} << kContextTemplate.size();

struct ContextTable {
  std::array<double, kContextCount> p{};
  double epsilon = kDefaultBaselineEpsilon;
  std::size_t width = 0;
  std::size_t height = 0;
};

/// Context index for pixel (x, y) from the causal neighbours in `pixels`;
/// neighbours outside the image read as 0.
inline std::size_t context_index(std::span<const std::uint8_t> pixels, std::size_t width, std::size_t height,
                                 std::size_t x, std::size_t y) {
  std::size_t ctx = 0;
  for (std::size_t i = 0; i < kContextTemplate.size(); ++i) {
    const auto yy = static_cast<std::ptrdiff_t>(y) + kContextTemplate[i].dy;
    const auto xx = static_cast<std::ptrdiff_t>(x) + kContextTemplate[i].dx;
    if (yy < 0 || xx < 0 || xx >= static_cast<std::ptrdiff_t>(width) || yy >= static_cast<std::ptrdiff_t>(height))
      continue;
    if (pixels[static_cast<std::size_t>(yy) * width + static_cast<std::size_t>(xx)]) ctx |= std::size_t{1} << i;
  }
  return ctx;
}

inline ContextTable fit_context(std::span<const BinaryImage> train, double epsilon = kDefaultBaselineEpsilon) {
  detail::require_nonempty_same_shape(train);
  std::array<std::uint64_t, kContextCount> ones{}, total{};
  const std::size_t w = train.front().width, h = train.front().height;
  for (const auto& img : train)
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x) {
        const auto ctx = context_index(img.pixels, w, h, x, y);
        ++total[ctx];
        ones[ctx] += img.pixels[y * w + x];
      }
  ContextTable t;
  t.epsilon = epsilon;
  t.width = w;
  t.height = h;
  for (std::size_t c = 0; c < kContextCount; ++c)
    t.p[c] = clamp_probability(total[c] == 0 ? 0.5 : static_cast<double>(ones[c]) / total[c], epsilon);
  return t;
}

struct ContextEncoding {
  double bits = 0.0;
  std::vector<BitProb> stream;  // raster order
};

inline ContextEncoding encode_with_context(const ContextTable& t, const BinaryImage& img) {
  detail::require_shape(img, t.width, t.height);
  ContextEncoding enc;
  enc.stream.reserve(img.size());
  for (std::size_t y = 0; y < t.height; ++y)
    for (std::size_t x = 0; x < t.width; ++x) {
      const double p = t.p[context_index(img.pixels, t.width, t.height, x, y)];
      const std::uint8_t bit = img.pixels[y * t.width + x];
      enc.stream.push_back({bit, p});
      enc.bits += code_length_bits(bit, p);
    }
  return enc;
}

// ---------------------------------------------------------------------------
// Serialization: tag, version, then fields (little-endian).
// ---------------------------------------------------------------------------

inline constexpr std::uint32_t kBaselineVersion = 1;
inline constexpr std::string_view kConstantTag = "CNSTP";
inline constexpr std::string_view kPixelTag = "PIXP";
inline constexpr std::string_view kCentersTag = "CENTR";
inline constexpr std::string_view kContextTag = "CTX10";

namespace detail {

inline void write_header(ByteWriter& w, std::string_view tag, std::size_t width, std::size_t height, double eps) {
  w.tag(tag);
  w.u32(kBaselineVersion);
  w.u32(static_cast<std::uint32_t>(width));
  w.u32(static_cast<std::uint32_t>(height));
  w.f64(eps);
}

struct Header {
  std::size_t width, height;
  double epsilon;
};

inline Header read_header(ByteReader& rd, std::string_view tag) {
  if (!rd.expect_tag(tag)) fail(ErrorCode::BadModelFile, "missing " + std::string(tag) + " magic");
  const auto version = rd.u32();
  if (version != kBaselineVersion) fail(ErrorCode::UnsupportedVersion, std::string(tag) + " version " + std::to_string(version));
  Header h{rd.u32(), rd.u32(), rd.f64()};
  if (h.width == 0 || h.height == 0 || h.width * h.height > (1u << 20)) fail(ErrorCode::BadModelFile, "bad dimensions");
  return h;
}

inline double checked_prob(double p) {
  if (!(p > 0.0 && p < 1.0)) fail(ErrorCode::BadModelFile, "probability outside (0,1)");
  return p;
}

inline void expect_end(const ByteReader& rd) {
  if (rd.remaining() != 0) fail(ErrorCode::BadModelFile, "trailing bytes");
}

}  // namespace detail

inline Bytes serialize(const ConstantModel& m) {
  ByteWriter w;
  detail::write_header(w, kConstantTag, m.width, m.height, m.epsilon);
  w.f64(m.p);
  return std::move(w).bytes();
}

inline Bytes serialize(const PixelProbTable& t) {
  ByteWriter w;
  detail::write_header(w, kPixelTag, t.width, t.height, t.epsilon);
  for (double p : t.p) w.f64(p);
  return std::move(w).bytes();
}

inline Bytes serialize(const CenterCodebook& b) {
  ByteWriter w;
  detail::write_header(w, kCentersTag, b.width, b.height, b.epsilon);
  w.u32(static_cast<std::uint32_t>(b.size()));
  w.raw(b.centers);
  for (double p : b.mismatch) w.f64(p);
  return std::move(w).bytes();
}

inline Bytes serialize(const ContextTable& t) {
  ByteWriter w;
  detail::write_header(w, kContextTag, t.width, t.height, t.epsilon);
  for (const auto& off : kContextTemplate) {
    w.i32(off.dy);
    w.i32(off.dx);
  }
  for (double p : t.p) w.f64(p);
  return std::move(w).bytes();
}

inline ConstantModel deserialize_constant(std::span<const std::uint8_t> bytes) {
  ByteReader rd(bytes, ErrorCode::BadModelFile);
  const auto h = detail::read_header(rd, kConstantTag);
  ConstantModel m{detail::checked_prob(rd.f64()), h.epsilon, h.width, h.height};
  detail::expect_end(rd);
  return m;
}

inline PixelProbTable deserialize_pixel(std::span<const std::uint8_t> bytes) {
  ByteReader rd(bytes, ErrorCode::BadModelFile);
  const auto h = detail::read_header(rd, kPixelTag);
  PixelProbTable t{std::vector<double>(h.width * h.height), h.epsilon, h.width, h.height};
  for (auto& p : t.p) p = detail::checked_prob(rd.f64());
  detail::expect_end(rd);
  return t;
}

inline CenterCodebook deserialize_centers(std::span<const std::uint8_t> bytes) {
  ByteReader rd(bytes, ErrorCode::BadModelFile);
  const auto h = detail::read_header(rd, kCentersTag);
  CenterCodebook b;
  b.width = h.width;
  b.height = h.height;
  b.epsilon = h.epsilon;
  const std::size_t n = rd.u32(), n_x = h.width * h.height;
  if (n == 0 || rd.remaining() != n * n_x * 9) fail(ErrorCode::BadModelFile, "center payload size mismatch");
  auto raw = rd.raw(n * n_x);
  b.centers.assign(raw.begin(), raw.end());
  for (auto v : b.centers)
    if (v > 1) fail(ErrorCode::BadModelFile, "center pixel is not binary");
  b.mismatch.resize(n * n_x);
  for (auto& p : b.mismatch) p = detail::checked_prob(rd.f64());
  b.rebuild_packed();
  return b;
}

inline ContextTable deserialize_context(std::span<const std::uint8_t> bytes) {
  ByteReader rd(bytes, ErrorCode::BadModelFile);
  const auto h = detail::read_header(rd, kContextTag);
  for (const auto& off : kContextTemplate)
    if (rd.i32() != off.dy || rd.i32() != off.dx) fail(ErrorCode::BadModelFile, "unsupported context template");
  ContextTable t;
  t.epsilon = h.epsilon;
  t.width = h.width;
  t.height = h.height;
  for (auto& p : t.p) p = detail::checked_prob(rd.f64());
  detail::expect_end(rd);
  return t;
}

}  // namespace seqpix
