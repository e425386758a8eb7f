#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#if defined(__AVX2__)
#include <immintrin.h>
#endif

#include "dataset.hpp"
#include "errors.hpp"
#include "random.hpp"

namespace seqpix {

/// Probabilities are clipped to [kProbClamp, 1 - kProbClamp] before computing
/// code lengths or handing them to the arithmetic coder.
inline constexpr double kProbClamp = 1e-6;

namespace detail {

// exp(-t) by Cody-Waite reduction and a degree-12 Taylor polynomial, using
// only IEEE basic operations so scalar and SIMD paths agree bit for bit and
// results do not depend on the platform libm. Relative error is about 5e-16.
namespace expk {
inline constexpr double kLog2e = 1.4426950408889634074;
inline constexpr double kLn2Hi = 6.93147180369123816490e-01;
inline constexpr double kLn2Lo = 1.90821492927058770002e-10;
inline constexpr double kShifter = 0x1.8p52;
inline constexpr double kLimit = 700.0;
inline constexpr double kPoly[13] = {1.0 / 479001600.0, 1.0 / 39916800.0, 1.0 / 3628800.0, 1.0 / 362880.0,
                                     1.0 / 40320.0,     1.0 / 5040.0,     1.0 / 720.0,     1.0 / 120.0,
                                     1.0 / 24.0,        1.0 / 6.0,        0.5,             1.0,
                                     1.0};
}  // namespace expk

inline double sigmoid_scalar(double t) {
  using namespace expk;
  const double x = std::min(std::max(-t, -kLimit), kLimit);
  const double kd = x * kLog2e + kShifter;
  const double nd = kd - kShifter;
  const double r = (x - nd * kLn2Hi) - nd * kLn2Lo;
  double p = kPoly[0];
  for (int j = 1; j < 13; ++j) p = p * r + kPoly[j];
  const auto bits = (std::bit_cast<std::int64_t>(kd) - std::bit_cast<std::int64_t>(kShifter) + 1023) << 52;
  return 1.0 / (1.0 + p * std::bit_cast<double>(bits));
}

}  // namespace detail

inline double sigmoid(double t) { return detail::sigmoid_scalar(t); }

/// Element-wise sigmoid; out may alias in.
inline void sigmoid(std::span<const double> in, std::span<double> out) {
  std::size_t i = 0;
#if defined(__AVX2__)
  using namespace detail::expk;
  const __m256d lo = _mm256_set1_pd(-kLimit), hi = _mm256_set1_pd(kLimit), sh = _mm256_set1_pd(kShifter);
  const __m256i bias = _mm256_set1_epi64x(1023 - std::bit_cast<std::int64_t>(kShifter));
  const __m256d one = _mm256_set1_pd(1.0), sign = _mm256_set1_pd(-0.0);
  for (; i + 4 <= out.size(); i += 4) {
    __m256d x = _mm256_xor_pd(_mm256_loadu_pd(in.data() + i), sign);
    x = _mm256_min_pd(_mm256_max_pd(x, lo), hi);
    const __m256d kd = _mm256_add_pd(_mm256_mul_pd(x, _mm256_set1_pd(kLog2e)), sh);
    const __m256d nd = _mm256_sub_pd(kd, sh);
    const __m256d r = _mm256_sub_pd(_mm256_sub_pd(x, _mm256_mul_pd(nd, _mm256_set1_pd(kLn2Hi))),
                                    _mm256_mul_pd(nd, _mm256_set1_pd(kLn2Lo)));
    __m256d p = _mm256_set1_pd(kPoly[0]);
    for (int j = 1; j < 13; ++j) p = _mm256_add_pd(_mm256_mul_pd(p, r), _mm256_set1_pd(kPoly[j]));
    const __m256i bits = _mm256_slli_epi64(_mm256_add_epi64(_mm256_castpd_si256(kd), bias), 52);
    const __m256d e = _mm256_mul_pd(p, _mm256_castsi256_pd(bits));
    _mm256_storeu_pd(out.data() + i, _mm256_div_pd(one, _mm256_add_pd(one, e)));
  }
#endif
  for (; i < out.size(); ++i) out[i] = detail::sigmoid_scalar(in[i]);
}

inline double clamp_probability(double y, double eps = kProbClamp) { return std::clamp(y, eps, 1.0 - eps); }

/// -log2 of the probability the model gave to the realized bit.
inline double code_length_bits(std::uint8_t bit, double p_one) {
  return bit ? -std::log2(p_one) : -std::log2(1.0 - p_one);
}

/// Piecewise-linear sigmoid over [-kRange, kRange]; absolute error below 1e-5.
class SigmoidTable {
 public:
  static constexpr double kRange = 16.0;
  static constexpr int kStepsPerUnit = 64;

  SigmoidTable() {
    const int n = static_cast<int>(2 * kRange * kStepsPerUnit) + 2;
    table_.resize(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) table_[static_cast<std::size_t>(i)] = sigmoid(-kRange + i / double(kStepsPerUnit));
  }

  double operator()(double t) const {
    if (!(t > -kRange)) return table_.front();
    if (!(t < kRange)) return table_[table_.size() - 2];
    const double pos = (t + kRange) * kStepsPerUnit;
    const auto i = static_cast<std::size_t>(pos);
    const double frac = pos - static_cast<double>(i);
    return table_[i] + frac * (table_[i + 1] - table_[i]);
  }

  static const SigmoidTable& instance() {
    static const SigmoidTable table;
    return table;
  }

 private:
  std::vector<double> table_;
};

struct Variant {
  bool use_uv = true;
  bool use_r = true;
  bool subtract_mean = true;

  bool operator==(const Variant&) const = default;
};

inline Variant full_variant() { return {true, true, true}; }
inline Variant r_only_variant() { return {false, true, true}; }
inline Variant uv_only_variant() { return {true, false, true}; }

// Parameters are indexed by raster pixel, so filters are directly viewable and
// the same parameters can be swept in any pixel order. Storage is arranged so
// that every per-pixel update in a sweep touches one contiguous row:
//   u_in[q * n_h + i] = U(i, q)     (input pixel q -> hidden unit i)
//   v[p * n_h + i]    = V(p, i)     (hidden unit i -> predicted pixel p)
//   r_in[q * n_x + p] = R(p, q)     (input pixel q -> predicted pixel p)
struct Model {
  std::size_t n_x = 0;
  std::size_t n_h = 0;
  std::size_t width = 0;
  std::size_t height = 0;
  Variant variant;
  std::vector<std::uint32_t> permutation;  // permutation[k] = pixel consumed at step k
  std::vector<double> x_ave;
  std::vector<double> b_h;
  std::vector<double> b_y;
  std::vector<double> u_in;
  std::vector<double> v;
  std::vector<double> r_in;

  static Model zeros(std::size_t width, std::size_t height, std::size_t n_h, Variant variant) {
    Model m;
    m.width = width;
    m.height = height;
    m.n_x = width * height;
    m.n_h = variant.use_uv ? n_h : 0;
    m.variant = variant;
    m.permutation.resize(m.n_x);
    std::iota(m.permutation.begin(), m.permutation.end(), 0u);
    m.x_ave.assign(m.n_x, 0.0);
    m.b_h.assign(m.n_h, 0.0);
    m.b_y.assign(m.n_x, 0.0);
    m.u_in.assign(m.n_x * m.n_h, 0.0);
    m.v.assign(m.n_x * m.n_h, 0.0);
    m.r_in.assign(variant.use_r ? m.n_x * m.n_x : 0, 0.0);
    return m;
  }

  double& u(std::size_t hidden, std::size_t input) { return u_in[input * n_h + hidden]; }
  double u(std::size_t hidden, std::size_t input) const { return u_in[input * n_h + hidden]; }
  double& vv(std::size_t output, std::size_t hidden) { return v[output * n_h + hidden]; }
  double vv(std::size_t output, std::size_t hidden) const { return v[output * n_h + hidden]; }
  double& r(std::size_t output, std::size_t input) { return r_in[input * n_x + output]; }
  double r(std::size_t output, std::size_t input) const { return r_in[input * n_x + output]; }

  std::span<const double> u_row_for_input(std::size_t q) const { return {u_in.data() + q * n_h, n_h}; }
  std::span<const double> v_row(std::size_t p) const { return {v.data() + p * n_h, n_h}; }
  std::span<const double> r_row_for_input(std::size_t q) const { return {r_in.data() + q * n_x, n_x}; }

  double centered(std::size_t pixel, std::uint8_t bit) const {
    return variant.subtract_mean ? static_cast<double>(bit) - x_ave[pixel] : static_cast<double>(bit);
  }

  /// Position of each pixel in the sweep (inverse permutation).
  std::vector<std::uint32_t> positions() const {
    std::vector<std::uint32_t> pos(n_x);
    for (std::size_t k = 0; k < n_x; ++k) pos[permutation[k]] = static_cast<std::uint32_t>(k);
    return pos;
  }

  std::size_t parameter_count() const { return b_h.size() + b_y.size() + u_in.size() + v.size() + r_in.size(); }
};

inline bool is_permutation_of_range(std::span<const std::uint32_t> perm, std::size_t n) {
  if (perm.size() != n) return false;
  std::vector<bool> seen(n, false);
  for (auto p : perm) {
    if (p >= n || seen[p]) return false;
    seen[p] = true;
  }
  return true;
}

inline bool all_finite(std::span<const double> values) {
  return std::all_of(values.begin(), values.end(), [](double x) { return std::isfinite(x); });
}

/// Throws InvalidArgument describing the first broken invariant.
inline void validate(const Model& m) {
  auto need = [](bool ok, const char* what) {
    if (!ok) fail(ErrorCode::InvalidArgument, what);
  };
  need(m.n_x == m.width * m.height && m.n_x > 0, "n_x must equal width*height and be positive");
  need(m.variant.use_uv || m.variant.use_r, "at least one of the UV and R paths must be enabled");
  need(!m.variant.use_uv || m.n_h > 0, "UV path needs n_h > 0");
  need(is_permutation_of_range(m.permutation, m.n_x), "permutation is not a bijection on [0, n_x)");
  need(m.x_ave.size() == m.n_x && m.b_y.size() == m.n_x && m.b_h.size() == m.n_h, "bias sizes");
  need(m.u_in.size() == m.n_x * m.n_h && m.v.size() == m.n_x * m.n_h, "U/V sizes");
  need(m.r_in.size() == (m.variant.use_r ? m.n_x * m.n_x : 0), "R size");
  need(all_finite(m.x_ave) && all_finite(m.b_h) && all_finite(m.b_y) && all_finite(m.u_in) && all_finite(m.v) &&
           all_finite(m.r_in),
       "non-finite parameter");
  need(std::all_of(m.x_ave.begin(), m.x_ave.end(), [](double a) { return a >= 0.0 && a <= 1.0; }),
       "x_ave outside [0,1]");
}

// ---------------------------------------------------------------------------
// Sweep: predict pixel k from pixels 0..k-1 of the permutation.
// ---------------------------------------------------------------------------

struct SweepState {
  std::vector<double> h_u;    // b_h + sum over consumed pixels of U column * xbar
  std::vector<double> r_acc;  // sum over consumed pixels of R column * xbar
  std::size_t k = 0;
};

namespace detail {

inline double dot(std::span<const double> a, std::span<const double> b) {
  double s0 = 0, s1 = 0, s2 = 0, s3 = 0;
  std::size_t i = 0;
  const std::size_t n = a.size();
  for (; i + 4 <= n; i += 4) {
    s0 += a[i] * b[i];
    s1 += a[i + 1] * b[i + 1];
    s2 += a[i + 2] * b[i + 2];
    s3 += a[i + 3] * b[i + 3];
  }
  for (; i < n; ++i) s0 += a[i] * b[i];
  return (s0 + s1) + (s2 + s3);
}

inline void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  const std::size_t n = y.size();
  const double* __restrict xs = x.data();
  double* __restrict ys = y.data();
  for (std::size_t i = 0; i < n; ++i) ys[i] += alpha * xs[i];
}

}  // namespace detail

inline SweepState init_sweep(const Model& m) {
  SweepState s;
  s.h_u = m.b_h;
  s.r_acc.assign(m.variant.use_r ? m.n_x : 0, 0.0);
  return s;
}

inline void consume_pixel(const Model& m, SweepState& s, std::size_t position, std::uint8_t bit) {
  if (position != s.k || position >= m.n_x)
    fail(ErrorCode::OutOfOrderPixel, "expected position " + std::to_string(s.k) + ", got " + std::to_string(position));
  const std::size_t q = m.permutation[position];
  const double xbar = m.centered(q, bit);
  if (xbar != 0.0) {
    if (m.variant.use_uv) detail::axpy(xbar, m.u_row_for_input(q), s.h_u);
    if (m.variant.use_r) detail::axpy(xbar, m.r_row_for_input(q), s.r_acc);
  }
  s.k = position + 1;
}

/// Hidden activations sigma(h_u) for the current state.
inline void hidden_activations(const SweepState& s, std::span<double> h) { sigmoid(s.h_u, h); }

/// Pre-sigmoid output for the next pixel given precomputed hidden activations.
inline double output_logit(const Model& m, const SweepState& s, std::span<const double> h) {
  const std::size_t p = m.permutation[s.k];
  double t = m.b_y[p];
  if (m.variant.use_uv) t += detail::dot(m.v_row(p), h);
  if (m.variant.use_r) t += s.r_acc[p];
  return t;
}

inline double predict_next(const Model& m, const SweepState& s) {
  if (s.k >= m.n_x) fail(ErrorCode::SweepComplete, "all pixels consumed");
  std::vector<double> h(m.n_h);
  hidden_activations(s, h);
  return sigmoid(output_logit(m, s, h));
}

struct PredictionTrace {
  std::vector<double> y;     // unclamped predictions, permutation order
  std::vector<double> bits;  // per-pixel code lengths with clamped predictions
  double total_bits = 0.0;
};

inline PredictionTrace forward_trace(const Model& m, const BinaryImage& image) {
  if (image.size() != m.n_x) fail(ErrorCode::SizeMismatch, "image has " + std::to_string(image.size()) + " pixels");
  PredictionTrace trace;
  trace.y.resize(m.n_x);
  trace.bits.resize(m.n_x);
  SweepState s = init_sweep(m);
  std::vector<double> h(m.n_h);
  for (std::size_t k = 0; k < m.n_x; ++k) {
    hidden_activations(s, h);
    const double y = sigmoid(output_logit(m, s, h));
    const std::uint8_t bit = image.pixels[m.permutation[k]];
    trace.y[k] = y;
    trace.bits[k] = code_length_bits(bit, clamp_probability(y));
    trace.total_bits += trace.bits[k];
    consume_pixel(m, s, k, bit);
  }
  return trace;
}

inline BinaryImage sample_image(const Model& m, Rng& rng) {
  BinaryImage img{std::vector<std::uint8_t>(m.n_x, 0), m.width, m.height, 0};
  SweepState s = init_sweep(m);
  std::vector<double> h(m.n_h);
  for (std::size_t k = 0; k < m.n_x; ++k) {
    hidden_activations(s, h);
    const double y = sigmoid(output_logit(m, s, h));
    const std::uint8_t bit = bernoulli(rng, y) ? 1 : 0;
    img.pixels[m.permutation[k]] = bit;
    consume_pixel(m, s, k, bit);
  }
  return img;
}

// ---------------------------------------------------------------------------
// Filter export.
// ---------------------------------------------------------------------------

enum class FilterMatrix { U, V, R };

/// Linear rescale to [0,255]; an all-equal input maps to 0.
inline GrayImage rescale_to_gray(std::span<const double> values, std::size_t width, std::size_t height) {
  GrayImage img{std::vector<std::uint8_t>(values.size(), 0), width, height, 0};
  if (values.empty()) return img;
  const auto [lo_it, hi_it] = std::minmax_element(values.begin(), values.end());
  const double lo = *lo_it, hi = *hi_it;
  if (!(hi > lo)) return img;
  for (std::size_t i = 0; i < values.size(); ++i)
    img.pixels[i] = static_cast<std::uint8_t>(std::round((values[i] - lo) / (hi - lo) * 255.0));
  return img;
}

// U: one image per hidden unit (its input weights). V: one image per hidden
// unit (its weights onto every predicted pixel). R: one image per predicted
// pixel (its direct input weights).
inline std::vector<GrayImage> export_filters(const Model& m, FilterMatrix which) {
  std::vector<GrayImage> out;
  std::vector<double> buf(m.n_x);
  switch (which) {
    case FilterMatrix::U:
      for (std::size_t i = 0; i < m.n_h; ++i) {
        for (std::size_t q = 0; q < m.n_x; ++q) buf[q] = m.u(i, q);
        out.push_back(rescale_to_gray(buf, m.width, m.height));
      }
      break;
    case FilterMatrix::V:
      for (std::size_t i = 0; i < m.n_h; ++i) {
        for (std::size_t p = 0; p < m.n_x; ++p) buf[p] = m.vv(p, i);
        out.push_back(rescale_to_gray(buf, m.width, m.height));
      }
      break;
    case FilterMatrix::R:
      if (!m.variant.use_r) break;
      for (std::size_t p = 0; p < m.n_x; ++p) {
        for (std::size_t q = 0; q < m.n_x; ++q) buf[q] = m.r(p, q);
        out.push_back(rescale_to_gray(buf, m.width, m.height));
      }
      break;
  }
  return out;
}

}  // namespace seqpix
