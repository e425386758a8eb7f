#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "byte_io.hpp"
#include "errors.hpp"

namespace seqpix {

// Binary arithmetic coder: 32-bit range, 16-bit probabilities, carry
// propagation through a cached byte plus a run of pending 0xFF bytes.
//
// Probability convention: q is P(bit = 1) scaled by 2^16. The one-branch gets
// width r1 = floor(range * q / 2^16) at the top of the interval; the
// zero-branch keeps the low part [low, low + range - r1).

inline constexpr int kProbBits = 16;
inline constexpr std::uint32_t kProbOne = 1u << kProbBits;
inline constexpr std::uint32_t kRangeTop = 1u << 24;

using QuantizedProb = std::uint16_t;

inline QuantizedProb quantize_prob(double p_one) {
  if (std::isnan(p_one)) fail(ErrorCode::InvalidArgument, "probability is NaN");
  const double scaled = std::round(p_one * static_cast<double>(kProbOne));
  if (!(scaled >= 1.0)) return 1;
  if (scaled >= static_cast<double>(kProbOne - 1)) return static_cast<QuantizedProb>(kProbOne - 1);
  return static_cast<QuantizedProb>(scaled);
}

inline double dequantize_prob(QuantizedProb q) { return static_cast<double>(q) / static_cast<double>(kProbOne); }

/// Ideal code length of `bit` under the quantized probability.
inline double quantized_bits(std::uint8_t bit, QuantizedProb q) {
  const double p = dequantize_prob(q);
  return bit ? -std::log2(p) : -std::log2(1.0 - p);
}

struct CodeBuffer {
  Bytes payload;
  std::uint64_t bit_count = 0;  // decodable prefix; trailing bits of the last byte are zero

  bool operator==(const CodeBuffer&) const = default;
};

struct BitProb {
  std::uint8_t bit = 0;
  double p_one = 0.5;
};

class ArithmeticEncoder {
 public:
  void encode(std::uint8_t bit, QuantizedProb q) {
    const auto r1 = static_cast<std::uint32_t>((std::uint64_t{range_} * q) >> kProbBits);
    if (bit) {
      low_ += range_ - r1;
      range_ = r1;
    } else {
      range_ -= r1;
    }
    while (range_ < kRangeTop) {
      shift_low();
      range_ <<= 8;
    }
  }

  // Emits the shortest aligned value v whose block [v, v + 2^(32-k)) fits in
  // half of the final range, so the code stays prefix-free; the decoder pads
  // with zero bits after bit_count.
  CodeBuffer finish() && {
    int k = 1;
    while ((std::uint64_t{1} << (32 - k)) > range_ / 2) ++k;
    const std::uint64_t block = std::uint64_t{1} << (32 - k);
    low_ = (low_ + block - 1) & ~(block - 1);
    const int tail_bytes = (k + 7) / 8;
    for (int i = 0; i < tail_bytes; ++i) shift_low();
    flush_pending();
    CodeBuffer out;
    out.bit_count = 8 * (bytes_.size() - static_cast<std::size_t>(tail_bytes)) + static_cast<std::uint64_t>(k);
    out.payload = std::move(bytes_);
    return out;
  }

 private:
  void shift_low() {
    if (low_ < 0xFF000000ull || low_ >= (1ull << 32)) {
      const auto carry = static_cast<std::uint8_t>(low_ >> 32);
      if (has_cache_) bytes_.push_back(static_cast<std::uint8_t>(cache_ + carry));
      for (; pending_ > 0; --pending_) bytes_.push_back(static_cast<std::uint8_t>(0xFF + carry));
      cache_ = static_cast<std::uint8_t>(low_ >> 24);
      has_cache_ = true;
    } else {
      ++pending_;
    }
    low_ = (low_ << 8) & 0xFFFFFFFFull;
  }

  void flush_pending() {
    if (has_cache_) bytes_.push_back(cache_);
    for (; pending_ > 0; --pending_) bytes_.push_back(0xFF);
    has_cache_ = false;
  }

  std::uint64_t low_ = 0;
  std::uint32_t range_ = 0xFFFFFFFFu;
  std::uint8_t cache_ = 0;
  bool has_cache_ = false;
  std::uint64_t pending_ = 0;
  Bytes bytes_;
};

/// Streaming decoder: each bit can be decoded before the next probability is
/// known, which adaptive models rely on.
class ArithmeticDecoder {
 public:
  explicit ArithmeticDecoder(const CodeBuffer& buffer) : buffer_(buffer) {
    if (buffer.payload.size() != (buffer.bit_count + 7) / 8)
      fail(ErrorCode::TruncatedBuffer, "payload holds " + std::to_string(buffer.payload.size()) + " bytes for " +
                                           std::to_string(buffer.bit_count) + " bits");
    for (int i = 0; i < 4; ++i) code_ = (code_ << 8) | next_byte();
  }

  std::uint8_t decode(QuantizedProb q) {
    const auto r1 = static_cast<std::uint32_t>((std::uint64_t{range_} * q) >> kProbBits);
    const std::uint32_t bound = range_ - r1;
    std::uint8_t bit;
    if (code_ < bound) {
      range_ = bound;
      bit = 0;
    } else {
      code_ -= bound;
      range_ = r1;
      bit = 1;
    }
    while (range_ < kRangeTop) {
      code_ = (code_ << 8) | next_byte();
      range_ <<= 8;
    }
    return bit;
  }

 private:
  std::uint32_t next_byte() {
    if (pos_ >= buffer_.payload.size()) {
      ++pos_;
      return 0;
    }
    std::uint32_t b = buffer_.payload[pos_];
    const std::uint64_t end_bit = 8 * (pos_ + 1);
    if (end_bit > buffer_.bit_count) {
      const auto unused = static_cast<unsigned>(end_bit - buffer_.bit_count);
      b &= (0xFFu << unused) & 0xFFu;
    }
    ++pos_;
    return b;
  }

  const CodeBuffer& buffer_;
  std::size_t pos_ = 0;
  std::uint32_t code_ = 0;
  std::uint32_t range_ = 0xFFFFFFFFu;
};

inline CodeBuffer encode(std::span<const std::uint8_t> bits, std::span<const QuantizedProb> probs) {
  if (bits.size() != probs.size()) fail(ErrorCode::SizeMismatch, "bits and probabilities differ in length");
  ArithmeticEncoder enc;
  for (std::size_t i = 0; i < bits.size(); ++i) enc.encode(bits[i], probs[i]);
  return std::move(enc).finish();
}

inline CodeBuffer encode(std::span<const BitProb> stream) {
  ArithmeticEncoder enc;
  for (const auto& bp : stream) enc.encode(bp.bit, quantize_prob(bp.p_one));
  return std::move(enc).finish();
}

inline std::vector<std::uint8_t> decode(const CodeBuffer& buffer, std::span<const QuantizedProb> probs) {
  ArithmeticDecoder dec(buffer);
  std::vector<std::uint8_t> bits;
  bits.reserve(probs.size());
  for (auto q : probs) bits.push_back(dec.decode(q));
  return bits;
}

inline std::vector<std::uint8_t> decode(const CodeBuffer& buffer, std::span<const double> probs_one) {
  ArithmeticDecoder dec(buffer);
  std::vector<std::uint8_t> bits;
  bits.reserve(probs_one.size());
  for (double p : probs_one) bits.push_back(dec.decode(quantize_prob(p)));
  return bits;
}

}  // namespace seqpix
