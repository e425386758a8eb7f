#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <sstream>

#include <seqpix/seqpix.hpp>

#include "support/paths.hpp"
#include "support/properties.hpp"

using namespace seqpix;

namespace {

std::vector<std::uint8_t> from_hex(const std::string& hex) {
  std::vector<std::uint8_t> out;
  for (std::size_t i = 0; i + 1 < hex.size(); i += 2) out.push_back(static_cast<std::uint8_t>(std::stoul(hex.substr(i, 2), nullptr, 16)));
  return out;
}

std::string to_hex(std::span<const std::uint8_t> bytes) {
  static const char* digits = "0123456789abcdef";
  std::string s;
  for (auto b : bytes) {
    s += digits[b >> 4];
    s += digits[b & 15];
  }
  return s;
}

double ideal_quantized(std::span<const std::uint8_t> bits, std::span<const QuantizedProb> probs) {
  double s = 0.0;
  for (std::size_t i = 0; i < bits.size(); ++i) s += quantized_bits(bits[i], probs[i]);
  return s;
}

}  // namespace

TEST(QuantizeProb, Examples) {
  EXPECT_EQ(quantize_prob(0.5), 32768);
  EXPECT_EQ(quantize_prob(1e-9), 1);
  EXPECT_EQ(quantize_prob(0.0), 1);
  EXPECT_EQ(quantize_prob(1.0), 65535);
  EXPECT_EQ(quantize_prob(0.731059), 47911);
  EXPECT_EQ(quantize_prob(-3.0), 1);
}

TEST(Encode, UniformBitsCostAtLeastTheirEntropy) {
  const std::vector<std::uint8_t> bits{1, 0, 1, 1, 0, 0, 1, 0};
  const std::vector<QuantizedProb> probs(8, quantize_prob(0.5));
  const auto code = encode(bits, probs);
  EXPECT_GE(code.bit_count, 8u);
  EXPECT_LE(code.bit_count, 8u + 64u);
  EXPECT_EQ(decode(code, probs), bits);
}

TEST(Encode, SkewedRun) {
  const std::vector<std::uint8_t> bits(1000, 1);
  const std::vector<QuantizedProb> probs(1000, quantize_prob(0.9));
  const auto code = encode(bits, probs);
  const double ideal = ideal_quantized(bits, probs);
  EXPECT_NEAR(ideal, 152.0, 0.1);
  EXPECT_GE(static_cast<double>(code.bit_count), 152.0);
  EXPECT_LE(static_cast<double>(code.bit_count), 152.0 + 64.0 + 2.0);
  EXPECT_EQ(decode(code, probs), bits);
}

TEST(Encode, EmptyStream) {
  const auto code = encode(std::span<const BitProb>{});
  EXPECT_LE(code.bit_count, 64u);
  EXPECT_EQ(code.payload.size(), (code.bit_count + 7) / 8);
  EXPECT_TRUE(decode(code, std::span<const QuantizedProb>{}).empty());
}

TEST(Encode, BufferInvariant) {
  Rng rng(1);
  for (int s = 0; s < 200; ++s) {
    std::vector<BitProb> stream(uniform_index(rng, 300));
    for (auto& bp : stream) {
      bp.p_one = uniform_real(rng, 0.0, 1.0);
      bp.bit = bernoulli(rng, bp.p_one) ? 1 : 0;
    }
    const auto code = encode(stream);
    EXPECT_LE(code.bit_count, 8 * code.payload.size());
    EXPECT_LT(8 * code.payload.size(), code.bit_count + 8);
  }
}

TEST(Decode, RandomizedRoundTripAndOverhead) {
  const auto r = props::coder_roundtrip(10000);
  EXPECT_TRUE(r.ok) << r.detail;
}

TEST(Decode, ExtremeProbabilities) {
  // Long runs against the clamp exercise carry propagation through 0xFF bytes.
  for (std::uint8_t bit : {0, 1}) {
    const std::vector<std::uint8_t> bits(5000, bit);
    for (QuantizedProb q : {QuantizedProb{1}, QuantizedProb{65535}, QuantizedProb{32768}}) {
      const std::vector<QuantizedProb> probs(bits.size(), q);
      const auto code = encode(bits, probs);
      EXPECT_EQ(decode(code, probs), bits);
      const double over = static_cast<double>(code.bit_count) - ideal_quantized(bits, probs);
      EXPECT_GE(over, 0.0);
      EXPECT_LE(over, 64.0);
    }
  }
}

TEST(Decode, InterleavedAdaptiveProbabilities) {
  // The probability of each bit depends on the bits decoded before it.
  auto next_prob = [](std::span<const std::uint8_t> history) {
    const std::size_t n = history.size();
    if (n < 2) return QuantizedProb{32768};
    return history[n - 1] == history[n - 2] ? static_cast<QuantizedProb>(history[n - 1] ? 60000 : 3000) : QuantizedProb{30000};
  };
  Rng rng(9);
  std::vector<std::uint8_t> bits(3000);
  for (auto& b : bits) b = bernoulli(rng, 0.3) ? 1 : 0;
  ArithmeticEncoder enc;
  for (std::size_t i = 0; i < bits.size(); ++i) enc.encode(bits[i], next_prob(std::span(bits).first(i)));
  const auto code = std::move(enc).finish();
  ArithmeticDecoder dec(code);
  std::vector<std::uint8_t> out;
  for (std::size_t i = 0; i < bits.size(); ++i) out.push_back(dec.decode(next_prob(out)));
  EXPECT_EQ(out, bits);
}

TEST(Decode, TruncatedBufferIsDetected) {
  Rng rng(3);
  std::vector<std::uint8_t> bits(400);
  std::vector<QuantizedProb> probs(400);
  for (std::size_t i = 0; i < bits.size(); ++i) {
    probs[i] = quantize_prob(uniform_real(rng, 0.05, 0.95));
    bits[i] = bernoulli(rng, 0.5) ? 1 : 0;
  }
  auto code = encode(bits, probs);
  code.payload.pop_back();
  EXPECT_THROW(
      {
        try {
          decode(code, probs);
        } catch (const Error& e) {
          EXPECT_EQ(e.code(), ErrorCode::TruncatedBuffer);
          throw;
        }
      },
      Error);
}

TEST(Decode, GarbageNeverCrashes) {
  Rng rng(4);
  const std::vector<QuantizedProb> probs(256, 20000);
  for (int s = 0; s < 500; ++s) {
    CodeBuffer buf;
    buf.payload.resize(uniform_index(rng, 40));
    for (auto& b : buf.payload) b = static_cast<std::uint8_t>(uniform_index(rng, 256));
    buf.bit_count = buf.payload.empty() ? 0 : 8 * buf.payload.size() - uniform_index(rng, 8);
    EXPECT_EQ(decode(buf, probs).size(), probs.size());
  }
}

// Lines: quantized probabilities (4 hex digits each), the bits packed MSB
// first, and the expected payload bytes.
TEST(Golden, PayloadsAreStable) {
  std::ifstream in(test_support::source_data("coder_golden.txt"));
  ASSERT_TRUE(in) << "missing golden vector file";
  std::string line;
  std::size_t vectors = 0;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream fields(line);
    std::string probs_hex, bits_hex, payload_hex;
    fields >> probs_hex >> bits_hex >> payload_hex;
    if (probs_hex == "-") probs_hex.clear();
    if (bits_hex == "-") bits_hex.clear();
    if (payload_hex == "-") payload_hex.clear();
    std::vector<QuantizedProb> probs;
    for (std::size_t i = 0; i + 3 < probs_hex.size(); i += 4)
      probs.push_back(static_cast<QuantizedProb>(std::stoul(probs_hex.substr(i, 4), nullptr, 16)));
    const auto packed = from_hex(bits_hex);
    std::vector<std::uint8_t> bits(probs.size());
    for (std::size_t i = 0; i < bits.size(); ++i) bits[i] = (packed[i / 8] >> (7 - i % 8)) & 1;
    const auto code = encode(bits, probs);
    EXPECT_EQ(to_hex(code.payload), payload_hex) << "vector " << vectors;
    CodeBuffer stored{from_hex(payload_hex), 8 * from_hex(payload_hex).size()};
    EXPECT_EQ(decode(stored, probs), bits) << "vector " << vectors;
    ++vectors;
  }
  EXPECT_GE(vectors, 10u);
}
