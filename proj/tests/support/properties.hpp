#pragma once

// Property checks shared by the unit tests and the acceptance binary. Each
// returns a verdict plus a one-line summary of the measured extremes.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include <seqpix/seqpix.hpp>

#include "oracles.hpp"

namespace seqpix::props {

struct Result {
  bool ok = true;
  std::string detail;
};

inline std::string format(const char* fmt, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, fmt, args...);
  return buf;
}

inline BinaryImage random_image(std::size_t width, std::size_t height, Rng& rng, double density = 0.5) {
  BinaryImage img{std::vector<std::uint8_t>(width * height), width, height, 0};
  for (auto& b : img.pixels) b = bernoulli(rng, density) ? 1 : 0;
  return img;
}

// Every parameter (including R entries the sweep never reads) drawn from
// uniform(-scale, scale); x_ave in (0.1, 0.9); optionally a shuffled order.
inline Model random_model(std::size_t width, std::size_t height, std::size_t n_h, Variant variant, Rng& rng,
                          bool shuffled = true, double scale = 1.0) {
  Model m = Model::zeros(width, height, n_h, variant);
  if (shuffled) shuffle(std::span<std::uint32_t>(m.permutation), rng);
  for (auto& x : m.x_ave) x = uniform_real(rng, 0.1, 0.9);
  for (auto* vec : {&m.b_h, &m.b_y, &m.u_in, &m.v, &m.r_in})
    for (auto& x : *vec) x = uniform_real(rng, -scale, scale);
  return m;
}

inline Variant variant_for_seed(std::uint64_t seed) {
  switch (seed % 4) {
    case 0: return full_variant();
    case 1: return r_only_variant();
    case 2: return uv_only_variant();
    default: return {true, true, false};
  }
}

// Parameter vectors paired with their gradient counterparts.
template <class F>
void for_each_parameter(Model& m, Model& g, F&& f) {
  f("b_h", m.b_h, g.b_h);
  f("b_y", m.b_y, g.b_y);
  f("U", m.u_in, g.u_in);
  f("V", m.v, g.v);
  f("R", m.r_in, g.r_in);
}

/// Analytic gradient against central differences of the naive nats loss.
/// Relative error uses max(|analytic|, |numeric|) as denominator; pairs where
/// both are below 1e-7 in magnitude are compared absolutely (|diff| < 1e-10).
inline Result gradient_check(std::size_t seeds, double step = 1e-5, double tolerance = 1e-5) {
  Result res;
  double worst = 0.0;
  std::size_t checked = 0;
  for (std::uint64_t seed = 1; seed <= seeds; ++seed) {
    Rng rng(seed);
    const std::size_t width = 2 + seed % 2, height = 1 + seed % 3, n_h = 2 + seed % 2;
    Model m = random_model(width, height, n_h, variant_for_seed(seed), rng);
    const BinaryImage img = random_image(width, height, rng);
    Model g = loss_gradient(m, img, m.permutation);
    for_each_parameter(m, g, [&](const char* name, std::vector<double>& params, std::vector<double>& grads) {
      for (std::size_t i = 0; i < params.size(); ++i) {
        const double saved = params[i];
        params[i] = saved + step;
        const long double up = oracle::naive_loss_nats(m, img);
        params[i] = saved - step;
        const long double down = oracle::naive_loss_nats(m, img);
        params[i] = saved;
        const double numeric = static_cast<double>((up - down) / (2.0L * step));
        const double analytic = grads[i];
        const double diff = std::abs(analytic - numeric);
        const double mag = std::max(std::abs(analytic), std::abs(numeric));
        const double err = mag < 1e-7 ? (diff < 1e-10 ? 0.0 : 1.0) : diff / mag;
        ++checked;
        if (err > worst) worst = err;
        if (!(err < tolerance) && res.ok) {
          res.ok = false;
          res.detail = format("seed %llu %s[%zu]: analytic %.12g numeric %.12g; ", (unsigned long long)seed, name, i,
                              analytic, numeric);
        }
      }
    });
  }
  res.detail += format("%zu seeds, %zu partials, worst rel err %.3g", seeds, checked, worst);
  return res;
}

/// Incremental forward pass against a from-scratch recomputation at every k.
inline Result naive_forward_agreement(std::size_t models, double tolerance = 1e-10) {
  Result res;
  double worst = 0.0;
  for (std::uint64_t seed = 1; seed <= models; ++seed) {
    Rng rng(1000 + seed);
    const std::size_t width = 1 + seed % 6, height = 1 + (seed / 6) % 5;  // n_x <= 30
    const std::size_t n_h = 1 + seed % 5;
    const Model m = random_model(width, height, n_h, variant_for_seed(seed), rng, seed % 3 != 0);
    const BinaryImage img = random_image(width, height, rng);
    const auto trace = forward_trace(m, img);
    const auto ref = oracle::naive_predictions(m, img);
    for (std::size_t k = 0; k < m.n_x; ++k)
      worst = std::max(worst, static_cast<double>(std::abs(static_cast<long double>(trace.y[k]) - ref[k])));
  }
  res.ok = worst < tolerance;
  res.detail = format("%zu models, max |y - y_naive| = %.3g (tolerance %.0e)", models, worst, tolerance);
  return res;
}

/// Flipping any not-yet-consumed pixel never changes an earlier prediction.
inline Result causality(std::size_t models) {
  Result res;
  std::size_t comparisons = 0;
  for (std::uint64_t seed = 1; seed <= models; ++seed) {
    Rng rng(2000 + seed);
    const std::size_t width = 3 + seed % 3, height = 2 + seed % 4, n_h = 3;
    const Model m = random_model(width, height, n_h, variant_for_seed(seed), rng);
    const BinaryImage img = random_image(width, height, rng);
    const auto base = forward_trace(m, img);
    for (std::size_t k = 0; k < m.n_x; ++k) {
      BinaryImage flipped = img;
      for (std::size_t j = k; j < m.n_x; ++j)
        if (bernoulli(rng, 0.5)) flipped.pixels[m.permutation[j]] ^= 1;
      flipped.pixels[m.permutation[k]] ^= 1;
      const auto t = forward_trace(m, flipped);
      for (std::size_t j = 0; j <= k; ++j) {
        ++comparisons;
        if (t.y[j] != base.y[j]) {
          res.ok = false;
          res.detail = format("seed %llu: y[%zu] changed after flipping from position %zu; ",
                              (unsigned long long)seed, j, k);
        }
      }
    }
  }
  res.detail += format("%zu models, %zu exact comparisons", models, comparisons);
  return res;
}

/// Random streams: exact round trip, and payload bits within [0, 64] of the
/// ideal length under the quantized probabilities.
inline Result coder_roundtrip(std::size_t streams, std::uint64_t seed = 7, std::size_t max_length = 4096) {
  Result res;
  double lo = 1e300, hi = -1e300, worst_unquantized = 0.0;
  Rng rng(seed);
  for (std::size_t s = 0; s < streams; ++s) {
    const std::size_t n = uniform_index(rng, max_length + 1);
    std::vector<std::uint8_t> bits(n);
    std::vector<QuantizedProb> probs(n);
    double ideal_q = 0.0, ideal = 0.0;
    const bool adversarial = s % 10 == 9;
    for (std::size_t i = 0; i < n; ++i) {
      const double p = uniform_real(rng, 0.001, 0.999);
      const bool one = bernoulli(rng, adversarial ? 1.0 - p : p);
      bits[i] = one ? 1 : 0;
      probs[i] = quantize_prob(p);
      ideal_q += quantized_bits(bits[i], probs[i]);
      ideal += code_length_bits(bits[i], p);
    }
    const CodeBuffer code = encode(bits, probs);
    const auto back = decode(code, probs);
    if (back != bits && res.ok) {
      res.ok = false;
      res.detail = format("stream %zu (length %zu) failed to round-trip; ", s, n);
    }
    const double over = static_cast<double>(code.bit_count) - ideal_q;
    lo = std::min(lo, over);
    hi = std::max(hi, over);
    worst_unquantized = std::max(worst_unquantized, static_cast<double>(code.bit_count) - (ideal * 1.002 + 64.0));
    if (!(over >= 0.0 && over <= 64.0) && res.ok) {
      res.ok = false;
      res.detail = format("stream %zu: overhead %.3f bits; ", s, over);
    }
  }
  if (worst_unquantized > 0.0) {
    res.ok = false;
    res.detail += format("unquantized bound exceeded by %.3f bits; ", worst_unquantized);
  }
  res.detail += format("%zu streams, overhead vs quantized ideal in [%.3f, %.3f] bits", streams, lo, hi);
  return res;
}

/// compress/decompress is the identity for every image under the predictor.
inline Result codec_roundtrip(const Predictor& pred, std::span<const BinaryImage> images) {
  Result res;
  const auto container = compress_dataset(pred, images);
  const auto reread = deserialize_container(serialize_container(container));
  const auto back = decompress_dataset(reread, pred);
  std::size_t mismatched = 0;
  for (std::size_t i = 0; i < images.size(); ++i)
    if (!(back[i].pixels == images[i].pixels)) ++mismatched;
  double worst_gap = 0.0;
  for (const auto& rec : container.records) worst_gap = std::max(worst_gap, rec.actual_bits() - rec.analytic_bits);
  res.ok = mismatched == 0 && back.size() == images.size();
  res.detail = format("%s: %zu images, %zu mismatched, max actual-analytic %.2f bits",
                      std::string(predictor_tag(pred)).c_str(), images.size(), mismatched, worst_gap);
  return res;
}

/// No p on the grid {0.001, ..., 0.999} beats the fitted constant on the training bits.
inline Result constant_p_optimality(std::span<const BinaryImage> train) {
  const auto fitted = fit_constant_p(train);
  auto total = [&](double p) {
    ConstantModel m = fitted;
    m.p = p;
    double s = 0.0;
    for (const auto& img : train) s += constant_bits(m, img);
    return s;
  };
  const double best = total(fitted.p);
  double best_grid = 1e300, best_grid_p = 0.0;
  for (int i = 1; i <= 999; ++i) {
    const double p = i / 1000.0;
    const double t = total(p);
    if (t < best_grid) best_grid = t, best_grid_p = p;
  }
  Result res;
  res.ok = best <= best_grid * (1.0 + 1e-12);
  res.detail = format("fitted p=%.6f gives %.4f bits, best grid p=%.3f gives %.4f", fitted.p, best, best_grid_p,
                      best_grid);
  return res;
}

/// Empirical marginals of samples within 3 sigma of the model's fixed marginals.
inline Result sampling_marginals(const Model& m, std::span<const double> target, std::size_t samples,
                                 std::uint64_t seed) {
  std::vector<std::size_t> ones(m.n_x, 0);
  Rng rng(seed);
  for (std::size_t s = 0; s < samples; ++s) {
    const auto img = sample_image(m, rng);
    for (std::size_t p = 0; p < m.n_x; ++p) ones[p] += img.pixels[p];
  }
  Result res;
  double worst_z = 0.0;
  for (std::size_t p = 0; p < m.n_x; ++p) {
    const double n = static_cast<double>(samples), q = target[p];
    const double sigma = std::sqrt(n * q * (1.0 - q));
    const double z = std::abs(static_cast<double>(ones[p]) - n * q) / sigma;
    worst_z = std::max(worst_z, z);
  }
  res.ok = worst_z <= 3.0;
  res.detail = format("%zu samples x %zu pixels, max |z| = %.2f (bound 3)", samples, m.n_x, worst_z);
  return res;
}

}  // namespace seqpix::props
