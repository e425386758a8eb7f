#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <limits>
#include <sstream>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "dataset.hpp"
#include "model.hpp"
#include "random.hpp"

namespace seqpix {

enum class PermutationStrategy { PerIterationRandom, FixedRandom, Raster };

inline std::string_view to_string(PermutationStrategy s) {
  switch (s) {
    case PermutationStrategy::PerIterationRandom: return "per_iter";
    case PermutationStrategy::FixedRandom: return "fixed";
    case PermutationStrategy::Raster: return "raster";
  }
  return "?";
}

inline PermutationStrategy parse_permutation_strategy(std::string_view s) {
  if (s == "per_iter" || s == "per_iteration_random") return PermutationStrategy::PerIterationRandom;
  if (s == "fixed" || s == "fixed_random") return PermutationStrategy::FixedRandom;
  if (s == "raster") return PermutationStrategy::Raster;
  fail(ErrorCode::InvalidArgument, "unknown permutation strategy '" + std::string(s) + "'");
}

inline Variant parse_variant(std::string_view s) {
  if (s == "full") return full_variant();
  if (s == "r_only") return r_only_variant();
  if (s == "uv_only") return uv_only_variant();
  fail(ErrorCode::InvalidArgument, "unknown variant '" + std::string(s) + "'");
}

inline std::string variant_name(const Variant& v) {
  std::string name = v.use_uv && v.use_r ? "full" : v.use_uv ? "uv_only" : "r_only";
  if (!v.subtract_mean) name += "_nomean";
  return name;
}

struct TrainConfig {
  std::size_t n_h = 200;
  Variant variant = full_variant();
  double eta0 = 0.05;
  double t0 = 0.0;  // 0 selects 10 * |training portion|
  double l2_lambda = 0.0;
  bool l2_biases = false;
  PermutationStrategy permutation_strategy = PermutationStrategy::FixedRandom;
  std::size_t max_iterations = 0;
  std::size_t eval_every = 10000;
  std::size_t patience = 5;
  std::uint64_t seed = kDefaultSeed;
  double validation_fraction = 0.1;
  std::size_t train_eval_count = 2000;
  bool low_memory = false;    // recompute hidden states in the backward pass
  bool fast_sigmoid = false;  // table sigmoid in the hidden layer while training
  double time_budget_seconds = 0.0;  // 0 = no wall-clock limit
};

inline void validate(const TrainConfig& c) {
  if (!(c.eta0 > 0)) fail(ErrorCode::InvalidArgument, "eta0 must be positive");
  if (c.t0 < 0) fail(ErrorCode::InvalidArgument, "t0 must be positive (or 0 for the default)");
  if (c.l2_lambda < 0) fail(ErrorCode::InvalidArgument, "l2_lambda must be >= 0");
  if (c.patience < 1) fail(ErrorCode::InvalidArgument, "patience must be >= 1");
  if (c.eval_every < 1) fail(ErrorCode::InvalidArgument, "eval_every must be >= 1");
  if (!(c.variant.use_uv || c.variant.use_r)) fail(ErrorCode::InvalidArgument, "empty variant");
  if (c.variant.use_uv && c.n_h == 0) fail(ErrorCode::InvalidArgument, "hidden units required for the UV path");
}

struct CurvePoint {
  std::size_t iteration = 0;
  double train_bits = 0.0;
  double val_bits = 0.0;
};

struct TrainReport {
  std::size_t iterations = 0;
  std::vector<CurvePoint> curve;
  double best_val_bits = std::numeric_limits<double>::infinity();
  std::size_t best_iteration = 0;
  bool stopped_early = false;
};

struct StepOptions {
  bool low_memory = false;
  bool fast_sigmoid = false;
  bool l2_biases = false;
};

/// Scratch buffers reused across steps.
struct TrainWorkspace {
  std::vector<double> h_save;  // n_x * n_h, hidden state used for each prediction
  std::vector<double> h;
  std::vector<double> y;
  std::vector<double> dyv;     // per predicted pixel, raster index, masked to later positions
  std::vector<double> xbar;    // per position
  std::vector<double> g_acc;
  std::vector<double> dhv;
  SweepState state;
};

namespace detail {

inline void hidden_from_accumulator(std::span<const double> h_u, std::span<double> h, bool fast) {
  if (fast) {
    const auto& table = SigmoidTable::instance();
    for (std::size_t i = 0; i < h.size(); ++i) h[i] = table(h_u[i]);
  } else {
    sigmoid(h_u, h);
  }
}

// One forward sweep in the order `perm` followed by the backward pass. Adds
// `scale * gradient` of the natural-log loss to `target`, which may alias
// `model`: every value the backward pass reads from the model is read before
// that value is written. Returns the image's code length in bits.
inline double forward_backward(const Model& model, const BinaryImage& image, std::span<const std::uint32_t> perm,
                               Model& target, double scale, const StepOptions& opt, TrainWorkspace& ws) {
  const std::size_t n_x = model.n_x, n_h = model.n_h;
  const bool uv = model.variant.use_uv, use_r = model.variant.use_r;
  if (image.size() != n_x) fail(ErrorCode::SizeMismatch, "image size differs from model");
  if (perm.size() != n_x) fail(ErrorCode::SizeMismatch, "permutation size differs from model");

  if (!opt.low_memory) ws.h_save.resize(n_x * n_h);
  ws.h.resize(n_h);
  ws.y.resize(n_x);
  ws.xbar.resize(n_x);
  ws.g_acc.assign(n_h, 0.0);
  ws.dhv.resize(n_h);
  ws.dyv.assign(use_r ? n_x : 0, 0.0);
  ws.state.h_u = model.b_h;
  ws.state.r_acc.assign(use_r ? n_x : 0, 0.0);

  // Forward.
  double bits = 0.0;
  auto& h_u = ws.state.h_u;
  auto& r_acc = ws.state.r_acc;
  for (std::size_t k = 0; k < n_x; ++k) {
    const std::size_t p = perm[k];
    double t = model.b_y[p];
    if (uv) {
      std::span<double> h = opt.low_memory ? std::span<double>(ws.h) : std::span<double>(ws.h_save.data() + k * n_h, n_h);
      hidden_from_accumulator(h_u, h, opt.fast_sigmoid);
      t += dot(model.v_row(p), h);
    }
    if (use_r) t += r_acc[p];
    const double y = sigmoid(t);
    ws.y[k] = y;
    const std::uint8_t bit = image.pixels[p];
    bits += code_length_bits(bit, clamp_probability(y));
    const double xbar = model.centered(p, bit);
    ws.xbar[k] = xbar;
    if (xbar != 0.0) {
      if (uv) axpy(xbar, model.u_row_for_input(p), h_u);
      if (use_r) axpy(xbar, model.r_row_for_input(p), r_acc);
    }
  }

  // Backward. Position k predicts perm[k] from the hidden state after consuming
  // perm[0..k-1]; the U column of perm[k-1] therefore collects the hidden
  // gradients of every prediction at position >= k.
  double check = 0.0;
  double by_grad_sum = 0.0;
  if (uv && opt.low_memory && n_x > 0 && ws.xbar[n_x - 1] != 0.0)
    axpy(-ws.xbar[n_x - 1], model.u_row_for_input(perm[n_x - 1]), h_u);
  for (std::size_t kk = n_x; kk-- > 0;) {
    const std::size_t p = perm[kk];
    const double dyv = ws.y[kk] - static_cast<double>(image.pixels[p]);
    target.b_y[p] += scale * dyv;
    by_grad_sum += dyv;
    if (uv) {
      std::span<const double> h;
      if (opt.low_memory) {
        // h_u holds the state for position kk (perm[0..kk-1] consumed).
        hidden_from_accumulator(h_u, ws.h, opt.fast_sigmoid);
        h = ws.h;
      } else {
        h = std::span<const double>(ws.h_save.data() + kk * n_h, n_h);
      }
      const double* vrow = model.v.data() + p * n_h;
      for (std::size_t i = 0; i < n_h; ++i) ws.dhv[i] = vrow[i] * dyv * h[i] * (1.0 - h[i]);
      double* vtarget = target.v.data() + p * n_h;
      for (std::size_t i = 0; i < n_h; ++i) {
        vtarget[i] += scale * dyv * h[i];
        ws.g_acc[i] += ws.dhv[i];
      }
      check += vtarget[0];
      if (kk > 0) {
        const std::size_t q = perm[kk - 1];
        const double xbar = ws.xbar[kk - 1];
        if (xbar != 0.0) {
          // Step back to position kk-1 before this column is written.
          if (opt.low_memory) axpy(-xbar, model.u_row_for_input(q), h_u);
          double* utarget = target.u_in.data() + q * n_h;
          for (std::size_t i = 0; i < n_h; ++i) utarget[i] += scale * xbar * ws.g_acc[i];
          check += utarget[0];
        }
      }
    }
    if (use_r) {
      ws.dyv[p] = dyv;
      if (kk > 0) {
        const std::size_t q = perm[kk - 1];
        const double xbar = ws.xbar[kk - 1];
        if (xbar != 0.0) {
          std::span<double> col(target.r_in.data() + q * n_x, n_x);
          axpy(scale * xbar, ws.dyv, col);
        }
      }
    }
  }
  if (uv) {
    for (std::size_t i = 0; i < n_h; ++i) {
      target.b_h[i] += scale * ws.g_acc[i];
      check += ws.g_acc[i];
    }
  }
  check += by_grad_sum;
  if (!std::isfinite(check)) fail(ErrorCode::NonFiniteGradient, "non-finite gradient or parameter");
  return bits;
}

inline void decay(std::vector<double>& values, double factor) {
  for (auto& x : values) x *= factor;
}

}  // namespace detail

/// Gradient of the natural-log code length with respect to every parameter,
/// returned as a model-shaped container (x_ave and permutation copied).
inline Model loss_gradient(const Model& model, const BinaryImage& image, std::span<const std::uint32_t> perm,
                           double* bits_out = nullptr, const StepOptions& opt = {}) {
  Model grad = Model::zeros(model.width, model.height, model.n_h, model.variant);
  grad.x_ave = model.x_ave;
  grad.permutation = model.permutation;
  TrainWorkspace ws;
  const double bits = detail::forward_backward(model, image, perm, grad, 1.0, opt, ws);
  if (bits_out) *bits_out = bits;
  return grad;
}

/// One SGD step on one image in the order `perm`. Returns the image's code
/// length in bits before the update. With l2_lambda > 0 the weights (and the
/// biases when opt.l2_biases) are then shrunk by a factor (1 - eta*l2_lambda).
inline double train_step(Model& model, const BinaryImage& image, std::span<const std::uint32_t> perm, double eta,
                         double l2_lambda, const StepOptions& opt, TrainWorkspace& ws) {
  if (!(eta >= 0)) fail(ErrorCode::InvalidArgument, "eta must be >= 0");
  const double bits = detail::forward_backward(model, image, perm, model, -eta, opt, ws);
  if (l2_lambda > 0 && eta > 0) {
    const double factor = 1.0 - eta * l2_lambda;
    detail::decay(model.u_in, factor);
    detail::decay(model.v, factor);
    detail::decay(model.r_in, factor);
    if (opt.l2_biases) {
      detail::decay(model.b_h, factor);
      detail::decay(model.b_y, factor);
    }
  }
  return bits;
}

inline double train_step(Model& model, const BinaryImage& image, std::span<const std::uint32_t> perm, double eta,
                         double l2_lambda, const StepOptions& opt = {}) {
  TrainWorkspace ws;
  return train_step(model, image, perm, eta, l2_lambda, opt, ws);
}

/// Mean code length in bits per image. Fans out over threads; the reduction
/// runs in image order so the result does not depend on the thread count.
inline double evaluate(const Model& model, std::span<const BinaryImage> images, unsigned threads = 0) {
  if (images.empty()) fail(ErrorCode::EmptySet, "evaluate on an empty set");
  std::vector<double> bits(images.size());
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, images.size()));
  auto work = [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) bits[i] = forward_trace(model, images[i]).total_bits;
  };
  if (threads <= 1) {
    work(0, images.size());
  } else {
    std::vector<std::jthread> pool;
    const std::size_t chunk = (images.size() + threads - 1) / threads;
    for (unsigned t = 0; t < threads; ++t) {
      const std::size_t b = t * chunk, e = std::min(images.size(), b + chunk);
      if (b < e) pool.emplace_back(work, b, e);
    }
  }
  double total = 0.0;
  for (double b : bits) total += b;
  return total / static_cast<double>(images.size());
}

inline double logit(double p) { return std::log(p / (1.0 - p)); }

/// Initial model: uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights, zero
/// hidden bias, output bias at the logit of the clamped per-pixel mean. R
/// entries that the sweep order can never read stay zero.
inline Model initialize_model(const Dataset& train, const TrainConfig& config, Rng& rng) {
  if (train.images.empty()) fail(ErrorCode::EmptySet, "empty training split");
  Model m = Model::zeros(train.width(), train.height(), config.n_h, config.variant);
  m.x_ave = train.mean_image;
  if (config.permutation_strategy == PermutationStrategy::FixedRandom)
    shuffle(std::span<std::uint32_t>(m.permutation), rng);
  for (std::size_t p = 0; p < m.n_x; ++p) m.b_y[p] = logit(clamp_probability(m.x_ave[p]));
  if (m.variant.use_uv) {
    const double a_u = 1.0 / std::sqrt(static_cast<double>(m.n_x));
    const double a_v = 1.0 / std::sqrt(static_cast<double>(m.n_h));
    for (std::size_t i = 0; i < m.n_h; ++i)
      for (std::size_t q = 0; q < m.n_x; ++q) m.u(i, q) = uniform_real(rng, -a_u, a_u);
    for (auto& x : m.v) x = uniform_real(rng, -a_v, a_v);
  }
  if (m.variant.use_r) {
    const double a_r = 1.0 / std::sqrt(static_cast<double>(m.n_x));
    const bool any_order = config.permutation_strategy == PermutationStrategy::PerIterationRandom;
    const auto pos = m.positions();
    for (std::size_t p = 0; p < m.n_x; ++p)
      for (std::size_t q = 0; q < m.n_x; ++q) {
        const bool readable = any_order ? p != q : pos[q] < pos[p];
        if (readable) m.r(p, q) = uniform_real(rng, -a_r, a_r);
      }
  }
  return m;
}

using EvalCallback = std::function<void(const CurvePoint&)>;

/// SGD over random training images with 1/t learning-rate decay. The last
/// `validation_fraction` of the training split is held out for early
/// stopping; the returned model is the snapshot with the best validation bits.
inline std::pair<Model, TrainReport> train(const Dataset& dataset, const TrainConfig& config,
                                           const EvalCallback& on_eval = {}) {
  validate(config);
  if (dataset.images.empty()) fail(ErrorCode::EmptySet, "empty training split");
  Rng rng(config.seed);
  Model model = initialize_model(dataset, config, rng);
  TrainReport report;
  if (config.max_iterations == 0) return {model, report};

  const std::size_t n = dataset.images.size();
  std::size_t n_val = static_cast<std::size_t>(std::floor(static_cast<double>(n) * config.validation_fraction));
  n_val = std::clamp<std::size_t>(n_val, 1, n);
  const std::size_t n_fit = n > n_val ? n - n_val : n;
  std::span<const BinaryImage> fit(dataset.images.data(), n_fit);
  std::span<const BinaryImage> val = n > n_val ? std::span<const BinaryImage>(dataset.images.data() + n_fit, n_val)
                                               : std::span<const BinaryImage>(dataset.images);
  std::span<const BinaryImage> fit_probe = fit.first(std::min(config.train_eval_count, fit.size()));

  const double t0 = config.t0 > 0 ? config.t0 : 10.0 * static_cast<double>(n_fit);
  StepOptions opt{config.low_memory, config.fast_sigmoid, config.l2_biases};
  TrainWorkspace ws;
  std::vector<std::uint32_t> perm = model.permutation;
  Model best = model;
  std::size_t evals_without_improvement = 0;
  const auto start = std::chrono::steady_clock::now();

  auto run_eval = [&](std::size_t iteration) {
    CurvePoint pt{iteration, evaluate(model, fit_probe), evaluate(model, val)};
    report.curve.push_back(pt);
    if (on_eval) on_eval(pt);
    if (pt.val_bits < report.best_val_bits) {
      report.best_val_bits = pt.val_bits;
      report.best_iteration = iteration;
      best = model;
      evals_without_improvement = 0;
    } else {
      ++evals_without_improvement;
    }
  };

  std::size_t t = 0;
  while (t < config.max_iterations) {
    const auto& image = fit[static_cast<std::size_t>(uniform_index(rng, fit.size()))];
    if (config.permutation_strategy == PermutationStrategy::PerIterationRandom)
      shuffle(std::span<std::uint32_t>(perm), rng);
    const double eta = config.eta0 / (1.0 + static_cast<double>(t) / t0);
    train_step(model, image, perm, eta, config.l2_lambda, opt, ws);
    ++t;
    if (t % config.eval_every == 0 || t == config.max_iterations) {
      run_eval(t);
      if (evals_without_improvement >= config.patience) {
        report.stopped_early = true;
        break;
      }
      if (config.time_budget_seconds > 0) {
        const std::chrono::duration<double> elapsed = std::chrono::steady_clock::now() - start;
        if (elapsed.count() >= config.time_budget_seconds) break;
      }
    }
  }
  report.iterations = t;
  return {std::move(best), report};
}

// ---------------------------------------------------------------------------
// Config text (key = value, '#' comments) and report emission.
// ---------------------------------------------------------------------------

inline TrainConfig parse_train_config(std::string_view text, TrainConfig c = {}) {
  std::istringstream in{std::string(text)};
  std::string line;
  int line_no = 0;
  auto as_bool = [](const std::string& v) { return v == "1" || v == "true" || v == "yes" || v == "on"; };
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const auto eq = line.find('=');
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t\r");
      if (b == std::string::npos) return std::string{};
      return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
    };
    if (trim(line).empty()) continue;
    if (eq == std::string::npos)
      fail(ErrorCode::InvalidArgument, "config line " + std::to_string(line_no) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq)), value = trim(line.substr(eq + 1));
    try {
      if (key == "hidden") c.n_h = std::stoul(value);
      else if (key == "variant") {
        const bool keep_mean = c.variant.subtract_mean;
        c.variant = parse_variant(value);
        c.variant.subtract_mean = keep_mean;
      } else if (key == "subtract_mean") c.variant.subtract_mean = as_bool(value);
      else if (key == "perm") c.permutation_strategy = parse_permutation_strategy(value);
      else if (key == "eta0") c.eta0 = std::stod(value);
      else if (key == "t0") c.t0 = std::stod(value);
      else if (key == "l2") c.l2_lambda = std::stod(value);
      else if (key == "l2_biases") c.l2_biases = as_bool(value);
      else if (key == "max_iterations") c.max_iterations = std::stoul(value);
      else if (key == "eval_every") c.eval_every = std::stoul(value);
      else if (key == "patience") c.patience = std::stoul(value);
      else if (key == "seed") c.seed = std::stoull(value);
      else if (key == "validation_fraction") c.validation_fraction = std::stod(value);
      else if (key == "train_eval_count") c.train_eval_count = std::stoul(value);
      else if (key == "low_memory") c.low_memory = as_bool(value);
      else if (key == "fast_sigmoid") c.fast_sigmoid = as_bool(value);
      else if (key == "time_budget") c.time_budget_seconds = std::stod(value);
      else fail(ErrorCode::InvalidArgument, "config line " + std::to_string(line_no) + ": unknown key '" + key + "'");
    } catch (const std::logic_error&) {
      fail(ErrorCode::InvalidArgument, "config line " + std::to_string(line_no) + ": bad value for '" + key + "'");
    }
  }
  return c;
}

inline std::string curve_to_jsonl(const TrainReport& report) {
  std::string out;
  for (const auto& pt : report.curve) {
    nlohmann::json j{{"iteration", pt.iteration}, {"train_bits", pt.train_bits}, {"val_bits", pt.val_bits}};
    out += j.dump() + "\n";
  }
  return out;
}

}  // namespace seqpix
