#pragma once

#include <cstdio>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "baselines.hpp"
#include "codec.hpp"
#include "dataset.hpp"
#include "model.hpp"
#include "trainer.hpp"

namespace seqpix {

struct BenchmarkRow {
  std::string dataset;
  std::string method;
  double analytic_bits = 0.0;  // mean ideal code length per test image
  double actual_bits = 0.0;    // mean coded size per test image, including termination and side bits
  std::size_t images = 0;
  std::string note;
};

struct BenchmarkReport {
  std::vector<BenchmarkRow> rows;

  const BenchmarkRow* find(const std::string& dataset, const std::string& method) const {
    for (const auto& r : rows)
      if (r.dataset == dataset && r.method == method) return &r;
    return nullptr;
  }

  std::string to_text() const {
    std::ostringstream out;
    char line[256];
    std::snprintf(line, sizeof line, "%-8s %-10s %12s %12s %8s  %s\n", "dataset", "method", "analytic", "actual",
                  "images", "note");
    out << line;
    for (const auto& r : rows) {
      std::snprintf(line, sizeof line, "%-8s %-10s %12.2f %12.2f %8zu  %s\n", r.dataset.c_str(), r.method.c_str(),
                    r.analytic_bits, r.actual_bits, r.images, r.note.c_str());
      out << line;
    }
    return out.str();
  }

  std::string to_csv() const {
    std::ostringstream out;
    out << "dataset,method,analytic_bits,actual_bits,images,note\n";
    for (const auto& r : rows) {
      char buf[64];
      out << r.dataset << ',' << r.method << ',';
      std::snprintf(buf, sizeof buf, "%.4f,%.4f,", r.analytic_bits, r.actual_bits);
      out << buf << r.images << ",\"" << r.note << "\"\n";
    }
    return out.str();
  }
};

inline const std::vector<std::string>& baseline_methods() {
  static const std::vector<std::string> m{"original", "constant", "pixel", "centers", "context"};
  return m;
}

inline const std::vector<std::string>& neural_methods() {
  static const std::vector<std::string> m{"r_only", "uv_only", "full", "full400", "full1000"};
  return m;
}

inline bool is_known_method(const std::string& name) {
  for (const auto& m : baseline_methods())
    if (m == name) return true;
  for (const auto& m : neural_methods())
    if (m == name) return true;
  return false;
}

/// Variant and hidden units behind a neural method name.
inline TrainConfig neural_method_config(const std::string& method, TrainConfig base = {}) {
  if (method == "r_only") base.variant = r_only_variant();
  else if (method == "uv_only") base.variant = uv_only_variant(), base.n_h = 200;
  else if (method == "full") base.variant = full_variant(), base.n_h = 200;
  else if (method == "full400") base.variant = full_variant(), base.n_h = 400;
  else if (method == "full1000") base.variant = full_variant(), base.n_h = 1000;
  else fail(ErrorCode::InvalidArgument, "not a neural method: " + method);
  return base;
}

/// Training settings used for the comparison table on one commodity CPU core.
/// Iteration counts are sized so each method finishes well inside 30 minutes.
inline TrainConfig desk_scale_config(const std::string& method) {
  TrainConfig c = neural_method_config(method);
  c.permutation_strategy = PermutationStrategy::FixedRandom;
  c.eta0 = 0.05;
  c.patience = 4;
  if (method == "r_only") {
    c.max_iterations = 2000000;
    c.eval_every = 100000;
  } else if (method == "uv_only") {
    c.max_iterations = 900000;
    c.eval_every = 50000;
  } else {
    c.max_iterations = 650000;
    c.eval_every = 50000;
  }
  return c;
}

struct Table1Dataset {
  std::string name;
  const Dataset* train = nullptr;
  const Dataset* test = nullptr;
};

struct Table1Options {
  std::vector<std::string> methods = baseline_methods();
  std::vector<std::size_t> n_centers_grid{500, 1000, 2000, 4000};
  std::vector<double> epsilon_grid{0.2, 0.1, 0.05, 0.02, 0.01, 0.005};
  double baseline_epsilon = kDefaultBaselineEpsilon;
  std::uint64_t seed = kDefaultSeed;
  std::size_t cv_folds = 5;
  // Supplies a trained model for a neural method (loaded or trained by the caller).
  std::function<Model(const std::string& method, const Table1Dataset& data)> neural_model;
  std::function<void(const BenchmarkRow&)> on_row;
};

namespace detail {

inline BenchmarkRow code_rows(const std::string& dataset, const std::string& method, const Predictor& pred,
                              std::span<const BinaryImage> test) {
  const auto container = compress_dataset(pred, test);
  return {dataset, method, container.mean_analytic_bits(), container.mean_actual_bits(), test.size(), ""};
}

}  // namespace detail

/// Rows of the digit-compression comparison: every requested method fitted on
/// the training split and measured on the test split.
inline BenchmarkReport run_table1(std::span<const Table1Dataset> datasets, const Table1Options& options) {
  for (const auto& m : options.methods)
    if (!is_known_method(m)) fail(ErrorCode::InvalidArgument, "unknown method '" + m + "'");
  BenchmarkReport report;
  auto emit = [&](BenchmarkRow row) {
    if (options.on_row) options.on_row(row);
    report.rows.push_back(std::move(row));
  };
  for (const auto& ds : datasets) {
    const auto& train = ds.train->images;
    const auto& test = ds.test->images;
    for (const auto& method : options.methods) {
      if (method == "original") {
        const double n_x = static_cast<double>(ds.test->pixel_count());
        emit({ds.name, method, n_x, n_x, test.size(), "one bit per pixel"});
      } else if (method == "constant") {
        const auto m = fit_constant_p(train, options.baseline_epsilon);
        auto row = detail::code_rows(ds.name, method, m, test);
        row.note = "p=" + std::to_string(m.p);
        emit(row);
      } else if (method == "pixel") {
        emit(detail::code_rows(ds.name, method, fit_pixel_p(train, options.baseline_epsilon), test));
      } else if (method == "centers") {
        const auto cv = crossvalidate_epsilon(train, options.n_centers_grid, options.epsilon_grid, options.seed,
                                              options.cv_folds);
        const auto book = fit_centers(train, cv.best_n_centers, cv.best_epsilon, options.seed);
        auto row = detail::code_rows(ds.name, method, book, test);
        char note[160];
        std::snprintf(note, sizeof note, "N=%zu eps=%g cv_bits=%.2f index_bits=%zu (analytic uses log2 N=%.3f)",
                      cv.best_n_centers, cv.best_epsilon, cv.best_bits, center_index_bits(book.size()),
                      std::log2(static_cast<double>(book.size())));
        row.note = note;
        emit(row);
      } else if (method == "context") {
        emit(detail::code_rows(ds.name, method, fit_context(train, options.baseline_epsilon), test));
      } else {
        if (!options.neural_model) fail(ErrorCode::InvalidArgument, "no trained model available for " + method);
        const Model m = options.neural_model(method, ds);
        auto row = detail::code_rows(ds.name, method, m, test);
        row.note = variant_name(m.variant) + " n_h=" + std::to_string(m.n_h);
        emit(row);
      }
    }
  }
  return report;
}

}  // namespace seqpix
