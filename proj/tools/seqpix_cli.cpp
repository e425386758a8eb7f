// seqpix: train, evaluate and apply sequential pixel predictors to binary digit images.

#include <CLI11.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <seqpix/seqpix.hpp>

namespace fs = std::filesystem;
using namespace seqpix;

namespace {

constexpr int kExitFailure = 1;
constexpr int kExitUsage = 2;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string default_data_dir() {
  if (const char* env = std::getenv("SEQPIX_DATA_DIR"); env && *env) return env;
  return "data";
}

struct DataOptions {
  std::string dataset = "mnist";
  std::string data_dir = default_data_dir();
  std::uint64_t seed = kDefaultSeed;
};

void add_data_options(CLI::App* cmd, DataOptions& o) {
  cmd->add_option("--dataset", o.dataset, "mnist or usps")->check(CLI::IsMember({"mnist", "usps"}));
  cmd->add_option("--data-dir", o.data_dir, "directory holding mnist/ and usps/ (default $SEQPIX_DATA_DIR)");
  cmd->add_option("--seed", o.seed, "seed for every random choice");
}

TrainTest load_data(const DataOptions& o) {
  if (o.dataset == "mnist") {
    if (!mnist_available(o.data_dir)) throw UsageError("MNIST IDX files not found under " + o.data_dir);
    return load_mnist(o.data_dir);
  }
  if (!usps_available(o.data_dir)) throw UsageError("USPS text file not found under " + o.data_dir);
  return load_usps(o.data_dir, o.seed);
}

const Dataset& pick_split(const TrainTest& d, const std::string& split) { return split == "train" ? d.train : d.test; }

std::vector<BinaryImage> first_n(const std::vector<BinaryImage>& images, std::size_t count) {
  if (count == 0 || count >= images.size()) return images;
  return {images.begin(), images.begin() + static_cast<std::ptrdiff_t>(count)};
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::IoError, "cannot write " + path);
  out << text;
}

Bytes binary_idx(std::span<const BinaryImage> images, std::size_t width, std::size_t height) {
  std::vector<GrayImage> gray;
  gray.reserve(images.size());
  for (const auto& img : images) gray.push_back(to_gray(img));
  return encode_idx_images(gray, width, height);
}

// ---------------------------------------------------------------------------

struct IngestArgs {
  DataOptions data;
  std::string out;
};

int cmd_ingest(const IngestArgs& a) {
  const auto d = load_data(a.data);
  for (const auto* split : {&d.train, &d.test}) {
    double ones = 0;
    for (const auto& img : split->images)
      for (auto b : img.pixels) ones += b;
    const double density = split->images.empty() ? 0.0 : ones / double(split->images.size() * split->pixel_count());
    std::printf("%s %s: %zu images %zux%zu, ink density %.4f\n", a.data.dataset.c_str(),
                split == &d.train ? "train" : "test", split->images.size(), split->width(), split->height(), density);
  }
  if (!a.out.empty()) {
    fs::create_directories(a.out);
    const auto base = fs::path(a.out);
    write_file((base / (a.data.dataset + "-train-binary-idx3-ubyte")).string(),
               binary_idx(d.train.images, d.train.width(), d.train.height()));
    write_file((base / (a.data.dataset + "-test-binary-idx3-ubyte")).string(),
               binary_idx(d.test.images, d.test.width(), d.test.height()));
    std::vector<GrayImage> tiles;
    for (std::size_t i = 0; i < std::min<std::size_t>(100, d.test.images.size()); ++i)
      tiles.push_back(to_gray(d.test.images[i]));
    write_pgm((base / (a.data.dataset + "-test-preview.pgm")).string(), tile_grid(tiles, 10));
  }
  return 0;
}

// ---------------------------------------------------------------------------

struct TrainArgs {
  DataOptions data;
  std::string config_path;
  std::optional<std::size_t> hidden;
  std::optional<std::string> variant;
  std::optional<std::string> perm;
  std::optional<double> l2, eta0, t0, time_budget;
  std::optional<std::size_t> max_iterations, eval_every, patience;
  std::string out = "model.sppm";
  bool quiet = false;
};

TrainConfig resolve_train_config(const TrainArgs& a) {
  TrainConfig c = desk_scale_config(a.variant.value_or("full"));
  if (!a.config_path.empty()) {
    const auto bytes = read_file(a.config_path);
    c = parse_train_config(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()), c);
  }
  if (a.variant) c.variant = parse_variant(*a.variant);
  if (a.hidden) c.n_h = *a.hidden;
  if (!c.variant.use_uv) c.n_h = 0;
  if (a.perm) c.permutation_strategy = parse_permutation_strategy(*a.perm);
  if (a.l2) c.l2_lambda = *a.l2;
  if (a.eta0) c.eta0 = *a.eta0;
  if (a.t0) c.t0 = *a.t0;
  if (a.time_budget) c.time_budget_seconds = *a.time_budget;
  if (a.max_iterations) c.max_iterations = *a.max_iterations;
  if (a.eval_every) c.eval_every = *a.eval_every;
  if (a.patience) c.patience = *a.patience;
  c.seed = a.data.seed;
  return c;
}

int cmd_train(const TrainArgs& a) {
  TrainConfig config;
  try {
    config = resolve_train_config(a);
    validate(config);
  } catch (const Error& e) {
    throw UsageError(e.what());
  }
  const auto d = load_data(a.data);
  auto [model, report] = train(d.train, config, [&](const CurvePoint& p) {
    if (!a.quiet) std::fprintf(stderr, "iter %zu train %.2f val %.2f\n", p.iteration, p.train_bits, p.val_bits);
  });
  save_model(a.out, model);
  write_text(a.out + ".curve.jsonl", curve_to_jsonl(report));
  std::printf("wrote %s (%zu iterations, best validation %.2f bits at %zu%s)\n", a.out.c_str(), report.iterations,
              report.best_val_bits, report.best_iteration, report.stopped_early ? ", stopped early" : "");
  return 0;
}

// ---------------------------------------------------------------------------

struct EvalArgs {
  DataOptions data;
  std::string model;
  std::string split = "test";
  std::size_t count = 0;
};

int cmd_eval(const EvalArgs& a) {
  const auto pred = load_predictor(a.model);
  const auto d = load_data(a.data);
  const auto images = first_n(pick_split(d, a.split).images, a.count);
  const auto container = compress_dataset(pred, images);
  std::printf("%s %s %s: %zu images, %.3f analytic bits/image, %.3f actual bits/image\n", a.model.c_str(),
              a.data.dataset.c_str(), a.split.c_str(), images.size(), container.mean_analytic_bits(),
              container.mean_actual_bits());
  return 0;
}

// ---------------------------------------------------------------------------

struct CompressArgs {
  DataOptions data;
  std::string model;
  std::string method = "model";
  std::string input;
  std::string split = "test";
  std::size_t count = 0;
  std::size_t centers = 2000;
  double epsilon = 0.01;
  std::string out = "images.sppc";
};

Predictor fit_baseline(const std::string& method, const Dataset& train, const CompressArgs& a) {
  if (method == "constant") return fit_constant_p(train.images);
  if (method == "pixel") return fit_pixel_p(train.images);
  if (method == "centers") return fit_centers(train.images, a.centers, a.epsilon, a.data.seed);
  if (method == "context") return fit_context(train.images);
  throw UsageError("unknown method '" + method + "'");
}

int cmd_compress(const CompressArgs& a) {
  std::vector<BinaryImage> images;
  std::optional<TrainTest> data;
  if (!a.input.empty()) {
    const auto bytes = read_file(a.input);
    images = binarize_all(parse_idx_images(bytes), kMnistThreshold);
  } else {
    data = load_data(a.data);
    images = first_n(pick_split(*data, a.split).images, a.count);
  }
  Predictor pred;
  if (a.method == "model") {
    if (a.model.empty()) throw UsageError("--model is required with --method model");
    pred = load_predictor(a.model);
  } else {
    if (!data) data = load_data(a.data);
    pred = fit_baseline(a.method, data->train, a);
    const std::string pred_path = a.model.empty() ? a.out + ".pred" : a.model;
    save_predictor(pred_path, pred);
    std::printf("wrote predictor %s\n", pred_path.c_str());
  }
  const auto container = compress_dataset(pred, images);
  const auto bytes = serialize_container(container);
  write_file(a.out, bytes);
  std::printf("wrote %s: %zu images, %zu bytes, %.3f analytic bits/image, %.3f actual bits/image\n", a.out.c_str(),
              images.size(), bytes.size(), images.empty() ? 0.0 : container.mean_analytic_bits(),
              images.empty() ? 0.0 : container.mean_actual_bits());
  return 0;
}

struct DecompressArgs {
  std::string model;
  std::string input;
  std::string out = "images-idx3-ubyte";
};

int cmd_decompress(const DecompressArgs& a) {
  const auto pred = load_predictor(a.model);
  const auto container = deserialize_container(read_file(a.input));
  const auto images = decompress_dataset(container, pred);
  write_file(a.out, binary_idx(images, container.width, container.height));
  std::printf("wrote %s: %zu images\n", a.out.c_str(), images.size());
  return 0;
}

// ---------------------------------------------------------------------------

struct SampleArgs {
  std::string model;
  std::size_t count = 100;
  std::size_t cols = 10;
  std::uint64_t seed = kDefaultSeed;
  std::string out = "samples.pgm";
};

int cmd_sample(const SampleArgs& a) {
  const Model m = load_model(a.model);
  Rng rng(a.seed);
  std::vector<GrayImage> tiles;
  for (std::size_t i = 0; i < a.count; ++i) tiles.push_back(to_gray(sample_image(m, rng)));
  write_pgm(a.out, tile_grid(tiles, a.cols));
  std::printf("wrote %s (%zu samples)\n", a.out.c_str(), a.count);
  return 0;
}

struct FiltersArgs {
  std::string model;
  std::string which = "U";
  std::size_t count = 0;
  std::size_t cols = 20;
  std::string out = "filters.pgm";
};

int cmd_filters(const FiltersArgs& a) {
  const Model m = load_model(a.model);
  const FilterMatrix which = a.which == "U" ? FilterMatrix::U : a.which == "V" ? FilterMatrix::V : FilterMatrix::R;
  auto filters = export_filters(m, which);
  if (a.count > 0 && a.count < filters.size()) filters.resize(a.count);
  write_pgm(a.out, tile_grid(filters, a.cols));
  std::printf("wrote %s (%zu %s filters)\n", a.out.c_str(), filters.size(), a.which.c_str());
  return 0;
}

// ---------------------------------------------------------------------------

struct BenchArgs {
  std::string datasets = "mnist";
  std::string data_dir = default_data_dir();
  std::string methods;
  std::string models_dir;
  double train_budget = 0.0;
  std::uint64_t seed = kDefaultSeed;
  std::string out = "table1";
};

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> parts;
  std::stringstream in(s);
  std::string item;
  while (std::getline(in, item, ','))
    if (!item.empty()) parts.push_back(item);
  return parts;
}

int cmd_bench(const BenchArgs& a) {
  Table1Options options;
  options.seed = a.seed;
  if (!a.methods.empty()) options.methods = split_list(a.methods);
  for (const auto& m : options.methods)
    if (!is_known_method(m)) throw UsageError("unknown method '" + m + "'");

  std::vector<std::string> names = a.datasets == "all" ? std::vector<std::string>{"mnist", "usps"} : split_list(a.datasets);
  std::vector<TrainTest> loaded;
  loaded.reserve(names.size());
  for (const auto& name : names) {
    if (name != "mnist" && name != "usps") throw UsageError("unknown dataset '" + name + "'");
    loaded.push_back(load_data({name, a.data_dir, a.seed}));
  }
  std::vector<Table1Dataset> sets;
  for (std::size_t i = 0; i < names.size(); ++i) sets.push_back({names[i], &loaded[i].train, &loaded[i].test});

  options.neural_model = [&](const std::string& method, const Table1Dataset& ds) {
    if (!a.models_dir.empty()) {
      const auto path = fs::path(a.models_dir) / (ds.name + "_" + method + ".sppm");
      if (fs::exists(path)) return load_model(path.string());
    }
    if (a.train_budget <= 0) fail(ErrorCode::InvalidArgument, "no model for " + method + "; pass --train-budget");
    TrainConfig config = desk_scale_config(method);
    config.time_budget_seconds = a.train_budget;
    config.seed = a.seed;
    std::fprintf(stderr, "training %s on %s\n", method.c_str(), ds.name.c_str());
    Model m = train(*ds.train, config).first;
    if (!a.models_dir.empty()) {
      fs::create_directories(a.models_dir);
      save_model((fs::path(a.models_dir) / (ds.name + "_" + method + ".sppm")).string(), m);
    }
    return m;
  };
  options.on_row = [](const BenchmarkRow& r) {
    std::fprintf(stderr, "%s %s %.2f\n", r.dataset.c_str(), r.method.c_str(), r.analytic_bits);
  };
  const auto report = run_table1(sets, options);
  write_text(a.out + ".txt", report.to_text());
  write_text(a.out + ".csv", report.to_csv());
  std::cout << report.to_text();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sequential pixel prediction codec for binary digit images"};
  app.require_subcommand(1);

  IngestArgs ingest;
  auto* c_ingest = app.add_subcommand("ingest", "load, binarize and summarize a dataset");
  add_data_options(c_ingest, ingest.data);
  c_ingest->add_option("--out", ingest.out, "directory for binarized IDX files and a preview grid");

  TrainArgs tr;
  auto* c_train = app.add_subcommand("train", "train a predictor with early stopping");
  add_data_options(c_train, tr.data);
  c_train->add_option("--config", tr.config_path, "key = value training configuration");
  c_train->add_option("--hidden", tr.hidden, "hidden units");
  c_train->add_option("--variant", tr.variant)->check(CLI::IsMember({"r_only", "uv_only", "full"}));
  c_train->add_option("--perm", tr.perm)->check(CLI::IsMember({"per_iter", "fixed", "raster"}));
  c_train->add_option("--l2", tr.l2, "L2 weight decay");
  c_train->add_option("--eta0", tr.eta0, "initial learning rate");
  c_train->add_option("--t0", tr.t0, "learning-rate decay constant");
  c_train->add_option("--max-iterations", tr.max_iterations);
  c_train->add_option("--eval-every", tr.eval_every);
  c_train->add_option("--patience", tr.patience);
  c_train->add_option("--time-budget", tr.time_budget, "seconds");
  c_train->add_option("--out", tr.out, "model file");
  c_train->add_flag("--quiet", tr.quiet);

  EvalArgs ev;
  auto* c_eval = app.add_subcommand("eval", "bits per image of a predictor on a split");
  add_data_options(c_eval, ev.data);
  c_eval->add_option("--model", ev.model, "model or predictor file")->required();
  c_eval->add_option("--split", ev.split)->check(CLI::IsMember({"train", "test"}));
  c_eval->add_option("--count", ev.count, "first N images (0 = all)");

  CompressArgs co;
  auto* c_compress = app.add_subcommand("compress", "arithmetic-code images into a container");
  add_data_options(c_compress, co.data);
  c_compress->add_option("--model", co.model, "predictor file (read for --method model, written otherwise)");
  c_compress->add_option("--method", co.method)->check(CLI::IsMember({"model", "constant", "pixel", "centers", "context"}));
  c_compress->add_option("--input", co.input, "IDX image file instead of a dataset split");
  c_compress->add_option("--split", co.split)->check(CLI::IsMember({"train", "test"}));
  c_compress->add_option("--count", co.count, "first N images (0 = all)");
  c_compress->add_option("--centers", co.centers);
  c_compress->add_option("--epsilon", co.epsilon);
  c_compress->add_option("--out", co.out);

  DecompressArgs de;
  auto* c_decompress = app.add_subcommand("decompress", "decode a container to an IDX image file");
  c_decompress->add_option("--model", de.model, "predictor file")->required();
  c_decompress->add_option("--input", de.input)->required();
  c_decompress->add_option("--out", de.out);

  SampleArgs sa;
  auto* c_sample = app.add_subcommand("sample", "draw digits from a trained model");
  c_sample->add_option("--model", sa.model)->required();
  c_sample->add_option("--count", sa.count);
  c_sample->add_option("--cols", sa.cols)->check(CLI::PositiveNumber);
  c_sample->add_option("--seed", sa.seed);
  c_sample->add_option("--out", sa.out);

  FiltersArgs fi;
  auto* c_filters = app.add_subcommand("filters", "render learned weights as images");
  c_filters->add_option("--model", fi.model)->required();
  c_filters->add_option("--which", fi.which)->check(CLI::IsMember({"U", "V", "R"}));
  c_filters->add_option("--count", fi.count, "first N filters (0 = all)");
  c_filters->add_option("--cols", fi.cols)->check(CLI::PositiveNumber);
  c_filters->add_option("--out", fi.out);

  BenchArgs be;
  auto* c_bench = app.add_subcommand("bench", "compression comparison table");
  c_bench->add_option("--dataset", be.datasets, "mnist, usps, or all");
  c_bench->add_option("--data-dir", be.data_dir);
  c_bench->add_option("--methods", be.methods, "comma-separated methods (default: baselines)");
  c_bench->add_option("--models-dir", be.models_dir, "trained models named <dataset>_<method>.sppm");
  c_bench->add_option("--train-budget", be.train_budget, "seconds per neural model trained on demand");
  c_bench->add_option("--seed", be.seed);
  c_bench->add_option("--out", be.out, "output prefix for .txt and .csv");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (*c_ingest) return cmd_ingest(ingest);
    if (*c_train) return cmd_train(tr);
    if (*c_eval) return cmd_eval(ev);
    if (*c_compress) return cmd_compress(co);
    if (*c_decompress) return cmd_decompress(de);
    if (*c_sample) return cmd_sample(sa);
    if (*c_filters) return cmd_filters(fi);
    if (*c_bench) return cmd_bench(be);
  } catch (const UsageError& e) {
    std::fprintf(stderr, "usage error: %s\n", e.what());
    return kExitUsage;
  } catch (const Error& e) {
    std::fprintf(stderr, "error (%s): %s\n", std::string(to_string(e.code())).c_str(), e.what());
    return kExitFailure;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitFailure;
  }
  return kExitFailure;
}
