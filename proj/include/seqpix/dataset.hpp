#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "byte_io.hpp"
#include "errors.hpp"
#include "random.hpp"

namespace seqpix {

inline constexpr int kMnistThreshold = 128;
inline constexpr int kUspsThreshold = 50;
inline constexpr std::uint32_t kIdxImageMagic = 0x00000803;  // 2051
inline constexpr std::uint32_t kIdxLabelMagic = 0x00000801;  // 2049
inline constexpr std::size_t kUspsSide = 16;
inline constexpr std::size_t kUspsTrainPerClass = 700;
inline constexpr std::size_t kUspsTestPerClass = 300;

struct GrayImage {
  std::vector<std::uint8_t> pixels;
  std::size_t width = 0;
  std::size_t height = 0;
  int label = 0;
};

struct BinaryImage {
  std::vector<std::uint8_t> pixels;  // each 0 or 1
  std::size_t width = 0;
  std::size_t height = 0;
  int label = 0;

  std::size_t size() const { return pixels.size(); }
  bool operator==(const BinaryImage&) const = default;
};

enum class Split { Train, Test };

struct Dataset {
  std::vector<BinaryImage> images;
  Split split = Split::Train;
  std::vector<double> mean_image;  // x_ave from the training split

  std::size_t width() const { return images.empty() ? 0 : images.front().width; }
  std::size_t height() const { return images.empty() ? 0 : images.front().height; }
  std::size_t pixel_count() const { return mean_image.size(); }
};

// ---------------------------------------------------------------------------
// IDX (MNIST) parsing. Header fields are big-endian 32-bit words.
// ---------------------------------------------------------------------------

inline std::vector<GrayImage> parse_idx_images(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4) fail(ErrorCode::TruncatedFile, "IDX header shorter than magic");
  if (read_be_u32(bytes, 0) != kIdxImageMagic) fail(ErrorCode::BadMagic, "not an IDX ubyte rank-3 file");
  if (bytes.size() < 16) fail(ErrorCode::TruncatedFile, "IDX image header truncated");
  const std::uint64_t count = read_be_u32(bytes, 4);
  const std::uint64_t rows = read_be_u32(bytes, 8);
  const std::uint64_t cols = read_be_u32(bytes, 12);
  if (count > 0 && (rows == 0 || cols == 0)) fail(ErrorCode::DimensionOverflow, "zero image dimension");
  const std::uint64_t per_image = rows * cols;  // < 2^64 since both < 2^32
  if (per_image > (std::uint64_t{1} << 24)) fail(ErrorCode::DimensionOverflow, "image dimensions too large");
  if (count != 0 && per_image > (UINT64_MAX - 16) / count)
    fail(ErrorCode::DimensionOverflow, "payload size overflows");
  if (bytes.size() - 16 < count * per_image) fail(ErrorCode::TruncatedFile, "IDX image payload truncated");

  std::vector<GrayImage> images(static_cast<std::size_t>(count));
  auto payload = bytes.subspan(16);
  for (std::size_t i = 0; i < images.size(); ++i) {
    auto src = payload.subspan(i * per_image, per_image);
    images[i].pixels.assign(src.begin(), src.end());
    images[i].width = static_cast<std::size_t>(cols);
    images[i].height = static_cast<std::size_t>(rows);
  }
  return images;
}

inline std::vector<int> parse_idx_labels(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4) fail(ErrorCode::TruncatedFile, "IDX header shorter than magic");
  if (read_be_u32(bytes, 0) != kIdxLabelMagic) fail(ErrorCode::BadMagic, "not an IDX ubyte rank-1 file");
  if (bytes.size() < 8) fail(ErrorCode::TruncatedFile, "IDX label header truncated");
  const std::uint64_t count = read_be_u32(bytes, 4);
  if (bytes.size() - 8 < count) fail(ErrorCode::TruncatedFile, "IDX label payload truncated");
  std::vector<int> labels;
  labels.reserve(static_cast<std::size_t>(count));
  for (std::size_t i = 0; i < count; ++i) {
    const int v = bytes[8 + i];
    if (v > 9) fail(ErrorCode::LabelOutOfRange, "label " + std::to_string(v) + " at index " + std::to_string(i));
    labels.push_back(v);
  }
  return labels;
}

inline Bytes encode_idx_images(std::span<const GrayImage> images, std::size_t width, std::size_t height) {
  Bytes out;
  write_be_u32(out, kIdxImageMagic);
  write_be_u32(out, static_cast<std::uint32_t>(images.size()));
  write_be_u32(out, static_cast<std::uint32_t>(height));
  write_be_u32(out, static_cast<std::uint32_t>(width));
  for (const auto& img : images) out.insert(out.end(), img.pixels.begin(), img.pixels.end());
  return out;
}

// ---------------------------------------------------------------------------
// USPS text: one image per line, a label then 256 pixel values. Values are
// either gray levels in [0,255] or the common [-1,1] scaling; the range is
// detected over the whole file.
// ---------------------------------------------------------------------------

inline std::vector<GrayImage> parse_usps_text(std::string_view text) {
  constexpr std::size_t n_pixels = kUspsSide * kUspsSide;
  std::vector<int> labels;
  std::vector<double> values;
  std::size_t line_no = 0;
  while (!text.empty()) {
    const auto eol = text.find('\n');
    std::string_view line = text.substr(0, eol);
    text = eol == std::string_view::npos ? std::string_view{} : text.substr(eol + 1);
    ++line_no;

    std::vector<double> fields;
    std::size_t i = 0;
    while (i < line.size()) {
      while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r' || line[i] == ',')) ++i;
      if (i >= line.size()) break;
      std::size_t j = i;
      while (j < line.size() && line[j] != ' ' && line[j] != '\t' && line[j] != '\r' && line[j] != ',') ++j;
      std::string_view tok = line.substr(i, j - i);
      if (!tok.empty() && tok.front() == '+') tok.remove_prefix(1);
      double v = 0;
      auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
      if (ec != std::errc{} || ptr != tok.data() + tok.size() || !std::isfinite(v))
        fail(ErrorCode::MalformedLine, "line " + std::to_string(line_no) + ": bad number '" + std::string(tok) + "'");
      fields.push_back(v);
      i = j;
    }
    if (fields.empty()) continue;
    if (fields.size() != 1 + n_pixels)
      fail(ErrorCode::MalformedLine, "line " + std::to_string(line_no) + ": expected 257 fields, got " +
                                         std::to_string(fields.size()));
    const double label = fields[0];
    if (label != std::floor(label) || label < 0 || label > 9)
      fail(ErrorCode::ValueOutOfRange, "line " + std::to_string(line_no) + ": label outside [0,9]");
    labels.push_back(static_cast<int>(label));
    values.insert(values.end(), fields.begin() + 1, fields.end());
  }

  const auto [lo, hi] = values.empty() ? std::pair{0.0, 0.0} : [&] {
    auto [a, b] = std::minmax_element(values.begin(), values.end());
    return std::pair{*a, *b};
  }();
  const bool unit_range = lo >= -1.0 && hi <= 1.0;
  if (!unit_range && (lo < 0.0 || hi > 255.0)) fail(ErrorCode::ValueOutOfRange, "pixel values outside [0,255] and [-1,1]");

  std::vector<GrayImage> images(labels.size());
  for (std::size_t n = 0; n < images.size(); ++n) {
    auto& img = images[n];
    img.width = img.height = kUspsSide;
    img.label = labels[n];
    img.pixels.resize(n_pixels);
    for (std::size_t p = 0; p < n_pixels; ++p) {
      const double v = values[n * n_pixels + p];
      const double g = unit_range ? std::round((v + 1.0) * 127.5) : std::round(v);
      img.pixels[p] = static_cast<std::uint8_t>(std::clamp(g, 0.0, 255.0));
    }
  }
  return images;
}

// ---------------------------------------------------------------------------

/// Pixels strictly above the threshold become 1.
inline BinaryImage binarize(const GrayImage& img, int threshold) {
  if (threshold < 0 || threshold > 255) fail(ErrorCode::InvalidArgument, "threshold outside [0,255]");
  BinaryImage out{{}, img.width, img.height, img.label};
  out.pixels.reserve(img.pixels.size());
  for (auto v : img.pixels) out.pixels.push_back(v > threshold ? 1 : 0);
  return out;
}

inline std::vector<BinaryImage> binarize_all(std::span<const GrayImage> images, int threshold) {
  std::vector<BinaryImage> out;
  out.reserve(images.size());
  for (const auto& img : images) out.push_back(binarize(img, threshold));
  return out;
}

/// 700 train / 300 test images per class, chosen by a seeded shuffle within
/// each class. Output keeps the input order inside each side of the split.
template <typename Image>
std::pair<std::vector<Image>, std::vector<Image>> split_usps(std::span<const Image> images, std::uint64_t seed) {
  std::vector<std::vector<std::size_t>> by_class(10);
  for (std::size_t i = 0; i < images.size(); ++i) {
    const int label = images[i].label;
    if (label < 0 || label > 9) fail(ErrorCode::LabelOutOfRange, "label outside [0,9]");
    by_class[static_cast<std::size_t>(label)].push_back(i);
  }
  std::vector<int> side(images.size(), -1);  // 0 train, 1 test
  Rng rng(seed);
  for (std::size_t c = 0; c < by_class.size(); ++c) {
    auto& idx = by_class[c];
    if (idx.empty()) continue;
    if (idx.size() < kUspsTrainPerClass + kUspsTestPerClass)
      fail(ErrorCode::InsufficientClassCount,
           "class " + std::to_string(c) + " has " + std::to_string(idx.size()) + " images, need 1000");
    shuffle(std::span<std::size_t>(idx), rng);
    for (std::size_t k = 0; k < kUspsTrainPerClass + kUspsTestPerClass; ++k)
      side[idx[k]] = k < kUspsTrainPerClass ? 0 : 1;
  }
  std::pair<std::vector<Image>, std::vector<Image>> out;
  for (std::size_t i = 0; i < images.size(); ++i) {
    if (side[i] == 0) out.first.push_back(images[i]);
    else if (side[i] == 1) out.second.push_back(images[i]);
  }
  return out;
}

template <typename Image>
std::pair<std::vector<Image>, std::vector<Image>> split_usps(const std::vector<Image>& images, std::uint64_t seed) {
  return split_usps(std::span<const Image>(images), seed);
}

inline std::vector<double> mean_image(std::span<const BinaryImage> train) {
  if (train.empty()) fail(ErrorCode::EmptySet, "mean of an empty training set");
  const std::size_t n = train.front().size();
  std::vector<std::uint64_t> ones(n, 0);
  for (const auto& img : train) {
    if (img.size() != n) fail(ErrorCode::SizeMismatch, "training images differ in size");
    for (std::size_t p = 0; p < n; ++p) ones[p] += img.pixels[p];
  }
  std::vector<double> mean(n);
  for (std::size_t p = 0; p < n; ++p) mean[p] = static_cast<double>(ones[p]) / static_cast<double>(train.size());
  return mean;
}

inline Dataset make_dataset(std::vector<BinaryImage> images, Split split, std::vector<double> train_mean) {
  for (const auto& img : images)
    if (img.size() != train_mean.size()) fail(ErrorCode::SizeMismatch, "image size differs from mean image");
  return Dataset{std::move(images), split, std::move(train_mean)};
}

// ---------------------------------------------------------------------------
// Loading from a data directory.
// ---------------------------------------------------------------------------

struct TrainTest {
  Dataset train;
  Dataset test;
};

inline std::string find_with_gz(const std::filesystem::path& dir, const std::string& stem) {
  for (const auto& name : {stem, stem + ".gz"}) {
    if (std::filesystem::exists(dir / name)) return (dir / name).string();
  }
  fail(ErrorCode::IoError, "missing " + (dir / stem).string() + "[.gz]");
}

/// MNIST files live either in `dir` or in `dir/mnist`.
inline std::filesystem::path mnist_directory(const std::filesystem::path& dir) {
  if (std::filesystem::exists(dir / "mnist")) return dir / "mnist";
  return dir;
}

inline bool mnist_available(const std::filesystem::path& dir) {
  const auto d = mnist_directory(dir);
  for (auto stem : {"train-images-idx3-ubyte", "train-labels-idx1-ubyte", "t10k-images-idx3-ubyte",
                    "t10k-labels-idx1-ubyte"}) {
    const std::string s(stem);
    if (!std::filesystem::exists(d / s) && !std::filesystem::exists(d / (s + ".gz"))) return false;
  }
  return true;
}

inline std::vector<GrayImage> load_idx_pair(const std::string& images_path, const std::string& labels_path) {
  auto images = parse_idx_images(read_file(images_path));
  const auto labels = parse_idx_labels(read_file(labels_path));
  if (labels.size() != images.size()) fail(ErrorCode::SizeMismatch, "image and label counts differ");
  for (std::size_t i = 0; i < images.size(); ++i) images[i].label = labels[i];
  return images;
}

inline TrainTest load_mnist(const std::filesystem::path& dir, int threshold = kMnistThreshold) {
  const auto d = mnist_directory(dir);
  auto train = binarize_all(load_idx_pair(find_with_gz(d, "train-images-idx3-ubyte"),
                                          find_with_gz(d, "train-labels-idx1-ubyte")),
                            threshold);
  auto test = binarize_all(load_idx_pair(find_with_gz(d, "t10k-images-idx3-ubyte"),
                                         find_with_gz(d, "t10k-labels-idx1-ubyte")),
                           threshold);
  auto mean = mean_image(train);
  return {make_dataset(std::move(train), Split::Train, mean), make_dataset(std::move(test), Split::Test, mean)};
}

inline std::filesystem::path usps_file(const std::filesystem::path& dir) {
  for (const auto& p : {dir / "usps" / "usps.txt", dir / "usps.txt", dir / "usps" / "usps.txt.gz", dir / "usps.txt.gz"})
    if (std::filesystem::exists(p)) return p;
  return {};
}

inline bool usps_available(const std::filesystem::path& dir) { return !usps_file(dir).empty(); }

inline TrainTest load_usps(const std::filesystem::path& dir, std::uint64_t split_seed = kDefaultSeed,
                           int threshold = kUspsThreshold) {
  const auto path = usps_file(dir);
  if (path.empty()) fail(ErrorCode::IoError, "no usps.txt under " + dir.string());
  const auto bytes = read_file(path.string());
  const auto gray = parse_usps_text(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
  auto [train_gray, test_gray] = split_usps(gray, split_seed);
  auto train = binarize_all(train_gray, threshold);
  auto test = binarize_all(test_gray, threshold);
  auto mean = mean_image(train);
  return {make_dataset(std::move(train), Split::Train, mean), make_dataset(std::move(test), Split::Test, mean)};
}

}  // namespace seqpix
