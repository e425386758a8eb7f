#include <gtest/gtest.h>

#include <cmath>

#include <seqpix/seqpix.hpp>

#include "support/paths.hpp"
#include "support/properties.hpp"

using namespace seqpix;

namespace {

template <class F>
ErrorCode code_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error raised";
  return ErrorCode::InvalidArgument;
}

BinaryImage img(std::vector<std::uint8_t> px, std::size_t w, std::size_t h) { return {std::move(px), w, h, 0}; }

std::vector<BinaryImage> random_images(std::size_t n, std::size_t w, std::size_t h, std::uint64_t seed,
                                       double density = 0.3) {
  Rng rng(seed);
  std::vector<BinaryImage> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(props::random_image(w, h, rng, density));
  return out;
}

}  // namespace

TEST(ConstantP, AllZeroTrainingSetClamps) {
  const std::vector<BinaryImage> zeros(3, img({0, 0, 0, 0}, 2, 2));
  EXPECT_DOUBLE_EQ(fit_constant_p(zeros, 0.01).p, 0.01);
  const std::vector<BinaryImage> mixed{img({1, 0, 0, 0}, 2, 2), img({1, 1, 0, 0}, 2, 2)};
  EXPECT_DOUBLE_EQ(fit_constant_p(mixed).p, 3.0 / 8.0);
  EXPECT_NEAR(constant_bits(fit_constant_p(mixed), mixed[0]), -std::log2(0.375) - 3 * std::log2(0.625), 1e-12);
}

TEST(ConstantP, OptimalOverGrid) {
  const auto train = random_images(200, 6, 6, 1, 0.23);
  const auto r = props::constant_p_optimality(train);
  EXPECT_TRUE(r.ok) << r.detail;
}

TEST(PixelP, ClampsAlwaysOnPixel) {
  const std::vector<BinaryImage> train{img({1, 0, 1}, 3, 1), img({1, 0, 0}, 3, 1)};
  const auto t = fit_pixel_p(train, 0.001);
  EXPECT_DOUBLE_EQ(t.p[0], 0.999);
  EXPECT_DOUBLE_EQ(t.p[1], 0.001);
  EXPECT_DOUBLE_EQ(t.p[2], 0.5);
}

TEST(Centers, EveryImageItsOwnCenter) {
  const auto train = random_images(40, 5, 4, 2);
  const auto book = fit_centers(train, train.size(), 0.01, 3);
  ASSERT_EQ(book.size(), 40u);
  for (const auto& im : train) {
    const auto c = nearest_center(book, im);
    EXPECT_TRUE(std::equal(im.pixels.begin(), im.pixels.end(), book.center(c).begin()));
  }
  for (double m : book.mismatch) EXPECT_DOUBLE_EQ(m, 0.01);
  EXPECT_EQ(code_of([&] { fit_centers(train, 41, 0.01, 1); }), ErrorCode::TooManyCenters);
}

TEST(Centers, EmptyCenterGetsEpsilon) {
  // Two identical images: both become centers, ties go to the lower index, so one center is empty.
  const std::vector<BinaryImage> train{img({1, 0, 1, 0}, 2, 2), img({1, 0, 1, 0}, 2, 2)};
  const auto book = fit_centers(train, 2, 0.05, 1);
  EXPECT_EQ(nearest_center(book, train[0]), 0u);
  for (double m : book.mismatch_row(1)) EXPECT_DOUBLE_EQ(m, 0.05);
}

TEST(Centers, HandCountedMismatch) {
  const std::vector<BinaryImage> train{img({1, 0, 0, 1}, 2, 2), img({1, 1, 0, 0}, 2, 2), img({0, 0, 0, 1}, 2, 2)};
  // Mismatch frequencies with each possible center, counted by hand.
  const std::vector<std::vector<double>> expected{
      {1.0 / 3, 1.0 / 3, 0.0, 1.0 / 3},
      {1.0 / 3, 2.0 / 3, 0.0, 2.0 / 3},
      {2.0 / 3, 1.0 / 3, 0.0, 1.0 / 3},
  };
  for (std::uint64_t seed = 1; seed <= 6; ++seed) {
    const auto book = fit_centers(train, 1, 0.01, seed);
    std::size_t which = 3;
    for (std::size_t i = 0; i < 3; ++i)
      if (std::equal(train[i].pixels.begin(), train[i].pixels.end(), book.center(0).begin())) which = i;
    ASSERT_LT(which, 3u);
    for (std::size_t p = 0; p < 4; ++p)
      EXPECT_NEAR(book.mismatch_row(0)[p], std::clamp(expected[which][p], 0.01, 0.99), 1e-15);
  }
}

TEST(Centers, ClosedFormCodeLength) {
  CenterCodebook book;
  book.width = book.height = 16;
  book.epsilon = 0.01;
  Rng rng(5);
  for (std::size_t c = 0; c < 1024; ++c) {
    const auto im = props::random_image(16, 16, rng);
    book.centers.insert(book.centers.end(), im.pixels.begin(), im.pixels.end());
  }
  book.mismatch.assign(1024 * 256, 0.01);
  book.rebuild_packed();
  const BinaryImage target{{book.center(77).begin(), book.center(77).end()}, 16, 16, 0};
  const auto enc = encode_with_centers(book, target);
  EXPECT_EQ(enc.center, 77u);
  EXPECT_EQ(enc.index_bits, 10u);
  EXPECT_NEAR(enc.bits, 10.0 + 256.0 * -std::log2(0.99), 1e-9);
  EXPECT_NEAR(enc.bits, 13.71, 0.005);
}

TEST(Centers, SingleCenterIndexIsFree) {
  const auto train = random_images(10, 3, 3, 6);
  const auto book = fit_centers(train, 1, 0.1, 1);
  const auto enc = encode_with_centers(book, train[0]);
  EXPECT_EQ(enc.index_bits, 0u);
  EXPECT_DOUBLE_EQ(enc.bits, enc.difference_bits);
  EXPECT_EQ(center_index_bits(2), 1u);
  EXPECT_EQ(center_index_bits(1000), 10u);
  EXPECT_EQ(center_index_bits(1024), 10u);
  EXPECT_EQ(center_index_bits(1025), 11u);
}

TEST(Centers, TiesGoToLowestIndex) {
  CenterCodebook book;
  book.width = 4;
  book.height = 1;
  book.centers = {1, 1, 0, 0, 0, 0, 1, 1, 1, 1, 0, 0};
  book.mismatch.assign(12, 0.1);
  book.rebuild_packed();
  EXPECT_EQ(nearest_center(book, img({0, 1, 1, 0}, 4, 1)), 0u);  // distance 2 to all three
  EXPECT_EQ(nearest_center(book, img({0, 0, 1, 1}, 4, 1)), 1u);
}

TEST(Centers, HammingMatchesNaiveCount) {
  Rng rng(7);
  for (std::size_t n : {1u, 63u, 64u, 65u, 784u}) {
    const auto a = props::random_image(n, 1, rng), b = props::random_image(n, 1, rng);
    PackedImages pa(n), pb(n);
    pa.push(a.pixels);
    pb.push(b.pixels);
    std::size_t naive = 0;
    for (std::size_t i = 0; i < n; ++i) naive += a.pixels[i] != b.pixels[i];
    EXPECT_EQ(hamming(pa.row(0), pb.row(0)), naive);
  }
}

TEST(CrossValidation, SinglePointAndDegenerateEpsilon) {
  const auto train = random_images(100, 4, 4, 8);
  const std::vector<std::size_t> n_grid{8};
  const std::vector<double> half{0.5};
  const auto r = crossvalidate_epsilon(train, n_grid, half, 1);
  EXPECT_EQ(r.best_n_centers, 8u);
  EXPECT_EQ(r.best_epsilon, 0.5);
  EXPECT_NEAR(r.best_bits, 3.0 + 16.0, 1e-12);
}

TEST(CrossValidation, DeterministicAndPrefersStructure) {
  // Two prototypes with light noise: more centers than prototypes gains little, tiny epsilon overfits.
  Rng rng(9);
  std::vector<BinaryImage> train;
  const std::vector<std::uint8_t> a{1, 1, 1, 0, 0, 0, 1, 1, 1}, b{0, 1, 0, 1, 1, 1, 0, 1, 0};
  for (int i = 0; i < 300; ++i) {
    auto im = img(i % 2 ? a : b, 3, 3);
    for (auto& px : im.pixels)
      if (bernoulli(rng, 0.05)) px ^= 1;
    train.push_back(im);
  }
  const std::vector<std::size_t> n_grid{2, 4, 64};
  const std::vector<double> eps_grid{0.2, 0.05, 1e-4};
  const auto r1 = crossvalidate_epsilon(train, n_grid, eps_grid, 3);
  const auto r2 = crossvalidate_epsilon(train, n_grid, eps_grid, 3);
  EXPECT_EQ(r1.best_n_centers, r2.best_n_centers);
  EXPECT_EQ(r1.best_epsilon, r2.best_epsilon);
  EXPECT_EQ(r1.best_bits, r2.best_bits);
  EXPECT_NE(r1.best_epsilon, 1e-4);
  EXPECT_NE(r1.best_n_centers, 64u);
}

TEST(Context, AllZeroTraining) {
  const std::vector<BinaryImage> zeros(2, img(std::vector<std::uint8_t>(12, 0), 4, 3));
  const auto t = fit_context(zeros, 0.01);
  EXPECT_DOUBLE_EQ(t.p[0], 0.01);
  for (std::size_t c = 1; c < kContextCount; ++c) EXPECT_DOUBLE_EQ(t.p[c], 0.5);
}

TEST(Context, TwoByTwoHandEnumeration) {
  // [1 0; 0 1]: (0,0) sees nothing -> ctx 0, outcome 1; (0,1) sees its left
  // neighbour -> ctx 1, outcome 0; (1,0) sees above -> bit 4, ctx 16, outcome 0;
  // (1,1) sees above-left -> bit 3, ctx 8, outcome 1.
  const std::vector<BinaryImage> train{img({1, 0, 0, 1}, 2, 2)};
  const double eps = 0.001;
  const auto t = fit_context(train, eps);
  EXPECT_DOUBLE_EQ(t.p[0], 1.0 - eps);
  EXPECT_DOUBLE_EQ(t.p[1], eps);
  EXPECT_DOUBLE_EQ(t.p[16], eps);
  EXPECT_DOUBLE_EQ(t.p[8], 1.0 - eps);
  std::size_t half = 0;
  for (double p : t.p) half += p == 0.5;
  EXPECT_EQ(half, kContextCount - 4);
  const auto enc = encode_with_context(t, train[0]);
  EXPECT_NEAR(enc.bits, -4.0 * std::log2(1.0 - eps), 1e-12);
  const auto other = encode_with_context(t, img({0, 0, 0, 0}, 2, 2));
  // ctx 0 with outcome 0 costs -log2(eps); the other three pixels land in ctx 0 too.
  EXPECT_NEAR(other.bits, -4.0 * std::log2(eps), 1e-12);
}

TEST(Context, TemplateIsCausal) {
  for (const auto& off : kContextTemplate) EXPECT_TRUE(off.dy < 0 || (off.dy == 0 && off.dx < 0));
}

TEST(Context, UniformTableAndShapeCheck) {
  ContextTable t;
  t.width = 5;
  t.height = 5;
  t.p.fill(0.5);
  Rng rng(10);
  EXPECT_DOUBLE_EQ(encode_with_context(t, props::random_image(5, 5, rng)).bits, 25.0);
  EXPECT_EQ(code_of([&] { encode_with_context(t, props::random_image(4, 5, rng)); }), ErrorCode::ShapeMismatch);
}

TEST(Serialization, BaselinesRoundTrip) {
  const auto train = random_images(30, 4, 4, 11);
  const auto c = fit_constant_p(train);
  EXPECT_EQ(serialize(deserialize_constant(serialize(c))), serialize(c));
  const auto p = fit_pixel_p(train);
  EXPECT_EQ(serialize(deserialize_pixel(serialize(p))), serialize(p));
  const auto b = fit_centers(train, 5, 0.02, 1);
  const auto b2 = deserialize_centers(serialize(b));
  EXPECT_EQ(serialize(b2), serialize(b));
  EXPECT_EQ(nearest_center(b2, train[3]), nearest_center(b, train[3]));
  const auto t = fit_context(train);
  EXPECT_EQ(serialize(deserialize_context(serialize(t))), serialize(t));
  auto bytes = serialize(p);
  bytes.pop_back();
  EXPECT_THROW(deserialize_pixel(bytes), Error);
  EXPECT_THROW(deserialize_context(serialize(p)), Error);
}

TEST(MnistBaselines, ReferenceBands) {
  const auto dir = test_support::data_dir();
  if (!mnist_available(dir)) GTEST_SKIP() << "MNIST not found under " << dir;
  const auto data = load_mnist(dir);
  const auto& test = data.test.images;
  auto mean_of = [&](auto&& bits) {
    double s = 0;
    for (const auto& im : test) s += bits(im);
    return s / static_cast<double>(test.size());
  };
  const auto c = fit_constant_p(data.train.images);
  EXPECT_NEAR(mean_of([&](const auto& im) { return constant_bits(c, im); }), 441.8, 3.0);
  const auto p = fit_pixel_p(data.train.images);
  EXPECT_NEAR(mean_of([&](const auto& im) { return pixel_bits(p, im); }), 297.0, 3.0);
  const auto t = fit_context(data.train.images);
  EXPECT_NEAR(mean_of([&](const auto& im) { return encode_with_context(t, im).bits; }), 119.0, 12.0);
}
