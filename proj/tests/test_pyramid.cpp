#include <gtest/gtest.h>

#include <cmath>

#include "bitar/pyramid.hpp"
#include "generators.hpp"

using namespace bitar;

namespace {

const QuantizerConfig kBsq16{QuantizerKind::BSQ, 16, 1.0};

bool bit_identical(const FeatureMap& a, const FeatureMap& b) {
  return a.same_shape(b) && std::equal(a.values().begin(), a.values().end(), b.values().begin());
}

double max_abs_diff(const FeatureMap& a, const FeatureMap& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.values()[i] - b.values()[i]));
  return m;
}

}  // namespace

TEST(Encode, ConstantPositiveFieldGivesAllOnesFirstScale) {
  const auto schedule = square_schedule(7);
  FeatureMap f(16, 16, 16, 0.8);
  const auto enc = encode(f, schedule, kBsq16);
  EXPECT_EQ(enc.pyramid.residuals[0].popcount(), 16u);
  const auto f1 = reconstruct(enc.pyramid, 1);
  for (double v : f1.values()) EXPECT_DOUBLE_EQ(v, 0.25);
}

TEST(Encode, SingleScaleIsPlainQuantization) {
  Rng rng(1);
  const auto f = gen::random_map(rng, 4, 6, 16);
  const auto schedule = custom_schedule({{4, 6}});
  const auto enc = encode(f, schedule, kBsq16);
  EXPECT_TRUE(enc.inputs.empty());
  ASSERT_EQ(enc.pyramid.size(), 1);
  EXPECT_EQ(enc.pyramid.residuals[0], quantize_map(f, kBsq16));
  EXPECT_TRUE(transformer_inputs(enc.pyramid).empty());
}

TEST(Encode, ErrorContractsOnSmoothInput) {
  const auto schedule = square_schedule(7);
  const auto f = gen::smooth_map(5);
  const auto curve = error_curve(f, encode(f, schedule, kBsq16).pyramid);
  ASSERT_EQ(curve.size(), 7u);
  EXPECT_LT(curve.back(), curve.front());
  int non_increasing = 0;
  for (std::size_t k = 1; k < curve.size(); ++k) non_increasing += curve[k] <= curve[k - 1];
  EXPECT_GT(non_increasing, 3);
}

TEST(Encode, RejectsShapeMismatch) {
  const auto schedule = square_schedule(7);
  EXPECT_THROW(encode(FeatureMap(8, 16, 16), schedule, kBsq16), ContractError);
  EXPECT_THROW(encode(FeatureMap(16, 16, 8), schedule, kBsq16), ContractError);
  FeatureMap bad(16, 16, 16);
  bad.at(3, 3, 3) = INFINITY;
  EXPECT_THROW(encode(bad, schedule, kBsq16), InvalidInput);
}

TEST(Reconstruct, FirstScaleIsUpsampledFirstResidual) {
  const auto f = gen::smooth_map(2);
  const auto p = encode(f, square_schedule(7), kBsq16).pyramid;
  const auto direct = resize_bilinear(dequantize_map(p.residuals[0], kBsq16), 16, 16);
  EXPECT_TRUE(bit_identical(reconstruct(p, 1), direct));
}

TEST(Reconstruct, DeterministicAndAdditive) {
  const auto f = gen::smooth_map(3);
  const auto p = encode(f, square_schedule(7), kBsq16).pyramid;
  EXPECT_TRUE(bit_identical(reconstruct(p), reconstruct(p)));
  for (int k = 2; k <= p.size(); ++k) {
    const auto step = resize_bilinear(dequantize_map(p.residuals[k - 1], kBsq16), 16, 16);
    EXPECT_LE(max_abs_diff(reconstruct(p, k), reconstruct(p, k - 1) + step), 1e-12);
  }
}

TEST(Reconstruct, RejectsOutOfRangeScale) {
  const auto p = encode(gen::smooth_map(4), square_schedule(7), kBsq16).pyramid;
  EXPECT_THROW(reconstruct(p, 0), RangeError);
  EXPECT_THROW(reconstruct(p, 8), RangeError);
}

TEST(TransformerInputs, ShapesFollowTheNextScale) {
  const auto& schedule = schedule_for(1.0);
  Rng rng(5);
  TokenPyramid p;
  p.quantizer = {QuantizerKind::BSQ, 4, 1.0};
  p.schedule = schedule;
  for (const auto& s : schedule.scales) p.residuals.push_back(gen::random_bits(rng, s.h, s.w, 4));
  const auto inputs = transformer_inputs(p);
  ASSERT_EQ(inputs.size(), 12u);
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    EXPECT_EQ(inputs[k].height(), schedule[static_cast<int>(k) + 1].h);
    EXPECT_EQ(inputs[k].width(), schedule[static_cast<int>(k) + 1].w);
    EXPECT_EQ(inputs[k].depth(), 4);
  }
}

TEST(TransformerInputs, AgreeWithEncoderQueue) {
  Rng rng(6);
  for (int trial = 0; trial < 20; ++trial) {
    const auto schedule = gen::random_schedule(rng, 6, 9);
    const auto s = schedule.final_scale();
    const auto f = gen::random_map(rng, s.h, s.w, 8);
    const QuantizerConfig cfg{QuantizerKind::LFQ, 8, 1.0};
    const auto enc = encode(f, schedule, cfg);
    const auto inputs = transformer_inputs(enc.pyramid);
    ASSERT_EQ(inputs.size(), enc.inputs.size());
    for (std::size_t k = 0; k < inputs.size(); ++k) EXPECT_LE(max_abs_diff(inputs[k], enc.inputs[k]), 1e-12);
  }
}

TEST(PyramidProperty, EncodingIsDeterministic) {
  Rng rng(7);
  for (int trial = 0; trial < 10; ++trial) {
    const auto schedule = gen::random_schedule(rng);
    const auto s = schedule.final_scale();
    const auto f = gen::random_map(rng, s.h, s.w, 5);
    const QuantizerConfig cfg{QuantizerKind::BSQ, 5, 1.0};
    EXPECT_EQ(encode(f, schedule, cfg).pyramid, encode(f, schedule, cfg).pyramid);
  }
}

TEST(PyramidProperty, UpsampledResidualBoundedByAmplitude) {
  Rng rng(8);
  for (int trial = 0; trial < 10; ++trial) {
    const auto schedule = gen::random_schedule(rng);
    const auto s = schedule.final_scale();
    const QuantizerConfig cfg{QuantizerKind::BSQ, 9, 1.0};
    const auto p = encode(gen::random_map(rng, s.h, s.w, 9), schedule, cfg).pyramid;
    ResidualAccumulator acc(s, cfg);
    for (const auto& r : p.residuals)
      for (double v : acc.upsampled(r).values()) EXPECT_LE(std::abs(v), cfg.amplitude() + 1e-15);
  }
}

TEST(PyramidProperty, TotalBitsMatchesScheduleArea) {
  Rng rng(9);
  for (int trial = 0; trial < 10; ++trial) {
    const auto schedule = gen::random_schedule(rng);
    const auto s = schedule.final_scale();
    const int d = 1 + static_cast<int>(rng.below(20));
    const QuantizerConfig cfg{QuantizerKind::BSQ, d, 1.0};
    const auto p = encode(gen::random_map(rng, s.h, s.w, d), schedule, cfg).pyramid;
    EXPECT_EQ(p.total_bits(), schedule.token_count() * static_cast<std::size_t>(d));
  }
}

TEST(PyramidProperty, ResidualsMatchTheirScheduleEntries) {
  const auto p = encode(gen::smooth_map(10), square_schedule(7), kBsq16).pyramid;
  EXPECT_NO_THROW(p.validate());
  auto broken = p;
  broken.residuals.pop_back();
  EXPECT_THROW(broken.validate(), ContractError);
  broken = p;
  broken.residuals[2] = BitResidual(3, 3, 16);
  EXPECT_THROW(broken.validate(), ContractError);
}
