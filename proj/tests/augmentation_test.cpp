#include <gtest/gtest.h>

#include <filesystem>

#include "augmentation_checks.hpp"
#include "rtgrasp/augmentation.hpp"

using namespace rtgrasp;

namespace {

GraspRectangle box(double x0, double y0, double x1, double y1) {
  return GraspRectangle({Vec2{x0, y0}, Vec2{x1, y0}, Vec2{x1, y1}, Vec2{x0, y1}});
}

CornellSample synthetic_sample(const std::string& id, int w, int h, Rng& rng) {
  CornellSample s;
  s.image_id = id;
  s.width = w;
  s.height = h;
  const int n = 1 + static_cast<int>(rng.below(4));
  for (int i = 0; i < n; ++i) {
    s.positive_rects.push_back(make_rectangle({rng.uniform(0.3 * w, 0.7 * w), rng.uniform(0.3 * h, 0.7 * h)},
                                              rng.uniform(-kHalfPi, kHalfPi), rng.uniform(20, 60), rng.uniform(10, 30)));
  }
  return s;
}

}  // namespace

TEST(TransformRects, IdentityIsExact) {
  const std::vector<GraspRectangle> rects = {box(100.3, 100.7, 300.1, 200.9), make_rectangle({50, 60}, 0.7, 30, 12)};
  const TransformedRects t = transform_rects(rects, identity_params({400, 400}), {400, 400});
  ASSERT_EQ(t.rects.size(), 2u);
  EXPECT_EQ(t.rects[0], rects[0]);
  EXPECT_EQ(t.rects[1], rects[1]);
}

TEST(TransformRects, QuarterTurnAboutCenter) {
  AugmentationParams p = identity_params({400, 400});
  p.rotation = kHalfPi;
  const GraspRectangle r = box(100, 100, 300, 200);
  const TransformedRects t = transform_rects(std::span(&r, 1), p, {400, 400});
  ASSERT_EQ(t.rects.size(), 1u);
  // (x, y) - c = (-100, -100) -> (100, -100) -> (300, 100)
  EXPECT_NEAR(t.rects[0].vertices[0].x, 300, 1e-9);
  EXPECT_NEAR(t.rects[0].vertices[0].y, 100, 1e-9);
  EXPECT_NEAR(angle_difference(t.rects[0].theta(), r.theta() + kHalfPi), 0.0, 1e-12);
  EXPECT_GE(t.rects[0].theta(), -kHalfPi);
  EXPECT_LT(t.rects[0].theta(), kHalfPi);
}

TEST(TransformRects, ZoomScalesDimensions) {
  AugmentationParams p{0.0, 0.5, {100, 100}, 200, 200};
  const GraspRectangle r = make_rectangle({200, 200}, 0.4, 30, 12);
  const TransformedRects t = transform_rects(std::span(&r, 1), p, {400, 400});
  ASSERT_EQ(t.rects.size(), 1u);
  EXPECT_NEAR(t.rects[0].opening_width(), 60, 1e-9);
  EXPECT_NEAR(t.rects[0].plate_length(), 24, 1e-9);
  EXPECT_NEAR(t.rects[0].center().x, 100, 1e-9);
}

TEST(TransformRects, DropsCentersOutsideCrop) {
  AugmentationParams p{0.0, 1.0, {0, 0}, 150, 150};
  const std::vector<GraspRectangle> rects = {box(10, 10, 40, 30), box(200, 200, 240, 220)};
  const TransformedRects t = transform_rects(rects, p, {400, 400});
  ASSERT_EQ(t.rects.size(), 1u);
  EXPECT_EQ(t.source_index[0], 0u);
  p.crop_origin = {300, 300};
  EXPECT_THROW(transform_rects(rects, p, {400, 400}), ValidationError);
}

TEST(SampleParams, DegenerateRangesGiveIdentity) {
  Rng rng(1);
  AugmentationConfig cfg = AugmentationConfig::identity();
  EXPECT_EQ(sample_params(cfg, {640, 480}, rng), identity_params({640, 480}));
}

TEST(SampleParams, DeterministicStreamWithinRanges) {
  AugmentationConfig cfg;
  Rng a(77), b(77);
  double rot_lo = 10, rot_hi = -10, zoom_lo = 10, zoom_hi = -10;
  for (int i = 0; i < 10000; ++i) {
    const AugmentationParams pa = sample_params(cfg, {640, 480}, a);
    ASSERT_EQ(pa, sample_params(cfg, {640, 480}, b));
    rot_lo = std::min(rot_lo, pa.rotation);
    rot_hi = std::max(rot_hi, pa.rotation);
    zoom_lo = std::min(zoom_lo, pa.zoom);
    zoom_hi = std::max(zoom_hi, pa.zoom);
    ASSERT_EQ(pa.crop_width, 224);
    ASSERT_GE(pa.crop_origin.x, 0);
    ASSERT_LE(pa.crop_origin.x + 224, 640);
    ASSERT_LE(pa.crop_origin.y + 224, 480);
  }
  EXPECT_GE(rot_lo, -kHalfPi);
  EXPECT_LT(rot_hi, kHalfPi);
  EXPECT_LT(rot_lo, -kHalfPi + 0.01);
  EXPECT_GT(rot_hi, kHalfPi - 0.01);
  EXPECT_GE(zoom_lo, 0.8);
  EXPECT_LE(zoom_hi, 1.1);
}

TEST(AugmentationConfig, Validation) {
  AugmentationConfig c;
  c.per_image_count = 0;
  EXPECT_THROW(c.validate(), ValidationError);
  c = {};
  c.zoom_range = {0.0, 1.0};
  EXPECT_THROW(c.validate(), ValidationError);
  c = {};
  c.zoom_range = {1.0, 2.5};
  EXPECT_THROW(c.validate(), ValidationError);
}

TEST(ExpandDataset, PlannedCountMatchesMultiplier) {
  Rng rng(3);
  std::vector<CornellSample> samples;
  for (int i = 0; i < 885; ++i) samples.push_back(synthetic_sample("pcd" + std::to_string(1000 + i), 640, 480, rng));
  AugmentationConfig cfg;
  cfg.seed = 5;
  const ExpansionPlan plan = expand_dataset(samples, cfg);
  EXPECT_EQ(plan.planned, 76110u);
  EXPECT_EQ(plan.variants.size() + plan.dropped, 76110u);
  for (const auto& v : plan.variants) {
    ASSERT_LT(v.target_index, v.rects.size());
    ASSERT_EQ(v.params.crop_width, 224);
  }
}

TEST(ExpandDataset, IdentityReproducesSource) {
  Rng rng(4);
  std::vector<CornellSample> samples = {synthetic_sample("pcd0100", 320, 240, rng), synthetic_sample("pcd0101", 320, 240, rng)};
  const ExpansionPlan plan = expand_dataset(samples, AugmentationConfig::identity());
  ASSERT_EQ(plan.variants.size(), 2u);
  for (const auto& v : plan.variants) EXPECT_EQ(v.rects, samples[v.sample_index].positive_rects);
}

TEST(ExpandDataset, DeterministicPerImage) {
  Rng rng(8);
  std::vector<CornellSample> samples;
  for (int i = 0; i < 10; ++i) samples.push_back(synthetic_sample("pcd" + std::to_string(200 + i), 640, 480, rng));
  AugmentationConfig cfg;
  cfg.per_image_count = 4;
  cfg.seed = 99;
  const ExpansionPlan a = expand_dataset(samples, cfg);
  const ExpansionPlan b = expand_dataset(samples, cfg);
  ASSERT_EQ(a.variants.size(), b.variants.size());
  for (std::size_t i = 0; i < a.variants.size(); ++i) {
    EXPECT_EQ(a.variants[i].params, b.variants[i].params);
    EXPECT_EQ(a.variants[i].target_index, b.variants[i].target_index);
  }
  // Dropping other images does not change this image's plan.
  const ExpansionPlan only_last = expand_dataset(std::span(samples).last(1), cfg);
  EXPECT_EQ(only_last.variants[0].params, a.variants[a.variants.size() - 4].params);
  EXPECT_EQ(expand_dataset(samples, cfg).planned, 40u);
}

TEST(AugmentImage, IdentityCopiesPixels) {
  Image8 img(5, 4, 3);
  for (std::size_t i = 0; i < img.data.size(); ++i) img.data[i] = static_cast<std::uint8_t>(i * 7);
  const Image8 out = augment_image(img, identity_params({5, 4}));
  EXPECT_EQ(out.data, img.data);
}

TEST(AugmentImage, LabelsFollowPixels) {
  Rng rng(10);
  AugmentationConfig cfg;
  int checked = 0;
  while (checked < 60) {
    const ImageSize src{320, 240};
    const GraspRectangle r = make_rectangle({rng.uniform(80, 240), rng.uniform(60, 180)}, rng.uniform(-kHalfPi, kHalfPi),
                                            rng.uniform(15, 50), rng.uniform(8, 25));
    const AugmentationParams p = sample_params(cfg, src, rng);
    const auto dev = oracle::label_image_center_deviation(r, p, src);
    if (!dev) continue;
    ASSERT_LE(*dev, 0.5);
    ++checked;
  }
}

TEST(AugmentImage, MetricAcceptsTransformedLabels) {
  Rng rng(12);
  AugmentationConfig cfg;
  for (int i = 0; i < 300; ++i) {
    const CornellSample s = synthetic_sample("pcd" + std::to_string(i), 640, 480, rng);
    auto v = plan_variant(s, 0, i, cfg);
    if (!v) continue;
    for (const auto& r : v->rects) {
      ASSERT_TRUE(r.is_rectangular());
      const GraspPose p = rect_to_pose(r, v->params.crop_width, v->params.crop_height);
      ASSERT_TRUE(p.valid());
      ASSERT_TRUE(rectangle_metric(p, std::span(&r, 1), {}, v->params.crop_width, v->params.crop_height).success);
    }
  }
}

TEST(Png, RoundTripAndCorruptInput) {
  Image8 img(7, 3, 3);
  for (std::size_t i = 0; i < img.data.size(); ++i) img.data[i] = static_cast<std::uint8_t>(i * 13);
  const auto bytes = encode_png(img);
  EXPECT_EQ(encode_png(img), bytes);
  const Image8 back = decode_png(bytes);
  EXPECT_EQ(back.width, 7);
  EXPECT_EQ(back.channels, 3);
  EXPECT_EQ(back.data, img.data);
  EXPECT_EQ(png_size(bytes).height, 3);
  auto truncated = bytes;
  truncated.resize(bytes.size() / 2);
  EXPECT_THROW(decode_png(truncated), IngestError);
}
