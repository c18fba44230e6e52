#pragma once

// Geometric augmentation: rotation about the image center, zoom, then a crop window.
// Labels are mapped analytically by the same affine map used to resample pixels:
//
//   q = R(rotation) (p - c) / zoom + c - crop_origin,     c = (W/2, H/2)
//
// zoom < 1 magnifies (a smaller source region fills the crop).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rtgrasp/cornell.hpp"
#include "rtgrasp/errors.hpp"
#include "rtgrasp/geometry.hpp"
#include "rtgrasp/image.hpp"
#include "rtgrasp/rng.hpp"

namespace rtgrasp {

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
};

struct AugmentationParams {
  double rotation = 0.0;
  double zoom = 1.0;
  Vec2 crop_origin{};
  int crop_width = 0;
  int crop_height = 0;

  bool operator==(const AugmentationParams&) const = default;
};

struct AugmentationConfig {
  int per_image_count = 86;
  Interval rotation_range{-kHalfPi, kHalfPi};
  Interval zoom_range{0.8, 1.1};
  // Square crop side; nullopt keeps the full frame.
  std::optional<int> output_size = 224;
  std::uint64_t seed = 0;
  int max_resample = 16;

  void validate() const {
    if (per_image_count < 1) throw ValidationError("augmentation: per_image_count must be >= 1");
    if (output_size && *output_size <= 0) throw ValidationError("augmentation: output_size must be positive");
    if (rotation_range.hi < rotation_range.lo || zoom_range.hi < zoom_range.lo) {
      throw ValidationError("augmentation: empty range");
    }
    if (!(zoom_range.lo > 0.0) || zoom_range.hi > 2.0) throw ValidationError("augmentation: zoom must lie in (0, 2]");
    if (max_resample < 1) throw ValidationError("augmentation: max_resample must be >= 1");
  }

  static AugmentationConfig identity() {
    AugmentationConfig c;
    c.per_image_count = 1;
    c.rotation_range = {0.0, 0.0};
    c.zoom_range = {1.0, 1.0};
    c.output_size = std::nullopt;
    return c;
  }
};

inline AugmentationParams identity_params(ImageSize src) {
  return {0.0, 1.0, {0.0, 0.0}, src.width, src.height};
}

inline Affine2 augmentation_transform(const AugmentationParams& p, ImageSize src) {
  const double cs = std::cos(p.rotation) / p.zoom;
  const double sn = std::sin(p.rotation) / p.zoom;
  const Vec2 c{src.width / 2.0, src.height / 2.0};
  Affine2 t;
  t.a11 = cs;
  t.a12 = -sn;
  t.a21 = sn;
  t.a22 = cs;
  t.b1 = c.x - (t.a11 * c.x + t.a12 * c.y) - p.crop_origin.x;
  t.b2 = c.y - (t.a21 * c.x + t.a22 * c.y) - p.crop_origin.y;
  return t;
}

inline void validate_params(const AugmentationParams& p, ImageSize src) {
  if (!(p.zoom > 0.0 && p.zoom <= 2.0)) throw ValidationError("augmentation: zoom must lie in (0, 2]");
  if (p.crop_width <= 0 || p.crop_height <= 0) throw ValidationError("augmentation: empty crop");
  if (p.crop_origin.x < 0 || p.crop_origin.y < 0 || p.crop_origin.x + p.crop_width > src.width ||
      p.crop_origin.y + p.crop_height > src.height) {
    throw ValidationError("augmentation: crop window exceeds the image");
  }
}

struct TransformedRects {
  std::vector<GraspRectangle> rects;
  std::vector<std::size_t> source_index;  // position of each kept rect in the input

  bool empty() const { return rects.empty(); }
};

// Maps every vertex through the augmentation; drops rectangles whose center leaves the crop.
inline TransformedRects transform_rects(std::span<const GraspRectangle> rects, const AugmentationParams& p, ImageSize src) {
  validate_params(p, src);
  const Affine2 t = augmentation_transform(p, src);
  TransformedRects out;
  for (std::size_t i = 0; i < rects.size(); ++i) {
    GraspRectangle r = rects[i];
    for (Vec2& v : r.vertices) v = t.apply(v);
    const Vec2 c = r.center();
    if (c.x < 0.0 || c.y < 0.0 || c.x > p.crop_width || c.y > p.crop_height) continue;
    out.rects.push_back(r);
    out.source_index.push_back(i);
  }
  return out;
}

inline AugmentationParams sample_params(const AugmentationConfig& cfg, ImageSize src, Rng& rng) {
  AugmentationParams p;
  p.rotation = rng.uniform(cfg.rotation_range.lo, cfg.rotation_range.hi);
  p.zoom = cfg.zoom_range.hi > cfg.zoom_range.lo ? cfg.zoom_range.lo + (cfg.zoom_range.hi - cfg.zoom_range.lo) * rng.uniform01()
                                                 : cfg.zoom_range.lo;
  if (cfg.output_size) {
    const int side = std::min({*cfg.output_size, src.width, src.height});
    p.crop_width = p.crop_height = side;
    p.crop_origin = {static_cast<double>(rng.below(static_cast<std::uint64_t>(src.width - side) + 1)),
                     static_cast<double>(rng.below(static_cast<std::uint64_t>(src.height - side) + 1))};
  } else {
    p.crop_width = src.width;
    p.crop_height = src.height;
  }
  return p;
}

template <typename T>
Image<T> augment_image(const Image<T>& src, const AugmentationParams& p) {
  const ImageSize size{src.width, src.height};
  validate_params(p, size);
  return warp_affine(src, augmentation_transform(p, size), p.crop_width, p.crop_height);
}

struct PlannedVariant {
  std::size_t sample_index = 0;
  int variant_index = 0;
  AugmentationParams params;
  std::vector<GraspRectangle> rects;  // all surviving positives, in output pixel coordinates
  std::size_t target_index = 0;       // the one grasp the answer text carries
};

struct ExpansionPlan {
  std::vector<PlannedVariant> variants;
  std::size_t planned = 0;
  std::size_t dropped = 0;  // variants whose every resample lost all labels
};

// Deterministic per (seed, image_id, variant index): an image's plan does not depend on
// which other images are in the corpus.
inline std::optional<PlannedVariant> plan_variant(const CornellSample& s, std::size_t sample_index, int variant,
                                                  const AugmentationConfig& cfg) {
  const ImageSize src{s.width, s.height};
  Rng rng(cfg.seed, mix64(stable_hash(s.image_id)) ^ static_cast<std::uint64_t>(variant));
  const bool identity_only = cfg.rotation_range.lo == 0.0 && cfg.rotation_range.hi == 0.0 &&
                             cfg.zoom_range.lo == 1.0 && cfg.zoom_range.hi == 1.0 && !cfg.output_size;
  for (int attempt = 0; attempt < cfg.max_resample; ++attempt) {
    const AugmentationParams p = identity_only ? identity_params(src) : sample_params(cfg, src, rng);
    TransformedRects t = transform_rects(s.positive_rects, p, src);
    if (t.empty()) continue;
    PlannedVariant v;
    v.sample_index = sample_index;
    v.variant_index = variant;
    v.params = p;
    v.rects = std::move(t.rects);
    v.target_index = static_cast<std::size_t>(rng.below(v.rects.size()));
    return v;
  }
  return std::nullopt;
}

inline ExpansionPlan expand_dataset(std::span<const CornellSample> samples, const AugmentationConfig& cfg) {
  cfg.validate();
  if (samples.empty()) throw ContractError("expand_dataset: no samples");
  ExpansionPlan plan;
  plan.planned = samples.size() * static_cast<std::size_t>(cfg.per_image_count);
  plan.variants.reserve(plan.planned);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    for (int v = 0; v < cfg.per_image_count; ++v) {
      if (auto pv = plan_variant(samples[i], i, v, cfg)) {
        plan.variants.push_back(std::move(*pv));
      } else {
        ++plan.dropped;
      }
    }
  }
  return plan;
}

}  // namespace rtgrasp
