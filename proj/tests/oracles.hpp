#pragma once

// Independent reference computations used only by tests. Nothing here calls the
// polygon clipping path in rtgrasp/geometry.hpp.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>

#include "rtgrasp/geometry.hpp"
#include "rtgrasp/image.hpp"

namespace rtgrasp::oracle {

// xoshiro256**: fast generator for Monte-Carlo sampling.
class FastRng {
 public:
  explicit FastRng(std::uint64_t seed) {
    for (auto& s : state_) {
      seed += 0x9e3779b97f4a7c15ULL;
      std::uint64_t z = seed;
      z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
      z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
      s = z ^ (z >> 31);
    }
  }
  std::uint64_t next() {
    const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
  }
  double uniform01() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

 private:
  static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }
  std::array<std::uint64_t, 4> state_{};
};

// Half-plane representation of a convex quadrilateral, orientation-agnostic.
struct QuadTest {
  std::array<double, 4> ax, ay, bx, by;
  double sign = 1.0;

  explicit QuadTest(const GraspRectangle& r) {
    double area = 0.0;
    for (int i = 0; i < 4; ++i) {
      const Vec2 a = r.vertices[i];
      const Vec2 b = r.vertices[(i + 1) % 4];
      ax[i] = a.x;
      ay[i] = a.y;
      bx[i] = b.x - a.x;
      by[i] = b.y - a.y;
      area += a.x * b.y - a.y * b.x;
    }
    sign = area >= 0 ? 1.0 : -1.0;
  }
  bool contains(double x, double y) const {
    for (int i = 0; i < 4; ++i) {
      if (sign * (bx[i] * (y - ay[i]) - by[i] * (x - ax[i])) < 0) return false;
    }
    return true;
  }
};

// Monte-Carlo IoU estimate over the joint bounding box.
inline double monte_carlo_iou(const GraspRectangle& a, const GraspRectangle& b, std::size_t samples,
                              std::uint64_t seed) {
  double lo_x = a.vertices[0].x, hi_x = lo_x, lo_y = a.vertices[0].y, hi_y = lo_y;
  for (const auto* r : {&a, &b}) {
    for (Vec2 v : r->vertices) {
      lo_x = std::min(lo_x, v.x);
      hi_x = std::max(hi_x, v.x);
      lo_y = std::min(lo_y, v.y);
      hi_y = std::max(hi_y, v.y);
    }
  }
  const QuadTest qa(a), qb(b);
  FastRng rng(seed);
  std::size_t in_union = 0, in_both = 0;
  for (std::size_t i = 0; i < samples; ++i) {
    const double x = rng.uniform(lo_x, hi_x);
    const double y = rng.uniform(lo_y, hi_y);
    const bool ia = qa.contains(x, y);
    const bool ib = qb.contains(x, y);
    in_union += (ia || ib);
    in_both += (ia && ib);
  }
  return in_union ? static_cast<double>(in_both) / static_cast<double>(in_union) : 0.0;
}

// Closing-axis angle from the plate edge normal, wrapped by explicit period search.
inline double brute_force_theta(const GraspRectangle& r) {
  const Vec2 plate = r.vertices[1] - r.vertices[0];
  const Vec2 to_far = r.vertices[2] - r.vertices[1];
  Vec2 normal{-plate.y, plate.x};
  if (normal.x * to_far.x + normal.y * to_far.y < 0) normal = Vec2{plate.y, -plate.x};
  double t = std::atan2(normal.y, normal.x);
  while (t >= kHalfPi) t -= kPi;
  while (t < -kHalfPi) t += kPi;
  return t;
}

// Area-coverage raster of a rectangle: each pixel holds the fraction of its n x n
// sub-samples inside the rectangle.
inline Image<float> rasterize_rect(const GraspRectangle& r, int width, int height, int n = 4) {
  Image<float> img(width, height, 1, 0.0f);
  const QuadTest q(r);
  double lo_x = r.vertices[0].x, hi_x = lo_x, lo_y = r.vertices[0].y, hi_y = lo_y;
  for (Vec2 v : r.vertices) {
    lo_x = std::min(lo_x, v.x);
    hi_x = std::max(hi_x, v.x);
    lo_y = std::min(lo_y, v.y);
    hi_y = std::max(hi_y, v.y);
  }
  const int x0 = std::max(0, static_cast<int>(std::floor(lo_x))), x1 = std::min(width - 1, static_cast<int>(hi_x));
  const int y0 = std::max(0, static_cast<int>(std::floor(lo_y))), y1 = std::min(height - 1, static_cast<int>(hi_y));
  for (int y = y0; y <= y1; ++y) {
    for (int x = x0; x <= x1; ++x) {
      int hits = 0;
      for (int a = 0; a < n; ++a) {
        for (int b = 0; b < n; ++b) hits += q.contains(x + (a + 0.5) / n, y + (b + 0.5) / n);
      }
      img.at(x, y) = static_cast<float>(hits) / static_cast<float>(n * n);
    }
  }
  return img;
}

inline Vec2 intensity_centroid(const Image<float>& img) {
  double sx = 0, sy = 0, m = 0;
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      const double v = img.at(x, y);
      sx += v * (x + 0.5);
      sy += v * (y + 0.5);
      m += v;
    }
  }
  return m > 0 ? Vec2{sx / m, sy / m} : Vec2{-1, -1};
}

}  // namespace rtgrasp::oracle
