#pragma once

// Planar antipodal grasp geometry: normalized poses, oriented grasp rectangles,
// rotated-rectangle IoU and the rectangle metric used to score predictions.
//
// Conventions
//   * Pixel coordinates: x to the right, y downwards, origin at the top-left corner.
//   * A grasp rectangle stores 4 vertices v0..v3. Edges v0v1 and v2v3 are the jaw plates;
//     the closing axis runs from the midpoint of v0v1 to the midpoint of v2v3.
//     w = |v1 - v2| is the gripper opening, plate_len = |v0 - v1|.
//   * Angles are in radians and wrapped to the half-open interval [-pi/2, pi/2).

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numbers>
#include <optional>
#include <span>
#include <vector>

#include "rtgrasp/errors.hpp"

namespace rtgrasp {

inline constexpr double kPi = std::numbers::pi;
inline constexpr double kHalfPi = std::numbers::pi / 2.0;

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  friend constexpr Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
  friend constexpr Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
  friend constexpr Vec2 operator*(Vec2 a, double s) { return {a.x * s, a.y * s}; }
  friend constexpr Vec2 operator*(double s, Vec2 a) { return {a.x * s, a.y * s}; }
  friend constexpr Vec2 operator/(Vec2 a, double s) { return {a.x / s, a.y / s}; }
  friend constexpr bool operator==(Vec2 a, Vec2 b) = default;
};

constexpr double dot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }
constexpr double cross(Vec2 a, Vec2 b) { return a.x * b.y - a.y * b.x; }
inline double norm(Vec2 a) { return std::hypot(a.x, a.y); }
constexpr Vec2 midpoint(Vec2 a, Vec2 b) { return {(a.x + b.x) * 0.5, (a.y + b.y) * 0.5}; }

// Wraps any finite angle into [-pi/2, pi/2) using the pi-periodicity of antipodal grasps.
inline double wrap_angle(double theta) {
  double r = theta - kPi * std::floor((theta + kHalfPi) / kPi);
  if (r >= kHalfPi) r -= kPi;
  if (r < -kHalfPi) r += kPi;
  return r;
}

constexpr double deg_to_rad(double deg) { return deg * (kPi / 180.0); }
constexpr double rad_to_deg(double rad) { return rad * (180.0 / kPi); }

// Normalized grasp pose {x, y, theta}: x and y in [0, 1] relative to image width/height.
struct GraspPose {
  double x = 0.0;
  double y = 0.0;
  double theta = 0.0;

  friend bool operator==(const GraspPose&, const GraspPose&) = default;

  bool valid() const {
    return std::isfinite(x) && std::isfinite(y) && std::isfinite(theta) && x >= 0.0 && x <= 1.0 &&
           y >= 0.0 && y <= 1.0 && theta >= -kHalfPi && theta < kHalfPi;
  }
};

struct PixelPose {
  double px = 0.0;
  double py = 0.0;
  double theta = 0.0;
};

class GraspRectangle {
 public:
  std::array<Vec2, 4> vertices{};

  GraspRectangle() = default;
  explicit GraspRectangle(const std::array<Vec2, 4>& v) : vertices(v) {}

  Vec2 center() const {
    return {(vertices[0].x + vertices[1].x + vertices[2].x + vertices[3].x) / 4.0,
            (vertices[0].y + vertices[1].y + vertices[2].y + vertices[3].y) / 4.0};
  }
  double opening_width() const { return norm(vertices[1] - vertices[2]); }
  double plate_length() const { return norm(vertices[0] - vertices[1]); }

  Vec2 closing_axis() const {
    return midpoint(vertices[2], vertices[3]) - midpoint(vertices[0], vertices[1]);
  }
  double theta() const {
    const Vec2 axis = closing_axis();
    return wrap_angle(std::atan2(axis.y, axis.x));
  }

  // Signed shoelace area; positive for counter-clockwise order in a y-up frame.
  double signed_area() const {
    double a = 0.0;
    for (std::size_t i = 0; i < 4; ++i) a += cross(vertices[i], vertices[(i + 1) % 4]);
    return 0.5 * a;
  }

  bool has_zero_length_edge() const {
    for (std::size_t i = 0; i < 4; ++i) {
      if (!(norm(vertices[(i + 1) % 4] - vertices[i]) > 0.0)) return true;
    }
    return false;
  }

  bool finite() const {
    return std::all_of(vertices.begin(), vertices.end(),
                       [](Vec2 v) { return std::isfinite(v.x) && std::isfinite(v.y); });
  }

  // Opposite edges equal within `rel_tol` and adjacent edges perpendicular within `angle_tol` radians.
  bool is_rectangular(double rel_tol = 1e-6, double angle_tol = 1e-3) const {
    if (!finite() || has_zero_length_edge()) return false;
    std::array<Vec2, 4> e;
    for (std::size_t i = 0; i < 4; ++i) e[i] = vertices[(i + 1) % 4] - vertices[i];
    for (std::size_t i = 0; i < 2; ++i) {
      const double a = norm(e[i]);
      const double b = norm(e[i + 2]);
      if (std::abs(a - b) > rel_tol * std::max(a, b)) return false;
    }
    for (std::size_t i = 0; i < 4; ++i) {
      const Vec2 a = e[i];
      const Vec2 b = e[(i + 1) % 4];
      const double off = std::abs(std::atan2(std::abs(cross(a, b)), dot(a, b)) - kHalfPi);
      if (off > angle_tol) return false;
    }
    return true;
  }

  friend bool operator==(const GraspRectangle&, const GraspRectangle&) = default;
};

struct MetricThresholds {
  double min_iou = 0.25;
  double max_angle_deg = 30.0;

  bool valid() const { return min_iou > 0.0 && min_iou < 1.0 && max_angle_deg > 0.0 && max_angle_deg <= 90.0; }
};

struct GraspEvalOutcome {
  bool success = false;
  double best_iou = 0.0;
  double best_angle_diff_deg = 0.0;
  std::optional<std::size_t> matched_gt_index;
};

inline GraspPose normalize_pose(double px, double py, double theta, double img_w, double img_h) {
  if (!(img_w > 0.0) || !(img_h > 0.0)) throw ContractError("normalize_pose: image dimensions must be positive");
  if (!(px >= 0.0 && px <= img_w) || !(py >= 0.0 && py <= img_h)) {
    throw std::out_of_range("normalize_pose: pixel coordinate outside the image");
  }
  if (!std::isfinite(theta)) throw std::out_of_range("normalize_pose: non-finite angle");
  return {px / img_w, py / img_h, wrap_angle(theta)};
}

inline PixelPose denormalize_pose(const GraspPose& p, double img_w, double img_h) {
  return {p.x * img_w, p.y * img_h, p.theta};
}

// Exact rectangle with the given center, closing axis angle and dimensions.
// `plate_sign` = -1 mirrors the vertex winding (v0 and v1 swap sides of the axis).
inline GraspRectangle make_rectangle(Vec2 center, double theta, double w, double plate_len, int plate_sign = 1) {
  const Vec2 axis{std::cos(theta), std::sin(theta)};
  const Vec2 plate = Vec2{-axis.y, axis.x} * static_cast<double>(plate_sign);
  const Vec2 half_axis = axis * (w / 2.0);
  const Vec2 half_plate = plate * (plate_len / 2.0);
  return GraspRectangle({center - half_axis - half_plate, center - half_axis + half_plate,
                         center + half_axis + half_plate, center + half_axis - half_plate});
}

inline GraspPose rect_to_pose(const GraspRectangle& r, double img_w, double img_h) {
  if (!r.finite() || r.has_zero_length_edge()) {
    throw DegenerateRectangleError("rect_to_pose: rectangle has a zero-length edge");
  }
  if (!(norm(r.closing_axis()) > 0.0)) throw DegenerateRectangleError("rect_to_pose: zero-length closing axis");
  Vec2 c = r.center();
  // Averaging four vertices can overshoot an image border by a few ulps.
  const double slack = 1e-9;
  if (c.x < 0.0 && c.x > -slack * img_w) c.x = 0.0;
  if (c.x > img_w && c.x < img_w * (1.0 + slack)) c.x = img_w;
  if (c.y < 0.0 && c.y > -slack * img_h) c.y = 0.0;
  if (c.y > img_h && c.y < img_h * (1.0 + slack)) c.y = img_h;
  return normalize_pose(c.x, c.y, r.theta(), img_w, img_h);
}

inline GraspRectangle pose_to_rect(const GraspPose& p, double w, double plate_len, double img_w, double img_h) {
  if (!(w > 0.0) || !(plate_len > 0.0)) throw std::invalid_argument("pose_to_rect: rectangle dimensions must be positive");
  const PixelPose px = denormalize_pose(p, img_w, img_h);
  return make_rectangle({px.px, px.py}, p.theta, w, plate_len);
}

namespace detail {

using Polygon = std::vector<Vec2>;

inline double polygon_area(std::span<const Vec2> poly) {
  if (poly.size() < 3) return 0.0;
  double a = 0.0;
  for (std::size_t i = 0; i < poly.size(); ++i) a += cross(poly[i], poly[(i + 1) % poly.size()]);
  return 0.5 * a;
}

// Sutherland-Hodgman clip of `subject` against a convex, positively oriented `clip` polygon.
inline Polygon clip_convex(const Polygon& subject, std::span<const Vec2> clip) {
  Polygon out = subject;
  for (std::size_t i = 0; i < clip.size() && !out.empty(); ++i) {
    const Vec2 a = clip[i];
    const Vec2 b = clip[(i + 1) % clip.size()];
    const Vec2 edge = b - a;
    Polygon in = std::move(out);
    out.clear();
    for (std::size_t j = 0; j < in.size(); ++j) {
      const Vec2 p = in[j];
      const Vec2 q = in[(j + 1) % in.size()];
      const double sp = cross(edge, p - a);
      const double sq = cross(edge, q - a);
      if (sp >= 0.0) out.push_back(p);
      if ((sp >= 0.0) != (sq >= 0.0)) {
        const double t = sp / (sp - sq);
        out.push_back(p + (q - p) * t);
      }
    }
  }
  return out;
}

inline Polygon positively_oriented(const GraspRectangle& r) {
  Polygon poly(r.vertices.begin(), r.vertices.end());
  if (polygon_area(poly) < 0.0) std::reverse(poly.begin(), poly.end());
  return poly;
}

}  // namespace detail

struct IouResult {
  double value = 0.0;
  bool degenerate = false;
};

inline IouResult rect_iou_checked(const GraspRectangle& a, const GraspRectangle& b) {
  if (!a.finite() || !b.finite()) return {0.0, true};
  const detail::Polygon pa = detail::positively_oriented(a);
  const detail::Polygon pb = detail::positively_oriented(b);
  const double area_a = detail::polygon_area(pa);
  const double area_b = detail::polygon_area(pb);
  if (!(area_a > 0.0) || !(area_b > 0.0)) return {0.0, true};
  const double inter = std::max(0.0, detail::polygon_area(detail::clip_convex(pa, pb)));
  const double uni = area_a + area_b - inter;
  if (!(uni > 0.0)) return {0.0, true};
  return {std::clamp(inter / uni, 0.0, 1.0), false};
}

inline double rect_iou(const GraspRectangle& a, const GraspRectangle& b) { return rect_iou_checked(a, b).value; }

// Smallest |t1 - t2 + k*pi| over integer k; lies in [0, pi/2].
inline double angle_difference(double t1, double t2) {
  double d = std::abs(std::fmod(t1 - t2, kPi));
  if (d > kHalfPi) d = kPi - d;
  return d;
}

// Values this close to a threshold are treated as sitting on it, so "exceeds" and
// "less than" are not decided by floating-point round-off.
inline constexpr double kIouBoundaryEps = 1e-9;
inline constexpr double kAngleBoundaryEpsDeg = 1e-9;

inline bool passes_iou(double iou, const MetricThresholds& th) { return iou > th.min_iou + kIouBoundaryEps; }
inline bool passes_angle(double angle_deg, const MetricThresholds& th) {
  return angle_deg < th.max_angle_deg - kAngleBoundaryEpsDeg;
}

// Success iff the prediction, expanded with a ground truth's own dimensions, overlaps that
// ground truth by more than min_iou and is within max_angle_deg of it, for ANY ground truth.
// Reported best_* describe the max-IoU candidate among angle-passing ones, else the global max IoU.
inline GraspEvalOutcome rectangle_metric(const GraspPose& pred, std::span<const GraspRectangle> gts,
                                         const MetricThresholds& th, double img_w, double img_h) {
  if (gts.empty()) throw ContractError("rectangle_metric: no ground-truth rectangles");
  GraspEvalOutcome out;
  std::optional<std::size_t> best_angle_ok;
  std::optional<std::size_t> best_any;
  std::vector<double> ious(gts.size(), 0.0);
  std::vector<double> angles(gts.size(), 90.0);
  for (std::size_t i = 0; i < gts.size(); ++i) {
    const GraspRectangle& gt = gts[i];
    if (gt.finite() && !gt.has_zero_length_edge()) {
      const GraspRectangle cand = pose_to_rect(pred, gt.opening_width(), gt.plate_length(), img_w, img_h);
      ious[i] = rect_iou(cand, gt);
      angles[i] = rad_to_deg(angle_difference(pred.theta, gt.theta()));
    }
    if (passes_iou(ious[i], th) && passes_angle(angles[i], th)) out.success = true;
    if (passes_angle(angles[i], th) && (!best_angle_ok || ious[i] > ious[*best_angle_ok])) best_angle_ok = i;
    if (!best_any || ious[i] > ious[*best_any]) best_any = i;
  }
  const std::size_t pick = best_angle_ok ? *best_angle_ok : *best_any;
  out.best_iou = ious[pick];
  out.best_angle_diff_deg = angles[pick];
  out.matched_gt_index = pick;
  return out;
}

}  // namespace rtgrasp
