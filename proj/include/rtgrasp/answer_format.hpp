#pragma once

// Textual form of structured answers: reasoning phase followed by the pose.
//
//   Full          "<reasoning>\n\nBased on this analysis, the grasp pose is: {0.500, 0.375, -1.571}"
//   NoReasoningA  "{0.500, 0.375, -1.571}"
//   NoReasoningB  "The grasp pose is {...}, where ..."  (fixed explanatory wrapper)

#include <array>
#include <charconv>
#include <optional>
#include <string>
#include <string_view>

#include "rtgrasp/geometry.hpp"

namespace rtgrasp {

enum class AnswerVariant { Full, NoReasoningA, NoReasoningB };

inline constexpr std::string_view kReasoningSeparator = "\n\nBased on this analysis, the grasp pose is: ";
inline constexpr std::string_view kWrapperPrefix = "The grasp pose is ";
inline constexpr std::string_view kWrapperSuffix =
    ", where (x, y) denotes the center point coordinates of the grasp normalized by the image width and "
    "height, and theta indicates the rotation angle of the gripper in radians.";

inline std::string_view to_string(AnswerVariant v) {
  switch (v) {
    case AnswerVariant::Full: return "full";
    case AnswerVariant::NoReasoningA: return "no-reasoning-a";
    case AnswerVariant::NoReasoningB: return "no-reasoning-b";
  }
  return "full";
}

inline std::optional<AnswerVariant> parse_variant(std::string_view s) {
  if (s == "full") return AnswerVariant::Full;
  if (s == "no-reasoning-a" || s == "a") return AnswerVariant::NoReasoningA;
  if (s == "no-reasoning-b" || s == "b") return AnswerVariant::NoReasoningB;
  return std::nullopt;
}

struct StructuredAnswer {
  AnswerVariant variant = AnswerVariant::Full;
  std::string reasoning_text;
  std::string pose_text;
  std::string full_text;
};

namespace detail {

// Fixed 3-decimal formatting; to_chars rounds the exact binary value, ties to even.
inline std::string fixed3(double v) {
  std::array<char, 64> buf{};
  const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v, std::chars_format::fixed, 3);
  std::string s(buf.data(), res.ptr);
  if (s == "-0.000") s = "0.000";
  return s;
}

}  // namespace detail

inline std::string render_pose_text(const GraspPose& p) {
  return "{" + detail::fixed3(p.x) + ", " + detail::fixed3(p.y) + ", " + detail::fixed3(p.theta) + "}";
}

inline StructuredAnswer compose_answer(AnswerVariant variant, const GraspPose& p, std::string reasoning = {}) {
  StructuredAnswer a;
  a.variant = variant;
  a.pose_text = render_pose_text(p);
  switch (variant) {
    case AnswerVariant::Full:
      a.reasoning_text = std::move(reasoning);
      a.full_text = a.reasoning_text + std::string(kReasoningSeparator) + a.pose_text;
      break;
    case AnswerVariant::NoReasoningA:
      a.full_text = a.pose_text;
      break;
    case AnswerVariant::NoReasoningB:
      a.full_text = std::string(kWrapperPrefix) + a.pose_text + std::string(kWrapperSuffix);
      break;
  }
  return a;
}

}  // namespace rtgrasp
