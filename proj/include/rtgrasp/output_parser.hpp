#pragma once

// Extraction of a grasp pose {x, y, theta} from free-form model text.
//
// Accepted candidate forms:
//   bracketed  "{0.43, 0.59, -0.78}", "[0.43 0.59 -0.78]", "(0.43; 0.59; -0.78)"
//   labeled    "x = 0.43, y: 0.59, theta = -0.78"  (theta may be spelled theta/angle/t/θ)
// The LAST candidate passing the range gate wins; everything before it is the reasoning.

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "rtgrasp/answer_format.hpp"
#include "rtgrasp/geometry.hpp"

namespace rtgrasp {

struct ParseOptions {
  double coordinate_slack = 0.05;  // x, y accepted in [-slack, 1 + slack], then clamped
  bool degrees_heuristic = false;  // reinterpret |theta| in (pi, 360] as degrees
};

struct ParsedOutput {
  std::optional<GraspPose> pose;
  std::string reasoning_text;
  std::size_t span_begin = 0;  // byte offsets of the matched candidate, [begin, end)
  std::size_t span_end = 0;
  std::vector<std::string> diagnostics;
};

namespace detail {

struct NumberToken {
  double value = 0.0;
  std::size_t begin = 0;
  std::size_t end = 0;
};

// U+2212 MINUS SIGN, common in model output.
inline constexpr std::string_view kUnicodeMinus = "\xE2\x88\x92";

inline bool is_digit(char c) { return c >= '0' && c <= '9'; }
inline bool is_alpha(char c) { return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z'); }
inline bool is_space(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; }

inline std::size_t skip_spaces(std::string_view s, std::size_t i) {
  while (i < s.size() && is_space(s[i])) ++i;
  return i;
}

// Decimal literal at `i`: [sign] (digits [. digits] | . digits) [exponent].
inline std::optional<NumberToken> read_number(std::string_view s, std::size_t i) {
  const std::size_t begin = i;
  bool negative = false;
  if (i < s.size() && (s[i] == '-' || s[i] == '+')) {
    negative = s[i] == '-';
    ++i;
  } else if (s.substr(i, kUnicodeMinus.size()) == kUnicodeMinus) {
    negative = true;
    i += kUnicodeMinus.size();
  }
  const std::size_t body = i;
  std::size_t int_digits = 0, frac_digits = 0;
  while (i < s.size() && is_digit(s[i])) ++i, ++int_digits;
  if (i < s.size() && s[i] == '.') {
    std::size_t j = i + 1;
    while (j < s.size() && is_digit(s[j])) ++j, ++frac_digits;
    if (frac_digits > 0) i = j;
  }
  if (int_digits + frac_digits == 0) return std::nullopt;
  if (i < s.size() && (s[i] == 'e' || s[i] == 'E')) {
    std::size_t j = i + 1;
    if (j < s.size() && (s[j] == '-' || s[j] == '+')) ++j;
    const std::size_t exp_start = j;
    while (j < s.size() && is_digit(s[j])) ++j;
    if (j > exp_start) i = j;
  }
  double v = 0.0;
  const auto res = std::from_chars(s.data() + body, s.data() + i, v);
  if (res.ec != std::errc() || res.ptr != s.data() + i || !std::isfinite(v)) return std::nullopt;
  return NumberToken{negative ? -v : v, begin, i};
}

struct Candidate {
  std::array<double, 3> values{};
  std::size_t begin = 0;
  std::size_t end = 0;
};

inline char closing_bracket(char open) {
  switch (open) {
    case '{': return '}';
    case '[': return ']';
    case '(': return ')';
    default: return '\0';
  }
}

inline std::optional<Candidate> read_bracketed(std::string_view s, std::size_t open_pos) {
  const char close = closing_bracket(s[open_pos]);
  Candidate c;
  c.begin = open_pos;
  std::size_t i = open_pos + 1;
  for (int k = 0; k < 3; ++k) {
    i = skip_spaces(s, i);
    if (k > 0) {
      const std::size_t before = i;
      if (i < s.size() && (s[i] == ',' || s[i] == ';')) i = skip_spaces(s, i + 1);
      if (i == before && !(before > 0 && is_space(s[before - 1]))) return std::nullopt;
    }
    const auto num = read_number(s, i);
    if (!num) return std::nullopt;
    c.values[k] = num->value;
    i = num->end;
  }
  i = skip_spaces(s, i);
  if (i >= s.size() || s[i] != close) return std::nullopt;
  c.end = i + 1;
  return c;
}

enum class Label { X, Y, Theta };

struct LabeledValue {
  Label label;
  double value;
  std::size_t begin;
  std::size_t end;
};

inline std::optional<LabeledValue> read_labeled(std::string_view s, std::size_t i) {
  if (i > 0 && (is_alpha(s[i - 1]) || is_digit(s[i - 1]) || s[i - 1] == '_')) return std::nullopt;
  static constexpr std::array<std::pair<std::string_view, Label>, 6> kLabels{{
      {"theta", Label::Theta}, {"angle", Label::Theta}, {"\xCE\xB8", Label::Theta},
      {"x", Label::X}, {"y", Label::Y}, {"t", Label::Theta},
  }};
  for (const auto& [name, label] : kLabels) {
    if (s.size() - i < name.size()) continue;
    bool match = true;
    for (std::size_t k = 0; k < name.size() && match; ++k) {
      const char a = s[i + k];
      match = (a >= 'A' && a <= 'Z' ? static_cast<char>(a - 'A' + 'a') : a) == name[k];
    }
    if (!match) continue;
    std::size_t j = i + name.size();
    if (j < s.size() && (is_alpha(s[j]) || is_digit(s[j]) || s[j] == '_')) continue;
    j = skip_spaces(s, j);
    if (j >= s.size() || (s[j] != '=' && s[j] != ':')) continue;
    j = skip_spaces(s, j + 1);
    const auto num = read_number(s, j);
    if (!num) continue;
    return LabeledValue{label, num->value, i, num->end};
  }
  return std::nullopt;
}

inline bool is_label_gap(std::string_view gap) {
  if (gap.size() > 24) return false;
  std::string lower;
  for (char c : gap) {
    if (is_space(c) || c == ',' || c == ';') continue;
    lower.push_back(c >= 'A' && c <= 'Z' ? static_cast<char>(c - 'A' + 'a') : c);
  }
  return lower.empty() || lower == "and";
}

inline std::vector<Candidate> find_candidates(std::string_view s) {
  std::vector<Candidate> out;
  std::vector<LabeledValue> labeled;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const char c = s[i];
    if (c == '{' || c == '[' || c == '(') {
      if (auto cand = read_bracketed(s, i)) out.push_back(*cand);
    }
    if (auto lv = read_labeled(s, i)) {
      labeled.push_back(*lv);
      i = lv->end - 1;
    }
  }
  for (std::size_t k = 0; k + 2 < labeled.size(); ++k) {
    const LabeledValue& a = labeled[k];
    const LabeledValue& b = labeled[k + 1];
    const LabeledValue& c = labeled[k + 2];
    if (a.label != Label::X || b.label != Label::Y || c.label != Label::Theta) continue;
    if (!is_label_gap(s.substr(a.end, b.begin - a.end)) || !is_label_gap(s.substr(b.end, c.begin - b.end))) continue;
    out.push_back(Candidate{{a.value, b.value, c.value}, a.begin, c.end});
  }
  std::stable_sort(out.begin(), out.end(), [](const Candidate& l, const Candidate& r) { return l.begin < r.begin; });
  return out;
}

// Text is quantized to 3 decimals, so "-1.571" denotes -pi/2 rather than an angle just
// outside the interval. Values within that rounding band of +-pi/2 snap to -pi/2.
inline constexpr double kAngleTextSlack = 5e-4;

inline std::optional<double> gate_angle(double t, const ParseOptions& opt, std::string& why) {
  if (std::abs(std::abs(t) - kHalfPi) <= kAngleTextSlack) return (t < -kHalfPi || t >= kHalfPi) ? -kHalfPi : t;
  if (std::abs(t) <= kPi) return wrap_angle(t);
  if (opt.degrees_heuristic && std::abs(t) <= 360.0) return wrap_angle(deg_to_rad(t));
  why = "theta outside [-pi, pi]";
  return std::nullopt;
}

inline std::string format_triple(const Candidate& c) {
  std::string s;
  for (int k = 0; k < 3; ++k) {
    if (k) s += ", ";
    s += std::to_string(c.values[k]);
  }
  return s;
}

}  // namespace detail

inline ParsedOutput parse_pose(std::string_view text, const ParseOptions& opt = {}) {
  ParsedOutput out;
  const std::vector<detail::Candidate> cands = detail::find_candidates(text);
  for (auto it = cands.rbegin(); it != cands.rend(); ++it) {
    const double lo = -opt.coordinate_slack, hi = 1.0 + opt.coordinate_slack;
    std::string why;
    if (!(it->values[0] >= lo && it->values[0] <= hi) || !(it->values[1] >= lo && it->values[1] <= hi)) {
      why = "x/y outside normalized range";
    }
    std::optional<double> theta;
    if (why.empty()) theta = detail::gate_angle(it->values[2], opt, why);
    if (!theta) {
      out.diagnostics.push_back("rejected_candidate {" + detail::format_triple(*it) + "}: " + why);
      continue;
    }
    out.pose = GraspPose{std::clamp(it->values[0], 0.0, 1.0), std::clamp(it->values[1], 0.0, 1.0), *theta};
    out.span_begin = it->begin;
    out.span_end = it->end;
    out.reasoning_text = std::string(text.substr(0, it->begin));
    if (cands.size() > 1) out.diagnostics.push_back("multiple_candidates: selected last valid of " + std::to_string(cands.size()));
    return out;
  }
  out.diagnostics.push_back("no_pose_found");
  return out;
}

// The pose a rendered answer denotes: parse(render(p)). Fixed point of render/parse.
inline GraspPose quantize_pose(const GraspPose& p) {
  const ParsedOutput parsed = parse_pose(render_pose_text(p));
  if (!parsed.pose) throw ContractError("quantize_pose: pose does not render to a parseable triple");
  return *parsed.pose;
}

struct RuleResult {
  std::string rule;
  bool passed = false;
  std::string detail;
};

struct StructureReport {
  AnswerVariant variant = AnswerVariant::Full;
  std::vector<RuleResult> rules;

  bool passed() const {
    return std::all_of(rules.begin(), rules.end(), [](const RuleResult& r) { return r.passed; });
  }
  const RuleResult* find(std::string_view rule) const {
    for (const auto& r : rules) {
      if (r.rule == rule) return &r;
    }
    return nullptr;
  }
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && is_space(s[b])) ++b;
  while (e > b && is_space(s[e - 1])) --e;
  return s.substr(b, e - b);
}

inline bool ends_with(std::string_view s, std::string_view suffix) {
  return s.size() >= suffix.size() && s.substr(s.size() - suffix.size()) == suffix;
}

}  // namespace detail

inline StructureReport validate_answer(std::string_view text, AnswerVariant variant) {
  StructureReport report;
  report.variant = variant;
  const ParsedOutput parsed = parse_pose(text);
  report.rules.push_back({"pose_present", parsed.pose.has_value(), parsed.pose ? "" : "no_pose_found"});
  const std::string_view prefix = text.substr(0, parsed.pose ? parsed.span_begin : text.size());
  const std::string_view suffix = parsed.pose ? text.substr(parsed.span_end) : std::string_view{};

  switch (variant) {
    case AnswerVariant::Full: {
      std::string_view reasoning = prefix;
      const bool lead_in = detail::ends_with(prefix, kReasoningSeparator);
      if (lead_in) reasoning = prefix.substr(0, prefix.size() - kReasoningSeparator.size());
      const bool non_empty = !detail::trim(reasoning).empty();
      report.rules.push_back({"reasoning_non_empty", parsed.pose && non_empty, non_empty ? "" : "empty reasoning phase"});
      report.rules.push_back({"lead_in_present", parsed.pose && lead_in, lead_in ? "" : "missing lead-in before pose"});
      const bool pose_last = detail::trim(suffix).empty();
      report.rules.push_back({"pose_last", parsed.pose && pose_last, pose_last ? "" : "text after the pose"});
      break;
    }
    case AnswerVariant::NoReasoningA: {
      const bool only = parsed.pose && detail::trim(prefix).empty() && detail::trim(suffix).empty();
      report.rules.push_back({"pose_only", only, only ? "" : "text outside the pose"});
      break;
    }
    case AnswerVariant::NoReasoningB: {
      const bool wrapped = parsed.pose && prefix == kWrapperPrefix && suffix == kWrapperSuffix;
      report.rules.push_back({"wrapper_present", wrapped, wrapped ? "" : "explanatory wrapper missing"});
      break;
    }
  }
  return report;
}

}  // namespace rtgrasp
