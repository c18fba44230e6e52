#include <gtest/gtest.h>

#include <string>

#include "rtgrasp/answer_format.hpp"
#include "rtgrasp/output_parser.hpp"
#include "rtgrasp/rng.hpp"

using namespace rtgrasp;

TEST(ParsePose, EmbeddedTripleAndReasoningPrefix) {
  const std::string text = "The mug has a curved handle on its right side; grasp its handle. p = {0.435, 0.592, -0.785}";
  const ParsedOutput out = parse_pose(text);
  ASSERT_TRUE(out.pose);
  EXPECT_EQ(*out.pose, (GraspPose{0.435, 0.592, -0.785}));
  EXPECT_EQ(out.reasoning_text, "The mug has a curved handle on its right side; grasp its handle. p = ");
  EXPECT_EQ(text.substr(out.span_begin, out.span_end - out.span_begin), "{0.435, 0.592, -0.785}");
}

TEST(ParsePose, LastTripleWins) {
  const ParsedOutput out = parse_pose("first guess {0.2, 0.2, 0.1}, corrected. final answer {0.500, 0.375, -1.571}");
  ASSERT_TRUE(out.pose);
  EXPECT_EQ(out.pose->x, 0.5);
  EXPECT_EQ(out.pose->y, 0.375);
  EXPECT_EQ(out.pose->theta, -kHalfPi);
}

TEST(ParsePose, NoPoseIsDiagnosticNotException) {
  const ParsedOutput out = parse_pose("I cannot determine the grasp.");
  EXPECT_FALSE(out.pose);
  ASSERT_FALSE(out.diagnostics.empty());
  EXPECT_EQ(out.diagnostics.back(), "no_pose_found");
}

TEST(ParsePose, AlternativeForms) {
  auto pose = [](std::string_view s) { return parse_pose(s).pose; };
  EXPECT_EQ(pose("[0.1 0.2 0.3]"), (GraspPose{0.1, 0.2, 0.3}));
  EXPECT_EQ(pose("(0.1; 0.2; 0.3)"), (GraspPose{0.1, 0.2, 0.3}));
  EXPECT_EQ(pose("x = 0.1, y = 0.2, theta = 0.3"), (GraspPose{0.1, 0.2, 0.3}));
  EXPECT_EQ(pose("X: 0.1 and Y: 0.2 and angle: -0.3"), (GraspPose{0.1, 0.2, -0.3}));
  EXPECT_EQ(pose("{0.1, 0.2, \xE2\x88\x92" "0.3}"), (GraspPose{0.1, 0.2, -0.3}));
  EXPECT_EQ(pose("{.5, 5e-1, 0}"), (GraspPose{0.5, 0.5, 0.0}));
  EXPECT_FALSE(pose("{0.1, 0.2}"));
  EXPECT_FALSE(pose("{0.1, 0.2, 0.3]"));
}

TEST(ParsePose, RangeGateClampsSlackAndRejectsPixels) {
  const ParsedOutput near = parse_pose("{1.03, -0.02, 0.2}");
  ASSERT_TRUE(near.pose);
  EXPECT_EQ(near.pose->x, 1.0);
  EXPECT_EQ(near.pose->y, 0.0);

  const ParsedOutput pixels = parse_pose("{320, 240, 0.5}");
  EXPECT_FALSE(pixels.pose);
  EXPECT_NE(pixels.diagnostics.front().find("rejected_candidate"), std::string::npos);

  // A rejected later triple falls back to an earlier valid one.
  const ParsedOutput fallback = parse_pose("{0.3, 0.4, 0.5} then {300, 400, 0.5}");
  ASSERT_TRUE(fallback.pose);
  EXPECT_EQ(fallback.pose->x, 0.3);
}

TEST(ParsePose, AngleHandling) {
  EXPECT_NEAR(parse_pose("{0.5, 0.5, 3.0}").pose->theta, wrap_angle(3.0), 1e-15);
  EXPECT_EQ(parse_pose("{0.5, 0.5, 1.571}").pose->theta, -kHalfPi);
  EXPECT_EQ(parse_pose("{0.5, 0.5, -1.571}").pose->theta, -kHalfPi);
  EXPECT_FALSE(parse_pose("{0.5, 0.5, 45}").pose);
  ParseOptions deg;
  deg.degrees_heuristic = true;
  EXPECT_NEAR(parse_pose("{0.5, 0.5, 45}", deg).pose->theta, kPi / 4, 1e-15);
}

TEST(RenderPoseText, CanonicalFormat) {
  EXPECT_EQ(render_pose_text({0.5, 0.375, -kHalfPi}), "{0.500, 0.375, -1.571}");
  EXPECT_EQ(render_pose_text({0, 0, 0}), "{0.000, 0.000, 0.000}");
  EXPECT_EQ(render_pose_text({0.0625, 0.1875, -0.0001}), "{0.062, 0.188, 0.000}");
}

TEST(RenderPoseText, QuantizationIsIdempotent) {
  Rng rng(4);
  for (int i = 0; i < 20000; ++i) {
    const GraspPose p{rng.uniform01(), rng.uniform01(), rng.uniform(-kHalfPi, kHalfPi)};
    const GraspPose q = quantize_pose(p);
    ASSERT_TRUE(q.valid());
    ASSERT_EQ(quantize_pose(q), q);
    ASSERT_EQ(render_pose_text(q), render_pose_text(quantize_pose(q)));
    ASSERT_LE(std::abs(q.x - p.x), 5e-4 + 1e-12);
    ASSERT_LE(angle_difference(q.theta, p.theta), 5e-4 + 1e-12);
  }
}

TEST(ParsePose, RoundTripAllVariants) {
  Rng rng(6);
  for (int i = 0; i < 1000; ++i) {
    const GraspPose q = quantize_pose({rng.uniform01(), rng.uniform01(), rng.uniform(-kHalfPi, kHalfPi)});
    for (AnswerVariant v : {AnswerVariant::Full, AnswerVariant::NoReasoningA, AnswerVariant::NoReasoningB}) {
      const StructuredAnswer a = compose_answer(v, q, "A cup is a hollow cylinder; grasp the rim.");
      const ParsedOutput out = parse_pose(a.full_text);
      ASSERT_TRUE(out.pose);
      ASSERT_EQ(*out.pose, q);
      ASSERT_TRUE(validate_answer(a.full_text, v).passed());
    }
  }
}

TEST(ParsePose, PrefixStability) {
  Rng rng(12);
  const std::string alphabet = "abcdefghijklmnopqrsuvwzABCDEFGHIJKLMNOPQRSUVWZ .,!?'-\n";
  for (int i = 0; i < 2000; ++i) {
    const GraspPose q = quantize_pose({rng.uniform01(), rng.uniform01(), rng.uniform(-kHalfPi, kHalfPi)});
    const std::string text = "Reasoning about the object. " + render_pose_text(q);
    std::string prefix;
    const auto n = rng.below(80);
    for (std::uint64_t k = 0; k < n; ++k) prefix.push_back(alphabet[rng.below(alphabet.size())]);
    prefix += ' ';
    ASSERT_EQ(parse_pose(prefix + text).pose, parse_pose(text).pose) << prefix;
  }
}

TEST(ParsePose, TotalOnRandomBytes) {
  Rng rng(99);
  const std::string pieces[] = {"{", "}", "[", "]", "(", ")", ",", ";", " ", "0.", ".5", "-", "e", "x=", "y:",
                                "theta=", "1", "\xE2\x88\x92", "\xCE\xB8", "\xff", "nan", "inf", "9e999"};
  for (int i = 0; i < 100000; ++i) {
    std::string s;
    const auto n = rng.below(40);
    for (std::uint64_t k = 0; k < n; ++k) {
      if (rng.below(3) == 0) {
        s.push_back(static_cast<char>(rng.below(256)));
      } else {
        s += pieces[rng.below(std::size(pieces))];
      }
    }
    const ParsedOutput out = parse_pose(s);
    if (out.pose) {
      ASSERT_TRUE(out.pose->valid()) << s;
      ASSERT_LE(out.span_end, s.size());
      ASSERT_LT(out.span_begin, out.span_end);
    }
  }
}

TEST(ValidateAnswer, FullRecordPasses) {
  const StructuredAnswer a = compose_answer(AnswerVariant::Full, {0.5, 0.375, -kHalfPi}, "Scissors have two loops.");
  EXPECT_TRUE(validate_answer(a.full_text, AnswerVariant::Full).passed());
}

TEST(ValidateAnswer, PoseOnlyFailsFullRules) {
  const StructureReport r = validate_answer("{0.500, 0.375, -1.571}", AnswerVariant::Full);
  EXPECT_FALSE(r.passed());
  ASSERT_NE(r.find("reasoning_non_empty"), nullptr);
  EXPECT_FALSE(r.find("reasoning_non_empty")->passed);
  EXPECT_TRUE(validate_answer("{0.500, 0.375, -1.571}", AnswerVariant::NoReasoningA).passed());
}

TEST(ValidateAnswer, WrapperRule) {
  const StructuredAnswer b = compose_answer(AnswerVariant::NoReasoningB, {0.25, 0.75, 0.1});
  EXPECT_TRUE(validate_answer(b.full_text, AnswerVariant::NoReasoningB).passed());
  EXPECT_FALSE(validate_answer(b.full_text, AnswerVariant::NoReasoningA).passed());
  EXPECT_FALSE(validate_answer("pose {0.25, 0.75, 0.100}", AnswerVariant::NoReasoningB).passed());
}

TEST(AnswerFormat, NoReasoningAHasNoLettersOutsideBraces) {
  const StructuredAnswer a = compose_answer(AnswerVariant::NoReasoningA, {0.25, 0.75, 0.1});
  for (char c : a.full_text) EXPECT_FALSE(std::isalpha(static_cast<unsigned char>(c)));
}
