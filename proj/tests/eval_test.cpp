#include <gtest/gtest.h>

#include <atomic>
#include <chrono>
#include <filesystem>
#include <set>
#include <thread>

#include "rtgrasp/eval.hpp"
#include "rtgrasp/mock_model.hpp"

using namespace rtgrasp;
namespace fs = std::filesystem;

namespace {

const fs::path kData = fs::path(RTGRASP_DATA_DIR);
const fs::path kFixture = fs::path(RTGRASP_TEST_DATA_DIR) / "cornell_fixture";

class EvalFixture : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() / ("rtgrasp_eval_" + std::to_string(::getpid()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
    image_ = dir_ / "blank.png";
    write_png(image_, Image8(200, 200, 3, 128));
  }
  void TearDown() override { fs::remove_all(dir_); }

  EvalSample sample(const std::string& id, std::vector<GraspRectangle> gts) const {
    return {id, image_, "Predict a grasp pose.", 200, 200, std::move(gts)};
  }

  // Three 200x200 samples. Against the pose {0.5, 0.5, 0}:
  //   a: GT centered, axis-aligned, same size -> IoU 1, angle 0 -> success
  //   b: GT at (30, 30), pred spans x in [80, 120] and GT x in [10, 50] -> IoU 0
  //   c: GT centered but rotated 60 degrees -> angle test fails
  std::vector<EvalSample> crafted() const {
    return {sample("a", {make_rectangle({100, 100}, 0.0, 40, 20)}), sample("b", {make_rectangle({30, 30}, 0.0, 40, 20)}),
            sample("c", {make_rectangle({100, 100}, deg_to_rad(60), 40, 20)})};
  }

  std::map<std::string, GraspPose> oracle_poses(const std::vector<EvalSample>& samples) const {
    std::map<std::string, GraspPose> m;
    for (const auto& s : samples) m[s.id] = quantize_pose(rect_to_pose(s.gt_rects[0], s.width, s.height));
    return m;
  }

  fs::path dir_;
  fs::path image_;
};

}  // namespace

TEST_F(EvalFixture, OracleScoresPerfectly) {
  auto samples = crafted();
  OracleMock oracle(oracle_poses(samples));
  const FoldReport r = evaluate_fold(oracle, samples, {}, 1);
  EXPECT_DOUBLE_EQ(r.accuracy(), 1.0);
  EXPECT_EQ(r.parse_errors(), 0u);
}

TEST_F(EvalFixture, ConstantClientOneInThree) {
  ConstantMock c({0.5, 0.5, 0.0});
  const FoldReport r = evaluate_fold(c, crafted(), {}, 1);
  ASSERT_EQ(r.rows.size(), 3u);
  EXPECT_TRUE(r.rows[0].success);
  EXPECT_DOUBLE_EQ(r.rows[0].best_iou, 1.0);
  EXPECT_FALSE(r.rows[1].success);
  EXPECT_DOUBLE_EQ(r.rows[1].best_iou, 0.0);
  EXPECT_FALSE(r.rows[2].success);
  EXPECT_NEAR(r.rows[2].angle_diff_deg, 60.0, 1e-9);
  EXPECT_DOUBLE_EQ(r.accuracy(), 1.0 / 3.0);
}

TEST_F(EvalFixture, ConstantOriginMissesCentralObjects) {
  ConstantMock c({0.0, 0.0, 0.0});
  std::vector<EvalSample> samples = {sample("a", {make_rectangle({100, 100}, 0.0, 40, 20)}),
                                     sample("b", {make_rectangle({90, 110}, 0.3, 50, 20)})};
  EXPECT_DOUBLE_EQ(evaluate_fold(c, samples, {}, 1).accuracy(), 0.0);
}

TEST_F(EvalFixture, GibberishIsAllParseErrors) {
  GibberishMock g;
  const FoldReport r = evaluate_fold(g, crafted(), {}, 2);
  EXPECT_DOUBLE_EQ(r.accuracy(), 0.0);
  EXPECT_EQ(r.parse_errors(), 3u);
  EXPECT_EQ(r.scored(), 3u);
  for (const auto& row : r.rows) EXPECT_EQ(row.status, RowStatus::ParseError);
}

TEST_F(EvalFixture, InfraErrorsLeaveTheDenominator) {
  auto samples = crafted();
  auto poses = oracle_poses(samples);
  FunctionMock m([&](const ChatRequest& req) -> std::string {
    if (req.sample_id == "b") throw TransportError("HTTP 503 after 3 attempt(s)", 3, 503);
    return render_pose_text(poses.at(req.sample_id));
  });
  samples.push_back(sample("d", {make_rectangle({60, 60}, 0.0, 40, 20)}));
  samples.back().image_path = dir_ / "missing.png";
  const FoldReport r = evaluate_fold(m, samples, {}, 1);
  EXPECT_EQ(r.infra_errors(), 2u);
  EXPECT_EQ(r.scored(), 2u);
  EXPECT_DOUBLE_EQ(r.accuracy(), 1.0);
  EXPECT_EQ(r.successes() + (r.scored() - r.successes() - r.parse_errors()) + r.parse_errors(), r.scored());
  EXPECT_EQ(r.to_json().at("infra_errors"), 2);
}

TEST_F(EvalFixture, OrderAndBytesIndependentOfParallelism) {
  std::vector<EvalSample> samples;
  Rng rng(4);
  for (int i = 0; i < 24; ++i) {
    samples.push_back(sample("s" + std::to_string(i), {make_rectangle({rng.uniform(40, 160), rng.uniform(40, 160)},
                                                                       rng.uniform(-kHalfPi, kHalfPi), 30, 15)}));
  }
  auto poses = oracle_poses(samples);
  FunctionMock slow([&](const ChatRequest& req) -> std::string {
    std::this_thread::sleep_for(std::chrono::microseconds(stable_hash(req.sample_id) % 3000));
    const GraspPose p = poses.at(req.sample_id);
    return render_pose_text({p.x, 1.0 - p.y, p.theta});
  });
  const std::string serial = evaluate_fold(slow, samples, {}, 1).to_json().dump();
  EXPECT_EQ(evaluate_fold(slow, samples, {}, 6).to_json().dump(), serial);
  EXPECT_EQ(evaluate_fold(slow, samples, {}, 64).to_json().dump(), serial);
}

TEST_F(EvalFixture, SerialOnlyClientIsNeverCalledConcurrently) {
  std::atomic<int> in_flight{0}, peak{0};
  FunctionMock m(
      [&](const ChatRequest&) -> std::string {
        const int now = ++in_flight;
        int prev = peak.load();
        while (now > prev && !peak.compare_exchange_weak(prev, now)) {
        }
        std::this_thread::sleep_for(std::chrono::milliseconds(2));
        --in_flight;
        return "{0.500, 0.500, 0.000}";
      },
      false);
  std::vector<EvalSample> samples(12, sample("x", {make_rectangle({100, 100}, 0.0, 40, 20)}));
  evaluate_fold(m, samples, {}, 8);
  EXPECT_EQ(peak.load(), 1);
}

TEST_F(EvalFixture, Contracts) {
  ConstantMock c({0.5, 0.5, 0.0});
  EXPECT_THROW(evaluate_fold(c, crafted(), {}, 0), ContractError);
  EXPECT_THROW(evaluate_fold(c, crafted(), {0.0, 30.0}, 1), ContractError);
  std::vector<EvalSample> empty_gt = {sample("z", {})};
  EXPECT_THROW(evaluate_fold(c, empty_gt, {}, 1), ContractError);
}

TEST(Aggregate, MeanAndSampleStd) {
  const std::vector<double> acc = {0.80, 0.82, 0.84, 0.86, 0.88};
  const EvalSummary s = aggregate_accuracies(acc, "IW");
  EXPECT_NEAR(s.mean, 0.84, 1e-12);
  // deviations +-0.04, +-0.02, 0: sum of squares 0.004, over n-1 = 4 -> 0.001
  EXPECT_NEAR(s.sample_std, std::sqrt(0.001), 1e-12);
  EXPECT_NEAR(s.sample_std, 0.0316, 1e-4);
  const std::vector<double> same = {0.7, 0.7, 0.7};
  EXPECT_DOUBLE_EQ(aggregate_accuracies(same).sample_std, 0.0);
  const std::vector<double> one = {0.9};
  EXPECT_THROW(aggregate_accuracies(one), ContractError);
  EXPECT_THROW(aggregate(std::span<const FoldReport>{}), ContractError);
}

TEST(Aggregate, TableLayout) {
  const std::vector<double> iw = {0.80, 0.82, 0.84, 0.86, 0.88};
  const EvalSummary s = aggregate_accuracies(iw, "IW");
  const std::string t = format_table({{"mock-oracle", {&s, nullptr}}});
  EXPECT_NE(t.find("Image-Wise (IW)"), std::string::npos);
  EXPECT_NE(t.find("Object-Wise (OW)"), std::string::npos);
  EXPECT_NE(t.find("84.00\xC2\xB1" "3.16"), std::string::npos);
}

TEST(CrossValidate, OracleOverBuiltDataset) {
  const fs::path dir = fs::temp_directory_path() / ("rtgrasp_cv_" + std::to_string(::getpid()));
  fs::remove_all(dir);
  const CategoryMap cmap = CategoryMap::load(kData / "category_map.seed.json");
  const auto samples = load_dataset(kFixture, cmap).samples;
  AugmentationConfig cfg;
  cfg.per_image_count = 3;
  cfg.seed = 9;
  build_dataset(samples, cfg, load_template_bank(kData / "seed_bank.json").bank, AnswerVariant::Full, dir / "d.jsonl");
  const auto records = load_records(dir / "d.jsonl");

  std::map<std::string, GraspPose> poses;
  for (const auto& r : records) poses[r.id] = r.pose;
  OracleMock oracle(poses);
  for (SplitMode mode : {SplitMode::ImageWise, SplitMode::ObjectWise}) {
    CrossValidationOptions opt;
    opt.mode = mode;
    opt.k = mode == SplitMode::ImageWise ? 3 : 2;
    opt.seed = 1;
    opt.parallelism = 3;
    const CrossValidation cv = cross_validate(oracle, records, dir, opt);
    ASSERT_EQ(cv.folds.size(), static_cast<std::size_t>(opt.k));
    std::size_t total = 0;
    for (const auto& f : cv.folds) {
      EXPECT_DOUBLE_EQ(f.accuracy(), 1.0);
      total += f.rows.size();
    }
    EXPECT_EQ(total, records.size());
    EXPECT_DOUBLE_EQ(cv.summary.mean, 1.0);
    EXPECT_DOUBLE_EQ(cv.summary.sample_std, 0.0);
    EXPECT_EQ(cv.summary.fingerprint.at("model"), "mock-oracle");
  }
  const FoldAssignment f = folds_for_records(records, SplitMode::ObjectWise, 2, 1);
  std::map<int, int> fold_of_object;
  for (const auto& r : records) {
    auto [it, _] = fold_of_object.emplace(r.object_id, f.assignment.at(r.source_image_id));
    EXPECT_EQ(it->second, f.assignment.at(r.source_image_id));
  }
  fs::remove_all(dir);
}
