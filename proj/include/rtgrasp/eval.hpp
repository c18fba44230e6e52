#pragma once

// Fold-based evaluation of a model client with the rectangle metric, and mean/std
// aggregation across folds.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "rtgrasp/cornell.hpp"
#include "rtgrasp/errors.hpp"
#include "rtgrasp/geometry.hpp"
#include "rtgrasp/image.hpp"
#include "rtgrasp/model_client.hpp"
#include "rtgrasp/output_parser.hpp"
#include "rtgrasp/templates.hpp"

namespace rtgrasp {

struct EvalSample {
  std::string id;
  std::filesystem::path image_path;
  std::string instruction;
  int width = 0;
  int height = 0;
  std::vector<GraspRectangle> gt_rects;
};

enum class RowStatus { Ok, ParseError, InfraError };

inline std::string_view to_string(RowStatus s) {
  switch (s) {
    case RowStatus::Ok: return "ok";
    case RowStatus::ParseError: return "parse_error";
    case RowStatus::InfraError: return "infra_error";
  }
  return "?";
}

struct EvalRow {
  std::string sample_id;
  RowStatus status = RowStatus::Ok;
  std::optional<GraspPose> pose;
  double best_iou = 0.0;
  double angle_diff_deg = 90.0;
  bool success = false;
  std::string raw_text;
  std::string error;

  nlohmann::json to_json() const {
    nlohmann::json j{{"id", sample_id},
                     {"status", to_string(status)},
                     {"pose", pose ? pose_to_json(*pose) : nlohmann::json(nullptr)},
                     {"best_iou", best_iou},
                     {"angle_diff_deg", angle_diff_deg},
                     {"success", success},
                     {"raw", raw_text}};
    if (!error.empty()) j["error"] = error;
    return j;
  }
};

struct FoldReport {
  int fold_index = 0;
  std::vector<EvalRow> rows;

  std::size_t count(RowStatus s) const {
    return static_cast<std::size_t>(std::count_if(rows.begin(), rows.end(), [&](const EvalRow& r) { return r.status == s; }));
  }
  std::size_t successes() const {
    return static_cast<std::size_t>(std::count_if(rows.begin(), rows.end(), [](const EvalRow& r) { return r.success; }));
  }
  std::size_t infra_errors() const { return count(RowStatus::InfraError); }
  std::size_t parse_errors() const { return count(RowStatus::ParseError); }
  // Rows that count toward accuracy; infrastructure failures are excluded.
  std::size_t scored() const { return rows.size() - infra_errors(); }
  double accuracy() const { return scored() ? static_cast<double>(successes()) / static_cast<double>(scored()) : 0.0; }

  nlohmann::json to_json() const {
    nlohmann::json rows_json = nlohmann::json::array();
    for (const auto& r : rows) rows_json.push_back(r.to_json());
    return {{"fold", fold_index},
            {"accuracy", accuracy()},
            {"scored", scored()},
            {"successes", successes()},
            {"failures", scored() - successes() - parse_errors()},
            {"parse_errors", parse_errors()},
            {"infra_errors", infra_errors()},
            {"rows", std::move(rows_json)}};
  }
};

inline EvalRow score_reply(const std::string& id, std::string reply, std::span<const GraspRectangle> gts,
                           const MetricThresholds& th, int width, int height) {
  EvalRow row;
  row.sample_id = id;
  row.raw_text = std::move(reply);
  const ParsedOutput parsed = parse_pose(row.raw_text);
  if (!parsed.pose) {
    row.status = RowStatus::ParseError;
    row.error = parsed.diagnostics.empty() ? "no_pose_found" : parsed.diagnostics.back();
    return row;
  }
  row.pose = parsed.pose;
  const GraspEvalOutcome o = rectangle_metric(*parsed.pose, gts, th, width, height);
  row.success = o.success;
  row.best_iou = o.best_iou;
  row.angle_diff_deg = o.best_angle_diff_deg;
  return row;
}

// Queries the client for every sample with at most `parallelism` requests in flight.
// Rows come back in input order whatever the completion order.
inline FoldReport evaluate_fold(ModelClient& client, std::span<const EvalSample> samples, const MetricThresholds& th,
                                int parallelism = 1, int fold_index = 0) {
  if (parallelism < 1) throw ContractError("evaluate_fold: parallelism must be >= 1");
  if (!th.valid()) throw ContractError("evaluate_fold: invalid thresholds");
  if (!client.concurrent_safe()) parallelism = 1;
  FoldReport report;
  report.fold_index = fold_index;
  report.rows.resize(samples.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < samples.size(); i = next++) {
      const EvalSample& s = samples[i];
      EvalRow& row = report.rows[i];
      std::string reply;
      try {
        if (s.gt_rects.empty()) throw ContractError("sample " + s.id + " has no ground-truth rectangles");
        ChatRequest req;
        req.sample_id = s.id;
        req.image = read_file_bytes(s.image_path);
        req.messages.push_back({"user", s.instruction});
        reply = client.complete(req);
      } catch (const ContractError&) {
        throw;
      } catch (const std::exception& e) {
        row.sample_id = s.id;
        row.status = RowStatus::InfraError;
        row.error = e.what();
        continue;
      }
      row = score_reply(s.id, std::move(reply), s.gt_rects, th, s.width, s.height);
    }
  };
  const std::size_t n_threads = std::min<std::size_t>(static_cast<std::size_t>(parallelism), samples.size());
  if (n_threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(n_threads);
    for (std::size_t t = 0; t < n_threads; ++t) {
      pool.emplace_back([&, t] {
        try {
          worker();
        } catch (...) {
          errors[t] = std::current_exception();
          next = samples.size();
        }
      });
    }
    for (auto& th_ : pool) th_.join();
    for (auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  }
  return report;
}

struct EvalSummary {
  std::string mode;  // "IW" | "OW"
  std::vector<double> fold_accuracies;
  double mean = 0.0;
  double sample_std = 0.0;
  std::size_t infra_errors = 0;
  nlohmann::json fingerprint = nlohmann::json::object();

  nlohmann::json to_json() const {
    return {{"mode", mode},
            {"fold_accuracies", fold_accuracies},
            {"mean", mean},
            {"std", sample_std},
            {"infra_errors", infra_errors},
            {"config", fingerprint}};
  }
};

inline EvalSummary aggregate_accuracies(std::span<const double> acc, std::string mode = {}) {
  if (acc.size() < 2) throw ContractError("aggregate: need at least 2 folds for a sample standard deviation");
  EvalSummary s;
  s.mode = std::move(mode);
  s.fold_accuracies.assign(acc.begin(), acc.end());
  // Welford: constant inputs give exactly zero spread.
  double mean = 0.0, m2 = 0.0;
  std::size_t n = 0;
  for (double a : acc) {
    ++n;
    const double d = a - mean;
    mean += d / static_cast<double>(n);
    m2 += d * (a - mean);
  }
  s.mean = mean;
  s.sample_std = std::sqrt(m2 / static_cast<double>(n - 1));
  return s;
}

inline EvalSummary aggregate(std::span<const FoldReport> reports, std::string mode = {},
                             nlohmann::json fingerprint = nlohmann::json::object()) {
  std::vector<double> acc;
  std::size_t infra = 0;
  for (const auto& r : reports) {
    acc.push_back(r.accuracy());
    infra += r.infra_errors();
  }
  EvalSummary s = aggregate_accuracies(acc, std::move(mode));
  s.infra_errors = infra;
  s.fingerprint = std::move(fingerprint);
  return s;
}

inline std::string format_mean_std(const EvalSummary& s) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.2f\xC2\xB1%.2f", 100.0 * s.mean, 100.0 * s.sample_std);
  return buf;
}

// Accuracy table in percent, one row per method, IW and OW columns.
inline std::string format_table(const std::vector<std::pair<std::string, std::pair<const EvalSummary*, const EvalSummary*>>>& rows) {
  std::size_t w = 6;
  for (const auto& [name, _] : rows) w = std::max(w, name.size());
  auto pad = [](std::string s, std::size_t n) {
    // Width in display columns; the plus-minus sign is two bytes.
    std::size_t cols = 0;
    for (unsigned char c : s) cols += (c & 0xC0) != 0x80;
    if (cols < n) s.append(n - cols, ' ');
    return s;
  };
  std::string out = pad("Method", w) + " | " + pad("Image-Wise (IW)", 15) + " | Object-Wise (OW)\n";
  out += std::string(w, '-') + "-+-" + std::string(15, '-') + "-+-" + std::string(16, '-') + "\n";
  for (const auto& [name, cols] : rows) {
    out += pad(name, w) + " | " + pad(cols.first ? format_mean_std(*cols.first) : "-", 15) + " | " +
           (cols.second ? format_mean_std(*cols.second) : "-") + "\n";
  }
  return out;
}

// ---------------------------------------------------------------------------
// Dataset-driven evaluation

inline EvalSample to_eval_sample(const DatasetRecord& r, const std::filesystem::path& dataset_dir) {
  return {r.id, dataset_dir / r.image, r.instruction, r.width, r.height, r.gt_rects};
}

// Folds are drawn over source images, so all augmented variants of one photo share a fold.
inline FoldAssignment folds_for_records(std::span<const DatasetRecord> records, SplitMode mode, int k, std::uint64_t seed) {
  std::map<std::string, int> objects;
  for (const auto& r : records) objects.emplace(r.source_image_id, r.object_id);
  std::vector<SplitUnit> units;
  for (const auto& [id, obj] : objects) units.push_back({id, obj});
  return split_folds(units, mode, k, seed);
}

struct CrossValidation {
  std::vector<FoldReport> folds;
  EvalSummary summary;
};

struct CrossValidationOptions {
  SplitMode mode = SplitMode::ImageWise;
  int k = 5;
  std::uint64_t seed = 0;
  MetricThresholds thresholds{};
  int parallelism = 1;
  std::optional<std::size_t> limit_per_fold;
  std::optional<FoldAssignment> assignment;  // overrides mode/k/seed when given
};

inline CrossValidation cross_validate(ModelClient& client, std::span<const DatasetRecord> records,
                                      const std::filesystem::path& dataset_dir, const CrossValidationOptions& opt) {
  const FoldAssignment folds = opt.assignment ? *opt.assignment : folds_for_records(records, opt.mode, opt.k, opt.seed);
  std::vector<std::vector<EvalSample>> per_fold(static_cast<std::size_t>(folds.k));
  for (const auto& r : records) {
    auto it = folds.assignment.find(r.source_image_id);
    if (it == folds.assignment.end()) throw ValidationError("record " + r.id + ": source image missing from fold assignment");
    auto& bucket = per_fold[static_cast<std::size_t>(it->second)];
    if (opt.limit_per_fold && bucket.size() >= *opt.limit_per_fold) continue;
    bucket.push_back(to_eval_sample(r, dataset_dir));
  }
  CrossValidation cv;
  for (int f = 0; f < folds.k; ++f) {
    cv.folds.push_back(evaluate_fold(client, per_fold[static_cast<std::size_t>(f)], opt.thresholds, opt.parallelism, f));
  }
  const nlohmann::json fingerprint{{"iou_threshold", opt.thresholds.min_iou},
                                   {"angle_threshold_deg", opt.thresholds.max_angle_deg},
                                   {"split", to_string(folds.mode)},
                                   {"k", folds.k},
                                   {"seed", folds.seed},
                                   {"model", client.model_id()}};
  cv.summary = aggregate(cv.folds, folds.mode == SplitMode::ImageWise ? "IW" : "OW", fingerprint);
  return cv;
}

}  // namespace rtgrasp
