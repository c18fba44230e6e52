#pragma once

// Reasoning/instruction template banks, answer rendering, and dataset materialization.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "rtgrasp/answer_format.hpp"
#include "rtgrasp/augmentation.hpp"
#include "rtgrasp/cornell.hpp"
#include "rtgrasp/errors.hpp"
#include "rtgrasp/image.hpp"
#include "rtgrasp/model_client.hpp"
#include "rtgrasp/output_parser.hpp"
#include "rtgrasp/rng.hpp"

namespace rtgrasp {

struct ReasoningTemplate {
  std::string text;
  bool reviewed = false;

  bool operator==(const ReasoningTemplate&) const = default;
};

struct TemplateBank {
  std::vector<std::string> instructions;
  std::map<std::string, std::vector<ReasoningTemplate>> reasoning;
  std::string fallback = "object";

  bool fully_reviewed() const {
    for (const auto& [_, list] : reasoning) {
      for (const auto& t : list) {
        if (!t.reviewed) return false;
      }
    }
    return true;
  }

  std::size_t unreviewed_count() const {
    std::size_t n = 0;
    for (const auto& [_, list] : reasoning) {
      for (const auto& t : list) n += !t.reviewed;
    }
    return n;
  }

  // Templates for `category`, or the fallback's when the category has none.
  const std::vector<ReasoningTemplate>& resolve(const std::string& category, bool* used_fallback = nullptr) const {
    if (auto it = reasoning.find(category); it != reasoning.end() && !it->second.empty()) {
      if (used_fallback) *used_fallback = false;
      return it->second;
    }
    if (auto it = reasoning.find(fallback); it != reasoning.end() && !it->second.empty()) {
      if (used_fallback) *used_fallback = true;
      return it->second;
    }
    throw ValidationError("template bank: no reasoning templates for '" + category + "' and no fallback '" + fallback + "'");
  }

  nlohmann::json to_json() const {
    nlohmann::json r = nlohmann::json::object();
    for (const auto& [cat, list] : reasoning) {
      nlohmann::json arr = nlohmann::json::array();
      for (const auto& t : list) arr.push_back({{"text", t.text}, {"reviewed", t.reviewed}});
      r[cat] = std::move(arr);
    }
    return {{"status", fully_reviewed() ? "REVIEWED" : "UNREVIEWED"},
            {"fallback", fallback},
            {"instructions", instructions},
            {"reasoning", std::move(r)}};
  }

  // Structural parse only; see validate_bank for content rules. A template given as a bare
  // string, or an object without "reviewed", counts as unreviewed.
  static TemplateBank from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw ValidationError("template bank: expected a JSON object");
    TemplateBank b;
    b.fallback = j.value("fallback", std::string("object"));
    try {
      if (j.contains("instructions")) b.instructions = j.at("instructions").get<std::vector<std::string>>();
      if (j.contains("reasoning")) {
        for (const auto& [cat, arr] : j.at("reasoning").items()) {
          auto& list = b.reasoning[cat];
          for (const auto& t : arr) {
            if (t.is_string()) {
              list.push_back({t.get<std::string>(), false});
            } else {
              list.push_back({t.at("text").get<std::string>(), t.value("reviewed", false)});
            }
          }
        }
      }
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError(std::string("template bank: ") + e.what());
    }
    return b;
  }
};

struct CoverageReport {
  std::vector<std::string> covered;
  std::vector<std::string> via_fallback;
};

struct BankLoad {
  TemplateBank bank;
  CoverageReport coverage;
  std::vector<std::string> warnings;
};

// Content rules: non-empty instruction list, non-empty templates, a fallback entry, no
// pose-like triple inside any reasoning body. With a category map, each of its categories
// must resolve; those resolved through the fallback are reported as warnings.
inline BankLoad validate_bank(TemplateBank bank, const CategoryMap* cmap = nullptr) {
  BankLoad out;
  if (bank.instructions.empty()) throw ValidationError("template bank: no instruction templates");
  for (const auto& s : bank.instructions) {
    if (detail::trim(s).empty()) throw ValidationError("template bank: empty instruction template");
  }
  if (bank.reasoning.empty()) throw ValidationError("template bank: no reasoning templates");
  for (const auto& [cat, list] : bank.reasoning) {
    for (const auto& t : list) {
      if (detail::trim(t.text).empty()) throw ValidationError("template bank: empty reasoning template in '" + cat + "'");
      if (parse_pose(t.text).pose) {
        throw ValidationError("template bank: reasoning template in '" + cat + "' contains a pose-like triple");
      }
    }
  }
  if (cmap) {
    for (const std::string& cat : cmap->categories()) {
      bool fb = false;
      try {
        bank.resolve(cat, &fb);
      } catch (const ValidationError&) {
        throw ValidationError("template bank: category '" + cat + "' has no templates and the bank has no fallback");
      }
      if (fb) {
        out.coverage.via_fallback.push_back(cat);
        out.warnings.push_back("category '" + cat + "' has no templates; using fallback '" + bank.fallback + "'");
      } else {
        out.coverage.covered.push_back(cat);
      }
    }
  }
  auto fb = bank.reasoning.find(bank.fallback);
  if (fb == bank.reasoning.end() || fb->second.empty()) {
    throw ValidationError("template bank: fallback category '" + bank.fallback + "' has no templates");
  }
  out.bank = std::move(bank);
  return out;
}

inline BankLoad load_template_bank(const std::filesystem::path& path, const CategoryMap* cmap = nullptr) {
  const std::string text = detail::read_text(path);
  if (detail::trim(text).empty()) throw ValidationError("template bank " + path.string() + " is empty");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("template bank " + path.string() + ": " + e.what());
  }
  return validate_bank(TemplateBank::from_json(j), cmap);
}

inline void save_template_bank(const std::filesystem::path& path, const TemplateBank& bank,
                               const nlohmann::json& extra = nlohmann::json::object()) {
  nlohmann::json j = bank.to_json();
  for (const auto& [k, v] : extra.items()) j[k] = v;
  const std::string text = j.dump(2) + "\n";
  write_file_bytes(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

inline StructuredAnswer render_answer(const TemplateBank& bank, const std::string& category, const GraspPose& pose,
                                      AnswerVariant variant, Rng& rng) {
  if (variant != AnswerVariant::Full) return compose_answer(variant, pose);
  const auto& list = bank.resolve(category);
  return compose_answer(variant, pose, list[static_cast<std::size_t>(rng.below(list.size()))].text);
}

inline const std::string& render_instruction(const TemplateBank& bank, Rng& rng) {
  if (bank.instructions.empty()) throw ContractError("render_instruction: bank has no instructions");
  return bank.instructions[static_cast<std::size_t>(rng.below(bank.instructions.size()))];
}

// ---------------------------------------------------------------------------
// Dataset records

struct DatasetRecord {
  std::string id;
  std::string image;  // relative to the JSONL file's directory
  std::string category;
  std::string instruction;
  StructuredAnswer answer;
  GraspPose pose;
  AugmentationParams augmentation;
  std::string source_image_id;
  int object_id = 0;
  int width = 0;
  int height = 0;
  std::vector<GraspRectangle> gt_rects;  // every surviving positive, output pixel coordinates
  std::size_t target_rect_index = 0;

  nlohmann::json to_json() const {
    nlohmann::json rects = nlohmann::json::array();
    for (const auto& r : gt_rects) {
      nlohmann::json quad = nlohmann::json::array();
      for (Vec2 v : r.vertices) quad.push_back({v.x, v.y});
      rects.push_back(std::move(quad));
    }
    return {{"id", id},
            {"image", image},
            {"category", category},
            {"instruction", instruction},
            {"answer", answer.full_text},
            {"variant", to_string(answer.variant)},
            {"pose", pose_to_json(pose)},
            {"augmentation",
             {{"rotation", augmentation.rotation},
              {"zoom", augmentation.zoom},
              {"crop_origin", {augmentation.crop_origin.x, augmentation.crop_origin.y}},
              {"crop_size", {augmentation.crop_width, augmentation.crop_height}}}},
            {"source", {{"image_id", source_image_id}, {"object_id", object_id}}},
            {"width", width},
            {"height", height},
            {"gt_rects", std::move(rects)},
            {"target_rect_index", target_rect_index}};
  }

  static DatasetRecord from_json(const nlohmann::json& j) {
    DatasetRecord r;
    try {
      r.id = j.at("id").get<std::string>();
      r.image = j.at("image").get<std::string>();
      r.category = j.value("category", "");
      r.instruction = j.at("instruction").get<std::string>();
      const auto variant = parse_variant(j.value("variant", "full"));
      if (!variant) throw ValidationError("record " + r.id + ": unknown variant");
      r.pose = pose_from_json(j.at("pose"));
      r.answer.variant = *variant;
      r.answer.full_text = j.at("answer").get<std::string>();
      r.answer.pose_text = render_pose_text(r.pose);
      if (*variant == AnswerVariant::Full) {
        const auto sep = r.answer.full_text.rfind(kReasoningSeparator);
        if (sep != std::string::npos) r.answer.reasoning_text = r.answer.full_text.substr(0, sep);
      }
      const auto& aug = j.at("augmentation");
      r.augmentation.rotation = aug.at("rotation").get<double>();
      r.augmentation.zoom = aug.at("zoom").get<double>();
      r.augmentation.crop_origin = {aug.at("crop_origin").at(0).get<double>(), aug.at("crop_origin").at(1).get<double>()};
      r.augmentation.crop_width = aug.at("crop_size").at(0).get<int>();
      r.augmentation.crop_height = aug.at("crop_size").at(1).get<int>();
      r.source_image_id = j.at("source").at("image_id").get<std::string>();
      r.object_id = j.at("source").at("object_id").get<int>();
      r.width = j.at("width").get<int>();
      r.height = j.at("height").get<int>();
      for (const auto& quad : j.at("gt_rects")) {
        GraspRectangle g;
        for (int i = 0; i < 4; ++i) g.vertices[i] = {quad.at(i).at(0).get<double>(), quad.at(i).at(1).get<double>()};
        r.gt_rects.push_back(g);
      }
      r.target_rect_index = j.value("target_rect_index", std::size_t{0});
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError(std::string("dataset record: ") + e.what());
    }
    return r;
  }
};

struct BuildOptions {
  bool strict = true;  // refuse banks with unreviewed templates
  std::optional<std::size_t> max_records;
};

struct BuildReport {
  std::size_t planned = 0;
  std::size_t records = 0;
  std::size_t dropped_variants = 0;
  std::filesystem::path jsonl_path;
  std::filesystem::path images_dir;
  std::vector<std::string> warnings;
};

inline std::string variant_record_id(const std::string& image_id, int variant) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "_%03d", variant);
  return image_id + buf;
}

// Writes <out_path> (JSONL) and <dir of out_path>/images/<id>.png. Output bytes depend only
// on the inputs and cfg.seed. On failure every file this call created is removed.
inline BuildReport build_dataset(std::span<const CornellSample> samples, const AugmentationConfig& cfg,
                                 const TemplateBank& bank, AnswerVariant variant, const std::filesystem::path& out_path,
                                 const BuildOptions& opt = {}) {
  namespace fs = std::filesystem;
  cfg.validate();
  if (opt.strict && !bank.fully_reviewed()) {
    throw ValidationError("template bank has " + std::to_string(bank.unreviewed_count()) +
                          " unreviewed template(s); review them or build in non-strict mode");
  }
  BuildReport report;
  report.jsonl_path = out_path;
  const fs::path root = out_path.has_parent_path() ? out_path.parent_path() : fs::path(".");
  report.images_dir = root / "images";
  const fs::path partial = fs::path(out_path.string() + ".partial");
  std::vector<fs::path> created;
  try {
    fs::create_directories(report.images_dir);
    std::ofstream out(partial, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + partial.string() + " for writing");
    created.push_back(partial);
    const ExpansionPlan plan = expand_dataset(samples, cfg);
    report.planned = plan.planned;
    report.dropped_variants = plan.dropped;
    std::size_t current = samples.size();
    Image8 source;
    for (const PlannedVariant& v : plan.variants) {
      if (opt.max_records && report.records >= *opt.max_records) break;
      const CornellSample& s = samples[v.sample_index];
      if (v.sample_index != current) {
        source = read_png(s.image_path);
        current = v.sample_index;
      }
      DatasetRecord rec;
      rec.id = variant_record_id(s.image_id, v.variant_index);
      rec.image = "images/" + rec.id + ".png";
      rec.category = s.category;
      rec.augmentation = v.params;
      rec.source_image_id = s.image_id;
      rec.object_id = s.object_id;
      rec.width = v.params.crop_width;
      rec.height = v.params.crop_height;
      rec.gt_rects = v.rects;
      rec.target_rect_index = v.target_index;
      rec.pose = quantize_pose(rect_to_pose(v.rects[v.target_index], rec.width, rec.height));

      Rng text_rng(derive_seed(cfg.seed, 0x74657874ULL), stable_hash(rec.id));
      rec.instruction = render_instruction(bank, text_rng);
      rec.answer = render_answer(bank, s.category, rec.pose, variant, text_rng);
      const auto back = parse_pose(rec.answer.full_text).pose;
      if (!back || back->x != rec.pose.x || back->y != rec.pose.y || back->theta != rec.pose.theta) {
        throw ContractError("record " + rec.id + ": answer text does not parse back to its pose");
      }

      const fs::path img_path = root / rec.image;
      write_png(img_path, augment_image(source, v.params));
      created.push_back(img_path);
      out << rec.to_json().dump() << '\n';
      if (!out) throw std::runtime_error("write failed for " + partial.string());
      ++report.records;
    }
    out.close();
    if (!out) throw std::runtime_error("write failed for " + partial.string());
    fs::rename(partial, out_path);
  } catch (...) {
    std::error_code ec;
    for (const auto& p : created) fs::remove(p, ec);
    throw;
  }
  if (report.dropped_variants) {
    report.warnings.push_back(std::to_string(report.dropped_variants) + " variant(s) dropped: no label survived the crop");
  }
  return report;
}

inline std::vector<DatasetRecord> load_records(const std::filesystem::path& jsonl) {
  std::ifstream in(jsonl);
  if (!in) throw IngestError("cannot open dataset " + jsonl.string());
  std::vector<DatasetRecord> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    try {
      out.push_back(DatasetRecord::from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(std::string("dataset: ") + e.what(), line_no);
    } catch (const ValidationError& e) {
      throw FormatError(e.what(), line_no);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Template authoring

struct AuthoringOptions {
  int per_category = 5;
  std::optional<std::filesystem::path> draft_path;  // rewritten after every category
};

struct AuthoringResult {
  TemplateBank bank;
  std::map<std::string, std::string> status;  // category -> refined | draft_only | failed: ... | pending
  std::vector<std::string> checklist;
  bool complete = false;
};

inline std::string draft_prompt(const std::string& category, int n) {
  return "We are building training text for a robot that grasps objects with a two-finger parallel gripper. Write " +
         std::to_string(n) + " distinct short paragraphs about grasping a " + category +
         ". Each paragraph should describe the usual shape and structure of a " + category +
         " and give a general grasping strategy for it. Do not include numbers, coordinates or angles. "
         "Put each paragraph on its own line.";
}

inline std::string refine_prompt(const std::string& category, const std::vector<std::string>& drafts) {
  std::string p = "Below are draft paragraphs about grasping a " + category +
                  ". Refine them: remove redundant or repeated sentences, remove anything irrelevant to the "
                  "object's shape or the grasping strategy, and drop paragraphs that duplicate another. "
                  "Do not include numbers, coordinates or angles. Return one paragraph per line.\n";
  for (std::size_t i = 0; i < drafts.size(); ++i) p += "\n" + std::to_string(i + 1) + ". " + drafts[i];
  return p;
}

// Splits a model reply into template candidates, stripping list markers and dropping
// empty lines, exact duplicates and anything that would parse as a pose.
inline std::vector<std::string> split_template_reply(std::string_view reply) {
  std::vector<std::string> out;
  std::set<std::string> seen;
  std::size_t pos = 0;
  while (pos <= reply.size()) {
    const auto nl = reply.find('\n', pos);
    std::string_view line = reply.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    pos = nl == std::string_view::npos ? reply.size() + 1 : nl + 1;
    line = detail::trim(line);
    std::size_t i = 0;
    while (i < line.size() && detail::is_digit(line[i])) ++i;
    if (i > 0 && i < line.size() && (line[i] == '.' || line[i] == ')')) line.remove_prefix(i + 1);
    else if (!line.empty() && (line[0] == '-' || line[0] == '*')) line.remove_prefix(1);
    line = detail::trim(line);
    if (line.empty() || parse_pose(line).pose) continue;
    std::string s(line);
    if (seen.insert(s).second) out.push_back(std::move(s));
  }
  return out;
}

// Two passes per category: drafts, then a refine request. New templates are unreviewed.
// Stops at the first endpoint failure; what was gathered so far is returned and persisted.
inline AuthoringResult author_templates(ModelClient& client, const std::vector<std::string>& categories,
                                       TemplateBank existing, const AuthoringOptions& opt = {}) {
  AuthoringResult res;
  res.bank = std::move(existing);
  for (const auto& c : categories) res.status[c] = "pending";
  auto persist = [&] {
    if (!opt.draft_path) return;
    save_template_bank(*opt.draft_path, res.bank, {{"authoring_status", res.status}});
  };
  auto ask = [&](const std::string& prompt) {
    ChatRequest req;
    req.sample_id = "templates";
    req.messages.push_back({"user", prompt});
    return client.complete(req);
  };
  for (const std::string& cat : categories) {
    std::vector<std::string> drafts;
    try {
      drafts = split_template_reply(ask(draft_prompt(cat, opt.per_category)));
    } catch (const std::exception& e) {
      res.status[cat] = std::string("failed: ") + e.what();
      persist();
      return res;
    }
    if (drafts.empty()) {
      res.status[cat] = "failed: empty draft reply";
      persist();
      continue;
    }
    std::vector<std::string> final_list;
    bool refine_failed = false;
    try {
      final_list = split_template_reply(ask(refine_prompt(cat, drafts)));
      res.status[cat] = final_list.empty() ? "draft_only" : "refined";
    } catch (const std::exception& e) {
      res.status[cat] = std::string("draft_only: refine failed: ") + e.what();
      refine_failed = true;
    }
    if (final_list.empty()) final_list = drafts;
    auto& list = res.bank.reasoning[cat];
    for (auto& t : final_list) {
      const bool dup = std::any_of(list.begin(), list.end(), [&](const ReasoningTemplate& r) { return r.text == t; });
      if (dup) continue;
      res.checklist.push_back("[ ] " + cat + ": " + t);
      list.push_back({std::move(t), false});
    }
    persist();
    if (refine_failed) return res;
  }
  res.complete = true;
  return res;
}

}  // namespace rtgrasp
