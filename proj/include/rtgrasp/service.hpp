#pragma once

// HTTP service behind the refinement console: sample listing, image bytes, one-shot
// prediction and multi-turn refinement sessions. Every pose in a response carries the
// overlay rectangle computed from that same pose.

#include <cstdio>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <shared_mutex>
#include <string>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "rtgrasp/eval.hpp"
#include "rtgrasp/geometry.hpp"
#include "rtgrasp/image.hpp"
#include "rtgrasp/model_client.hpp"
#include "rtgrasp/output_parser.hpp"
#include "rtgrasp/templates.hpp"

namespace rtgrasp {

inline constexpr std::string_view kDefaultInstruction = "Predict a grasp pose for the object in this image.";

struct ServiceConfig {
  std::optional<std::filesystem::path> dataset;     // JSONL written by build-dataset
  std::optional<std::filesystem::path> image_root;  // extra PNGs, id = file stem
  std::optional<std::filesystem::path> folds;       // FoldAssignment JSON; otherwise derived
  SplitMode split_mode = SplitMode::ImageWise;
  int k = 5;
  std::uint64_t seed = 0;
  std::filesystem::path session_dir = "sessions";
  std::optional<std::filesystem::path> static_dir;
  double overlay_width = 150.0;  // display stand-in for the gripper opening, pixels
  double overlay_plate = 60.0;
  std::size_t max_upload_bytes = 20u << 20;
};

struct ServiceSample {
  std::string id;
  std::filesystem::path image_path;
  int width = 0;
  int height = 0;
  std::string instruction;
  std::string category;
  std::optional<int> fold;
};

class GraspService {
 public:
  GraspService(ServiceConfig cfg, std::shared_ptr<ModelClient> client)
      : cfg_(std::move(cfg)), client_(std::move(client)), store_(cfg_.session_dir) {
    if (!client_) throw ContractError("service: no model client");
    if (!(cfg_.overlay_width > 0 && cfg_.overlay_plate > 0)) throw ValidationError("service: overlay dims must be positive");
    load_index();
  }

  const std::map<std::string, ServiceSample>& samples() const { return samples_; }

  nlohmann::json overlay_for(const GraspPose& p, int width, int height) const {
    const GraspRectangle r = pose_to_rect(p, cfg_.overlay_width, cfg_.overlay_plate, width, height);
    nlohmann::json corners = nlohmann::json::array();
    for (Vec2 v : r.vertices) corners.push_back({v.x, v.y});
    return {{"corners", std::move(corners)},
            {"width", cfg_.overlay_width},
            {"plate", cfg_.overlay_plate},
            {"image_width", width},
            {"image_height", height}};
  }

  void mount(httplib::Server& srv) {
    srv.Get("/healthz", [this](const httplib::Request&, httplib::Response& res) {
      send_json(res, 200, {{"status", "ok"}, {"model", client_->model_id()}, {"samples", samples_.size()}});
    });
    srv.Get("/api/samples", [this](const httplib::Request& req, httplib::Response& res) { list_samples(req, res); });
    srv.Get(R"(/api/image/([A-Za-z0-9_.\-]+))", [this](const httplib::Request& req, httplib::Response& res) {
      const auto* s = find_sample(req.matches[1]);
      if (!s) return send_error(res, 404, "unknown image " + std::string(req.matches[1]));
      try {
        const auto bytes = read_file_bytes(s->image_path);
        res.set_content(std::string(bytes.begin(), bytes.end()), "image/png");
      } catch (const std::exception& e) {
        send_error(res, 500, e.what());
      }
    });
    srv.Post("/api/predict", [this](const httplib::Request& req, httplib::Response& res) { guarded(res, [&] { predict(req, res); }); });
    srv.Post("/api/session", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] { create_session(req, res); });
    });
    srv.Post(R"(/api/session/([A-Za-z0-9_\-]+)/refine)", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] { refine_session(req.matches[1], req, res); });
    });
    srv.Get(R"(/api/session/([A-Za-z0-9_\-]+))", [this](const httplib::Request& req, httplib::Response& res) {
      auto entry = find_session(req.matches[1]);
      if (!entry) return send_error(res, 404, "unknown session " + std::string(req.matches[1]));
      std::shared_lock lock(entry->read_mu);
      send_json(res, 200, session_view(entry->session));
    });
    if (cfg_.static_dir) {
      if (!srv.set_mount_point("/", cfg_.static_dir->string())) {
        throw ValidationError("static directory " + cfg_.static_dir->string() + " does not exist");
      }
    }
  }

 private:
  struct SessionEntry {
    RefinementSession session;
    std::mutex writer;              // single writer; contention answers 409
    std::shared_mutex read_mu;      // guards `session` for concurrent readers
  };

  static void send_json(httplib::Response& res, int status, const nlohmann::json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
  }
  static void send_error(httplib::Response& res, int status, const std::string& message) {
    send_json(res, status, {{"error", message}});
  }

  template <typename F>
  void guarded(httplib::Response& res, F&& f) {
    try {
      f();
    } catch (const TransportError& e) {
      send_json(res, 502, {{"error", e.what()}, {"attempts", e.attempts}, {"status", e.status}});
    } catch (const ValidationError& e) {
      send_error(res, 400, e.what());
    } catch (const nlohmann::json::exception& e) {
      send_error(res, 400, std::string("bad request body: ") + e.what());
    } catch (const std::exception& e) {
      send_error(res, 500, e.what());
    }
  }

  void load_index() {
    if (cfg_.dataset) {
      const auto records = load_records(*cfg_.dataset);
      const auto dir = cfg_.dataset->has_parent_path() ? cfg_.dataset->parent_path() : std::filesystem::path(".");
      std::optional<FoldAssignment> folds;
      if (cfg_.folds) {
        folds = FoldAssignment::from_json(nlohmann::json::parse(detail::read_text(*cfg_.folds)));
      } else if (!records.empty()) {
        std::set<std::string> sources;
        for (const auto& r : records) sources.insert(r.source_image_id);
        if (sources.size() >= static_cast<std::size_t>(cfg_.k)) folds = folds_for_records(records, cfg_.split_mode, cfg_.k, cfg_.seed);
      }
      for (const auto& r : records) {
        ServiceSample s{r.id, dir / r.image, r.width, r.height, r.instruction, r.category, std::nullopt};
        if (folds) {
          if (auto it = folds->assignment.find(r.source_image_id); it != folds->assignment.end()) s.fold = it->second;
        }
        samples_.emplace(r.id, std::move(s));
      }
    }
    if (cfg_.image_root) {
      for (const auto& e : std::filesystem::recursive_directory_iterator(*cfg_.image_root)) {
        if (!e.is_regular_file() || e.path().extension() != ".png") continue;
        const std::string id = e.path().stem().string();
        if (samples_.count(id)) continue;
        const ImageSize sz = read_png_size(e.path());
        samples_.emplace(id, ServiceSample{id, e.path(), sz.width, sz.height, std::string(kDefaultInstruction), "", std::nullopt});
      }
    }
  }

  const ServiceSample* find_sample(const std::string& id) const {
    auto it = samples_.find(id);
    return it == samples_.end() ? nullptr : &it->second;
  }

  void list_samples(const httplib::Request& req, httplib::Response& res) const {
    std::optional<int> fold;
    if (req.has_param("fold")) {
      try {
        fold = std::stoi(req.get_param_value("fold"));
      } catch (const std::exception&) {
        return send_error(res, 400, "fold must be an integer");
      }
    }
    nlohmann::json items = nlohmann::json::array();
    for (const auto& [id, s] : samples_) {
      if (fold && s.fold != fold) continue;
      items.push_back({{"id", id},
                       {"width", s.width},
                       {"height", s.height},
                       {"category", s.category},
                       {"fold", s.fold ? nlohmann::json(*s.fold) : nlohmann::json(nullptr)},
                       {"image_url", "/api/image/" + id}});
    }
    send_json(res, 200, {{"samples", std::move(items)}});
  }

  nlohmann::json pose_block(const std::optional<GraspPose>& p, int w, int h) const {
    if (!p) return {{"pose", nullptr}, {"overlay", nullptr}};
    return {{"pose", pose_to_json(*p)}, {"overlay", overlay_for(*p, w, h)}};
  }

  nlohmann::json reply_view(const std::string& raw, int w, int h) const {
    const ParsedOutput parsed = parse_pose(raw);
    nlohmann::json j = pose_block(parsed.pose, w, h);
    j["raw"] = raw;
    j["reasoning"] = parsed.reasoning_text;
    j["diagnostics"] = parsed.diagnostics;
    return j;
  }

  void predict(const httplib::Request& req, httplib::Response& res) {
    const nlohmann::json body = req.body.empty() ? nlohmann::json::object() : nlohmann::json::parse(req.body);
    std::vector<std::uint8_t> image;
    std::string instruction = body.value("instruction", "");
    std::string sample_id;
    if (body.contains("image_id")) {
      sample_id = body.at("image_id").get<std::string>();
      const auto* s = find_sample(sample_id);
      if (!s) return send_error(res, 404, "unknown image " + sample_id);
      image = read_file_bytes(s->image_path);
      if (instruction.empty()) instruction = s->instruction;
    } else if (body.contains("upload")) {
      image = base64_decode(body.at("upload").get<std::string>());
      if (image.size() > cfg_.max_upload_bytes) {
        return send_error(res, 413, "upload exceeds " + std::to_string(cfg_.max_upload_bytes) + " bytes");
      }
    } else {
      return send_error(res, 400, "request needs image_id or upload");
    }
    if (instruction.empty()) instruction = std::string(kDefaultInstruction);
    const ImageSize sz = png_size(image);
    const std::string raw = rtgrasp::predict(*client_, image, instruction, sample_id);
    nlohmann::json out = reply_view(raw, sz.width, sz.height);
    out["image_id"] = sample_id.empty() ? nlohmann::json(nullptr) : nlohmann::json(sample_id);
    out["instruction"] = instruction;
    out["role"] = "initial";
    send_json(res, 200, out);
  }

  nlohmann::json session_view(const RefinementSession& s) const {
    const auto* sample = find_sample(s.image_id);
    const int w = sample ? sample->width : 0;
    const int h = sample ? sample->height : 0;
    nlohmann::json history = nlohmann::json::array();
    std::optional<std::size_t> initial, latest;
    for (std::size_t i = 0; i < s.turns.size(); ++i) {
      const SessionTurn& t = s.turns[i];
      nlohmann::json turn{{"index", i}, {"role", t.role}, {"text", t.text}};
      if (t.role == "assistant") {
        const std::optional<GraspPose> p = t.parsed ? t.parsed->pose : std::nullopt;
        turn.update(pose_block(p, w, h));
        if (p) {
          if (!initial) initial = i;
          latest = i;
        }
      }
      history.push_back(std::move(turn));
    }
    auto marker = [&](std::optional<std::size_t> idx) -> nlohmann::json {
      if (!idx) return nullptr;
      nlohmann::json j = pose_block(s.turns[*idx].parsed->pose, w, h);
      j["turn"] = *idx;
      return j;
    };
    return {{"session_id", s.session_id},
            {"image_id", s.image_id},
            {"created_at", s.created_at},
            {"history", std::move(history)},
            {"initial", marker(initial)},
            {"latest", marker(latest)}};
  }

  std::shared_ptr<SessionEntry> find_session(const std::string& id) {
    {
      std::shared_lock lock(sessions_mu_);
      if (auto it = sessions_.find(id); it != sessions_.end()) return it->second;
    }
    auto loaded = store_.load(id);
    if (!loaded) return nullptr;
    std::unique_lock lock(sessions_mu_);
    auto [it, inserted] = sessions_.try_emplace(id, std::make_shared<SessionEntry>());
    if (inserted) it->second->session = std::move(*loaded);
    return it->second;
  }

  void create_session(const httplib::Request& req, httplib::Response& res) {
    const nlohmann::json body = nlohmann::json::parse(req.body.empty() ? "{}" : req.body);
    const std::string image_id = body.value("image_id", "");
    const auto* s = find_sample(image_id);
    if (!s) return send_error(res, 404, "unknown image " + image_id);
    const std::string instruction = body.value("instruction", s->instruction.empty() ? std::string(kDefaultInstruction) : s->instruction);
    const auto image = read_file_bytes(s->image_path);
    RefinementSession session = start_session(*client_, image_id, image, instruction);
    store_.sync(session);
    auto entry = std::make_shared<SessionEntry>();
    entry->session = std::move(session);
    nlohmann::json view = session_view(entry->session);
    view.update(reply_view(entry->session.turns.back().text, s->width, s->height));
    {
      std::unique_lock lock(sessions_mu_);
      sessions_[entry->session.session_id] = entry;
    }
    send_json(res, 201, view);
  }

  void refine_session(const std::string& id, const httplib::Request& req, httplib::Response& res) {
    auto entry = find_session(id);
    if (!entry) return send_error(res, 404, "unknown session " + id);
    std::unique_lock writer(entry->writer, std::try_to_lock);
    if (!writer.owns_lock()) return send_error(res, 409, "a refinement is already running for session " + id);
    const nlohmann::json body = nlohmann::json::parse(req.body.empty() ? "{}" : req.body);
    const std::string message = body.value("message", "");
    if (message.empty()) return send_error(res, 400, "message is required");
    const auto* s = find_sample(entry->session.image_id);
    if (!s) return send_error(res, 404, "session image " + entry->session.image_id + " is no longer available");
    const auto image = read_file_bytes(s->image_path);
    auto [raw, next] = refine(*client_, entry->session, image, message);
    store_.sync(next);
    {
      std::unique_lock lock(entry->read_mu);
      entry->session = std::move(next);
    }
    nlohmann::json view = session_view(entry->session);
    view.update(reply_view(raw, s->width, s->height));
    send_json(res, 200, view);
  }

  ServiceConfig cfg_;
  std::shared_ptr<ModelClient> client_;
  SessionStore store_;
  std::map<std::string, ServiceSample> samples_;
  std::shared_mutex sessions_mu_;
  std::map<std::string, std::shared_ptr<SessionEntry>> sessions_;
};

}  // namespace rtgrasp
