#pragma once

// Chat-completions client for multi-modal endpoints, multi-turn refinement sessions,
// and export of the reference training configurations for external trainers.

#include <openssl/evp.h>

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cstdint>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "rtgrasp/errors.hpp"
#include "rtgrasp/output_parser.hpp"

namespace rtgrasp {

using json = nlohmann::json;

struct ChatMessage {
  std::string role;  // "system" | "user" | "assistant"
  std::string text;
};

struct ChatRequest {
  std::string sample_id;  // local bookkeeping only, never sent over the wire
  std::vector<std::uint8_t> image;
  std::string media_type = "image/png";
  std::vector<ChatMessage> messages;  // the image is attached to the first user message
  std::optional<double> temperature;
};

class ModelClient {
 public:
  virtual ~ModelClient() = default;
  virtual std::string complete(const ChatRequest& request) = 0;
  // False when calls must be serialized by the caller.
  virtual bool concurrent_safe() const { return true; }
  virtual std::string model_id() const = 0;
};

inline std::string base64_encode(std::span<const std::uint8_t> bytes) {
  std::string out(4 * ((bytes.size() + 2) / 3), '\0');
  const int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()), bytes.data(), static_cast<int>(bytes.size()));
  out.resize(static_cast<std::size_t>(n));
  return out;
}

inline std::vector<std::uint8_t> base64_decode(std::string_view text) {
  std::string clean;
  clean.reserve(text.size());
  for (char c : text) {
    if (c != '\n' && c != '\r' && c != ' ') clean.push_back(c);
  }
  if (clean.size() % 4 != 0) throw ValidationError("base64: length is not a multiple of 4");
  std::vector<std::uint8_t> out(clean.size() / 4 * 3);
  const int n = EVP_DecodeBlock(out.data(), reinterpret_cast<const unsigned char*>(clean.data()), static_cast<int>(clean.size()));
  if (n < 0) throw ValidationError("base64: invalid input");
  std::size_t size = static_cast<std::size_t>(n);
  if (!clean.empty() && clean.back() == '=') --size;
  if (clean.size() > 1 && clean[clean.size() - 2] == '=') --size;
  out.resize(size);
  return out;
}

struct EndpointConfig {
  std::string base_url;
  std::string api_key;
  std::string model_name;
  double timeout_s = 120.0;
  int max_retries = 3;  // total attempts per request
  std::chrono::milliseconds backoff_initial{500};
  double temperature = 0.0;
  int max_tokens = 1024;
  std::size_t max_image_bytes = 20u << 20;

  static constexpr const char* kUrlVar = "RTG_ENDPOINT_URL";
  static constexpr const char* kKeyVar = "RTG_API_KEY";
  static constexpr const char* kModelVar = "RTG_MODEL_NAME";

  void validate() const {
    if (base_url.empty()) throw ValidationError("endpoint: base_url is empty");
    if (!(timeout_s > 0.0)) throw ValidationError("endpoint: timeout must be positive");
    if (max_retries < 1) throw ValidationError("endpoint: max_retries must be >= 1");
  }

  // Reads RTG_ENDPOINT_URL / RTG_MODEL_NAME (required) and RTG_API_KEY (optional).
  static EndpointConfig from_env() {
    EndpointConfig c;
    auto get = [](const char* name) -> std::string {
      const char* v = std::getenv(name);
      return v ? std::string(v) : std::string();
    };
    c.base_url = get(kUrlVar);
    if (c.base_url.empty()) throw ValidationError(std::string("missing environment variable ") + kUrlVar);
    c.model_name = get(kModelVar);
    if (c.model_name.empty()) throw ValidationError(std::string("missing environment variable ") + kModelVar);
    c.api_key = get(kKeyVar);
    return c;
  }

  json redacted() const {
    return {{"base_url", base_url},
            {"model_name", model_name},
            {"api_key", api_key.empty() ? "" : "***"},
            {"timeout_s", timeout_s},
            {"max_retries", max_retries},
            {"temperature", temperature}};
  }
};

// Deterministic request body: identical inputs give byte-identical dumps.
inline json build_chat_payload(const EndpointConfig& cfg, const ChatRequest& req) {
  json messages = json::array();
  bool image_attached = false;
  for (const ChatMessage& m : req.messages) {
    if (m.role == "user" && !image_attached && !req.image.empty()) {
      json content = json::array();
      content.push_back({{"type", "text"}, {"text", m.text}});
      content.push_back({{"type", "image_url"},
                         {"image_url", {{"url", "data:" + req.media_type + ";base64," + base64_encode(req.image)}}}});
      messages.push_back({{"role", m.role}, {"content", std::move(content)}});
      image_attached = true;
    } else {
      messages.push_back({{"role", m.role}, {"content", m.text}});
    }
  }
  return {{"model", cfg.model_name},
          {"messages", std::move(messages)},
          {"temperature", req.temperature.value_or(cfg.temperature)},
          {"max_tokens", cfg.max_tokens}};
}

inline std::string extract_reply_text(const json& body) {
  const json& content = body.at("choices").at(0).at("message").at("content");
  if (content.is_string()) return content.get<std::string>();
  std::string out;
  for (const json& part : content) {
    if (part.value("type", "") == "text") out += part.value("text", "");
  }
  return out;
}

struct ParsedUrl {
  std::string scheme_host_port;
  std::string path_prefix;
};

inline ParsedUrl split_base_url(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw ValidationError("endpoint: base_url needs a scheme (http:// or https://)");
  const auto path_start = url.find('/', scheme_end + 3);
  ParsedUrl out;
  out.scheme_host_port = url.substr(0, path_start);
  out.path_prefix = path_start == std::string::npos ? "" : url.substr(path_start);
  while (!out.path_prefix.empty() && out.path_prefix.back() == '/') out.path_prefix.pop_back();
  return out;
}

class HttpModelClient : public ModelClient {
 public:
  explicit HttpModelClient(EndpointConfig cfg) : cfg_(std::move(cfg)) {
    cfg_.validate();
    url_ = split_base_url(cfg_.base_url);
  }

  std::string complete(const ChatRequest& req) override {
    if (req.image.size() > cfg_.max_image_bytes) {
      throw ValidationError("image of " + std::to_string(req.image.size()) + " bytes exceeds the client limit of " +
                            std::to_string(cfg_.max_image_bytes) + " bytes");
    }
    const std::string body = build_chat_payload(cfg_, req).dump();
    const std::string path = url_.path_prefix + "/chat/completions";
    std::string last_error;
    int last_status = 0;
    for (int attempt = 1; attempt <= cfg_.max_retries; ++attempt) {
      httplib::Client cli(url_.scheme_host_port);
      const auto secs = std::chrono::duration<double>(cfg_.timeout_s);
      cli.set_connection_timeout(std::chrono::duration_cast<std::chrono::microseconds>(secs));
      cli.set_read_timeout(std::chrono::duration_cast<std::chrono::microseconds>(secs));
      cli.set_write_timeout(std::chrono::duration_cast<std::chrono::microseconds>(secs));
      httplib::Headers headers;
      if (!cfg_.api_key.empty()) headers.emplace("Authorization", "Bearer " + cfg_.api_key);
      auto res = cli.Post(path, headers, body, "application/json");
      if (!res) {
        last_error = "transport: " + httplib::to_string(res.error());
        last_status = 0;
      } else if (res->status == 200) {
        try {
          return extract_reply_text(json::parse(res->body));
        } catch (const json::exception& e) {
          throw TransportError(std::string("malformed completion response: ") + e.what(), attempt, res->status);
        }
      } else {
        last_status = res->status;
        last_error = "HTTP " + std::to_string(res->status);
        if (res->status != 429 && res->status < 500) throw TransportError(last_error, attempt, res->status);
      }
      if (attempt < cfg_.max_retries) std::this_thread::sleep_for(cfg_.backoff_initial * (1 << (attempt - 1)));
    }
    throw TransportError(last_error + " after " + std::to_string(cfg_.max_retries) + " attempt(s)", cfg_.max_retries,
                         last_status);
  }

  std::string model_id() const override { return cfg_.model_name; }
  const EndpointConfig& config() const { return cfg_; }

 private:
  EndpointConfig cfg_;
  ParsedUrl url_;
};

inline std::string predict(ModelClient& client, std::span<const std::uint8_t> image, std::string_view instruction,
                           std::string sample_id = {}) {
  ChatRequest req;
  req.sample_id = std::move(sample_id);
  req.image.assign(image.begin(), image.end());
  req.messages.push_back({"user", std::string(instruction)});
  return client.complete(req);
}

// ---------------------------------------------------------------------------
// Refinement sessions

struct SessionTurn {
  std::string role;  // "user" | "assistant"
  std::string text;
  std::optional<ParsedOutput> parsed;  // assistant turns only
};

struct RefinementSession {
  std::string session_id;
  std::string image_id;
  std::string created_at;
  std::vector<SessionTurn> turns;

  std::size_t assistant_turns() const {
    std::size_t n = 0;
    for (const auto& t : turns) n += t.role == "assistant";
    return n;
  }
};

inline std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

inline std::string random_session_id() {
  static std::mutex mu;
  static std::mt19937_64 gen{std::random_device{}()};
  std::lock_guard lock(mu);
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(gen()));
  return buf;
}

inline ChatRequest session_request(const RefinementSession& s, std::span<const std::uint8_t> image) {
  ChatRequest req;
  req.sample_id = s.image_id;
  req.image.assign(image.begin(), image.end());
  for (const auto& t : s.turns) req.messages.push_back({t.role, t.text});
  return req;
}

// Opens a session with the instruction as its first turn and the model's initial answer.
inline RefinementSession start_session(ModelClient& client, std::string image_id, std::span<const std::uint8_t> image,
                                       std::string instruction, std::string session_id = {}) {
  RefinementSession s;
  s.session_id = session_id.empty() ? random_session_id() : std::move(session_id);
  s.image_id = std::move(image_id);
  s.created_at = utc_timestamp();
  s.turns.push_back({"user", std::move(instruction), std::nullopt});
  std::string reply = client.complete(session_request(s, image));
  ParsedOutput parsed = parse_pose(reply);
  s.turns.push_back({"assistant", std::move(reply), std::move(parsed)});
  return s;
}

// Replays the full history plus the new user message. The input session is never modified;
// on endpoint failure the exception propagates and the caller keeps the old session.
inline std::pair<std::string, RefinementSession> refine(ModelClient& client, const RefinementSession& session,
                                                        std::span<const std::uint8_t> image, std::string user_message) {
  if (session.turns.empty()) throw ContractError("refine: session has no initial instruction");
  RefinementSession next = session;
  next.turns.push_back({"user", std::move(user_message), std::nullopt});
  std::string reply = client.complete(session_request(next, image));
  next.turns.push_back({"assistant", reply, parse_pose(reply)});
  return {std::move(reply), std::move(next)};
}

inline json pose_to_json(const GraspPose& p) { return {{"x", p.x}, {"y", p.y}, {"theta", p.theta}}; }

inline GraspPose pose_from_json(const json& j) {
  return {j.at("x").get<double>(), j.at("y").get<double>(), j.at("theta").get<double>()};
}

inline json parsed_to_json(const ParsedOutput& p) {
  return {{"pose", p.pose ? pose_to_json(*p.pose) : json(nullptr)},
          {"reasoning", p.reasoning_text},
          {"span", {p.span_begin, p.span_end}},
          {"diagnostics", p.diagnostics}};
}

inline ParsedOutput parsed_from_json(const json& j) {
  ParsedOutput p;
  if (!j.at("pose").is_null()) p.pose = pose_from_json(j.at("pose"));
  p.reasoning_text = j.value("reasoning", "");
  if (j.contains("span")) {
    p.span_begin = j.at("span").at(0).get<std::size_t>();
    p.span_end = j.at("span").at(1).get<std::size_t>();
  }
  p.diagnostics = j.value("diagnostics", std::vector<std::string>{});
  return p;
}

inline json turn_to_json(const SessionTurn& t) {
  json j{{"role", t.role}, {"text", t.text}};
  if (t.parsed) j["parsed"] = parsed_to_json(*t.parsed);
  return j;
}

inline SessionTurn turn_from_json(const json& j) {
  SessionTurn t{j.at("role").get<std::string>(), j.at("text").get<std::string>(), std::nullopt};
  if (j.contains("parsed")) t.parsed = parsed_from_json(j.at("parsed"));
  return t;
}

// Append-only persistence: <dir>/<session_id>.jsonl, a header line followed by one line per turn.
class SessionStore {
 public:
  explicit SessionStore(std::filesystem::path dir) : dir_(std::move(dir)) { std::filesystem::create_directories(dir_); }

  // Persists turns beyond those already on disk; earlier lines are never rewritten.
  void sync(const RefinementSession& s) {
    std::lock_guard lock(mu_);
    const auto path = file_for(s.session_id);
    std::size_t lines = 0;
    if (std::filesystem::exists(path)) {
      std::ifstream in(path);
      std::string line;
      while (std::getline(in, line)) lines += !line.empty();
    }
    const std::size_t on_disk = lines ? lines - 1 : 0;
    if (on_disk > s.turns.size()) throw ContractError("session store: session shrank");
    std::ofstream out(path, std::ios::app);
    if (!out) throw std::runtime_error("cannot write session file " + path.string());
    if (lines == 0) {
      out << json{{"session_id", s.session_id}, {"image_id", s.image_id}, {"created_at", s.created_at}}.dump() << '\n';
    }
    for (std::size_t i = on_disk; i < s.turns.size(); ++i) out << turn_to_json(s.turns[i]).dump() << '\n';
  }

  std::optional<RefinementSession> load(const std::string& session_id) const {
    std::lock_guard lock(mu_);
    const auto path = file_for(session_id);
    std::ifstream in(path);
    if (!in) return std::nullopt;
    std::string line;
    if (!std::getline(in, line)) return std::nullopt;
    const json header = json::parse(line);
    RefinementSession s{header.at("session_id"), header.at("image_id"), header.at("created_at"), {}};
    while (std::getline(in, line)) {
      if (!line.empty()) s.turns.push_back(turn_from_json(json::parse(line)));
    }
    return s;
  }

  std::vector<std::string> list() const {
    std::vector<std::string> ids;
    for (const auto& e : std::filesystem::directory_iterator(dir_)) {
      if (e.path().extension() == ".jsonl") ids.push_back(e.path().stem().string());
    }
    std::sort(ids.begin(), ids.end());
    return ids;
  }

 private:
  std::filesystem::path file_for(const std::string& id) const {
    for (char c : id) {
      if (!std::isalnum(static_cast<unsigned char>(c)) && c != '-' && c != '_') throw ValidationError("invalid session id");
    }
    return dir_ / (id + ".jsonl");
  }

  std::filesystem::path dir_;
  mutable std::mutex mu_;
};

// ---------------------------------------------------------------------------
// Training configuration export

enum class TrainingStrategy { Pretraining, Lora };

inline std::optional<TrainingStrategy> parse_strategy(std::string_view s) {
  if (s == "pretraining" || s == "pre-training") return TrainingStrategy::Pretraining;
  if (s == "lora") return TrainingStrategy::Lora;
  return std::nullopt;
}

struct TrainingConfig {
  TrainingStrategy strategy = TrainingStrategy::Pretraining;
  int batch_size = 32;
  double learning_rate = 2e-3;
  std::optional<int> lora_rank;
  std::optional<int> lora_alpha;
  std::string base_model = "LLaVA-7B-v0";
  std::string vision_encoder = "CLIP ViT-L/14";

  json to_json() const {
    json j{{"strategy", strategy == TrainingStrategy::Lora ? "lora" : "pretraining"},
           {"batch_size", batch_size},
           {"learning_rate", learning_rate},
           {"base_model", base_model},
           {"vision_encoder", vision_encoder}};
    if (lora_rank) j["lora_rank"] = *lora_rank;
    if (lora_alpha) j["lora_alpha"] = *lora_alpha;
    return j;
  }
};

// Pre-training trains only the projection layer; LoRA adds adapters on all LLM linear layers.
inline TrainingConfig training_config(TrainingStrategy strategy) {
  TrainingConfig c;
  c.strategy = strategy;
  if (strategy == TrainingStrategy::Lora) {
    c.learning_rate = 5e-4;
    c.lora_rank = 64;
    c.lora_alpha = 32;
  }
  return c;
}

}  // namespace rtgrasp
