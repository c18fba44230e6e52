#pragma once

// Deterministic stand-ins for a model endpoint, used by tests and `mock-eval`.

#include <functional>
#include <map>
#include <mutex>
#include <string>
#include <vector>

#include "rtgrasp/answer_format.hpp"
#include "rtgrasp/errors.hpp"
#include "rtgrasp/model_client.hpp"

namespace rtgrasp {

inline constexpr std::string_view kMockReasoning =
    "The object sits on a flat surface. The gripper should close across its narrowest part near the center.";

// Answers with the known ground-truth pose of the requested sample, in the full format.
class OracleMock : public ModelClient {
 public:
  explicit OracleMock(std::map<std::string, GraspPose> poses) : poses_(std::move(poses)) {}

  std::string complete(const ChatRequest& req) override {
    auto it = poses_.find(req.sample_id);
    if (it == poses_.end()) throw TransportError("oracle mock: unknown sample " + req.sample_id, 1, 404);
    return compose_answer(AnswerVariant::Full, it->second, std::string(kMockReasoning)).full_text;
  }
  std::string model_id() const override { return "mock-oracle"; }

 private:
  std::map<std::string, GraspPose> poses_;
};

class ConstantMock : public ModelClient {
 public:
  explicit ConstantMock(GraspPose pose) : pose_(pose) {}
  std::string complete(const ChatRequest&) override {
    return compose_answer(AnswerVariant::Full, pose_, std::string(kMockReasoning)).full_text;
  }
  std::string model_id() const override { return "mock-constant"; }

 private:
  GraspPose pose_;
};

// Returns the scripted replies in order, cycling when exhausted. Not safe for concurrent use.
class ScriptedMock : public ModelClient {
 public:
  explicit ScriptedMock(std::vector<std::string> replies) : replies_(std::move(replies)) {
    if (replies_.empty()) throw ContractError("scripted mock: no replies");
  }
  std::string complete(const ChatRequest& req) override {
    std::lock_guard lock(mu_);
    requests_.push_back(req);
    return replies_[next_++ % replies_.size()];
  }
  bool concurrent_safe() const override { return false; }
  std::string model_id() const override { return "mock-scripted"; }

  std::vector<ChatRequest> requests() const {
    std::lock_guard lock(mu_);
    return requests_;
  }

 private:
  std::vector<std::string> replies_;
  std::size_t next_ = 0;
  std::vector<ChatRequest> requests_;
  mutable std::mutex mu_;
};

class GibberishMock : public ModelClient {
 public:
  std::string complete(const ChatRequest&) override {
    return "I cannot see a clear object here, it might be a cup or a box or something else entirely.";
  }
  std::string model_id() const override { return "mock-gibberish"; }
};

// Wraps a callable; handy for failure injection.
class FunctionMock : public ModelClient {
 public:
  using Fn = std::function<std::string(const ChatRequest&)>;
  explicit FunctionMock(Fn fn, bool concurrent = true) : fn_(std::move(fn)), concurrent_(concurrent) {}
  std::string complete(const ChatRequest& req) override { return fn_(req); }
  bool concurrent_safe() const override { return concurrent_; }
  std::string model_id() const override { return "mock-function"; }

 private:
  Fn fn_;
  bool concurrent_;
};

}  // namespace rtgrasp
