#include "biasaudit/backend.hpp"

#include <algorithm>
#include <fstream>
#include <thread>

namespace biasaudit {

using json = nlohmann::json;

std::string ModelRequest::joined_text() const {
  std::string out = system_prompt;
  for (const auto& part : user_content) {
    if (part.kind == ContentPart::Kind::Text) {
      out += "\n";
      out += part.text;
    }
  }
  return out;
}

std::string_view to_string(BackendErrorKind kind) {
  switch (kind) {
    case BackendErrorKind::Timeout:
      return "timeout";
    case BackendErrorKind::Transport:
      return "transport";
    case BackendErrorKind::RateLimited:
      return "rate_limited";
    case BackendErrorKind::Auth:
      return "auth";
    case BackendErrorKind::Protocol:
      return "protocol";
    case BackendErrorKind::ScriptExhausted:
      return "script_exhausted";
  }
  return "?";
}

namespace {

std::optional<BackendErrorKind> parse_error_kind(std::string_view s) {
  for (auto k : {BackendErrorKind::Timeout, BackendErrorKind::Transport, BackendErrorKind::RateLimited,
                 BackendErrorKind::Auth, BackendErrorKind::Protocol, BackendErrorKind::ScriptExhausted}) {
    if (to_string(k) == s) return k;
  }
  return std::nullopt;
}

}  // namespace

ScriptedBackend::ScriptedBackend(std::vector<ScriptEntry> script, ExhaustionMode mode)
    : script_(std::move(script)), consumed_(script_.size(), false), mode_(mode) {}

ModelResponse ScriptedBackend::complete(const ModelRequest& request) {
  std::lock_guard lock(mu_);
  log_.push_back(request);
  const std::string haystack = request.joined_text();

  auto applies = [&](const ScriptEntry& e) { return !e.match || haystack.find(*e.match) != std::string::npos; };

  std::optional<std::size_t> pick;
  for (std::size_t i = 0; i < script_.size() && !pick; ++i) {
    if (!consumed_[i] && script_[i].match && applies(script_[i])) pick = i;
  }
  for (std::size_t i = 0; i < script_.size() && !pick; ++i) {
    if (!consumed_[i] && !script_[i].match) pick = i;
  }
  if (pick) {
    consumed_[*pick] = true;
  } else if (mode_ == ExhaustionMode::RepeatLast) {
    // Last applicable entry, keyed entries first as above.
    for (std::size_t i = script_.size(); i-- > 0 && !pick;) {
      if (script_[i].match && applies(script_[i])) pick = i;
    }
    for (std::size_t i = script_.size(); i-- > 0 && !pick;) {
      if (!script_[i].match) pick = i;
    }
  }
  if (!pick) {
    throw BackendError(BackendErrorKind::ScriptExhausted,
                       "script exhausted after " + std::to_string(log_.size() - 1) + " calls");
  }

  const ScriptEntry& entry = script_[*pick];
  if (entry.error) {
    throw BackendError(*entry.error, "scripted " + std::string(to_string(*entry.error)) + " failure");
  }
  return {entry.text, entry.input_tokens, entry.output_tokens, 0};
}

std::vector<ModelRequest> ScriptedBackend::calls() const {
  std::lock_guard lock(mu_);
  return log_;
}

std::size_t ScriptedBackend::call_count() const {
  std::lock_guard lock(mu_);
  return log_.size();
}

std::size_t ScriptedBackend::remaining() const {
  std::lock_guard lock(mu_);
  return static_cast<std::size_t>(std::count(consumed_.begin(), consumed_.end(), false));
}

std::vector<ScriptEntry> script_from_json(const json& doc, ExhaustionMode* mode) {
  if (!doc.is_object() || !doc.contains("responses") || !doc["responses"].is_array()) {
    throw std::invalid_argument("script must be an object with a 'responses' array");
  }
  if (mode) {
    const auto on_exhaustion = doc.value("on_exhaustion", std::string("fail"));
    if (on_exhaustion == "fail") {
      *mode = ExhaustionMode::Fail;
    } else if (on_exhaustion == "repeat_last") {
      *mode = ExhaustionMode::RepeatLast;
    } else {
      throw std::invalid_argument("unknown on_exhaustion mode: " + on_exhaustion);
    }
  }
  std::vector<ScriptEntry> entries;
  for (const auto& r : doc["responses"]) {
    ScriptEntry e;
    if (r.contains("match")) e.match = r["match"].get<std::string>();
    if (r.contains("json")) {
      e.text = r["json"].dump();
    } else {
      e.text = r.value("text", std::string());
    }
    e.input_tokens = r.value("input_tokens", std::int64_t{0});
    e.output_tokens = r.value("output_tokens", std::int64_t{0});
    if (r.contains("error")) {
      auto kind = parse_error_kind(r["error"].get<std::string>());
      if (!kind) throw std::invalid_argument("unknown scripted error kind: " + r["error"].get<std::string>());
      e.error = kind;
    }
    entries.push_back(std::move(e));
  }
  return entries;
}

std::shared_ptr<ScriptedBackend> load_scripted_backend(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open script " + path.string());
  ExhaustionMode mode = ExhaustionMode::Fail;
  auto entries = script_from_json(json::parse(in), &mode);
  return std::make_shared<ScriptedBackend>(std::move(entries), mode);
}

RetryingBackend::RetryingBackend(std::shared_ptr<Backend> inner, RetryPolicy policy, Sleeper sleeper)
    : inner_(std::move(inner)), policy_(policy), sleeper_(std::move(sleeper)) {
  if (policy_.max_attempts < 1) throw std::invalid_argument("transport retry needs max_attempts >= 1");
  if (!sleeper_) sleeper_ = [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
}

ModelResponse RetryingBackend::complete(const ModelRequest& request) {
  for (int attempt = 1;; ++attempt) {
    try {
      return inner_->complete(request);
    } catch (const BackendError& e) {
      if (!e.retryable() || attempt >= policy_.max_attempts) throw;
      auto delay = policy_.base_delay * (1LL << (attempt - 1));
      if (auto after = e.retry_after(); after && *after > delay) delay = *after;
      sleeper_(std::chrono::duration_cast<std::chrono::milliseconds>(delay));
    }
  }
}

ThrottledBackend::ThrottledBackend(std::shared_ptr<Backend> inner, int max_in_flight)
    : inner_(std::move(inner)) {
  if (max_in_flight < 1) throw std::invalid_argument("concurrency limit must be >= 1");
  slots_ = std::make_unique<std::counting_semaphore<>>(max_in_flight);
}

ModelResponse ThrottledBackend::complete(const ModelRequest& request) {
  slots_->acquire();
  struct Release {
    std::counting_semaphore<>* s;
    ~Release() { s->release(); }
  } release{slots_.get()};
  return inner_->complete(request);
}

}  // namespace biasaudit
