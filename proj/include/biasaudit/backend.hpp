/// @file backend.hpp
/// @brief Model backend abstraction: request/response types, the error
/// taxonomy, a scripted backend for offline runs, a chat-completion HTTP
/// client, and decorators for transport retry and concurrency limits.

#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <semaphore>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace biasaudit {

struct ContentPart {
  enum class Kind { Text, Image };

  Kind kind = Kind::Text;
  std::string text;
  std::filesystem::path image;

  static ContentPart from_text(std::string t) { return {Kind::Text, std::move(t), {}}; }
  static ContentPart from_image(std::filesystem::path p) { return {Kind::Image, {}, std::move(p)}; }

  bool operator==(const ContentPart&) const = default;
};

struct ModelRequest {
  std::string backend_id;
  std::string system_prompt;
  std::vector<ContentPart> user_content;
  int max_output_tokens = 4096;
  double temperature = 0.2;

  /// System prompt followed by every text part, newline separated.
  std::string joined_text() const;
};

struct ModelResponse {
  std::string text;
  std::int64_t input_tokens = 0;
  std::int64_t output_tokens = 0;
  std::int64_t latency_ms = 0;
};

enum class BackendErrorKind { Timeout, Transport, RateLimited, Auth, Protocol, ScriptExhausted };

std::string_view to_string(BackendErrorKind kind);

class BackendError : public std::runtime_error {
 public:
  BackendError(BackendErrorKind kind, const std::string& message,
               std::optional<std::chrono::milliseconds> retry_after = std::nullopt)
      : std::runtime_error(message), kind_(kind), retry_after_(retry_after) {}

  BackendErrorKind kind() const { return kind_; }
  std::optional<std::chrono::milliseconds> retry_after() const { return retry_after_; }

  /// Timeouts, transport faults and rate limits are worth another attempt.
  bool retryable() const {
    return kind_ == BackendErrorKind::Timeout || kind_ == BackendErrorKind::Transport ||
           kind_ == BackendErrorKind::RateLimited;
  }

 private:
  BackendErrorKind kind_;
  std::optional<std::chrono::milliseconds> retry_after_;
};

/// A model endpoint. Implementations must be safe to call concurrently.
class Backend {
 public:
  virtual ~Backend() = default;
  virtual ModelResponse complete(const ModelRequest& request) = 0;
};

struct ScriptEntry {
  /// When set, the entry only answers requests whose text contains this string.
  std::optional<std::string> match;
  std::string text;
  std::int64_t input_tokens = 0;
  std::int64_t output_tokens = 0;
  /// Simulated transport failure instead of a response.
  std::optional<BackendErrorKind> error;
};

enum class ExhaustionMode { Fail, RepeatLast };

/// Deterministic canned backend. Each request consumes the first unconsumed
/// keyed entry whose `match` occurs in the request text; when none applies,
/// the first unconsumed unkeyed entry. Keyed entries make replay independent
/// of call interleaving across threads.
class ScriptedBackend : public Backend {
 public:
  explicit ScriptedBackend(std::vector<ScriptEntry> script, ExhaustionMode mode = ExhaustionMode::Fail);

  ModelResponse complete(const ModelRequest& request) override;

  std::vector<ModelRequest> calls() const;
  std::size_t call_count() const;
  std::size_t remaining() const;

 private:
  mutable std::mutex mu_;
  std::vector<ScriptEntry> script_;
  std::vector<bool> consumed_;
  ExhaustionMode mode_;
  std::vector<ModelRequest> log_;
};

/// Script file: {"on_exhaustion": "fail"|"repeat_last", "responses": [
///   {"match": "...", "text": "..." | "json": {...}, "input_tokens": n,
///    "output_tokens": n, "error": "timeout"|"transport"|...}]}
std::vector<ScriptEntry> script_from_json(const nlohmann::json& doc, ExhaustionMode* mode = nullptr);
std::shared_ptr<ScriptedBackend> load_scripted_backend(const std::filesystem::path& path);

struct HttpBackendConfig {
  /// Full chat-completions URL, e.g. https://api.example.com/v1/chat/completions
  std::string endpoint;
  std::string model;
  /// Name of the environment variable holding the bearer token; empty for none.
  std::string credential_env;
  std::chrono::seconds timeout{120};
};

/// Speaks the chat-completion wire format over HTTP(S). Page images are sent
/// inline as base64 data URLs.
class HttpChatBackend : public Backend {
 public:
  explicit HttpChatBackend(HttpBackendConfig config);
  ModelResponse complete(const ModelRequest& request) override;

 private:
  HttpBackendConfig config_;
};

nlohmann::json build_chat_body(const std::string& model, const ModelRequest& request);
/// Throws BackendError(Protocol) when the body lacks text content.
ModelResponse parse_chat_response(const std::string& body);

struct RetryPolicy {
  int max_attempts = 3;
  std::chrono::milliseconds base_delay{1000};
};

using Sleeper = std::function<void(std::chrono::milliseconds)>;

/// Transport-level retry with exponential backoff (base, 2*base, ...). A
/// server-provided retry-after wins when longer. Schema retries are handled
/// by the stages, not here.
class RetryingBackend : public Backend {
 public:
  RetryingBackend(std::shared_ptr<Backend> inner, RetryPolicy policy, Sleeper sleeper = {});
  ModelResponse complete(const ModelRequest& request) override;

 private:
  std::shared_ptr<Backend> inner_;
  RetryPolicy policy_;
  Sleeper sleeper_;
};

/// Caps the number of in-flight calls to the wrapped backend.
class ThrottledBackend : public Backend {
 public:
  ThrottledBackend(std::shared_ptr<Backend> inner, int max_in_flight);
  ModelResponse complete(const ModelRequest& request) override;

 private:
  std::shared_ptr<Backend> inner_;
  std::unique_ptr<std::counting_semaphore<>> slots_;
};

}  // namespace biasaudit
