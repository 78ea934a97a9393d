#include "biasaudit/backend.hpp"

#include <chrono>
#include <cstdlib>
#include <fstream>
#include <iterator>
#include <sstream>

#include <httplib.h>

namespace biasaudit {

using json = nlohmann::json;

namespace {

struct SplitUrl {
  std::string origin;  // scheme://host[:port]
  std::string path;
};

SplitUrl split_url(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) {
    throw BackendError(BackendErrorKind::Transport, "endpoint lacks a scheme: " + url);
  }
  const auto path_start = url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) return {url, "/"};
  return {url.substr(0, path_start), url.substr(path_start)};
}

std::string mime_type_for(const std::filesystem::path& p) {
  auto ext = p.extension().string();
  for (auto& c : ext) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  if (ext == ".jpg" || ext == ".jpeg") return "image/jpeg";
  if (ext == ".webp") return "image/webp";
  if (ext == ".gif") return "image/gif";
  return "image/png";
}

std::string image_data_url(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw BackendError(BackendErrorKind::Protocol, "cannot read page image " + p.string());
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return "data:" + mime_type_for(p) + ";base64," + httplib::detail::base64_encode(bytes);
}

std::optional<std::chrono::milliseconds> retry_after_header(const httplib::Response& res) {
  if (!res.has_header("Retry-After")) return std::nullopt;
  const auto value = res.get_header_value("Retry-After");
  char* end = nullptr;
  const double seconds = std::strtod(value.c_str(), &end);
  if (end == value.c_str() || seconds < 0) return std::nullopt;
  return std::chrono::milliseconds(static_cast<long long>(seconds * 1000.0));
}

}  // namespace

json build_chat_body(const std::string& model, const ModelRequest& request) {
  json user_parts = json::array();
  for (const auto& part : request.user_content) {
    if (part.kind == ContentPart::Kind::Text) {
      user_parts.push_back({{"type", "text"}, {"text", part.text}});
    } else {
      user_parts.push_back({{"type", "image_url"}, {"image_url", {{"url", image_data_url(part.image)}}}});
    }
  }
  json messages = json::array();
  if (!request.system_prompt.empty()) {
    messages.push_back({{"role", "system"}, {"content", request.system_prompt}});
  }
  messages.push_back({{"role", "user"}, {"content", user_parts}});
  return {{"model", model},
          {"messages", messages},
          {"max_tokens", request.max_output_tokens},
          {"temperature", request.temperature}};
}

ModelResponse parse_chat_response(const std::string& body) {
  auto doc = json::parse(body, nullptr, false);
  if (doc.is_discarded() || !doc.is_object()) {
    throw BackendError(BackendErrorKind::Protocol, "response body is not a JSON object");
  }
  ModelResponse out;
  try {
    const auto& content = doc.at("choices").at(0).at("message").at("content");
    if (content.is_string()) {
      out.text = content.get<std::string>();
    } else if (content.is_array()) {
      for (const auto& part : content) {
        if (part.value("type", "") == "text") out.text += part.value("text", "");
      }
    }
  } catch (const json::exception&) {
    throw BackendError(BackendErrorKind::Protocol, "response lacks choices[0].message.content");
  }
  if (out.text.empty()) throw BackendError(BackendErrorKind::Protocol, "response content is empty");
  if (doc.contains("usage") && doc["usage"].is_object()) {
    out.input_tokens = doc["usage"].value("prompt_tokens", std::int64_t{0});
    out.output_tokens = doc["usage"].value("completion_tokens", std::int64_t{0});
  }
  if (out.input_tokens < 0 || out.output_tokens < 0) {
    throw BackendError(BackendErrorKind::Protocol, "negative token usage in response");
  }
  return out;
}

HttpChatBackend::HttpChatBackend(HttpBackendConfig config) : config_(std::move(config)) {}

ModelResponse HttpChatBackend::complete(const ModelRequest& request) {
  const auto [origin, path] = split_url(config_.endpoint);

  httplib::Headers headers;
  if (!config_.credential_env.empty()) {
    const char* key = std::getenv(config_.credential_env.c_str());
    if (key == nullptr || *key == '\0') {
      throw BackendError(BackendErrorKind::Auth, "environment variable " + config_.credential_env + " is not set");
    }
    headers.emplace("Authorization", std::string("Bearer ") + key);
  }

  const std::string body = build_chat_body(config_.model, request).dump();

  httplib::Client client(origin);
  client.set_connection_timeout(std::chrono::seconds(10));
  client.set_read_timeout(config_.timeout);
  client.set_write_timeout(config_.timeout);

  const auto started = std::chrono::steady_clock::now();
  auto res = client.Post(path, headers, body, "application/json");
  const auto elapsed =
      std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - started);

  if (!res) {
    const auto err = res.error();
    const auto message = "request to " + origin + " failed: " + httplib::to_string(err);
    if (err == httplib::Error::ConnectionTimeout || err == httplib::Error::Read) {
      throw BackendError(BackendErrorKind::Timeout, message);
    }
    throw BackendError(BackendErrorKind::Transport, message);
  }
  const int status = res->status;
  if (status == 401 || status == 403) {
    throw BackendError(BackendErrorKind::Auth, "HTTP " + std::to_string(status) + " from " + origin);
  }
  if (status == 429) {
    throw BackendError(BackendErrorKind::RateLimited, "HTTP 429 from " + origin, retry_after_header(*res));
  }
  if (status == 408 || status == 504) {
    throw BackendError(BackendErrorKind::Timeout, "HTTP " + std::to_string(status) + " from " + origin);
  }
  if (status >= 500) {
    throw BackendError(BackendErrorKind::Transport, "HTTP " + std::to_string(status) + " from " + origin);
  }
  if (status != 200) {
    throw BackendError(BackendErrorKind::Protocol, "HTTP " + std::to_string(status) + " from " + origin);
  }
  auto out = parse_chat_response(res->body);
  out.latency_ms = elapsed.count();
  return out;
}

}  // namespace biasaudit
