#pragma once

// Chat-completions client and the descriptor-driven backend factory.

#include <chrono>
#include <cstdlib>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <thread>
#include <utility>

#include <nlohmann/json.hpp>

#include "httplib.h"
#include "memoloop/backends.hpp"
#include "memoloop/error.hpp"

namespace memoloop {

struct RetryPolicy {
  std::size_t max_retries = 3;
  std::chrono::milliseconds base_delay{500};

  /// Delay before retry number `attempt` (0-based): base * 2^attempt.
  std::chrono::milliseconds delay(std::size_t attempt) const {
    return base_delay * (std::int64_t{1} << std::min<std::size_t>(attempt, 20));
  }
};

enum class BackendKind { remote_chat_api, scripted };

struct BackendDescriptor {
  BackendKind kind = BackendKind::scripted;
  std::optional<std::string> endpoint;
  std::optional<std::string> model_name;
  std::optional<std::string> auth_env;  // name of the environment variable holding the key
  RetryPolicy retry;
  std::chrono::seconds timeout{120};
  std::vector<ScriptedExchange> script;

  void validate() const {
    if (kind == BackendKind::remote_chat_api && (!endpoint || !model_name)) {
      throw BackendError(BackendErrorKind::config, "remote backend requires endpoint and model name");
    }
  }
};

/// Splits "http://host:port/v1/chat/completions" into origin and path. A bare
/// origin gets the conventional chat-completions path.
inline std::pair<std::string, std::string> split_endpoint(const std::string& url) {
  const auto scheme = url.find("://");
  if (scheme == std::string::npos) {
    throw BackendError(BackendErrorKind::config, "endpoint '" + url + "' lacks a scheme");
  }
  const auto slash = url.find('/', scheme + 3);
  if (slash == std::string::npos) return {url, "/v1/chat/completions"};
  std::string path = url.substr(slash);
  if (path == "/") path = "/v1/chat/completions";
  return {url.substr(0, slash), path};
}

class RemoteChatBackend final : public Backend {
 public:
  using Sleeper = std::function<void(std::chrono::milliseconds)>;

  explicit RemoteChatBackend(BackendDescriptor descriptor, Sleeper sleeper = {})
      : descriptor_(std::move(descriptor)), sleeper_(std::move(sleeper)) {
    descriptor_.validate();
    std::tie(origin_, path_) = split_endpoint(*descriptor_.endpoint);
    if (descriptor_.auth_env) {
      if (const char* key = std::getenv(descriptor_.auth_env->c_str())) api_key_ = key;
    }
    if (!sleeper_) sleeper_ = [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
  }

  /// Request body in the chat-completions wire format; the prompt travels
  /// unchanged as the single user message.
  nlohmann::json payload(const CompletionRequest& request) const {
    nlohmann::json body = {
        {"model", *descriptor_.model_name},
        {"messages", nlohmann::json::array({{{"role", "user"}, {"content", request.prompt}}})},
        {"temperature", request.temperature},
        {"max_tokens", request.max_new_tokens},
    };
    if (request.stop) body["stop"] = *request.stop;
    return body;
  }

  std::string complete(const CompletionRequest& request) override {
    request.validate();
    const std::string body = payload(request).dump();
    httplib::Headers headers;
    if (!api_key_.empty()) headers.emplace("Authorization", "Bearer " + api_key_);

    for (std::size_t attempt = 0;; ++attempt) {
      httplib::Client client(origin_);
      client.set_connection_timeout(descriptor_.timeout);
      client.set_read_timeout(descriptor_.timeout);
      client.set_write_timeout(descriptor_.timeout);
      auto res = client.Post(path_, headers, body, "application/json");
      if (!res) {
        if (attempt < descriptor_.retry.max_retries) {
          sleeper_(descriptor_.retry.delay(attempt));
          continue;
        }
        throw BackendError(BackendErrorKind::transport,
                           httplib::to_string(res.error()) + " after " +
                               std::to_string(attempt + 1) + " attempt(s) to " + origin_ + path_);
      }
      if (res->status < 200 || res->status >= 300) {
        throw BackendError(BackendErrorKind::api,
                           "HTTP " + std::to_string(res->status) + ": " + res->body, res->status);
      }
      return extract_content(res->body, res->status);
    }
  }

  std::string name() const override { return "remote:" + *descriptor_.model_name; }

 private:
  static std::string extract_content(const std::string& body, int status) {
    try {
      const auto doc = nlohmann::json::parse(body);
      const auto& content = doc.at("choices").at(0).at("message").at("content");
      if (!content.is_string()) throw BackendError(BackendErrorKind::api, "content is not a string", status);
      return content.get<std::string>();
    } catch (const nlohmann::json::exception& e) {
      throw BackendError(BackendErrorKind::api, std::string("malformed completion body: ") + e.what(),
                         status);
    }
  }

  BackendDescriptor descriptor_;
  Sleeper sleeper_;
  std::string origin_;
  std::string path_;
  std::string api_key_;
};

inline std::shared_ptr<Backend> make_backend(const BackendDescriptor& descriptor) {
  descriptor.validate();
  switch (descriptor.kind) {
    case BackendKind::remote_chat_api: return std::make_shared<RemoteChatBackend>(descriptor);
    case BackendKind::scripted: return std::make_shared<ScriptedBackend>(descriptor.script);
  }
  throw BackendError(BackendErrorKind::config, "unknown backend kind");
}

/// One-shot convenience over make_backend.
inline std::string complete(const BackendDescriptor& descriptor, const CompletionRequest& request) {
  return make_backend(descriptor)->complete(request);
}

}  // namespace memoloop
