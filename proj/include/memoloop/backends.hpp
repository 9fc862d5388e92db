#pragma once

// Completion backends. Everything the loop sends to a model goes through
// Backend::complete; the scripted backend replays canned answers for tests
// and offline runs.

#include <cstddef>
#include <deque>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "memoloop/error.hpp"
#include "memoloop/text.hpp"

namespace memoloop {

inline constexpr double kDefaultTemperature = 0.2;
inline constexpr std::size_t kDefaultMaxNewTokens = 512;

struct CompletionRequest {
  std::string prompt;
  double temperature = kDefaultTemperature;
  std::size_t max_new_tokens = kDefaultMaxNewTokens;
  std::optional<std::vector<std::string>> stop;

  void validate() const {
    if (!(temperature >= 0.0 && temperature <= 1.0)) throw DataError("temperature must lie in [0,1]");
    if (max_new_tokens == 0) throw DataError("max_new_tokens must be positive");
  }
};

class Backend {
 public:
  virtual ~Backend() = default;
  virtual std::string complete(const CompletionRequest& request) = 0;
  virtual std::string name() const = 0;
};

/// Counts tokens in a prompt. The default is a conservative heuristic:
/// one token per four characters, rounded up.
using TokenCounter = std::function<std::size_t(std::string_view)>;

inline std::size_t estimate_tokens(std::string_view s) { return (text::utf8_length(s) + 3) / 4; }

struct ScriptedExchange {
  enum class Matcher { next_in_queue, prompt_contains };
  Matcher matcher = Matcher::next_in_queue;
  std::string substring;  // prompt_contains only
  std::string response;
  bool once = false;      // prompt_contains entries are reusable unless set

  static ScriptedExchange next(std::string response) {
    return {Matcher::next_in_queue, {}, std::move(response), true};
  }
  static ScriptedExchange when_contains(std::string substring, std::string response,
                                        bool once = false) {
    return {Matcher::prompt_contains, std::move(substring), std::move(response), once};
  }
};

/// Answers from a script. Substring matchers are consulted first, in
/// declaration order; otherwise the next queued answer is consumed. A request
/// that nothing answers raises ScriptExhausted.
class ScriptedBackend final : public Backend {
 public:
  explicit ScriptedBackend(std::vector<ScriptedExchange> script, std::string name = "scripted")
      : name_(std::move(name)) {
    for (auto& e : script) {
      if (e.matcher == ScriptedExchange::Matcher::next_in_queue) {
        queue_.push_back(std::move(e.response));
      } else {
        matchers_.push_back({std::move(e), false});
      }
    }
  }

  /// Accepts `[...]` or `{"exchanges": [...]}`; each entry is
  /// `{"response": ..., "contains": optional substring, "once": optional bool}`.
  static std::vector<ScriptedExchange> parse_script(const nlohmann::json& doc) {
    const nlohmann::json& list = doc.is_object() ? doc.at("exchanges") : doc;
    if (!list.is_array()) throw DataError("script must be an array of exchanges");
    std::vector<ScriptedExchange> out;
    for (const auto& e : list) {
      if (!e.contains("response") || !e["response"].is_string()) {
        throw DataError("script exchange without a string 'response'");
      }
      if (e.contains("contains")) {
        out.push_back(ScriptedExchange::when_contains(e["contains"].get<std::string>(),
                                                      e["response"].get<std::string>(),
                                                      e.value("once", false)));
      } else {
        out.push_back(ScriptedExchange::next(e["response"].get<std::string>()));
      }
    }
    return out;
  }

  std::string complete(const CompletionRequest& request) override {
    request.validate();
    std::lock_guard lock(mutex_);
    requests_.push_back(request);
    for (auto& [exchange, used] : matchers_) {
      if (used) continue;
      if (request.prompt.find(exchange.substring) != std::string::npos) {
        if (exchange.once) used = true;
        return exchange.response;
      }
    }
    if (queue_.empty()) {
      throw BackendError(BackendErrorKind::script_exhausted,
                         "no scripted answer for prompt starting '" + request.prompt.substr(0, 60) + "'");
    }
    std::string response = std::move(queue_.front());
    queue_.pop_front();
    return response;
  }

  std::string name() const override { return name_; }

  std::vector<CompletionRequest> requests() const {
    std::lock_guard lock(mutex_);
    return requests_;
  }

  std::size_t remaining() const {
    std::lock_guard lock(mutex_);
    return queue_.size();
  }

 private:
  std::string name_;
  mutable std::mutex mutex_;
  std::deque<std::string> queue_;
  std::vector<std::pair<ScriptedExchange, bool>> matchers_;
  std::vector<CompletionRequest> requests_;
};

/// Adapts a callable; handy for tests that need to block or fail on demand.
class FunctionBackend final : public Backend {
 public:
  using Fn = std::function<std::string(const CompletionRequest&)>;
  explicit FunctionBackend(Fn fn, std::string name = "function")
      : fn_(std::move(fn)), name_(std::move(name)) {}

  std::string complete(const CompletionRequest& request) override {
    request.validate();
    return fn_(request);
  }
  std::string name() const override { return name_; }

 private:
  Fn fn_;
  std::string name_;
};

}  // namespace memoloop
