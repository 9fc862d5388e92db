#pragma once

// HTTP/JSON front end over pipeline sessions.
//
//   POST   /sessions                 {history?, config?} -> 201 {id}
//   GET    /sessions/{id}            -> snapshot
//   POST   /sessions/{id}/messages   {text} -> {reply, trace}
//   GET    /sessions/{id}/memo       -> {records, covered_until}
//   GET    /sessions/{id}/trace      -> {trace}
//   DELETE /sessions/{id}            -> 204
//   GET    /healthz                  -> {status}
//
// Errors carry {error, stage?}: 400 bad request, 404 unknown session, 409
// message already in flight on the session, 422 prompt budget exceeded,
// 502 backend failure.

#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <utility>

#include <nlohmann/json.hpp>

#include "httplib.h"
#include "memoloop/backends.hpp"
#include "memoloop/config.hpp"
#include "memoloop/json_io.hpp"
#include "memoloop/pipeline.hpp"
#include "memoloop/store.hpp"

namespace memoloop {

class Service {
 public:
  Service(EngineConfig config, std::shared_ptr<Backend> chat, Pipeline pipeline = Pipeline{})
      : config_(std::move(config)),
        chat_(std::move(chat)),
        pipeline_(std::move(pipeline)),
        store_(config_.storage_path) {
    routes();
  }

  ~Service() { stop(); }

  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  /// Blocks serving on the configured address.
  void listen() {
    const auto [host, port] = config_.listen();
    if (!server_.listen(host, port)) throw DataError("cannot listen on " + config_.listen_address);
  }

  /// Binds an ephemeral port and serves on a background thread.
  int start_background(const std::string& host = "127.0.0.1") {
    const int port = server_.bind_to_any_port(host);
    if (port < 0) throw DataError("cannot bind " + host);
    worker_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
    return port;
  }

  void stop() {
    server_.stop();
    if (worker_.joinable()) worker_.join();
  }

  const SessionStore& store() const noexcept { return store_; }

 private:
  struct Slot {
    std::mutex busy;
    SessionSnapshot snap;
  };

  using json = nlohmann::json;

  static void reply_json(httplib::Response& res, int status, const json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
  }

  static void reply_error(httplib::Response& res, int status, const std::string& message,
                          const std::optional<std::string>& stage = std::nullopt) {
    json body = {{"error", message}};
    if (stage) body["stage"] = *stage;
    reply_json(res, status, body);
  }

  std::shared_ptr<Slot> find(const std::string& id) {
    std::lock_guard lock(sessions_mutex_);
    if (auto it = sessions_.find(id); it != sessions_.end()) return it->second;
    auto snap = store_.load(id);
    if (!snap) return nullptr;
    auto slot = std::make_shared<Slot>();
    slot->snap = std::move(*snap);
    sessions_.emplace(id, slot);
    return slot;
  }

  void routes() {
    server_.set_default_headers({{"Access-Control-Allow-Origin", "*"}});
    server_.Options(R"(/.*)", [](const httplib::Request&, httplib::Response& res) {
      res.set_header("Access-Control-Allow-Methods", "GET, POST, DELETE, OPTIONS");
      res.set_header("Access-Control-Allow-Headers", "Content-Type");
      res.status = 204;
    });

    server_.Get("/healthz", [](const httplib::Request&, httplib::Response& res) {
      reply_json(res, 200, {{"status", "ok"}});
    });

    server_.Post("/sessions", [this](const httplib::Request& req, httplib::Response& res) {
      SessionSnapshot snap;
      snap.session.config = config_.pipeline;
      try {
        const json body = req.body.empty() ? json::object() : json::parse(req.body);
        if (body.contains("config")) {
          json merged = snap.session.config;
          merged.update(body["config"]);
          snap.session.config = merged.get<PipelineConfig>();
        }
        if (body.contains("history")) {
          snap.session.conversation = conversation_from_json(body["history"], Alternation::lenient);
        }
      } catch (const json::exception& e) {
        return reply_error(res, 400, std::string("bad request body: ") + e.what());
      } catch (const Error& e) {
        return reply_error(res, 400, e.what());
      }
      auto slot = std::make_shared<Slot>();
      {
        std::lock_guard lock(sessions_mutex_);
        do snap.session.id = new_session_id();
        while (sessions_.contains(snap.session.id) || store_.exists(snap.session.id));
        slot->snap = std::move(snap);
        sessions_.emplace(slot->snap.session.id, slot);
        store_.save(slot->snap);
      }
      reply_json(res, 201, {{"id", slot->snap.session.id}});
    });

    server_.Get(R"(/sessions/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
      auto slot = find(req.matches[1]);
      if (!slot) return reply_error(res, 404, "unknown session");
      std::unique_lock guard(slot->busy, std::try_to_lock);
      if (!guard) return reply_error(res, 409, "a message is in flight on this session");
      reply_json(res, 200, snapshot_to_json(slot->snap));
    });

    server_.Get(R"(/sessions/([^/]+)/memo)", [this](const httplib::Request& req, httplib::Response& res) {
      auto slot = find(req.matches[1]);
      if (!slot) return reply_error(res, 404, "unknown session");
      std::unique_lock guard(slot->busy, std::try_to_lock);
      if (!guard) return reply_error(res, 409, "a message is in flight on this session");
      reply_json(res, 200, json(slot->snap.session.memo));
    });

    server_.Get(R"(/sessions/([^/]+)/trace)", [this](const httplib::Request& req, httplib::Response& res) {
      auto slot = find(req.matches[1]);
      if (!slot) return reply_error(res, 404, "unknown session");
      std::unique_lock guard(slot->busy, std::try_to_lock);
      if (!guard) return reply_error(res, 409, "a message is in flight on this session");
      reply_json(res, 200, {{"trace", slot->snap.last_trace}});
    });

    server_.Delete(R"(/sessions/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
      auto slot = find(req.matches[1]);
      if (!slot) return reply_error(res, 404, "unknown session");
      std::unique_lock guard(slot->busy, std::try_to_lock);
      if (!guard) return reply_error(res, 409, "a message is in flight on this session");
      {
        std::lock_guard lock(sessions_mutex_);
        sessions_.erase(slot->snap.session.id);
        store_.remove(slot->snap.session.id);
      }
      res.status = 204;
    });

    server_.Post(R"(/sessions/([^/]+)/messages)", [this](const httplib::Request& req, httplib::Response& res) {
      auto slot = find(req.matches[1]);
      if (!slot) return reply_error(res, 404, "unknown session");
      std::unique_lock guard(slot->busy, std::try_to_lock);
      if (!guard) return reply_error(res, 409, "a message is in flight on this session");

      std::string text;
      try {
        text = json::parse(req.body).at("text").get<std::string>();
      } catch (const json::exception& e) {
        return reply_error(res, 400, std::string("expected {\"text\": string}: ") + e.what());
      }
      if (text.empty()) return reply_error(res, 400, "text must be non-empty");

      auto& snap = slot->snap;
      try {
        auto turn = pipeline_.handle_user_message(snap.session, text, *chat_);
        snap.last_trace = turn.trace;
        store_.save(snap);
        reply_json(res, 200, {{"reply", turn.reply}, {"trace", snap.last_trace}});
      } catch (const StageError& e) {
        store_.save(snap);
        reply_error(res, 502, e.what(), e.stage());
      } catch (const BudgetError& e) {
        store_.save(snap);
        reply_error(res, 422, e.what());
      } catch (const Error& e) {
        store_.save(snap);
        reply_error(res, 400, e.what());
      }
    });
  }

  EngineConfig config_;
  std::shared_ptr<Backend> chat_;
  Pipeline pipeline_;
  SessionStore store_;
  httplib::Server server_;
  std::thread worker_;
  std::mutex sessions_mutex_;
  std::map<std::string, std::shared_ptr<Slot>> sessions_;
};

}  // namespace memoloop
