#include <catch2/catch_amalgamated.hpp>

#include <condition_variable>
#include <future>

#include "memoloop/service.hpp"
#include "support.hpp"

using namespace memoloop;
using namespace testsupport;
using json = nlohmann::json;

namespace {

std::filesystem::path fresh_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("memoloop_" + name);
  std::filesystem::remove_all(dir);
  return dir;
}

EngineConfig engine_at(const std::filesystem::path& dir) {
  EngineConfig c;
  c.storage_path = dir;
  return c;
}

void dump_payload(const std::string& name, const json& body) {
  std::filesystem::create_directories(MEMOLOOP_PAYLOAD_DIR);
  std::ofstream(std::filesystem::path(MEMOLOOP_PAYLOAD_DIR) / (name + ".json")) << body.dump(2) << '\n';
}

json golden_history() { return json::parse(slurp(source_dir() / "data" / "golden_session" / "history.json"))["history"]; }

/// Deterministic stand-in model: one record per chunk, picks option 1,
/// echoes the tail of the user input.
std::shared_ptr<Backend> echo_backend() {
  return std::make_shared<FunctionBackend>([](const CompletionRequest& r) -> std::string {
    if (r.prompt.find("Task Conversation") != std::string::npos) return "[{'topic': 'chunk', 'start': 1, 'end': 1}]";
    if (r.prompt.find("Query Sentence:") != std::string::npos) return "1";
    const auto at = r.prompt.rfind("user: ");
    return "echo " + std::to_string(r.prompt.size()) + " " + r.prompt.substr(at + 6, 20);
  });
}

struct Running {
  Service service;
  httplib::Client client;
  Running(EngineConfig config, std::shared_ptr<Backend> chat)
      : service(std::move(config), std::move(chat)), client("127.0.0.1", service.start_background()) {}
};

std::string create_session(httplib::Client& client, const json& body) {
  auto res = client.Post("/sessions", body.dump(), "application/json");
  REQUIRE(res);
  REQUIRE(res->status == 201);
  return json::parse(res->body)["id"];
}

httplib::Result send(httplib::Client& client, const std::string& id, const std::string& text) {
  return client.Post("/sessions/" + id + "/messages", json{{"text", text}}.dump(), "application/json");
}

}  // namespace

TEST_CASE("the golden script over HTTP yields two memo records and one selected option") {
  const auto dir = fresh_dir("svc_golden");
  auto chat = std::make_shared<ScriptedBackend>(golden_script());
  Running r(engine_at(dir), chat);
  CHECK(json::parse(r.client.Get("/healthz")->body)["status"] == "ok");

  const json create = {{"history", golden_history()}};
  dump_payload("create_request", create);
  const auto id = create_session(r.client, create);
  CHECK(valid_session_id(id));
  dump_payload("create_response", {{"id", id}});

  const json message = {{"text", kGoldenQuestion}};
  dump_payload("message_request", message);
  auto res = r.client.Post("/sessions/" + id + "/messages", message.dump(), "application/json");
  REQUIRE(res);
  REQUIRE(res->status == 200);
  const auto body = json::parse(res->body);
  dump_payload("message_response", body);
  CHECK(body["reply"] == "It was about 30 yuan, and the driver took it slowly since you were not in a hurry.");
  CHECK(body["trace"]["memo_written"] == true);
  CHECK(body["trace"]["selected"] == json::array({2}));
  CHECK(body["trace"]["prompts"]["memo_writing"] == golden_prompt("memo_writing"));

  auto memo = json::parse(r.client.Get("/sessions/" + id + "/memo")->body);
  dump_payload("memo_response", memo);
  REQUIRE(memo["records"].size() == 2);
  CHECK(memo["records"][0]["start"] == 1);
  CHECK(memo["records"][0]["end"] == 8);
  CHECK(memo["records"][1]["start"] == 9);
  CHECK(memo["records"][1]["end"] == 20);
  CHECK(memo["covered_until"] == 20);

  const auto trace = json::parse(r.client.Get("/sessions/" + id + "/trace")->body);
  dump_payload("trace_response", trace);
  CHECK(trace["trace"] == body["trace"]);

  const auto snap = json::parse(r.client.Get("/sessions/" + id)->body);
  dump_payload("session_snapshot", snap);
  CHECK(snap["session"]["conversation"].size() == 22);
  CHECK(r.service.store().snapshot_count(id) == 2);

  CHECK(r.client.Delete("/sessions/" + id)->status == 204);
  CHECK(r.client.Get("/sessions/" + id)->status == 404);
}

TEST_CASE("error responses carry status codes and stages") {
  const auto dir = fresh_dir("svc_errors");
  auto chat = std::make_shared<FunctionBackend>([](const CompletionRequest& r) -> std::string {
    if (r.prompt.find("explode") != std::string::npos) throw BackendError(BackendErrorKind::api, "HTTP 500", 500);
    return "";
  });
  Running r(engine_at(dir), chat);

  auto res = r.client.Get("/sessions/nope/memo");
  CHECK(res->status == 404);
  dump_payload("error_response", json::parse(res->body));
  CHECK(send(r.client, "nope", "hi")->status == 404);

  const auto id = create_session(r.client, json::object());
  CHECK(r.client.Post("/sessions/" + id + "/messages", "not json", "application/json")->status == 400);
  CHECK(send(r.client, id, "")->status == 400);
  CHECK(r.client.Post("/sessions", R"({"history": [{"speaker": "robot", "text": "x"}]})", "application/json")->status ==
        400);

  res = send(r.client, id, "please explode");
  REQUIRE(res->status == 502);
  CHECK(json::parse(res->body)["stage"] == "chat_with_memo");
  res = send(r.client, id, "quiet");
  REQUIRE(res->status == 502);
  CHECK(json::parse(res->body)["stage"] == "chat_with_memo");

  const auto snap = json::parse(r.client.Get("/sessions/" + id)->body);
  CHECK(snap["session"]["conversation"].size() == 2);
  CHECK(snap["session"]["conversation"][1]["text"] == "quiet");

  const auto small = create_session(r.client, {{"config", {{"token_budget", 40}, {"recent_window_lines", 2}}}});
  CHECK(send(r.client, small, std::string(400, 'x'))->status == 422);
}

TEST_CASE("a second message while one is in flight gets 409") {
  const auto dir = fresh_dir("svc_busy");
  std::promise<void> entered;
  std::promise<void> release;
  auto release_future = release.get_future().share();
  std::atomic<bool> first{true};
  auto chat = std::make_shared<FunctionBackend>([&](const CompletionRequest&) -> std::string {
    if (first.exchange(false)) {
      entered.set_value();
      release_future.wait();
    }
    return "done";
  });
  Running r(engine_at(dir), chat);
  const auto id = create_session(r.client, json::object());

  auto slow = std::async(std::launch::async, [&] {
    httplib::Client c("127.0.0.1", r.client.port());
    return send(c, id, "first")->status;
  });
  entered.get_future().wait();
  httplib::Client other("127.0.0.1", r.client.port());
  auto busy = send(other, id, "second");
  CHECK(busy->status == 409);
  CHECK(other.Get("/sessions/" + id + "/memo")->status == 409);
  release.set_value();
  CHECK(slow.get() == 200);
  CHECK(send(other, id, "third")->status == 200);
}

TEST_CASE("sessions survive a restart and the next turn's prompts match an uninterrupted run") {
  const std::vector<std::string> turns = {kGoldenQuestion, "Was the driver friendly?", "What about my sister?",
                                          "Should I write to her again?", "Thanks for the chat."};
  auto model = echo_backend();
  const Pipeline p;

  auto reference = golden_session();
  std::vector<TurnTrace> expected;
  for (const auto& t : turns) expected.push_back(p.handle_user_message(reference, t, *model).trace);

  for (std::size_t cut = 1; cut < turns.size(); ++cut) {
    INFO("restart after turn " << cut);
    const auto dir = fresh_dir("svc_restart");
    std::string id;
    {
      Running before(engine_at(dir), model);
      id = create_session(before.client, {{"history", golden_history()}});
      for (std::size_t i = 0; i < cut; ++i) REQUIRE(send(before.client, id, turns[i])->status == 200);
    }
    Running after(engine_at(dir), model);
    auto res = send(after.client, id, turns[cut]);
    REQUIRE(res->status == 200);
    const auto trace = json::parse(res->body)["trace"];
    CHECK(trace["prompts"] == json(expected[cut]).at("prompts"));
    CHECK(trace == json(expected[cut]));
  }
}

TEST_CASE("the store keeps one file per turn and loads the latest") {
  const auto dir = fresh_dir("store");
  SessionStore store(dir);
  SessionSnapshot snap;
  snap.session = golden_session();
  snap.session.id = "abc";
  store.save(snap);
  snap.session.conversation = snap.session.conversation.appended(Speaker::user, "more");
  store.save(snap);
  CHECK(store.snapshot_count("abc") == 2);
  CHECK(store.load("abc")->session == snap.session);
  CHECK(store.ids() == std::vector<std::string>{"abc"});
  CHECK_FALSE(store.load("zzz").has_value());
  CHECK_FALSE(valid_session_id("../etc"));
  CHECK(new_session_id().size() == 16);
  CHECK(store.remove("abc"));
  CHECK_FALSE(store.exists("abc"));
}
