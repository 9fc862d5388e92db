#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>

#include "memoloop/cli.hpp"
#include "support.hpp"

using namespace memoloop;
using namespace testsupport;

namespace {

struct Outcome {
  int code;
  std::string out;
  std::string err;
};

Outcome run(std::vector<std::string> args, const std::string& input = "") {
  args.insert(args.begin(), "memoloop");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::istringstream in(input);
  std::ostringstream out, err;
  const int code = run_cli(static_cast<int>(argv.size()), argv.data(), in, out, err);
  return {code, out.str(), err.str()};
}

std::filesystem::path scratch(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("memoloop_cli_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

void write(const std::filesystem::path& p, const std::string& content) { std::ofstream(p) << content; }

std::string sample(const std::string& file) { return (sample_dir() / file).string(); }

}  // namespace

TEST_CASE("usage errors exit 1 and help exits 0") {
  CHECK(run({}).code == 1);
  CHECK(run({"frobnicate"}).code == 1);
  CHECK(run({"build-data"}).code == 1);
  CHECK(run({"score", "--task", "retrieval"}).code == 1);
  const auto help = run({"--help"});
  CHECK(help.code == 0);
  CHECK(help.out.find("build-data") != std::string::npos);
}

TEST_CASE("score retrieval reports micro precision, recall and F1") {
  const auto dir = scratch("score");
  write(dir / "pred.jsonl", "\"1#2\"\n[3]\n");
  write(dir / "gold.jsonl", "\"1#2#4\"\n{\"selected\": [3]}\n");
  const auto r = run({"score", "--task", "retrieval", "--pred", (dir / "pred.jsonl").string(), "--gold",
                      (dir / "gold.jsonl").string()});
  REQUIRE(r.code == 0);
  const auto doc = nlohmann::json::parse(r.out);
  CHECK(doc["micro"]["p"] == 1.0);
  CHECK(doc["micro"]["r"] == 0.75);
  CHECK(doc["rows"] == 2);
}

TEST_CASE("score writing and response read strings, arrays and objects") {
  const auto dir = scratch("score_writing");
  const std::string gold = golden_json("memo_writing")["answer"];
  write(dir / "gold.jsonl", nlohmann::json(gold).dump() + "\n");
  write(dir / "pred.jsonl", nlohmann::json(writing_gold_records()).dump() + "\n");
  auto r = run({"score", "--task", "writing", "--pred", (dir / "pred.jsonl").string(), "--gold",
                (dir / "gold.jsonl").string()});
  REQUIRE(r.code == 0);
  CHECK(nlohmann::json::parse(r.out)["micro"]["topic"]["f1"] == 1.0);
  CHECK(nlohmann::json::parse(r.out)["micro"]["summary"]["f1"] == 1.0);

  write(dir / "a.jsonl", "\"the cat sat down\"\n");
  write(dir / "b.jsonl", "{\"text\": \"The dog sat up.\"}\n");
  r = run({"score", "--task", "response", "--pred", (dir / "a.jsonl").string(), "--gold", (dir / "b.jsonl").string()});
  REQUIRE(r.code == 0);
  CHECK(nlohmann::json::parse(r.out)["mean"] == 0.5);

  r = run({"score", "--task", "response", "--pred", (dir / "a.jsonl").string(), "--gold", (dir / "b.jsonl").string(),
           "--scorer", "bertscore"});
  CHECK(r.code == 2);
}

TEST_CASE("data errors exit 2") {
  const auto dir = scratch("data_errors");
  auto r = run({"build-data", "--corpus", (dir / "missing.jsonl").string()});
  CHECK(r.code == 2);
  CHECK(r.err.find("does not exist") != std::string::npos);
  write(dir / "one.jsonl", "\"1\"\n");
  write(dir / "two.jsonl", "\"1\"\n\"2\"\n");
  CHECK(run({"score", "--task", "retrieval", "--pred", (dir / "one.jsonl").string(), "--gold",
             (dir / "two.jsonl").string()})
            .code == 2);
  CHECK(run({"build-data", "--corpus", sample("corpus.jsonl"), "--counts", "memo_writing=abc"}).code == 2);
}

TEST_CASE("build-data writes verified instances and a held-out split") {
  const auto dir = scratch("build");
  const auto out = (dir / "train.jsonl").string();
  const auto held = (dir / "eval.jsonl").string();
  auto r = run({"build-data", "--corpus", sample("corpus.jsonl"), "--seed", "3", "--counts",
                "memo_writing=20,memo_retrieval=50,chat_with_memo=30", "--out", out, "--eval-fraction", "0.1",
                "--eval-out", held, "--stats"});
  REQUIRE(r.code == 0);
  CHECK(read_instances(out).size() == 90);
  CHECK(read_instances(held).size() == 10);
  CHECK(r.out.find("Memo Retrieval") != std::string::npos);
  CHECK(r.err.find("skipped 's-short'") != std::string::npos);

  const auto again = run({"build-data", "--corpus", sample("corpus.jsonl"), "--seed", "3", "--task", "memo_retrieval",
                          "--counts", "memo_retrieval=25"});
  REQUIRE(again.code == 0);
  CHECK(again.out == run({"build-data", "--corpus", sample("corpus.jsonl"), "--seed", "3", "--task",
                          "memo_retrieval", "--counts", "memo_retrieval=25"})
                         .out);
}

TEST_CASE("evaluate with scripted backends reports the consistency means") {
  const auto dir = scratch("evaluate");
  const auto report = (dir / "report.json").string();
  const auto r = run({"evaluate", "--cases", sample("cases.jsonl"), "--config", sample("engine.json"), "--out", report,
                      "--jobs", "2"});
  REQUIRE(r.code == 0);
  CHECK(r.out.find("overall 63.67 over 3 case(s)") != std::string::npos);
  const auto doc = read_json(report);
  CHECK(doc["overall"]["mean"] == 63.67);
  CHECK(doc["by_type"]["continuation"]["mean"] == 100.0);
  CHECK(doc["invalid"] == 0);

  const auto no_judge = run({"evaluate", "--cases", sample("cases.jsonl"), "--chat-backend",
                             sample("engine.json")});
  CHECK(no_judge.code != 0);
}

TEST_CASE("chat replays a scripted session and persists it") {
  const auto dir = scratch("chat");
  const auto descriptor = dir / "chat.json";
  write(descriptor, nlohmann::json{{"kind", "scripted"},
                                   {"script", {{{"contains", "Related Evidences"}, {"response", "Hello!"}}}}}
                        .dump());
  auto r = run({"chat", "--chat-backend", descriptor.string(), "--storage", (dir / "store").string(), "--session",
                "demo"},
               "hi there\n/memo\n/quit\n");
  REQUIRE(r.code == 0);
  CHECK(r.out.find("bot: Hello!") != std::string::npos);
  CHECK(r.out.find("\"covered_until\": 0") != std::string::npos);
  SessionStore store(dir / "store");
  REQUIRE(store.load("demo"));
  CHECK(store.load("demo")->session.conversation.size() == 2);

  write(descriptor, R"({"kind": "scripted", "script": []})");
  r = run({"chat", "--chat-backend", descriptor.string()}, "hello\n");
  CHECK(r.code == 3);
  CHECK(r.err.find("error in chat_with_memo") != std::string::npos);
}

TEST_CASE("the installed binary maps errors to exit codes") {
  const std::string cli = MEMOLOOP_CLI_PATH;
  auto status = [](const std::string& cmd) {
    const int raw = std::system((cmd + " >/dev/null 2>&1").c_str());
    return WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  };
  CHECK(status(cli + " --help") == 0);
  CHECK(status(cli + " bogus") == 1);
  CHECK(status(cli + " build-data --corpus /nonexistent/corpus.jsonl") == 2);
  CHECK(status(cli + " score --task retrieval --pred " + sample("cases.jsonl") + " --gold " + sample("cases.jsonl")) ==
        2);
  CHECK(status(cli + " evaluate --cases " + sample("cases.jsonl") + " --config " + sample("engine.json")) == 0);
}
