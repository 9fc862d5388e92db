#include <catch2/catch_amalgamated.hpp>

#include "support.hpp"

using namespace memoloop;
using namespace testsupport;

TEST_CASE("memo-writing prompt matches the transcribed exemplar byte for byte") {
  const auto doc = golden_json("memo_writing");
  const auto lines = lines_of(doc["lines"]);
  const auto prompt = render_memo_writing(lines);
  CHECK(prompt.text == golden_prompt("memo_writing"));
  CHECK(prompt.text.find("(line 20) bot: Yes, sir.") != std::string::npos);
  CHECK(prompt.intro_offset == 0);
  CHECK(prompt.intro_offset < prompt.body_offset);
  CHECK(prompt.body_offset < prompt.explanation_offset);
}

TEST_CASE("memo-retrieval prompt matches the transcribed exemplar byte for byte") {
  const auto doc = golden_json("memo_retrieval");
  const auto prompt = render_memo_retrieval(doc["query"].get<std::string>(), golden_options(doc));
  CHECK(prompt.text == golden_prompt("memo_retrieval"));
  CHECK(prompt.text.find("the output is: N#M.") != std::string::npos);
  CHECK(prompt.text.find("(3) NOTO. None of the others.") != std::string::npos);
}

TEST_CASE("chat-with-memo prompt matches the transcribed exemplar byte for byte") {
  const auto doc = golden_json("chat_with_memo");
  const auto recent = lines_of(doc["recent"]);
  const auto prompt = render_chat_with_memo(golden_evidence(doc), recent, doc["user_input"].get<std::string>());
  CHECK(prompt.text == golden_prompt("chat_with_memo"));
  CHECK(prompt.text.ends_with("user: What is your salary now? ### bot:"));
}

TEST_CASE("judge prompt matches the transcribed exemplar byte for byte") {
  const auto doc = golden_json("judge");
  const auto prompt = render_judge(lines_of(doc["history"]), doc["question"].get<std::string>(),
                                   doc["response"].get<std::string>());
  CHECK(prompt.text == golden_prompt("judge"));
  CHECK(prompt.text.find("[[rating]]") != std::string::npos);
}

TEST_CASE("the task explanation follows the input body in every template") {
  for (Task t : {Task::memo_writing, Task::memo_retrieval, Task::chat_with_memo, Task::judge}) {
    const auto& segs = TemplateSet::builtin().get(t).segments();
    std::vector<std::string> order;
    for (const auto& s : segs) {
      if (s.kind == Segment::Kind::section) order.push_back(s.value);
    }
    CHECK(order == std::vector<std::string>{"intro", "body", "explanation"});
  }
}

TEST_CASE("templates loaded from the asset directory equal the embedded ones") {
  const auto loaded = TemplateSet::load(source_dir() / "templates" / "v1");
  CHECK(loaded.version() == "v1");
  const auto doc = golden_json("memo_writing");
  const auto lines = lines_of(doc["lines"]);
  CHECK(render_memo_writing(lines, loaded).text == render_memo_writing(lines).text);
}

TEST_CASE("template parsing and binding errors") {
  SECTION("explanation before body is rejected") {
    CHECK_THROWS_AS(PromptTemplate::parse(Task::judge, "{{@intro}}a{{@explanation}}b{{@body}}c"), DataError);
  }
  SECTION("missing section is rejected") {
    CHECK_THROWS_AS(PromptTemplate::parse(Task::judge, "{{@intro}}a{{@body}}c"), DataError);
  }
  SECTION("unknown section is rejected") {
    CHECK_THROWS_AS(PromptTemplate::parse(Task::judge, "{{@intro}}{{@body}}{{@footer}}{{@explanation}}"),
                    DataError);
  }
  const auto t = PromptTemplate::parse(Task::judge, "{{@intro}}Hi {{name}}{{@body}} {x} {{ not one }}{{@explanation}}!");
  CHECK(t.placeholders() == std::vector<std::string>{"name"});
  SECTION("every placeholder must be bound") { CHECK_THROWS_AS(t.render({}), DataError); }
  SECTION("unknown bindings are rejected") {
    CHECK_THROWS_AS(t.render({{"name", "a"}, {"other", "b"}}), DataError);
  }
  SECTION("non-identifier braces stay literal") {
    const auto r = t.render({{"name", "bot"}});
    CHECK(r.text == "Hi bot {x} {{ not one }}!");
    CHECK(r.body_offset == 6);
    CHECK(r.explanation_offset == r.text.size() - 1);
  }
}

TEST_CASE("memo-writing header uses the right indefinite article") {
  auto header = [](std::size_t n) {
    std::vector<DialogueLine> lines;
    for (std::size_t i = 0; i < n; ++i) lines.push_back({i + 1, i % 2 ? Speaker::bot : Speaker::user, "x"});
    const auto text = render_memo_writing(lines).text;
    return text.substr(0, text.find(" Task Conversation"));
  };
  CHECK(header(20) == "You will be shown a 20-line");
  CHECK(header(8) == "You will be shown an 8-line");
  CHECK(header(11) == "You will be shown an 11-line");
  CHECK(header(18) == "You will be shown an 18-line");
  CHECK(header(1) == "You will be shown a 1-line");
  CHECK(header(80) == "You will be shown an 80-line");
  CHECK(header(110) == "You will be shown a 110-line");
}

TEST_CASE("memo-writing numbers lines locally regardless of global index") {
  std::vector<DialogueLine> chunk = {{41, Speaker::bot, "late"}, {42, Speaker::user, "later"}};
  const auto text = render_memo_writing(chunk).text;
  CHECK(text.find("(line 1) bot: late\n(line 2) user: later") != std::string::npos);
  CHECK(text.find("(line 41)") == std::string::npos);
}

TEST_CASE("empty evidence and empty recent blocks render placeholders") {
  const auto text = render_chat_with_memo({}, {}, "hello").text;
  CHECK(text.find("Related Evidences:\n(1) None.\n```") != std::string::npos);
  CHECK(text.find("Recent Dialogs:\nNone.\n```") != std::string::npos);
  CHECK(text.ends_with("user: hello ### bot:"));
}

TEST_CASE("retrieval options must be numbered 1..K with at most one NOTO") {
  std::vector<RetrievalOption> bad = {{2, "a", std::nullopt, false}};
  CHECK_THROWS_AS(render_memo_retrieval("q", bad), DataError);
  std::vector<RetrievalOption> two_noto = {RetrievalOption::noto(1), RetrievalOption::noto(2)};
  CHECK_THROWS_AS(render_memo_retrieval("q", two_noto), DataError);
  CHECK_THROWS_AS(render_memo_retrieval("q", {}), DataError);
  std::vector<RetrievalOption> plain = {{1, "topic only", std::nullopt, false}};
  CHECK(render_memo_retrieval("q", plain).text.find("Topic Options:\n(1) topic only\n```") != std::string::npos);
}
