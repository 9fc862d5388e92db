#pragma once

// Offline metrics for the three loop stages and the judge-based consistency
// protocol over scripted long-range streams.

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cmath>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "memoloop/backends.hpp"
#include "memoloop/core.hpp"
#include "memoloop/error.hpp"
#include "memoloop/json_io.hpp"
#include "memoloop/pipeline.hpp"
#include "memoloop/prompts.hpp"
#include "memoloop/text.hpp"

namespace memoloop {

inline double f1_of(double p, double r) { return p + r == 0.0 ? 0.0 : 2.0 * p * r / (p + r); }

// ---- similarity scorers ---------------------------------------------------

struct SimilarityScorer {
  std::string name;
  std::function<double(std::string_view candidate, std::string_view reference)> score;
};

/// Casefolds, drops ASCII punctuation and splits on whitespace.
inline std::vector<std::string> lexical_tokens(std::string_view s) {
  std::string cleaned;
  cleaned.reserve(s.size());
  for (char c : s) {
    if (std::ispunct(static_cast<unsigned char>(c))) continue;
    cleaned += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  }
  return text::split_whitespace(cleaned);
}

/// Token-multiset F1 of candidate against reference.
inline double lexical_f1(std::string_view candidate, std::string_view reference) {
  const auto cand = lexical_tokens(candidate);
  const auto ref = lexical_tokens(reference);
  if (cand.empty() || ref.empty()) return cand.empty() && ref.empty() && candidate == reference ? 1.0 : 0.0;
  std::map<std::string, std::size_t> counts;
  for (const auto& t : ref) ++counts[t];
  std::size_t overlap = 0;
  for (const auto& t : cand) {
    auto it = counts.find(t);
    if (it != counts.end() && it->second > 0) {
      --it->second;
      ++overlap;
    }
  }
  const double p = static_cast<double>(overlap) / static_cast<double>(cand.size());
  const double r = static_cast<double>(overlap) / static_cast<double>(ref.size());
  return f1_of(p, r);
}

inline SimilarityScorer default_lexical_scorer() { return {"lexical_f1", lexical_f1}; }

/// Holds scorers that satisfied score(x, x) == 1 and range [0, 1] on probe strings.
class ScorerRegistry {
 public:
  ScorerRegistry() { add(default_lexical_scorer()); }

  void add(SimilarityScorer scorer) {
    static const std::vector<std::string> probes = {
        "a", "the quick brown fox", "user takes bot's taxi to the railway station.",
        "Sabrina is worried about her sister", "RMB 3, 000 yuan"};
    if (!scorer.score) throw DataError("scorer '" + scorer.name + "' has no function");
    for (const auto& x : probes) {
      const double self = scorer.score(x, x);
      if (std::abs(self - 1.0) > 1e-12) {
        throw DataError("scorer '" + scorer.name + "' fails score(x,x)=1 on '" + x + "'");
      }
      for (const auto& y : probes) {
        const double v = scorer.score(x, y);
        if (!(v >= 0.0 && v <= 1.0)) {
          throw DataError("scorer '" + scorer.name + "' leaves [0,1] on '" + x + "' vs '" + y + "'");
        }
      }
    }
    scorers_[scorer.name] = std::move(scorer);
  }

  const SimilarityScorer& get(const std::string& name) const {
    auto it = scorers_.find(name);
    if (it == scorers_.end()) throw DataError("unknown scorer '" + name + "'");
    return it->second;
  }

  std::vector<std::string> names() const {
    std::vector<std::string> out;
    for (const auto& [n, _] : scorers_) out.push_back(n);
    return out;
  }

 private:
  std::map<std::string, SimilarityScorer> scorers_;
};

// ---- memo writing ---------------------------------------------------------

struct SpanMatchScore {
  double topic_p = 0, topic_r = 0, topic_f1 = 0;
  double summary_p = 0, summary_r = 0, summary_f1 = 0;
};

/// Credits and counts; sums across documents give micro-averaged scores.
struct SpanMatchTally {
  double topic_credit = 0;
  double summary_credit = 0;
  std::size_t predicted = 0;
  std::size_t gold = 0;

  SpanMatchTally& operator+=(const SpanMatchTally& o) {
    topic_credit += o.topic_credit;
    summary_credit += o.summary_credit;
    predicted += o.predicted;
    gold += o.gold;
    return *this;
  }

  SpanMatchScore score() const {
    SpanMatchScore s;
    if (predicted) {
      s.topic_p = topic_credit / static_cast<double>(predicted);
      s.summary_p = summary_credit / static_cast<double>(predicted);
    }
    if (gold) {
      s.topic_r = topic_credit / static_cast<double>(gold);
      s.summary_r = summary_credit / static_cast<double>(gold);
    }
    s.topic_f1 = f1_of(s.topic_p, s.topic_r);
    s.summary_f1 = f1_of(s.summary_p, s.summary_r);
    return s;
  }
};

inline bool topics_match(std::string_view a, std::string_view b) {
  return text::casefold(text::trim(a)) == text::casefold(text::trim(b));
}

/// A predicted record earns credit only against the gold record with the
/// identical (start, end).
inline SpanMatchTally tally_memo_writing(std::span<const MemoRecord> pred, std::span<const MemoRecord> gold,
                                         const SimilarityScorer& scorer) {
  for (auto side : {pred, gold}) {
    const auto check = validate_records(side, 0, ValidationMode::lenient);
    if (check.has(ViolationKind::intersecting)) {
      throw DataError("scored records must not intersect: " + check.describe());
    }
  }
  SpanMatchTally t;
  t.predicted = pred.size();
  t.gold = gold.size();
  for (const auto& p : pred) {
    auto g = std::find_if(gold.begin(), gold.end(),
                          [&](const MemoRecord& r) { return r.start == p.start && r.end == p.end; });
    if (g == gold.end()) continue;
    if (topics_match(p.topic, g->topic)) t.topic_credit += 1.0;
    if (p.summary && g->summary) t.summary_credit += scorer.score(*p.summary, *g->summary);
  }
  return t;
}

inline SpanMatchScore score_memo_writing(std::span<const MemoRecord> pred, std::span<const MemoRecord> gold,
                                         const SimilarityScorer& scorer = default_lexical_scorer()) {
  return tally_memo_writing(pred, gold, scorer).score();
}

// ---- retrieval ------------------------------------------------------------

struct RetrievalScore {
  double p = 0, r = 0, f1 = 0;
};

struct RetrievalTally {
  std::size_t hits = 0, predicted = 0, gold = 0;
  std::size_t documents = 0, empty_agreements = 0;

  RetrievalTally& operator+=(const RetrievalTally& o) {
    hits += o.hits;
    predicted += o.predicted;
    gold += o.gold;
    documents += o.documents;
    empty_agreements += o.empty_agreements;
    return *this;
  }

  /// Empty prediction against empty gold counts as a perfect score.
  RetrievalScore score() const {
    if (predicted == 0 && gold == 0) {
      return documents > 0 && empty_agreements == documents ? RetrievalScore{1, 1, 1} : RetrievalScore{};
    }
    RetrievalScore s;
    if (predicted) s.p = static_cast<double>(hits) / static_cast<double>(predicted);
    if (gold) s.r = static_cast<double>(hits) / static_cast<double>(gold);
    s.f1 = f1_of(s.p, s.r);
    return s;
  }
};

inline RetrievalTally tally_retrieval(const std::set<std::size_t>& pred, const std::set<std::size_t>& gold) {
  RetrievalTally t;
  t.predicted = pred.size();
  t.gold = gold.size();
  t.documents = 1;
  t.empty_agreements = pred.empty() && gold.empty() ? 1 : 0;
  for (auto o : pred) t.hits += gold.count(o);
  return t;
}

inline RetrievalScore score_retrieval(const std::set<std::size_t>& pred, const std::set<std::size_t>& gold) {
  return tally_retrieval(pred, gold).score();
}

inline double score_response(std::string_view pred, std::string_view gold,
                             const SimilarityScorer& scorer = default_lexical_scorer()) {
  if (gold.empty()) throw DataError("reference response must be non-empty");
  return scorer.score(pred, gold);
}

// ---- consistency protocol -------------------------------------------------

enum class QuestionType { retrospection, continuation, conjunction };

inline std::string_view to_string(QuestionType q) {
  switch (q) {
    case QuestionType::retrospection: return "retrospection";
    case QuestionType::continuation: return "continuation";
    case QuestionType::conjunction: return "conjunction";
  }
  return "unknown";
}

inline QuestionType question_type_from_string(std::string_view s) {
  for (auto q : {QuestionType::retrospection, QuestionType::continuation, QuestionType::conjunction}) {
    if (to_string(q) == s) return q;
  }
  throw DataError("unknown question type '" + std::string(s) + "'");
}

struct StreamTurn {
  std::string text;
  std::optional<std::string> topic;
};

struct ConsistencyCase {
  std::string id;
  std::vector<StreamTurn> stream;
  std::string question;
  QuestionType qtype = QuestionType::retrospection;
  std::vector<std::pair<std::size_t, std::size_t>> judge_history_spans;

  static constexpr std::size_t min_turns = 12;
  static constexpr std::size_t max_turns = 15;

  void validate() const {
    if (id.empty()) throw DataError("case without id");
    if (stream.size() < min_turns || stream.size() > max_turns) {
      throw DataError("case " + id + ": stream has " + std::to_string(stream.size()) +
                      " user turns, expected 12..15");
    }
    if (question.empty()) throw DataError("case " + id + ": empty question");
    if (judge_history_spans.empty()) throw DataError("case " + id + ": no judge history spans");
    const std::size_t lines = 2 * stream.size();
    for (auto [s, e] : judge_history_spans) {
      if (s < 1 || e < s || e > lines) {
        throw DataError("case " + id + ": judge span " + std::to_string(s) + ".." + std::to_string(e) +
                        " outside stream lines 1.." + std::to_string(lines));
      }
    }
  }
};

inline ConsistencyCase case_from_json(const nlohmann::json& j) {
  ConsistencyCase c;
  c.id = j.at("id").get<std::string>();
  for (const auto& t : j.at("stream")) {
    StreamTurn turn;
    if (t.is_string()) {
      turn.text = t.get<std::string>();
    } else {
      turn.text = t.at("text").get<std::string>();
      if (t.contains("topic") && !t["topic"].is_null()) turn.topic = t["topic"].get<std::string>();
    }
    c.stream.push_back(std::move(turn));
  }
  c.question = j.at("question").get<std::string>();
  c.qtype = question_type_from_string(j.at("qtype").get<std::string>());
  for (const auto& s : j.at("judge_history_spans")) {
    if (s.is_array()) {
      c.judge_history_spans.emplace_back(s.at(0).get<std::size_t>(), s.at(1).get<std::size_t>());
    } else {
      c.judge_history_spans.emplace_back(s.at("start").get<std::size_t>(), s.at("end").get<std::size_t>());
    }
  }
  c.validate();
  return c;
}

inline nlohmann::json case_to_json(const ConsistencyCase& c) {
  nlohmann::json stream = nlohmann::json::array();
  for (const auto& t : c.stream) {
    nlohmann::json e = {{"text", t.text}};
    if (t.topic) e["topic"] = *t.topic;
    stream.push_back(std::move(e));
  }
  nlohmann::json spans = nlohmann::json::array();
  for (auto [s, e] : c.judge_history_spans) spans.push_back({s, e});
  return {{"id", c.id},
          {"stream", stream},
          {"question", c.question},
          {"qtype", std::string(to_string(c.qtype))},
          {"judge_history_spans", spans}};
}

enum class CaseStatus { ok, invalid_verdict, failed };

inline std::string_view to_string(CaseStatus s) {
  switch (s) {
    case CaseStatus::ok: return "ok";
    case CaseStatus::invalid_verdict: return "invalid";
    case CaseStatus::failed: return "failed";
  }
  return "unknown";
}

struct CaseResult {
  std::string id;
  QuestionType qtype = QuestionType::retrospection;
  CaseStatus status = CaseStatus::ok;
  std::optional<int> rating;
  std::string reply;
  std::string judge_output;
  std::string error;  // parse or backend failure text
  std::optional<std::string> failed_stage;
  std::optional<TurnTrace> trace;  // trace of the question turn
};

struct MeanStat {
  std::size_t count = 0;
  double sum = 0;
  double exact() const { return count ? sum / static_cast<double>(count) : 0.0; }
  /// Reported means are rounded to two decimals.
  double reported() const { return std::round(exact() * 100.0) / 100.0; }
};

struct ConsistencyReport {
  std::vector<CaseResult> cases;
  std::map<QuestionType, MeanStat> by_type;
  MeanStat overall;
  std::size_t invalid = 0;
  std::size_t failed = 0;
};

inline ConsistencyReport summarize(std::vector<CaseResult> results) {
  ConsistencyReport report;
  for (const auto& r : results) {
    if (r.status == CaseStatus::ok) {
      auto& t = report.by_type[r.qtype];
      ++t.count;
      t.sum += *r.rating;
      ++report.overall.count;
      report.overall.sum += *r.rating;
    } else if (r.status == CaseStatus::invalid_verdict) {
      ++report.invalid;
    } else {
      ++report.failed;
    }
  }
  report.cases = std::move(results);
  return report;
}

struct ConsistencyOptions {
  PipelineConfig pipeline;
  std::size_t jobs = 1;
  bool keep_traces = true;
};

/// Replays one case through a fresh session and asks the judge for a rating.
inline CaseResult run_consistency_case(const ConsistencyCase& c, const Pipeline& pipeline,
                                       Backend& chat, Backend& judge, const ConsistencyOptions& options) {
  CaseResult result;
  result.id = c.id;
  result.qtype = c.qtype;
  try {
    c.validate();
    Session session;
    session.id = c.id;
    session.config = options.pipeline;
    for (const auto& turn : c.stream) pipeline.handle_user_message(session, turn.text, chat);

    std::vector<DialogueLine> history;
    for (auto [s, e] : c.judge_history_spans) {
      for (auto& line : slice(session.conversation, s, e)) history.push_back(std::move(line));
    }
    auto turn = pipeline.handle_user_message(session, c.question, chat);
    result.reply = turn.reply;
    if (options.keep_traces) result.trace = std::move(turn.trace);

    CompletionRequest request;
    request.prompt = render_judge(history, c.question, result.reply).text;
    request.temperature = 0.0;
    request.max_new_tokens = options.pipeline.max_new_tokens;
    try {
      result.judge_output = judge.complete(request);
    } catch (const BackendError& e) {
      throw StageError(std::string(to_string(Task::judge)), e);
    }
    try {
      result.rating = parse_judge(result.judge_output).rating;
    } catch (const ParseError& e) {
      result.status = CaseStatus::invalid_verdict;
      result.error = e.what();
    }
  } catch (const StageError& e) {
    result.status = CaseStatus::failed;
    result.failed_stage = e.stage();
    result.error = e.what();
  } catch (const Error& e) {
    result.status = CaseStatus::failed;
    result.error = e.what();
  }
  return result;
}

/// Cases are independent; with jobs > 1 they run on a small worker pool and
/// results keep case order.
inline ConsistencyReport run_consistency_eval(const std::vector<ConsistencyCase>& cases, Backend& chat,
                                              Backend& judge, const ConsistencyOptions& options = {},
                                              const Pipeline& pipeline = Pipeline{}) {
  if (cases.empty()) throw DataError("no consistency cases given");
  options.pipeline.validate();
  std::vector<CaseResult> results(cases.size());
  const std::size_t jobs = std::max<std::size_t>(1, std::min(options.jobs, cases.size()));
  if (jobs == 1) {
    for (std::size_t i = 0; i < cases.size(); ++i) {
      results[i] = run_consistency_case(cases[i], pipeline, chat, judge, options);
    }
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> workers;
    for (std::size_t w = 0; w < jobs; ++w) {
      workers.emplace_back([&] {
        for (std::size_t i = next++; i < cases.size(); i = next++) {
          results[i] = run_consistency_case(cases[i], pipeline, chat, judge, options);
        }
      });
    }
    for (auto& t : workers) t.join();
  }
  return summarize(std::move(results));
}

inline nlohmann::json report_to_json(const ConsistencyReport& report) {
  auto mean_json = [](const MeanStat& m) {
    return nlohmann::json{{"mean", m.reported()}, {"mean_exact", m.exact()}, {"count", m.count}};
  };
  nlohmann::json by_type = nlohmann::json::object();
  for (const auto& [q, m] : report.by_type) by_type[std::string(to_string(q))] = mean_json(m);
  nlohmann::json cases = nlohmann::json::array();
  for (const auto& c : report.cases) {
    nlohmann::json j = {{"id", c.id},
                        {"qtype", std::string(to_string(c.qtype))},
                        {"status", std::string(to_string(c.status))},
                        {"rating", c.rating ? nlohmann::json(*c.rating) : nlohmann::json(nullptr)},
                        {"reply", c.reply},
                        {"judge_output", c.judge_output}};
    if (!c.error.empty()) j["error"] = c.error;
    if (c.failed_stage) j["stage"] = *c.failed_stage;
    if (c.trace) j["trace"] = *c.trace;
    cases.push_back(std::move(j));
  }
  return {{"overall", mean_json(report.overall)},
          {"by_type", by_type},
          {"invalid", report.invalid},
          {"failed", report.failed},
          {"cases", cases}};
}

// ---- offline scoring over prediction/gold files ---------------------------

inline nlohmann::json score_json(const SpanMatchScore& s) {
  return {{"topic", {{"p", s.topic_p}, {"r", s.topic_r}, {"f1", s.topic_f1}}},
          {"summary", {{"p", s.summary_p}, {"r", s.summary_r}, {"f1", s.summary_f1}}}};
}

inline nlohmann::json score_json(const RetrievalScore& s) {
  return {{"p", s.p}, {"r", s.r}, {"f1", s.f1}};
}

}  // namespace memoloop
