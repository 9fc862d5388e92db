#pragma once

#include <filesystem>
#include <fstream>
#include <algorithm>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "memoloop/memoloop.hpp"

namespace testsupport {

inline std::filesystem::path data_dir() { return MEMOLOOP_TEST_DATA_DIR; }
inline std::filesystem::path golden_dir() { return data_dir() / "golden"; }
inline std::filesystem::path source_dir() { return MEMOLOOP_SOURCE_DIR; }

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw std::runtime_error("missing fixture " + p.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

inline nlohmann::json golden_json(const std::string& name) {
  return nlohmann::json::parse(slurp(golden_dir() / (name + ".json")));
}

inline std::string golden_prompt(const std::string& name) { return slurp(golden_dir() / (name + ".prompt.txt")); }

inline std::vector<memoloop::DialogueLine> lines_of(const nlohmann::json& arr) {
  std::vector<memoloop::DialogueLine> out;
  for (const auto& l : arr) {
    out.push_back({out.size() + 1, memoloop::speaker_from_string(l.at("speaker").get<std::string>()),
                   l.at("text").get<std::string>()});
  }
  return out;
}

inline memoloop::Conversation conversation_of(const nlohmann::json& arr) {
  return memoloop::Conversation::from_lines(lines_of(arr), memoloop::Alternation::lenient);
}

/// The two records of the memo-writing exemplar's gold answer.
inline std::vector<memoloop::MemoRecord> writing_gold_records() {
  return {{"worry",
           "Sabrina is worried about her sister because she hasn't heard from her sister for 2 weeks. user "
           "comforts her.",
           1, 8},
          {"taxi conversation",
           "user takes bot's taxi to the railway station. As user is not rush, bot will drive slowly and "
           "carefully.",
           9, 20}};
}

/// Option list of the retrieval exemplar; entries flagged noto become NOTO.
inline std::vector<memoloop::RetrievalOption> golden_options(const nlohmann::json& doc) {
  std::vector<memoloop::RetrievalOption> out;
  for (const auto& o : doc.at("options")) {
    if (o.value("noto", false)) {
      out.push_back(memoloop::RetrievalOption::noto(out.size() + 1));
    } else {
      out.push_back({out.size() + 1, o.at("topic").get<std::string>(), o.at("summary").get<std::string>(), false});
    }
  }
  return out;
}

inline memoloop::EvidenceSet golden_evidence(const nlohmann::json& doc) {
  memoloop::EvidenceSet e;
  for (const auto& item : doc.at("evidence")) {
    auto lines = lines_of(item.at("lines"));
    e.items.push_back({item.at("topic").get<std::string>(), item.at("summary").get<std::string>(), 1,
                       lines.size(), lines});
  }
  return e;
}

inline constexpr const char* kGoldenQuestion = "How much did the taxi to the railway station cost?";

/// A session seeded with the 20-line memo-writing exemplar as imported history.
inline memoloop::Session golden_session(memoloop::PipelineConfig config = {}) {
  const auto doc = nlohmann::json::parse(slurp(source_dir() / "data" / "golden_session" / "history.json"));
  memoloop::Session s;
  s.id = "golden";
  s.config = config;
  s.conversation = conversation_of(doc.at("history"));
  return s;
}

inline std::filesystem::path sample_dir() { return source_dir() / "data" / "sample"; }

inline std::vector<memoloop::SourceDialogue> sample_corpus() {
  return memoloop::read_corpus(sample_dir() / "corpus.jsonl");
}

inline std::vector<memoloop::ScriptedExchange> golden_script() {
  return memoloop::ScriptedBackend::parse_script(
      nlohmann::json::parse(slurp(source_dir() / "data" / "golden_session" / "script.json")));
}

/// Small seeded generator for property tests.
class Gen {
 public:
  explicit Gen(std::uint64_t seed) : rng_(seed) {}

  std::size_t range(std::size_t lo, std::size_t hi) {
    return std::uniform_int_distribution<std::size_t>(lo, hi)(rng_);
  }
  bool coin(double p = 0.5) { return std::bernoulli_distribution(p)(rng_); }

  std::string word() {
    static const char* words[] = {"taxi", "worry", "job", "party", "loan", "salary", "plane", "check",
                                  "music", "food", "sister", "school", "library", "it's", "bot's"};
    return words[range(0, std::size(words) - 1)];
  }

  std::string phrase(std::size_t max_words = 6) {
    std::string s = word();
    for (std::size_t i = 1, n = range(1, max_words); i < n; ++i) s += ' ' + word();
    return s;
  }

  /// Random partition of 1..n into contiguous records.
  std::vector<memoloop::MemoRecord> partition(std::size_t n) {
    std::vector<memoloop::MemoRecord> out;
    std::size_t start = 1;
    while (start <= n) {
      const std::size_t end = std::min(n, start + range(0, std::max<std::size_t>(1, n / 4)));
      std::optional<std::string> summary;
      if (coin(0.7)) summary = phrase();
      out.push_back({phrase(3), summary, start, end});
      start = end + 1;
    }
    return out;
  }

  /// Ordered, non-intersecting records inside 1..n, possibly with gaps.
  std::vector<memoloop::MemoRecord> gappy(std::size_t n) {
    std::vector<memoloop::MemoRecord> out;
    for (const auto& r : partition(n)) {
      if (coin(0.7)) out.push_back(r);
    }
    if (out.empty()) out.push_back({phrase(2), std::nullopt, 1, n});
    return out;
  }

  memoloop::Conversation conversation(std::size_t n) {
    std::vector<std::pair<memoloop::Speaker, std::string>> turns;
    for (std::size_t i = 0; i < n; ++i) {
      turns.emplace_back(i % 2 ? memoloop::Speaker::bot : memoloop::Speaker::user, phrase(8));
    }
    return memoloop::Conversation::from_turns(turns);
  }

  std::mt19937_64& engine() { return rng_; }

 private:
  std::mt19937_64 rng_;
};

inline std::vector<memoloop::MemoRecord> random_records(Gen& gen, std::size_t n, std::size_t max_records) {
  auto records = gen.partition(n);
  while (records.size() > max_records) records.pop_back();
  return records;
}

/// Prediction derived from gold: some records kept (maybe with topic case
/// changes), some split or shifted.
inline std::vector<memoloop::MemoRecord> perturbed(Gen& gen, const std::vector<memoloop::MemoRecord>& gold) {
  std::vector<memoloop::MemoRecord> out;
  for (const auto& g : gold) {
    const auto roll = gen.range(0, 5);
    if (roll <= 2) {
      auto r = g;
      if (gen.coin(0.3)) std::transform(r.topic.begin(), r.topic.end(), r.topic.begin(), ::toupper);
      if (gen.coin(0.3)) r.topic = " " + r.topic + " ";
      if (gen.coin(0.3)) r.topic = gen.phrase(2);
      if (gen.coin(0.3)) r.summary = gen.phrase();
      if (gen.coin(0.1)) r.summary.reset();
      out.push_back(r);
    } else if (roll == 3 && g.end > g.start) {
      out.push_back({g.topic, g.summary, g.start, g.start});
      out.push_back({gen.phrase(2), gen.phrase(), g.start + 1, g.end});
    } else if (roll == 4 && g.end > g.start) {
      out.push_back({g.topic, g.summary, g.start, g.end - 1});
    }
  }
  return out;
}

inline std::vector<std::size_t> random_ordinals(Gen& gen, std::size_t k) {
  std::vector<std::size_t> out;
  for (std::size_t o = 1; o <= k; ++o) {
    if (gen.coin(0.4)) out.push_back(o);
  }
  return out;
}

inline std::set<std::size_t> as_set(const std::vector<std::size_t>& v) { return {v.begin(), v.end()}; }

}  // namespace testsupport
