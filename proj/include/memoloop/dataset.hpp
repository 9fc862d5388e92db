#pragma once

// Builds instruction instances for the three loop stages from normalized
// dialogue corpora. All sampling runs off one seeded generator, so a given
// (corpus, config) pair always yields the same files.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <random>
#include <regex>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "memoloop/backends.hpp"
#include "memoloop/core.hpp"
#include "memoloop/error.hpp"
#include "memoloop/json_io.hpp"
#include "memoloop/prompts.hpp"
#include "memoloop/templates.hpp"

namespace memoloop {

enum class Origin { multi_topic_annotated, single_topic_summarized, single_turn_qa };

inline std::string_view to_string(Origin o) {
  switch (o) {
    case Origin::multi_topic_annotated: return "multi_topic_annotated";
    case Origin::single_topic_summarized: return "single_topic_summarized";
    case Origin::single_turn_qa: return "single_turn_qa";
  }
  return "unknown";
}

inline Origin origin_from_string(std::string_view s) {
  for (auto o : {Origin::multi_topic_annotated, Origin::single_topic_summarized, Origin::single_turn_qa}) {
    if (to_string(o) == s) return o;
  }
  throw DataError("unknown origin '" + std::string(s) + "'");
}

struct SourceDialogue {
  std::string id;
  std::vector<DialogueLine> lines;
  std::optional<std::string> topic;
  std::optional<std::string> summary;
  Origin origin = Origin::single_topic_summarized;
  std::vector<MemoRecord> segments;  // multi_topic_annotated only; topic + span

  void validate() const {
    auto fail = [&](const std::string& why) { throw DataError("source '" + id + "': " + why); };
    if (id.empty()) throw DataError("source without id");
    if (lines.empty()) fail("no lines");
    switch (origin) {
      case Origin::multi_topic_annotated: {
        if (segments.empty()) fail("missing topic segments");
        const auto check = validate_records(segments, lines.size(), ValidationMode::strict);
        if (!check.ok()) fail("segments invalid: " + check.describe());
        break;
      }
      case Origin::single_topic_summarized:
        if (!topic || text::trim(*topic).empty() || !summary || summary->empty()) fail("needs topic and summary");
        break;
      case Origin::single_turn_qa:
        if (lines.size() != 2 || lines[0].speaker != Speaker::user || lines[1].speaker != Speaker::bot) {
          fail("single-turn QA needs exactly one user line and one bot line");
        }
        break;
    }
  }

  /// Gold memo records covering the whole dialogue.
  std::vector<MemoRecord> records() const {
    if (origin == Origin::multi_topic_annotated) return segments;
    return {MemoRecord{topic.value_or("misc"), summary, 1, lines.size()}};
  }
};

inline SourceDialogue source_from_json(const nlohmann::json& j) {
  SourceDialogue s;
  s.id = j.at("id").get<std::string>();
  s.origin = origin_from_string(j.at("origin").get<std::string>());
  const auto& lines = j.at("lines");
  for (std::size_t i = 0; i < lines.size(); ++i) {
    s.lines.push_back(DialogueLine{i + 1, lines[i].at("speaker").get<Speaker>(),
                                   lines[i].at("text").get<std::string>()});
  }
  if (j.contains("topic") && !j["topic"].is_null()) s.topic = j["topic"].get<std::string>();
  if (j.contains("summary") && !j["summary"].is_null()) s.summary = j["summary"].get<std::string>();
  if (j.contains("segments")) {
    for (const auto& seg : j["segments"]) {
      s.segments.push_back(MemoRecord{seg.at("topic").get<std::string>(), std::nullopt,
                                      seg.at("start").get<std::size_t>(), seg.at("end").get<std::size_t>()});
    }
  }
  s.validate();
  return s;
}

inline nlohmann::json source_to_json(const SourceDialogue& s) {
  nlohmann::json lines = nlohmann::json::array();
  for (const auto& l : s.lines) lines.push_back({{"speaker", l.speaker}, {"text", l.text}});
  nlohmann::json j = {{"id", s.id}, {"origin", std::string(to_string(s.origin))}, {"lines", lines}};
  if (s.topic) j["topic"] = *s.topic;
  if (s.summary) j["summary"] = *s.summary;
  if (!s.segments.empty()) {
    j["segments"] = nlohmann::json::array();
    for (const auto& r : s.segments) j["segments"].push_back({{"topic", r.topic}, {"start", r.start}, {"end", r.end}});
  }
  return j;
}

/// Reads a corpus file; any malformed record fails with its line number and id.
inline std::vector<SourceDialogue> read_corpus(const std::filesystem::path& path) {
  std::vector<SourceDialogue> corpus;
  std::size_t n = 0;
  for (const auto& row : read_jsonl(path)) {
    ++n;
    try {
      corpus.push_back(source_from_json(row));
    } catch (const std::exception& e) {
      const std::string id = row.is_object() && row.contains("id") ? row["id"].dump() : "?";
      throw DataError(path.string() + ": record " + std::to_string(n) + " (id " + id + "): " + e.what());
    }
  }
  return corpus;
}

struct InstructionInstance {
  std::string id;
  Task task = Task::memo_writing;
  std::string prompt;
  std::string answer;

  friend bool operator==(const InstructionInstance&, const InstructionInstance&) = default;
};

struct BuildConfig {
  std::uint64_t seed = 0;
  double noto_probability = 0.10;
  double noto_gold_share = 0.05;  // share of retrieval instances whose answer is NOTO
  std::size_t compose_min = 2;
  std::size_t compose_max = 4;
  std::map<Task, std::size_t> target_counts;
  std::size_t recent_lines = 10;

  void validate() const {
    if (!(noto_probability >= 0.0 && noto_probability <= 1.0)) throw DataError("noto_probability must lie in [0,1]");
    if (!(noto_gold_share >= 0.0 && noto_gold_share <= 1.0)) throw DataError("noto_gold_share must lie in [0,1]");
    if (compose_min < 1 || compose_min > compose_max) throw DataError("need 1 <= compose_min <= compose_max");
  }
};

/// Deterministic sampling helpers over a 64-bit Mersenne Twister. The
/// mappings are written out by hand so output does not depend on the
/// standard library's distribution implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  /// Uniform integer in [0, n).
  std::size_t below(std::size_t n) {
    if (n == 0) throw DataError("cannot sample from an empty range");
    const std::uint64_t bound = static_cast<std::uint64_t>(n);
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                std::numeric_limits<std::uint64_t>::max() % bound;
    std::uint64_t x;
    do x = engine_();
    while (x >= limit);
    return static_cast<std::size_t>(x % bound);
  }

  /// Uniform integer in [lo, hi].
  std::size_t between(std::size_t lo, std::size_t hi) { return lo + below(hi - lo + 1); }

  double unit() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  bool chance(double p) { return unit() < p; }

  template <class T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[below(i)]);
  }

  /// k distinct indices from [0, n), in ascending order.
  std::vector<std::size_t> sample_indices(std::size_t n, std::size_t k) {
    if (k > n) throw DataError("cannot sample " + std::to_string(k) + " of " + std::to_string(n));
    std::vector<std::size_t> pool(n);
    for (std::size_t i = 0; i < n; ++i) pool[i] = i;
    for (std::size_t i = 0; i < k; ++i) std::swap(pool[i], pool[i + below(n - i)]);
    pool.resize(k);
    std::sort(pool.begin(), pool.end());
    return pool;
  }

 private:
  std::mt19937_64 engine_;
};

struct Composition {
  Conversation conversation{Alternation::lenient};
  std::vector<MemoRecord> gold;
  std::vector<std::string> source_ids;
};

/// Concatenates dialogues into one conversation; each source becomes one
/// gold record over its renumbered span.
inline Composition concatenate(const std::vector<const SourceDialogue*>& parts) {
  Composition out;
  for (const auto* d : parts) {
    const std::size_t offset = out.conversation.size();
    for (const auto& l : d->lines) out.conversation = out.conversation.appended(l.speaker, l.text);
    for (auto r : d->records()) {
      r.start += offset;
      r.end += offset;
      out.gold.push_back(std::move(r));
    }
    out.source_ids.push_back(d->id);
  }
  const auto check = validate_records(out.gold, out.conversation.size(), ValidationMode::strict);
  if (!check.ok()) throw DataError("composed gold is not strict-valid: " + check.describe());
  return out;
}

/// Samples k summarized dialogues (kept in input order) and joins them.
inline Composition compose_multi_topic(std::span<const SourceDialogue> dialogues, std::size_t k, Rng& rng,
                                       const BuildConfig& config = {}) {
  if (k < config.compose_min || k > config.compose_max) {
    throw DataError("k=" + std::to_string(k) + " outside [" + std::to_string(config.compose_min) + ", " +
                    std::to_string(config.compose_max) + "]");
  }
  if (k > dialogues.size()) {
    throw DataError("need " + std::to_string(k) + " dialogues to compose, have " + std::to_string(dialogues.size()));
  }
  std::vector<const SourceDialogue*> parts;
  for (auto i : rng.sample_indices(dialogues.size(), k)) {
    if (dialogues[i].origin != Origin::single_topic_summarized) {
      throw DataError("source '" + dialogues[i].id + "' is not a single-topic summarized dialogue");
    }
    parts.push_back(&dialogues[i]);
  }
  return concatenate(parts);
}

namespace detail {

inline std::vector<SourceDialogue> of_origin(std::span<const SourceDialogue> corpus, Origin origin) {
  std::vector<SourceDialogue> out;
  for (const auto& s : corpus) {
    if (s.origin == origin) out.push_back(s);
  }
  return out;
}

inline std::string instance_id(Task task, std::size_t i) {
  std::ostringstream os;
  os << to_string(task) << '-' << std::setw(6) << std::setfill('0') << i;
  return os.str();
}

inline std::size_t target_for(const BuildConfig& config, Task task, std::size_t natural) {
  auto it = config.target_counts.find(task);
  return it == config.target_counts.end() ? natural : it->second;
}

/// Draws a composition size within the configured range that the pool can satisfy.
inline std::size_t compose_size(Rng& rng, const BuildConfig& config, std::size_t available) {
  const std::size_t hi = std::min(config.compose_max, available);
  if (hi < config.compose_min) {
    throw DataError("only " + std::to_string(available) + " summarized dialogues; composing needs " +
                    std::to_string(config.compose_min));
  }
  return rng.between(config.compose_min, hi);
}

}  // namespace detail

/// Annotated sources become one instance each (topic and span gold only);
/// further instances come from composing summarized dialogues.
inline std::vector<InstructionInstance> build_memo_writing_set(std::span<const SourceDialogue> corpus,
                                                               const BuildConfig& config) {
  config.validate();
  if (corpus.empty()) throw DataError("empty corpus");
  const auto annotated = detail::of_origin(corpus, Origin::multi_topic_annotated);
  const auto summarized = detail::of_origin(corpus, Origin::single_topic_summarized);
  const std::size_t composable = summarized.size() >= config.compose_min ? summarized.size() / config.compose_min : 0;
  const std::size_t target = detail::target_for(config, Task::memo_writing, annotated.size() + composable);
  if (target > annotated.size() && summarized.size() < config.compose_min) {
    throw DataError("corpus cannot supply " + std::to_string(target) + " memo-writing instances");
  }

  Rng rng(config.seed ^ 0x6d656d6fULL);
  std::vector<InstructionInstance> out;
  for (std::size_t i = 0; i < target; ++i) {
    Composition comp;
    if (i < annotated.size()) {
      comp = concatenate({&annotated[i]});
    } else {
      comp = compose_multi_topic(summarized, detail::compose_size(rng, config, summarized.size()), rng, config);
    }
    out.push_back({detail::instance_id(Task::memo_writing, i), Task::memo_writing,
                   render_memo_writing(comp.conversation.lines()).text, format_records(comp.gold)});
  }
  return out;
}

namespace detail {

struct TopicEntry {
  std::string source_id;
  std::string topic;
  std::optional<std::string> summary;
};

inline std::vector<TopicEntry> topic_pool(std::span<const SourceDialogue> corpus) {
  std::vector<TopicEntry> pool;
  for (const auto& s : corpus) {
    if (s.origin == Origin::single_turn_qa) continue;
    for (const auto& r : s.records()) pool.push_back({s.id, r.topic, r.summary});
  }
  return pool;
}

inline std::string join_texts(std::span<const DialogueLine> lines) {
  std::string out;
  for (const auto& l : lines) {
    if (!out.empty()) out += ' ';
    out += l.text;
  }
  return out;
}

}  // namespace detail

/// Query windows of 2..6 consecutive lines; options are the window's true
/// topics plus 2..4 distractors from other dialogues. NOTO appears with
/// probability noto_probability; a noto_gold_share of all instances drop
/// the true topics so NOTO itself is the answer.
inline std::vector<InstructionInstance> build_retrieval_set(std::span<const SourceDialogue> corpus,
                                                            const BuildConfig& config) {
  config.validate();
  const auto annotated = detail::of_origin(corpus, Origin::multi_topic_annotated);
  const auto summarized = detail::of_origin(corpus, Origin::single_topic_summarized);
  const bool can_compose = summarized.size() >= config.compose_min;
  if (annotated.empty() && !can_compose) {
    throw DataError("retrieval needs annotated dialogues or enough summarized dialogues to compose");
  }
  const auto pool = detail::topic_pool(corpus);
  const std::size_t target = detail::target_for(config, Task::memo_retrieval, annotated.size() + summarized.size());
  const double gold_noto_given_noto =
      config.noto_probability > 0 ? std::min(1.0, config.noto_gold_share / config.noto_probability) : 0.0;

  Rng rng(config.seed ^ 0x72657472ULL);
  std::vector<InstructionInstance> out;
  for (std::size_t i = 0; i < target; ++i) {
    Composition comp;
    const std::size_t choices = annotated.size() + (can_compose ? 1 : 0);
    const std::size_t pick = rng.below(choices);
    if (pick < annotated.size()) {
      comp = concatenate({&annotated[pick]});
    } else {
      comp = compose_multi_topic(summarized, detail::compose_size(rng, config, summarized.size()), rng, config);
    }

    const std::size_t n = comp.conversation.size();
    const std::size_t width = std::min<std::size_t>(rng.between(2, 6), n);
    const std::size_t start = 1 + rng.below(n - width + 1);
    const std::size_t end = start + width - 1;
    const std::string query = detail::join_texts(slice(comp.conversation, start, end));

    std::vector<detail::TopicEntry> truth;
    for (std::size_t k = 0; k < comp.gold.size(); ++k) {
      const auto& r = comp.gold[k];
      if (r.start <= end && r.end >= start) truth.push_back({comp.source_ids.size() == 1 ? comp.source_ids[0]
                                                                                          : comp.source_ids[k],
                                                             r.topic, r.summary});
    }

    std::vector<detail::TopicEntry> candidates;
    std::set<std::string> seen;
    for (const auto& t : comp.gold) seen.insert(text::casefold(text::trim(t.topic)));
    for (const auto& e : pool) {
      if (std::find(comp.source_ids.begin(), comp.source_ids.end(), e.source_id) != comp.source_ids.end()) continue;
      if (!seen.insert(text::casefold(text::trim(e.topic))).second) continue;
      candidates.push_back(e);
    }
    if (candidates.size() < 2) {
      throw DataError("fewer than 2 distractor topics available for instance " + std::to_string(i));
    }
    const std::size_t distractors = std::min(rng.between(2, 4), candidates.size());

    const bool with_noto = rng.chance(config.noto_probability);
    const bool noto_gold = with_noto && rng.chance(gold_noto_given_noto);

    struct Slot {
      detail::TopicEntry entry;
      bool gold;
    };
    std::vector<Slot> slots;
    if (!noto_gold) {
      for (auto& t : truth) slots.push_back({std::move(t), true});
    }
    for (auto idx : rng.sample_indices(candidates.size(), distractors)) slots.push_back({candidates[idx], false});
    rng.shuffle(slots);

    std::vector<RetrievalOption> options;
    std::set<std::size_t> answer;
    for (const auto& s : slots) {
      options.push_back({options.size() + 1, s.entry.topic, s.entry.summary, false});
      if (s.gold) answer.insert(options.size());
    }
    if (with_noto) {
      const std::size_t at = rng.below(options.size() + 1);
      options.insert(options.begin() + static_cast<std::ptrdiff_t>(at), RetrievalOption::noto(at + 1));
      for (std::size_t k = 0; k < options.size(); ++k) options[k].ordinal = k + 1;
      std::set<std::size_t> shifted;
      for (auto o : answer) shifted.insert(o > at ? o + 1 : o);
      answer = noto_gold ? std::set<std::size_t>{at + 1} : shifted;
    }
    out.push_back({detail::instance_id(Task::memo_retrieval, i), Task::memo_retrieval,
                   render_memo_retrieval(query, options).text, format_selection(answer)});
  }
  return out;
}

struct ChatBuildReport {
  std::vector<std::string> skipped;  // source ids without a final user/bot exchange
};

/// Evidence-bearing instances hold out a summarized dialogue's final
/// exchange and show the rest of it as evidence; evidence-free instances
/// wrap single-turn QA pairs.
inline std::vector<InstructionInstance> build_chat_set(std::span<const SourceDialogue> corpus,
                                                       const BuildConfig& config,
                                                       ChatBuildReport* report = nullptr) {
  config.validate();
  const auto summarized = detail::of_origin(corpus, Origin::single_topic_summarized);
  const auto qa = detail::of_origin(corpus, Origin::single_turn_qa);
  if (summarized.empty() || qa.empty()) {
    throw DataError("chat set needs both summarized dialogues and single-turn QA sources");
  }
  std::vector<const SourceDialogue*> eligible;
  for (const auto& s : summarized) {
    const auto& l = s.lines;
    const bool ok = l.size() >= 3 && l.back().speaker == Speaker::bot && l[l.size() - 2].speaker == Speaker::user;
    if (ok) eligible.push_back(&s);
    else if (report) report->skipped.push_back(s.id);
  }
  std::vector<const SourceDialogue*> sources = eligible;
  for (const auto& s : qa) sources.push_back(&s);
  const std::size_t target = detail::target_for(config, Task::chat_with_memo, sources.size());

  Rng rng(config.seed ^ 0x63686174ULL);
  std::vector<const SourceDialogue*> order = sources;
  rng.shuffle(order);
  std::vector<InstructionInstance> out;
  for (std::size_t i = 0; i < target; ++i) {
    const SourceDialogue& src = *order[i % order.size()];
    const auto& l = src.lines;
    const std::string& user_input = l[l.size() - 2].text;
    const std::string& answer = l.back().text;
    EvidenceSet evidence;
    std::vector<DialogueLine> recent;
    if (src.origin == Origin::single_topic_summarized) {
      std::vector<const SourceDialogue*> others;
      for (const auto& s : summarized) {
        if (s.id != src.id) others.push_back(&s);
      }
      rng.shuffle(others);
      const std::size_t extra = std::min(rng.between(0, 2), others.size());
      auto as_item = [](const SourceDialogue& d, std::size_t len) {
        return EvidenceItem{*d.topic, d.summary, 1, len, {d.lines.begin(), d.lines.begin() + static_cast<std::ptrdiff_t>(len)}};
      };
      evidence.items.push_back(as_item(src, l.size() - 2));
      for (std::size_t k = 0; k < extra; ++k) evidence.items.push_back(as_item(*others[k], others[k]->lines.size()));
      rng.shuffle(evidence.items);
      if (others.size() > extra) {
        const auto& r = others[extra]->lines;
        const std::size_t take = std::min(config.recent_lines, r.size());
        recent.assign(r.end() - static_cast<std::ptrdiff_t>(take), r.end());
      }
    }
    out.push_back({detail::instance_id(Task::chat_with_memo, i), Task::chat_with_memo,
                   render_chat_with_memo(evidence, recent, user_input).text, answer});
  }
  return out;
}

inline nlohmann::ordered_json instance_to_json(const InstructionInstance& inst) {
  nlohmann::ordered_json j;
  j["id"] = inst.id;
  j["task"] = std::string(to_string(inst.task));
  j["prompt"] = inst.prompt;
  j["answer"] = inst.answer;
  return j;
}

inline InstructionInstance instance_from_json(const nlohmann::json& j) {
  return {j.at("id").get<std::string>(), task_from_string(j.at("task").get<std::string>()),
          j.at("prompt").get<std::string>(), j.at("answer").get<std::string>()};
}

inline void emit(std::span<const InstructionInstance> instances, std::ostream& out) {
  for (const auto& inst : instances) out << instance_to_json(inst).dump() << '\n';
}

inline void emit(std::span<const InstructionInstance> instances, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  emit(instances, out);
  if (!out) throw DataError("write to " + path.string() + " failed");
}

inline std::vector<InstructionInstance> read_instances(const std::filesystem::path& path) {
  std::vector<InstructionInstance> out;
  for (const auto& row : read_jsonl(path)) out.push_back(instance_from_json(row));
  return out;
}

/// Deterministically moves `fraction` of the instances into a held-out split.
inline std::pair<std::vector<InstructionInstance>, std::vector<InstructionInstance>> split_eval(
    std::vector<InstructionInstance> instances, double fraction, std::uint64_t seed) {
  if (!(fraction >= 0.0 && fraction <= 1.0)) throw DataError("eval fraction must lie in [0,1]");
  const auto held = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(instances.size())));
  Rng rng(seed ^ 0x6576616cULL);
  std::vector<bool> is_eval(instances.size(), false);
  for (auto i : rng.sample_indices(instances.size(), held)) is_eval[i] = true;
  std::vector<InstructionInstance> train, eval;
  for (std::size_t i = 0; i < instances.size(); ++i) (is_eval[i] ? eval : train).push_back(std::move(instances[i]));
  return {std::move(train), std::move(eval)};
}

/// Re-parses an instance's answer with the matching parser and checks it
/// against the bounds stated in its prompt.
inline void verify_instance(const InstructionInstance& inst) {
  static const std::regex line_count(R"(You will be shown an? (\d+)-line Task Conversation)");
  static const std::regex option_count(R"(You will be shown 1 Query Sentence and (\d+) Topic Options)");
  std::smatch m;
  auto fail = [&](const std::string& why) { throw DataError("instance " + inst.id + ": " + why); };
  switch (inst.task) {
    case Task::memo_writing: {
      if (!std::regex_search(inst.prompt, m, line_count)) fail("prompt lacks a line count");
      const std::size_t n = std::stoul(m[1].str());
      const auto records = extract_records(inst.answer);
      const auto check = validate_records(records, n, ValidationMode::strict);
      if (!check.ok()) fail("gold records invalid: " + check.describe());
      if (format_records(records) != inst.answer) fail("answer does not round-trip");
      break;
    }
    case Task::memo_retrieval: {
      if (!std::regex_search(inst.prompt, m, option_count)) fail("prompt lacks an option count");
      const auto selected = parse_retrieval(inst.answer, std::stoul(m[1].str()));
      if (format_selection(selected) != inst.answer) fail("answer does not round-trip");
      break;
    }
    case Task::chat_with_memo:
      if (inst.answer.empty()) fail("empty reply");
      break;
    case Task::judge: fail("judge instances are not built");
  }
}

struct TaskStats {
  Task task;
  std::size_t count = 0;
  double avg_tokens = 0;
};

/// Instance count and mean estimated tokens (prompt plus answer) per task.
inline std::vector<TaskStats> stats(std::span<const InstructionInstance> instances,
                                    const TokenCounter& count_tokens = estimate_tokens) {
  if (instances.empty()) throw DataError("stats needs at least one instance");
  std::map<Task, std::pair<std::size_t, double>> acc;
  for (const auto& inst : instances) {
    auto& [n, sum] = acc[inst.task];
    ++n;
    sum += static_cast<double>(count_tokens(inst.prompt) + count_tokens(inst.answer));
  }
  std::vector<TaskStats> out;
  for (const auto& [task, v] : acc) out.push_back({task, v.first, v.second / static_cast<double>(v.first)});
  return out;
}

inline std::string task_title(Task t) {
  switch (t) {
    case Task::memo_writing: return "Memo Writing";
    case Task::memo_retrieval: return "Memo Retrieval";
    case Task::chat_with_memo: return "Chat w/ Memo";
    case Task::judge: return "Judge";
  }
  return "?";
}

inline std::string with_thousands(std::size_t n) {
  std::string s = std::to_string(n);
  for (std::ptrdiff_t i = static_cast<std::ptrdiff_t>(s.size()) - 3; i > 0; i -= 3) s.insert(static_cast<std::size_t>(i), ",");
  return s;
}

inline std::string format_stats(std::span<const TaskStats> rows) {
  std::ostringstream os;
  os << std::left << std::setw(16) << "Task" << std::right << std::setw(12) << "Instances" << std::setw(14)
     << "Avg. Tokens" << '\n';
  for (const auto& r : rows) {
    os << std::left << std::setw(16) << task_title(r.task) << std::right << std::setw(12)
       << with_thousands(r.count) << std::setw(14) << std::fixed << std::setprecision(2) << r.avg_tokens << '\n';
  }
  return os.str();
}

}  // namespace memoloop
