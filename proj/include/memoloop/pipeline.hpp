#pragma once

// The memorization -> retrieval -> response loop run for every user turn.

#include <algorithm>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "memoloop/backends.hpp"
#include "memoloop/core.hpp"
#include "memoloop/error.hpp"
#include "memoloop/prompts.hpp"
#include "memoloop/templates.hpp"

namespace memoloop {

struct PipelineConfig {
  std::size_t memorize_after_lines = 10;
  std::size_t recent_window_lines = 10;
  std::size_t token_budget = 2048;
  double temperature = kDefaultTemperature;
  std::size_t max_new_tokens = kDefaultMaxNewTokens;
  bool noto_always_in_options = true;
  std::size_t max_evidence_items = 3;

  void validate() const {
    if (memorize_after_lines == 0 || recent_window_lines == 0 || token_budget == 0 ||
        max_new_tokens == 0 || max_evidence_items == 0) {
      throw DataError("pipeline settings must all be positive");
    }
    if (recent_window_lines >= token_budget) {
      throw DataError("recent_window_lines must be smaller than token_budget");
    }
    if (!(temperature >= 0.0 && temperature <= 1.0)) throw DataError("temperature must lie in [0,1]");
  }

  friend bool operator==(const PipelineConfig&, const PipelineConfig&) = default;
};

/// One chat stream. Live sessions accept consecutive user lines (a turn whose
/// backend call failed keeps its user line), so they use lenient alternation.
struct Session {
  std::string id;
  Conversation conversation{Alternation::lenient};
  Memo memo;
  PipelineConfig config;

  friend bool operator==(const Session&, const Session&) = default;
};

struct StageCall {
  Task stage = Task::memo_writing;
  std::string prompt;
  std::string output;
  std::size_t prompt_tokens = 0;
};

struct TurnTrace {
  bool memo_written = false;
  std::vector<MemoRecord> written_records;  // global line numbers
  std::vector<RetrievalOption> retrieval_options;
  std::set<std::size_t> selected;
  EvidenceSet evidence;
  std::size_t evidence_used = 0;  // items that survived budget trimming
  std::size_t recent_used = 0;
  std::vector<StageCall> calls;   // in issue order
  std::vector<std::string> warnings;

  /// Last prompt/output per stage, keyed by stage name.
  std::map<std::string, std::string> prompts() const {
    std::map<std::string, std::string> out;
    for (const auto& c : calls) out[std::string(to_string(c.stage))] = c.prompt;
    return out;
  }
  std::map<std::string, std::string> raw_outputs() const {
    std::map<std::string, std::string> out;
    for (const auto& c : calls) out[std::string(to_string(c.stage))] = c.output;
    return out;
  }
};

struct TurnResult {
  std::string reply;
  TurnTrace trace;
};

class Pipeline {
 public:
  explicit Pipeline(TokenCounter count_tokens = estimate_tokens,
                    const TemplateSet& templates = TemplateSet::builtin())
      : count_tokens_(std::move(count_tokens)), templates_(&templates) {}

  std::size_t tokens(std::string_view s) const { return count_tokens_(s); }

  /// A trailing user line is the in-flight query; everything before it is history.
  static bool has_pending_query(const Session& session) {
    const auto& c = session.conversation;
    return !c.empty() && c.lines().back().speaker == Speaker::user;
  }

  static std::size_t history_end(const Session& session) {
    return session.conversation.size() - (has_pending_query(session) ? 1 : 0);
  }

  static std::size_t unrecorded_lines(const Session& session) {
    const std::size_t end = history_end(session);
    return end > session.memo.covered_until() ? end - session.memo.covered_until() : 0;
  }

  bool should_memorize(const Session& session) const {
    const std::size_t pending = unrecorded_lines(session);
    if (pending == 0) return false;
    if (pending >= session.config.memorize_after_lines) return true;
    // Without a pending query the estimate uses a blank one.
    const std::string query = has_pending_query(session) ? session.conversation.lines().back().text : " ";
    const auto recent = recent_window(session, {}, session.config.recent_window_lines);
    const auto prompt = render_chat_with_memo(EvidenceSet{}, recent, query, *templates_);
    return tokens(prompt.text) > session.config.token_budget;
  }

  /// Writes memo records for every unrecorded history line. A chunk whose
  /// prompt would overflow the budget is split into the longest prefixes that fit.
  std::pair<Session, TurnTrace> memorize(const Session& session, Backend& backend) const {
    const std::size_t end = history_end(session);
    if (session.memo.covered_until() >= end) throw SpanError("no unrecorded lines to memorize");

    Session next = session;
    TurnTrace trace;
    trace.memo_written = true;
    const auto lines = session.conversation.lines();
    while (next.memo.covered_until() < end) {
      const std::size_t offset = next.memo.covered_until();
      const auto remaining = lines.subspan(offset, end - offset);
      const std::size_t len = longest_fitting_chunk(remaining, session.config.token_budget);
      if (len == 0) throw BudgetError("line " + std::to_string(offset + 1) + " alone overflows the memo-writing budget");
      const auto chunk = remaining.first(len);
      const auto prompt = render_memo_writing(chunk, *templates_);
      const std::string output = call(backend, Task::memo_writing, prompt.text, session.config, trace);

      std::vector<MemoRecord> records;
      try {
        records = parse_memo_writing(output, len);
      } catch (const ParseError& e) {
        trace.warnings.push_back("memo writing over lines " + std::to_string(offset + 1) + ".." +
                                 std::to_string(offset + len) + " fell back to 'misc': " + e.what());
        records = {MemoRecord{"misc", std::nullopt, 1, len}};
      }
      next.memo = append_memo(next.memo, records, offset, len);
      for (std::size_t i = next.memo.size() - records.size(); i < next.memo.size(); ++i) {
        trace.written_records.push_back(next.memo.records()[i]);
      }
    }
    return {std::move(next), std::move(trace)};
  }

  static std::vector<RetrievalOption> build_options(const Memo& memo, const PipelineConfig& config) {
    std::vector<RetrievalOption> options;
    if (memo.empty()) return options;
    for (const auto& r : memo.records()) {
      options.push_back(RetrievalOption{options.size() + 1, r.topic, r.summary, false});
    }
    if (config.noto_always_in_options) options.push_back(RetrievalOption::noto(options.size() + 1));
    return options;
  }

  /// Selects memo records relevant to `query` and slices their dialogue.
  /// Oldest records are left out of the option list if it overflows the budget.
  std::pair<EvidenceSet, TurnTrace> retrieve(const Session& session, std::string_view query,
                                             Backend& backend) const {
    TurnTrace trace;
    const auto& memo = session.memo;
    if (memo.empty()) return {EvidenceSet{}, std::move(trace)};

    std::size_t first = 0;
    std::vector<RetrievalOption> options;
    RenderedPrompt prompt;
    for (;; ++first) {
      if (first >= memo.size()) {
        trace.warnings.push_back("retrieval skipped: no option list fits the token budget");
        return {EvidenceSet{}, std::move(trace)};
      }
      options = options_from(memo, first, session.config);
      prompt = render_memo_retrieval(query, options, *templates_);
      if (tokens(prompt.text) <= session.config.token_budget) break;
    }
    if (first > 0) {
      trace.warnings.push_back("retrieval options omit the " + std::to_string(first) +
                               " oldest record(s) to fit the token budget");
    }
    trace.retrieval_options = options;
    const std::string output = call(backend, Task::memo_retrieval, prompt.text, session.config, trace);

    try {
      trace.selected = parse_retrieval(output, options.size());
    } catch (const ParseError& e) {
      trace.warnings.push_back(std::string("retrieval selection ignored: ") + e.what());
      return {EvidenceSet{}, std::move(trace)};
    }

    EvidenceSet evidence;
    for (std::size_t ordinal : trace.selected) {
      const auto& option = options[ordinal - 1];
      if (option.is_noto) continue;
      if (evidence.size() >= session.config.max_evidence_items) break;
      evidence.items.push_back(make_evidence(session.conversation, memo.records()[first + ordinal - 1]));
    }
    trace.evidence = evidence;
    return {std::move(evidence), std::move(trace)};
  }

  /// Generates the reply. If the prompt overflows the budget, evidence items
  /// are dropped from the end first, then the recent window shrinks.
  std::pair<std::string, TurnTrace> respond(const Session& session, std::string_view user_input,
                                            const EvidenceSet& evidence, Backend& backend) const {
    if (user_input.empty()) throw DataError("user input must be non-empty");
    TurnTrace trace;
    EvidenceSet kept;
    for (const auto& item : evidence.items) {
      if (kept.size() >= session.config.max_evidence_items) break;
      kept.items.push_back(item);
    }
    std::size_t recent_limit = session.config.recent_window_lines;
    RenderedPrompt prompt;
    std::vector<DialogueLine> recent;
    bool trimmed = false;
    for (;;) {
      recent = recent_window(session, kept, recent_limit);
      prompt = render_chat_with_memo(kept, recent, user_input, *templates_);
      if (tokens(prompt.text) <= session.config.token_budget) break;
      trimmed = true;
      if (!kept.empty()) {
        kept.items.pop_back();
      } else if (!recent.empty()) {
        recent_limit = recent.size() - 1;
      } else {
        throw BudgetError("user input alone exceeds the token budget of " +
                          std::to_string(session.config.token_budget));
      }
    }
    if (trimmed) trace.warnings.push_back("chat prompt trimmed to fit the token budget");
    trace.evidence_used = kept.size();
    trace.recent_used = recent.size();
    std::string reply = call(backend, Task::chat_with_memo, prompt.text, session.config, trace);
    return {std::move(reply), std::move(trace)};
  }

  /// Runs one full turn. The user line is kept even if a stage fails; every
  /// other change is committed only once the reply is in hand.
  TurnResult handle_user_message(Session& session, const std::string& text, Backend& backend) const {
    if (text.empty()) throw DataError("message text must be non-empty");
    session.conversation = session.conversation.appended(Speaker::user, text);

    Session work = session;
    TurnTrace trace;
    if (should_memorize(work)) {
      auto [updated, fragment] = memorize(work, backend);
      work = std::move(updated);
      merge(trace, std::move(fragment));
    }
    auto [evidence, retrieval] = retrieve(work, text, backend);
    merge(trace, std::move(retrieval));
    auto [reply, response] = respond(work, text, evidence, backend);
    merge(trace, std::move(response));
    if (reply.empty()) {
      throw StageError(std::string(to_string(Task::chat_with_memo)),
                       BackendError(BackendErrorKind::api, "empty completion"));
    }
    work.conversation = work.conversation.appended(Speaker::bot, reply);
    session = std::move(work);
    return {std::move(reply), std::move(trace)};
  }

 private:
  static std::vector<RetrievalOption> options_from(const Memo& memo, std::size_t first,
                                                   const PipelineConfig& config) {
    std::vector<RetrievalOption> options;
    for (std::size_t i = first; i < memo.size(); ++i) {
      const auto& r = memo.records()[i];
      options.push_back(RetrievalOption{options.size() + 1, r.topic, r.summary, false});
    }
    if (config.noto_always_in_options) options.push_back(RetrievalOption::noto(options.size() + 1));
    return options;
  }

  /// The last `limit` history lines, skipping any already shown as evidence.
  static std::vector<DialogueLine> recent_window(const Session& session, const EvidenceSet& evidence,
                                                 std::size_t limit) {
    const std::size_t end = history_end(session);
    const std::size_t begin = end > session.config.recent_window_lines
                                  ? end - session.config.recent_window_lines
                                  : 0;
    std::vector<DialogueLine> out;
    const auto lines = session.conversation.lines();
    for (std::size_t i = begin; i < end; ++i) {
      const auto& line = lines[i];
      const bool shown = std::any_of(evidence.items.begin(), evidence.items.end(), [&](const EvidenceItem& e) {
        return line.index >= e.start && line.index <= e.end;
      });
      if (!shown) out.push_back(line);
    }
    if (out.size() > limit) out.erase(out.begin(), out.end() - static_cast<std::ptrdiff_t>(limit));
    return out;
  }

  std::size_t longest_fitting_chunk(std::span<const DialogueLine> lines, std::size_t budget) const {
    auto fits = [&](std::size_t n) {
      return tokens(render_memo_writing(lines.first(n), *templates_).text) <= budget;
    };
    if (fits(lines.size())) return lines.size();
    std::size_t lo = 0, hi = lines.size();  // fits(lo) or lo == 0; !fits(hi)
    while (hi - lo > 1) {
      const std::size_t mid = lo + (hi - lo) / 2;
      if (fits(mid)) lo = mid;
      else hi = mid;
    }
    return lo;
  }

  std::string call(Backend& backend, Task stage, const std::string& prompt,
                   const PipelineConfig& config, TurnTrace& trace) const {
    CompletionRequest request;
    request.prompt = prompt;
    request.temperature = config.temperature;
    request.max_new_tokens = config.max_new_tokens;
    std::string output;
    try {
      output = backend.complete(request);
    } catch (const BackendError& e) {
      throw StageError(std::string(to_string(stage)), e);
    }
    trace.calls.push_back(StageCall{stage, prompt, output, tokens(prompt)});
    return output;
  }

  static void merge(TurnTrace& into, TurnTrace&& from) {
    into.memo_written = into.memo_written || from.memo_written;
    for (auto& r : from.written_records) into.written_records.push_back(std::move(r));
    if (!from.retrieval_options.empty()) into.retrieval_options = std::move(from.retrieval_options);
    if (!from.selected.empty()) into.selected = std::move(from.selected);
    if (!from.evidence.empty()) into.evidence = std::move(from.evidence);
    if (from.evidence_used) into.evidence_used = from.evidence_used;
    if (from.recent_used) into.recent_used = from.recent_used;
    for (auto& c : from.calls) into.calls.push_back(std::move(c));
    for (auto& w : from.warnings) into.warnings.push_back(std::move(w));
  }

  TokenCounter count_tokens_;
  const TemplateSet* templates_;
};

}  // namespace memoloop
