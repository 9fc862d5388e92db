#pragma once

// JSON mappings for the domain types, plus JSONL helpers.

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "memoloop/core.hpp"
#include "memoloop/error.hpp"
#include "memoloop/pipeline.hpp"
#include "memoloop/prompts.hpp"

namespace memoloop {

using nlohmann::json;

inline void to_json(json& j, Speaker s) { j = std::string(to_string(s)); }
inline void from_json(const json& j, Speaker& s) { s = speaker_from_string(j.get<std::string>()); }

inline void to_json(json& j, const DialogueLine& l) {
  j = json{{"index", l.index}, {"speaker", l.speaker}, {"text", l.text}};
}
inline void from_json(const json& j, DialogueLine& l) {
  l.index = j.at("index").get<std::size_t>();
  l.speaker = j.at("speaker").get<Speaker>();
  l.text = j.at("text").get<std::string>();
}

inline void to_json(json& j, const MemoRecord& r) {
  j = json{{"topic", r.topic}};
  if (r.summary) j["summary"] = *r.summary;
  j["start"] = r.start;
  j["end"] = r.end;
}
inline void from_json(const json& j, MemoRecord& r) {
  r.topic = j.at("topic").get<std::string>();
  r.summary = j.contains("summary") && !j["summary"].is_null()
                  ? std::optional<std::string>(j["summary"].get<std::string>())
                  : std::nullopt;
  r.start = j.at("start").get<std::size_t>();
  r.end = j.at("end").get<std::size_t>();
}

inline void to_json(json& j, const Memo& m) {
  j = json{{"records", json::array()}, {"covered_until", m.covered_until()}};
  for (const auto& r : m.records()) j["records"].push_back(r);
}
inline void from_json(const json& j, Memo& m) {
  m = Memo::from_records(j.at("records").get<std::vector<MemoRecord>>(),
                         j.at("covered_until").get<std::size_t>());
}

/// Conversations travel as their line array.
inline json conversation_to_json(const Conversation& c) {
  json j = json::array();
  for (const auto& l : c.lines()) j.push_back(l);
  return j;
}
inline Conversation conversation_from_json(const json& j, Alternation alternation) {
  if (!j.is_array()) throw DataError("conversation must be an array of lines");
  std::vector<DialogueLine> lines;
  for (std::size_t i = 0; i < j.size(); ++i) {
    const auto& e = j[i];
    DialogueLine l;
    l.index = e.contains("index") ? e["index"].get<std::size_t>() : i + 1;
    l.speaker = e.at("speaker").get<Speaker>();
    l.text = e.at("text").get<std::string>();
    lines.push_back(std::move(l));
  }
  return Conversation::from_lines(std::move(lines), alternation);
}

inline void to_json(json& j, const EvidenceItem& e) {
  j = json{{"topic", e.topic}, {"start", e.start}, {"end", e.end}, {"dialog_lines", e.dialog_lines}};
  if (e.summary) j["summary"] = *e.summary;
}
inline void from_json(const json& j, EvidenceItem& e) {
  e.topic = j.at("topic").get<std::string>();
  e.summary = j.contains("summary") && !j["summary"].is_null()
                  ? std::optional<std::string>(j["summary"].get<std::string>())
                  : std::nullopt;
  e.start = j.at("start").get<std::size_t>();
  e.end = j.at("end").get<std::size_t>();
  e.dialog_lines = j.at("dialog_lines").get<std::vector<DialogueLine>>();
}

inline void to_json(json& j, const EvidenceSet& e) { j = e.items; }
inline void from_json(const json& j, EvidenceSet& e) { e.items = j.get<std::vector<EvidenceItem>>(); }

inline void to_json(json& j, const RetrievalOption& o) {
  j = json{{"ordinal", o.ordinal}, {"topic", o.topic}, {"is_noto", o.is_noto}};
  if (o.summary) j["summary"] = *o.summary;
}
inline void from_json(const json& j, RetrievalOption& o) {
  o.ordinal = j.at("ordinal").get<std::size_t>();
  o.topic = j.at("topic").get<std::string>();
  o.summary = j.contains("summary") ? std::optional<std::string>(j["summary"].get<std::string>())
                                    : std::nullopt;
  o.is_noto = j.value("is_noto", false);
}

inline void to_json(json& j, const PipelineConfig& c) {
  j = json{{"memorize_after_lines", c.memorize_after_lines},
           {"recent_window_lines", c.recent_window_lines},
           {"token_budget", c.token_budget},
           {"temperature", c.temperature},
           {"max_new_tokens", c.max_new_tokens},
           {"noto_always_in_options", c.noto_always_in_options},
           {"max_evidence_items", c.max_evidence_items}};
}
/// Missing keys keep their defaults.
inline void from_json(const json& j, PipelineConfig& c) {
  c.memorize_after_lines = j.value("memorize_after_lines", c.memorize_after_lines);
  c.recent_window_lines = j.value("recent_window_lines", c.recent_window_lines);
  c.token_budget = j.value("token_budget", c.token_budget);
  c.temperature = j.value("temperature", c.temperature);
  c.max_new_tokens = j.value("max_new_tokens", c.max_new_tokens);
  c.noto_always_in_options = j.value("noto_always_in_options", c.noto_always_in_options);
  c.max_evidence_items = j.value("max_evidence_items", c.max_evidence_items);
  c.validate();
}

inline void to_json(json& j, const Session& s) {
  j = json{{"id", s.id},
           {"config", s.config},
           {"conversation", conversation_to_json(s.conversation)},
           {"memo", s.memo}};
}
inline void from_json(const json& j, Session& s) {
  s.id = j.at("id").get<std::string>();
  s.config = j.value("config", PipelineConfig{});
  s.conversation = conversation_from_json(j.at("conversation"), Alternation::lenient);
  s.memo = j.value("memo", Memo{});
  if (s.memo.covered_until() > s.conversation.size()) {
    throw DataError("memo covers " + std::to_string(s.memo.covered_until()) + " lines of a " +
                    std::to_string(s.conversation.size()) + "-line conversation");
  }
}

inline void to_json(json& j, const StageCall& c) {
  j = json{{"stage", std::string(to_string(c.stage))},
           {"prompt", c.prompt},
           {"output", c.output},
           {"prompt_tokens", c.prompt_tokens}};
}

inline void to_json(json& j, const TurnTrace& t) {
  j = json{{"memo_written", t.memo_written},
           {"written_records", t.written_records},
           {"retrieval_options", t.retrieval_options},
           {"selected", t.selected},
           {"evidence", t.evidence},
           {"evidence_used", t.evidence_used},
           {"recent_used", t.recent_used},
           {"prompts", t.prompts()},
           {"raw_outputs", t.raw_outputs()},
           {"calls", t.calls},
           {"warnings", t.warnings}};
}

inline std::vector<json> read_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::vector<json> out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (text::trim(line).empty()) continue;
    try {
      out.push_back(json::parse(line));
    } catch (const json::parse_error& e) {
      throw DataError(path.string() + ":" + std::to_string(n) + ": " + e.what());
    }
  }
  return out;
}

inline json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

inline void write_jsonl(std::ostream& out, const std::vector<json>& rows) {
  for (const auto& r : rows) out << r.dump() << '\n';
}

}  // namespace memoloop
