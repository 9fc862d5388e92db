#pragma once

// Rendering of the memo-writing, memo-retrieval, chat-with-memo and judge
// prompts, and parsing of model outputs back into domain values.

#include <charconv>
#include <optional>
#include <regex>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "memoloop/core.hpp"
#include "memoloop/error.hpp"
#include "memoloop/templates.hpp"
#include "memoloop/text.hpp"

namespace memoloop {

inline constexpr std::string_view kTurnSeparator = " ### ";
inline constexpr std::string_view kNotoTopic = "NOTO";
inline constexpr std::string_view kNotoSummary = "None of the others.";

struct RetrievalOption {
  std::size_t ordinal = 0;
  std::string topic;
  std::optional<std::string> summary;
  bool is_noto = false;

  static RetrievalOption noto(std::size_t ordinal) {
    return {ordinal, std::string(kNotoTopic), std::string(kNotoSummary), true};
  }

  friend bool operator==(const RetrievalOption&, const RetrievalOption&) = default;
};

struct JudgeVerdict {
  std::string explanation;
  int rating = 0;
};

/// Throws DataError unless ordinals are exactly 1..K with at most one NOTO.
inline void check_options(std::span<const RetrievalOption> options) {
  std::size_t noto = 0;
  for (std::size_t i = 0; i < options.size(); ++i) {
    if (options[i].ordinal != i + 1) {
      throw DataError("option " + std::to_string(i + 1) + " carries ordinal " +
                      std::to_string(options[i].ordinal));
    }
    if (options[i].is_noto) ++noto;
  }
  if (noto > 1) throw DataError("at most one NOTO option is allowed");
}

inline std::string format_line(const DialogueLine& line) {
  return std::string(to_string(line.speaker)) + ": " + line.text;
}

inline std::string join_turns(std::span<const DialogueLine> lines) {
  std::string out;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (i) out += kTurnSeparator;
    out += format_line(lines[i]);
  }
  return out;
}

/// Renders the memo-writing prompt. Lines are renumbered 1..M locally,
/// whatever their global index.
inline RenderedPrompt render_memo_writing(std::span<const DialogueLine> chunk,
                                          const TemplateSet& templates = TemplateSet::builtin()) {
  if (chunk.empty()) throw DataError("memo writing needs a non-empty chunk");
  std::string conversation;
  for (std::size_t i = 0; i < chunk.size(); ++i) {
    if (i) conversation += '\n';
    conversation += "(line " + std::to_string(i + 1) + ") " + format_line(chunk[i]);
  }
  const std::string count = std::to_string(chunk.size());
  return templates.get(Task::memo_writing)
      .render({{"article", std::string(text::indefinite_article(chunk.size()))},
               {"line_count", count},
               {"conversation", conversation}});
}

inline std::string format_option(const RetrievalOption& option) {
  std::string out = "(" + std::to_string(option.ordinal) + ") " + option.topic;
  if (option.summary) out += ". " + *option.summary;
  return out;
}

inline RenderedPrompt render_memo_retrieval(std::string_view query,
                                            std::span<const RetrievalOption> options,
                                            const TemplateSet& templates = TemplateSet::builtin()) {
  if (options.empty()) throw DataError("memo retrieval needs at least one option");
  check_options(options);
  std::string rendered;
  for (std::size_t i = 0; i < options.size(); ++i) {
    if (i) rendered += '\n';
    rendered += format_option(options[i]);
  }
  return templates.get(Task::memo_retrieval)
      .render({{"option_count", std::to_string(options.size())},
               {"query", std::string(query)},
               {"options", rendered}});
}

inline std::string format_evidence(std::size_t ordinal, const EvidenceItem& item) {
  return "(" + std::to_string(ordinal) + ") {'Related Topics': '" + item.topic +
         "', 'Related Summaries': '" + item.summary.value_or("") + "', 'Related Dialogs': '" +
         join_turns(item.dialog_lines) + "'}";
}

inline RenderedPrompt render_chat_with_memo(const EvidenceSet& evidence,
                                            std::span<const DialogueLine> recent,
                                            std::string_view user_input,
                                            const TemplateSet& templates = TemplateSet::builtin()) {
  if (user_input.empty()) throw DataError("user input must be non-empty");
  std::string evidences;
  if (evidence.empty()) {
    evidences = "(1) None.";
  } else {
    for (std::size_t i = 0; i < evidence.items.size(); ++i) {
      if (i) evidences += '\n';
      evidences += format_evidence(i + 1, evidence.items[i]);
    }
  }
  return templates.get(Task::chat_with_memo)
      .render({{"evidences", evidences},
               {"recent", recent.empty() ? std::string("None.") : join_turns(recent)},
               {"user_input", std::string(user_input)}});
}

/// Renders the judge prompt; each user turn after the first opens a new
/// paragraph in the history block.
inline RenderedPrompt render_judge(std::span<const DialogueLine> history, std::string_view question,
                                   std::string_view response,
                                   const TemplateSet& templates = TemplateSet::builtin()) {
  if (history.empty()) throw DataError("judge prompt needs a non-empty history");
  std::string rendered;
  for (std::size_t i = 0; i < history.size(); ++i) {
    if (i) rendered += history[i].speaker == Speaker::user ? "\n\n" : "\n";
    rendered += format_line(history[i]);
  }
  return templates.get(Task::judge)
      .render({{"history", rendered},
               {"question", std::string(question)},
               {"response", std::string(response)}});
}

namespace detail {

inline void append_json_escaped(std::string& out, char c) {
  switch (c) {
    case '"': out += "\\\""; break;
    case '\n': out += "\\n"; break;
    case '\r': out += "\\r"; break;
    case '\t': out += "\\t"; break;
    default:
      if (static_cast<unsigned char>(c) < 0x20) {
        static constexpr char hex[] = "0123456789abcdef";
        out += "\\u00";
        out += hex[(c >> 4) & 0xF];
        out += hex[c & 0xF];
      } else {
        out += c;
      }
  }
}

/// Finds the first `[` that opens an array of objects (or an empty array),
/// falling back to the first `[` at all.
inline std::optional<std::size_t> find_array_start(std::string_view s) {
  std::optional<std::size_t> first;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] != '[') continue;
    if (!first) first = i;
    std::size_t j = i + 1;
    while (j < s.size() && text::is_space(s[j])) ++j;
    if (j < s.size() && (s[j] == '{' || s[j] == ']')) return i;
  }
  return first;
}

/// Rewrites a Python-literal-style array starting at `start` into strict JSON:
/// single-quoted strings become double-quoted, trailing commas are dropped,
/// None/True/False become null/true/false. Returns nullopt if the array never
/// closes.
inline std::optional<std::string> repair_array(std::string_view s, std::size_t start) {
  std::string out;
  int depth = 0;
  std::size_t i = start;
  while (i < s.size()) {
    const char c = s[i];
    if (c == '"') {
      out += c;
      ++i;
      while (i < s.size() && s[i] != '"') {
        if (s[i] == '\\' && i + 1 < s.size()) {
          out += s[i];
          out += s[i + 1];
          i += 2;
          continue;
        }
        append_json_escaped(out, s[i]);
        ++i;
      }
      if (i >= s.size()) return std::nullopt;
      out += '"';
      ++i;
    } else if (c == '\'') {
      out += '"';
      ++i;
      bool closed = false;
      while (i < s.size()) {
        const char d = s[i];
        if (d == '\\' && i + 1 < s.size()) {
          const char e = s[i + 1];
          if (e == '\'') {
            out += '\'';
          } else if (e == '"') {
            out += "\\\"";
          } else if (std::string_view("\\/bfnrtu").find(e) != std::string_view::npos) {
            out += '\\';
            out += e;
          } else {
            out += "\\\\";
            out += e;
          }
          i += 2;
          continue;
        }
        if (d == '\'' && closes_single_quote(s.substr(i + 1))) {
          closed = true;
          ++i;
          break;
        }
        append_json_escaped(out, d);
        ++i;
      }
      if (!closed) return std::nullopt;
      out += '"';
    } else if (c == ',') {
      std::size_t j = i + 1;
      while (j < s.size() && text::is_space(s[j])) ++j;
      if (j < s.size() && (s[j] == ']' || s[j] == '}')) {
        i = j;  // trailing comma
      } else {
        out += c;
        ++i;
      }
    } else if (c == '[' || c == '{') {
      ++depth;
      out += c;
      ++i;
    } else if (c == ']' || c == '}') {
      --depth;
      out += c;
      ++i;
      if (depth == 0) return out;
    } else if (std::isalpha(static_cast<unsigned char>(c))) {
      std::size_t j = i;
      while (j < s.size() && std::isalpha(static_cast<unsigned char>(s[j]))) ++j;
      const std::string_view word = s.substr(i, j - i);
      if (word == "None") out += "null";
      else if (word == "True") out += "true";
      else if (word == "False") out += "false";
      else out += word;
      i = j;
    } else {
      out += c;
      ++i;
    }
  }
  return std::nullopt;
}

inline std::size_t read_line_number(const nlohmann::json& v, std::string_view key) {
  if (v.is_number_integer()) {
    const auto n = v.get<long long>();
    if (n < 0) throw ParseError(ParseErrorKind::repair_failed, std::string(key) + " is negative");
    return static_cast<std::size_t>(n);
  }
  if (v.is_number_float()) {
    const double d = v.get<double>();
    if (d >= 0 && d == static_cast<double>(static_cast<long long>(d))) return static_cast<std::size_t>(d);
  }
  if (v.is_string()) {
    const auto s = text::trim(v.get_ref<const std::string&>());
    std::size_t n = 0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), n);
    if (ec == std::errc() && ptr == s.data() + s.size() && !s.empty()) return n;
  }
  throw ParseError(ParseErrorKind::repair_failed, std::string(key) + " is not a line number");
}

}  // namespace detail

/// Pulls the first record array out of free-form model output, repairing
/// code fences, single quotes and trailing commas. No span validation.
inline std::vector<MemoRecord> extract_records(std::string_view output) {
  std::string cleaned(output);
  cleaned = text::replace_all(std::move(cleaned), "```json", "");
  cleaned = text::replace_all(std::move(cleaned), "```JSON", "");
  cleaned = text::replace_all(std::move(cleaned), "```", "");

  const auto start = detail::find_array_start(cleaned);
  if (!start) throw ParseError(ParseErrorKind::no_json_found, "no JSON array in model output");
  const auto repaired = detail::repair_array(cleaned, *start);
  if (!repaired) throw ParseError(ParseErrorKind::repair_failed, "unterminated array or string");

  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(*repaired);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(ParseErrorKind::repair_failed, e.what());
  }
  if (!doc.is_array()) throw ParseError(ParseErrorKind::repair_failed, "expected an array");

  std::vector<MemoRecord> records;
  for (const auto& item : doc) {
    if (!item.is_object()) throw ParseError(ParseErrorKind::repair_failed, "array item is not an object");
    if (!item.contains("topic") || !item["topic"].is_string()) {
      throw ParseError(ParseErrorKind::repair_failed, "record without a string 'topic'");
    }
    if (!item.contains("start") || !item.contains("end")) {
      throw ParseError(ParseErrorKind::repair_failed, "record without 'start'/'end'");
    }
    MemoRecord r;
    r.topic = item["topic"].get<std::string>();
    if (item.contains("summary") && !item["summary"].is_null()) {
      if (!item["summary"].is_string()) {
        throw ParseError(ParseErrorKind::repair_failed, "'summary' is not a string");
      }
      r.summary = item["summary"].get<std::string>();
    }
    r.start = detail::read_line_number(item["start"], "start");
    r.end = detail::read_line_number(item["end"], "end");
    records.push_back(std::move(r));
  }
  return records;
}

/// Parses a memo-writing answer over a chunk of `chunk_len` lines into
/// strict-valid, chunk-local records.
inline std::vector<MemoRecord> parse_memo_writing(std::string_view output, std::size_t chunk_len) {
  if (chunk_len < 1) throw DataError("chunk_len must be at least 1");
  auto records = extract_records(output);
  if (records.empty()) throw ParseError(ParseErrorKind::invalid_spans, "no records");
  const auto check = validate_records(records, chunk_len, ValidationMode::lenient);
  if (!check.ok()) throw ParseError(ParseErrorKind::invalid_spans, check.describe());
  return normalize_records(records, chunk_len);
}

/// Selection ordinals from the first run of digits and '#', without bound checks.
inline std::set<std::size_t> extract_selection(std::string_view output) {
  std::size_t i = 0;
  while (i < output.size()) {
    const char c = output[i];
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '#') {
      std::size_t j = i;
      bool digit = false;
      while (j < output.size() && (std::isdigit(static_cast<unsigned char>(output[j])) || output[j] == '#')) {
        digit = digit || output[j] != '#';
        ++j;
      }
      if (digit) {
        std::set<std::size_t> out;
        std::size_t k = i;
        while (k < j) {
          std::size_t m = k;
          while (m < j && output[m] != '#') ++m;
          if (m > k) {
            std::size_t n = 0;
            const auto [ptr, ec] = std::from_chars(output.data() + k, output.data() + m, n);
            if (ec != std::errc()) {
              throw ParseError(ParseErrorKind::out_of_range,
                               "ordinal " + std::string(output.substr(k, m - k)) + " overflows");
            }
            out.insert(n);
          }
          k = m + 1;
        }
        return out;
      }
      i = j;
    } else {
      ++i;
    }
  }
  throw ParseError(ParseErrorKind::no_selection_found, "no option numbers in model output");
}

inline std::set<std::size_t> parse_retrieval(std::string_view output, std::size_t num_options) {
  if (num_options < 1) throw DataError("num_options must be at least 1");
  auto selected = extract_selection(output);
  for (std::size_t ordinal : selected) {
    if (ordinal < 1 || ordinal > num_options) {
      throw ParseError(ParseErrorKind::out_of_range, "option " + std::to_string(ordinal) +
                                                         " not in 1.." + std::to_string(num_options));
    }
  }
  return selected;
}

inline std::string format_selection(const std::set<std::size_t>& ordinals) {
  std::string out;
  for (std::size_t o : ordinals) {
    if (!out.empty()) out += '#';
    out += std::to_string(o);
  }
  return out;
}

/// Takes the last `[[N]]` in the output; the rating must lie in 1..100.
inline JudgeVerdict parse_judge(std::string_view output) {
  static const std::regex rating_re(R"(\[\[\s*([+-]?\d+)\s*\]\])");
  const std::string s(output);
  std::smatch last;
  bool found = false;
  for (auto it = std::sregex_iterator(s.begin(), s.end(), rating_re); it != std::sregex_iterator(); ++it) {
    last = *it;
    found = true;
  }
  if (!found) throw ParseError(ParseErrorKind::no_rating_found, "no [[rating]] in judge output");
  const std::string digits = last[1].str();
  long long value = 0;
  const char* begin = digits.data() + (digits.front() == '+' ? 1 : 0);
  const auto [ptr, ec] = std::from_chars(begin, digits.data() + digits.size(), value);
  if (ec != std::errc() || value < 1 || value > 100) {
    throw ParseError(ParseErrorKind::rating_out_of_range, "rating " + digits + " not in 1..100");
  }
  return JudgeVerdict{std::string(text::trim(s.substr(0, static_cast<std::size_t>(last.position(0))))),
                      static_cast<int>(value)};
}

}  // namespace memoloop
