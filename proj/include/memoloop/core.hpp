#pragma once

// Conversation and memo domain model plus the span algebra over them.

#include <algorithm>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "memoloop/error.hpp"
#include "memoloop/text.hpp"

namespace memoloop {

enum class Speaker { user, bot };

inline std::string_view to_string(Speaker s) { return s == Speaker::user ? "user" : "bot"; }

inline Speaker speaker_from_string(std::string_view s) {
  if (s == "user") return Speaker::user;
  if (s == "bot") return Speaker::bot;
  throw DataError("unknown speaker '" + std::string(s) + "'");
}

struct DialogueLine {
  std::size_t index = 0;  // 1-based, global within its conversation
  Speaker speaker = Speaker::user;
  std::string text;

  friend bool operator==(const DialogueLine&, const DialogueLine&) = default;
};

/// Whether user/bot turns must strictly alternate starting with the user.
/// Imported corpora often break alternation, so they load in lenient mode.
enum class Alternation { strict, lenient };

class Conversation {
 public:
  Conversation() = default;
  explicit Conversation(Alternation alternation) : alternation_(alternation) {}

  /// Builds from already-indexed lines; indices must be exactly 1..N.
  static Conversation from_lines(std::vector<DialogueLine> lines,
                                 Alternation alternation = Alternation::strict) {
    Conversation conv(alternation);
    for (std::size_t k = 0; k < lines.size(); ++k) {
      if (lines[k].index != k + 1) {
        throw DataError("line " + std::to_string(k + 1) + " carries index " +
                        std::to_string(lines[k].index));
      }
      conv.check_next(lines[k].speaker, lines[k].text);
      conv.lines_.push_back(std::move(lines[k]));
    }
    return conv;
  }

  /// Builds from speaker/text pairs, numbering lines from 1.
  static Conversation from_turns(const std::vector<std::pair<Speaker, std::string>>& turns,
                                 Alternation alternation = Alternation::strict) {
    Conversation conv(alternation);
    for (const auto& [speaker, text] : turns) conv = conv.appended(speaker, text);
    return conv;
  }

  Conversation appended(Speaker speaker, std::string text) const {
    check_next(speaker, text);
    Conversation next = *this;
    next.lines_.push_back(DialogueLine{lines_.size() + 1, speaker, std::move(text)});
    return next;
  }

  std::size_t size() const noexcept { return lines_.size(); }
  bool empty() const noexcept { return lines_.empty(); }
  Alternation alternation() const noexcept { return alternation_; }
  std::span<const DialogueLine> lines() const noexcept { return lines_; }

  /// 1-based access.
  const DialogueLine& line(std::size_t index) const {
    if (index < 1 || index > lines_.size()) {
      throw SpanError("line " + std::to_string(index) + " outside 1.." +
                      std::to_string(lines_.size()));
    }
    return lines_[index - 1];
  }

  friend bool operator==(const Conversation&, const Conversation&) = default;

 private:
  void check_next(Speaker speaker, std::string_view text) const {
    if (text.empty()) throw DataError("dialogue line text must be non-empty");
    if (alternation_ == Alternation::strict) {
      const Speaker expected = lines_.size() % 2 == 0 ? Speaker::user : Speaker::bot;
      if (speaker != expected) {
        throw DataError("line " + std::to_string(lines_.size() + 1) + " must be spoken by " +
                        std::string(to_string(expected)));
      }
    }
  }

  Alternation alternation_ = Alternation::strict;
  std::vector<DialogueLine> lines_;
};

struct MemoRecord {
  std::string topic;
  std::optional<std::string> summary;
  std::size_t start = 1;
  std::size_t end = 1;

  std::size_t length() const noexcept { return end - start + 1; }
  bool covers(std::size_t index) const noexcept { return index >= start && index <= end; }

  friend bool operator==(const MemoRecord&, const MemoRecord&) = default;
};

enum class ValidationMode { strict, lenient };

enum class ViolationKind { empty_topic, out_of_bounds, unordered, intersecting, gap };

inline std::string_view to_string(ViolationKind kind) {
  switch (kind) {
    case ViolationKind::empty_topic: return "empty topic";
    case ViolationKind::out_of_bounds: return "out of bounds";
    case ViolationKind::unordered: return "unordered";
    case ViolationKind::intersecting: return "intersecting intervals";
    case ViolationKind::gap: return "gap";
  }
  return "unknown";
}

struct Violation {
  ViolationKind kind;
  std::size_t record = 0;  // index into the validated list; the later record for pairwise kinds
  std::string message;
};

struct ValidationResult {
  std::vector<Violation> violations;

  bool ok() const noexcept { return violations.empty(); }
  bool has(ViolationKind kind) const {
    return std::any_of(violations.begin(), violations.end(),
                       [&](const Violation& v) { return v.kind == kind; });
  }
  std::string describe() const {
    std::string out;
    for (const auto& v : violations) {
      if (!out.empty()) out += "; ";
      out += v.message;
    }
    return out;
  }
};

namespace detail {
inline std::string span_text(std::size_t a, std::size_t b) {
  return std::to_string(a) + ".." + std::to_string(b);
}
}  // namespace detail

/// Checks a record list against a conversation of `total_lines` lines and
/// reports every violation found. Lenient mode allows gaps; strict mode
/// additionally requires contiguous coverage of 1..total_lines.
inline ValidationResult validate_records(std::span<const MemoRecord> records,
                                         std::size_t total_lines, ValidationMode mode) {
  ValidationResult result;
  auto add = [&](ViolationKind kind, std::size_t i, std::string msg) {
    result.violations.push_back(Violation{kind, i, std::move(msg)});
  };

  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    if (text::trim(r.topic).empty()) add(ViolationKind::empty_topic, i, "record " + std::to_string(i + 1) + ": empty topic");
    if (r.start < 1 || r.end < r.start || r.end > total_lines) {
      add(ViolationKind::out_of_bounds, i,
          "record " + std::to_string(i + 1) + ": span " + detail::span_text(r.start, r.end) +
              " not within 1.." + std::to_string(total_lines));
    }
    if (i > 0 && r.start < records[i - 1].start) {
      add(ViolationKind::unordered, i,
          "record " + std::to_string(i + 1) + " starts before record " + std::to_string(i));
    }
  }

  for (std::size_t i = 0; i < records.size(); ++i) {
    for (std::size_t j = i + 1; j < records.size(); ++j) {
      const auto& a = records[i];
      const auto& b = records[j];
      if (std::max(a.start, b.start) <= std::min(a.end, b.end)) {
        add(ViolationKind::intersecting, j,
            "intersecting intervals " + detail::span_text(a.start, a.end) + " and " +
                detail::span_text(b.start, b.end));
      }
    }
  }

  if (mode == ValidationMode::strict) {
    std::size_t expected = 1;
    for (std::size_t i = 0; i < records.size(); ++i) {
      if (records[i].start > expected) {
        add(ViolationKind::gap, i, "gap " + detail::span_text(expected, records[i].start - 1));
      }
      expected = std::max(expected, records[i].end + 1);
    }
    if (expected <= total_lines) {
      add(ViolationKind::gap, records.size(), "gap " + detail::span_text(expected, total_lines));
    }
  }
  return result;
}

/// Repairs a lenient-valid record list into strict form by absorbing every gap
/// into the record before it (a leading gap goes to the first record).
inline std::vector<MemoRecord> normalize_records(std::span<const MemoRecord> records,
                                                 std::size_t total_lines) {
  if (records.empty()) throw SpanError("cannot normalize an empty record list");
  const auto check = validate_records(records, total_lines, ValidationMode::lenient);
  if (!check.ok()) throw SpanError("records are not lenient-valid: " + check.describe());

  std::vector<MemoRecord> out(records.begin(), records.end());
  out.front().start = 1;
  for (std::size_t i = 0; i + 1 < out.size(); ++i) out[i].end = out[i + 1].start - 1;
  out.back().end = total_lines;
  return out;
}

class Memo {
 public:
  Memo() = default;

  /// Validates strict coverage of 1..covered_until.
  static Memo from_records(std::vector<MemoRecord> records, std::size_t covered_until) {
    const auto check = validate_records(records, covered_until, ValidationMode::strict);
    if (!check.ok()) throw DataError("memo is not strict-valid: " + check.describe());
    Memo memo;
    memo.records_ = std::move(records);
    memo.covered_until_ = covered_until;
    return memo;
  }

  std::span<const MemoRecord> records() const noexcept { return records_; }
  std::size_t covered_until() const noexcept { return covered_until_; }
  bool empty() const noexcept { return records_.empty(); }
  std::size_t size() const noexcept { return records_.size(); }

  friend bool operator==(const Memo&, const Memo&) = default;

 private:
  std::vector<MemoRecord> records_;
  std::size_t covered_until_ = 0;
};

/// Appends records written over a chunk (numbered 1..chunk_len) to the memo,
/// shifting them to global line numbers by `chunk_offset`.
inline Memo append_memo(const Memo& memo, std::span<const MemoRecord> new_records,
                        std::size_t chunk_offset, std::size_t chunk_len) {
  if (chunk_offset != memo.covered_until()) {
    throw SpanError("chunk offset " + std::to_string(chunk_offset) +
                    " does not match memo coverage " + std::to_string(memo.covered_until()));
  }
  if (chunk_len == 0 && new_records.empty()) return memo;
  const auto check = validate_records(new_records, chunk_len, ValidationMode::strict);
  if (!check.ok()) throw SpanError("chunk records are not strict-valid: " + check.describe());

  std::vector<MemoRecord> records(memo.records().begin(), memo.records().end());
  for (const auto& r : new_records) {
    MemoRecord shifted = r;
    shifted.start += chunk_offset;
    shifted.end += chunk_offset;
    records.push_back(std::move(shifted));
  }
  const std::size_t covered = memo.covered_until() + chunk_len;
  const auto post = validate_records(records, covered, ValidationMode::strict);
  if (!post.ok()) throw SpanError("memo invariant broken after append: " + post.describe());
  return Memo::from_records(std::move(records), covered);
}

inline std::vector<DialogueLine> slice(const Conversation& conversation, std::size_t start,
                                       std::size_t end) {
  if (start < 1 || end < start || end > conversation.size()) {
    throw SpanError("span " + detail::span_text(start, end) + " outside 1.." +
                    std::to_string(conversation.size()));
  }
  const auto lines = conversation.lines();
  return {lines.begin() + static_cast<std::ptrdiff_t>(start - 1),
          lines.begin() + static_cast<std::ptrdiff_t>(end)};
}

struct EvidenceItem {
  std::string topic;
  std::optional<std::string> summary;
  std::size_t start = 0;
  std::size_t end = 0;
  std::vector<DialogueLine> dialog_lines;

  friend bool operator==(const EvidenceItem&, const EvidenceItem&) = default;
};

struct EvidenceSet {
  std::vector<EvidenceItem> items;

  bool empty() const noexcept { return items.empty(); }
  std::size_t size() const noexcept { return items.size(); }
  friend bool operator==(const EvidenceSet&, const EvidenceSet&) = default;
};

inline EvidenceItem make_evidence(const Conversation& conversation, const MemoRecord& record) {
  return EvidenceItem{record.topic, record.summary, record.start, record.end,
                      slice(conversation, record.start, record.end)};
}

namespace detail {

inline bool closes_single_quote(std::string_view rest) {
  for (char c : rest) {
    if (text::is_space(c)) continue;
    return c == ',' || c == ':' || c == '}' || c == ']';
  }
  return false;
}

inline void append_single_quoted(std::string& out, std::string_view s) {
  out += '\'';
  for (std::size_t i = 0; i < s.size(); ++i) {
    const char c = s[i];
    switch (c) {
      case '\\': out += "\\\\"; break;
      case '\n': out += "\\n"; break;
      case '\r': out += "\\r"; break;
      case '\t': out += "\\t"; break;
      case '\'':
        // Bare apostrophes stay bare, as in hand-written answers; escape only
        // where a reader would take the quote as the end of the string.
        out += closes_single_quote(s.substr(i + 1)) ? "\\'" : "'";
        break;
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
  out += '\'';
}

}  // namespace detail

/// Serializes records in the answer format used by the memo-writing task:
/// `[{'topic': ..., 'summary': ..., 'start': 1, 'end': 8}, ...]`.
/// The summary key is omitted for records without one.
inline std::string format_records(std::span<const MemoRecord> records) {
  std::string out = "[";
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    if (i) out += ", ";
    out += "{'topic': ";
    detail::append_single_quoted(out, r.topic);
    if (r.summary) {
      out += ", 'summary': ";
      detail::append_single_quoted(out, *r.summary);
    }
    out += ", 'start': " + std::to_string(r.start) + ", 'end': " + std::to_string(r.end) + "}";
  }
  out += "]";
  return out;
}

}  // namespace memoloop
