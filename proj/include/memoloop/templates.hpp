#pragma once

// Prompt template assets. A template is plain text with `{{name}}`
// placeholders and three section markers, `{{@intro}}`, `{{@body}}` and
// `{{@explanation}}`, which render to nothing but record where each section
// starts. The task explanation must come after the input body.

#include <algorithm>
#include <array>
#include <cctype>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "memoloop/embedded_templates.hpp"
#include "memoloop/error.hpp"

namespace memoloop {

enum class Task { memo_writing, memo_retrieval, chat_with_memo, judge };

inline std::string_view to_string(Task task) {
  switch (task) {
    case Task::memo_writing: return "memo_writing";
    case Task::memo_retrieval: return "memo_retrieval";
    case Task::chat_with_memo: return "chat_with_memo";
    case Task::judge: return "judge";
  }
  return "unknown";
}

inline Task task_from_string(std::string_view s) {
  for (Task t : {Task::memo_writing, Task::memo_retrieval, Task::chat_with_memo, Task::judge}) {
    if (to_string(t) == s) return t;
  }
  throw DataError("unknown task '" + std::string(s) + "'");
}

struct Segment {
  enum class Kind { literal, placeholder, section } kind;
  std::string value;  // literal text, placeholder name, or section name
};

/// Byte offsets of each section in a rendered prompt.
struct RenderedPrompt {
  std::string text;
  std::size_t intro_offset = 0;
  std::size_t body_offset = 0;
  std::size_t explanation_offset = 0;
};

class PromptTemplate {
 public:
  static PromptTemplate parse(Task task, std::string_view source) {
    PromptTemplate tmpl;
    tmpl.task_ = task;
    std::size_t pos = 0;
    std::string literal;
    while (pos < source.size()) {
      const std::size_t open = source.find("{{", pos);
      if (open == std::string_view::npos) {
        literal += source.substr(pos);
        break;
      }
      const std::size_t close = source.find("}}", open + 2);
      const std::string_view name =
          close == std::string_view::npos ? std::string_view{} : source.substr(open + 2, close - open - 2);
      if (!is_identifier(name.starts_with('@') ? name.substr(1) : name)) {
        // Not a placeholder; keep the braces as text.
        literal += source.substr(pos, open + 2 - pos);
        pos = open + 2;
        continue;
      }
      literal += source.substr(pos, open - pos);
      if (!literal.empty()) tmpl.segments_.push_back({Segment::Kind::literal, std::move(literal)});
      literal.clear();
      if (name.starts_with('@')) {
        tmpl.segments_.push_back({Segment::Kind::section, std::string(name.substr(1))});
      } else {
        tmpl.segments_.push_back({Segment::Kind::placeholder, std::string(name)});
      }
      pos = close + 2;
    }
    if (!literal.empty()) tmpl.segments_.push_back({Segment::Kind::literal, std::move(literal)});
    tmpl.check_sections();
    return tmpl;
  }

  Task task() const noexcept { return task_; }
  const std::vector<Segment>& segments() const noexcept { return segments_; }

  std::vector<std::string> placeholders() const {
    std::vector<std::string> out;
    for (const auto& s : segments_) {
      if (s.kind == Segment::Kind::placeholder &&
          std::find(out.begin(), out.end(), s.value) == out.end()) {
        out.push_back(s.value);
      }
    }
    return out;
  }

  /// Every placeholder must be bound; unknown bindings are rejected too.
  RenderedPrompt render(const std::map<std::string, std::string, std::less<>>& values) const {
    RenderedPrompt out;
    const auto names = placeholders();
    for (const auto& name : names) {
      if (!values.contains(name)) throw DataError("unbound placeholder '" + name + "'");
    }
    for (const auto& [name, _] : values) {
      if (std::find(names.begin(), names.end(), name) == names.end()) {
        throw DataError("template " + std::string(to_string(task_)) + " has no placeholder '" +
                        name + "'");
      }
    }
    for (const auto& seg : segments_) {
      switch (seg.kind) {
        case Segment::Kind::literal: out.text += seg.value; break;
        case Segment::Kind::placeholder: out.text += values.find(seg.value)->second; break;
        case Segment::Kind::section:
          if (seg.value == "intro") out.intro_offset = out.text.size();
          if (seg.value == "body") out.body_offset = out.text.size();
          if (seg.value == "explanation") out.explanation_offset = out.text.size();
          break;
      }
    }
    return out;
  }

 private:
  static bool is_identifier(std::string_view s) {
    if (s.empty()) return false;
    for (char c : s) {
      if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_')) return false;
    }
    return true;
  }

  void check_sections() const {
    std::vector<std::string> order;
    for (const auto& s : segments_) {
      if (s.kind != Segment::Kind::section) continue;
      if (s.value != "intro" && s.value != "body" && s.value != "explanation") {
        throw DataError("unknown section marker '@" + s.value + "'");
      }
      order.push_back(s.value);
    }
    if (order != std::vector<std::string>{"intro", "body", "explanation"}) {
      throw DataError("template " + std::string(to_string(task_)) +
                      " must declare sections intro, body, explanation in that order");
    }
  }

  Task task_ = Task::memo_writing;
  std::vector<Segment> segments_;
};

/// The four task templates of one asset version.
class TemplateSet {
 public:
  static constexpr std::string_view default_version = "v1";

  static const TemplateSet& builtin() {
    static const TemplateSet set = [] {
      TemplateSet s;
      s.version_ = std::string(default_version);
      s.templates_ = {PromptTemplate::parse(Task::memo_writing, assets::v1::memo_writing),
                      PromptTemplate::parse(Task::memo_retrieval, assets::v1::memo_retrieval),
                      PromptTemplate::parse(Task::chat_with_memo, assets::v1::chat_with_memo),
                      PromptTemplate::parse(Task::judge, assets::v1::judge)};
      return s;
    }();
    return set;
  }

  /// Loads `<task>.txt` for every task from a versioned asset directory.
  static TemplateSet load(const std::filesystem::path& dir) {
    TemplateSet s;
    s.version_ = dir.filename().string();
    std::size_t i = 0;
    for (Task t : {Task::memo_writing, Task::memo_retrieval, Task::chat_with_memo, Task::judge}) {
      const auto path = dir / (std::string(to_string(t)) + ".txt");
      std::ifstream in(path, std::ios::binary);
      if (!in) throw DataError("cannot read template " + path.string());
      std::ostringstream buf;
      buf << in.rdbuf();
      s.templates_[i++] = PromptTemplate::parse(t, buf.str());
    }
    return s;
  }

  const PromptTemplate& get(Task task) const { return templates_[static_cast<std::size_t>(task)]; }
  const std::string& version() const noexcept { return version_; }

 private:
  std::string version_;
  std::array<PromptTemplate, 4> templates_;
};

}  // namespace memoloop
