#pragma once

// Reference implementations of the scoring rules, written independently of
// the library for cross-checking.

#include <algorithm>
#include <cctype>
#include <regex>
#include <string>
#include <vector>

#include "memoloop/core.hpp"

namespace oracle {

using memoloop::MemoRecord;

inline std::string norm(const std::string& s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  std::string out;
  for (std::size_t i = a; i < b; ++i) out += static_cast<char>(std::tolower(static_cast<unsigned char>(s[i])));
  return out;
}

inline std::vector<std::string> tokens(const std::string& s) {
  std::string lowered;
  for (char c : s) {
    if (std::ispunct(static_cast<unsigned char>(c))) continue;
    lowered += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  }
  std::vector<std::string> out;
  static const std::regex word(R"(\S+)");
  for (auto it = std::sregex_iterator(lowered.begin(), lowered.end(), word); it != std::sregex_iterator(); ++it) {
    out.push_back(it->str());
  }
  return out;
}

inline double f1(double p, double r) { return p + r > 0 ? 2 * p * r / (p + r) : 0.0; }

/// Sort both token lists and walk them in step to count the multiset intersection.
inline double lexical(const std::string& cand, const std::string& ref) {
  auto c = tokens(cand);
  auto r = tokens(ref);
  if (c.empty() || r.empty()) return 0.0;
  std::sort(c.begin(), c.end());
  std::sort(r.begin(), r.end());
  std::size_t i = 0, j = 0, common = 0;
  while (i < c.size() && j < r.size()) {
    if (c[i] == r[j]) {
      ++common;
      ++i;
      ++j;
    } else if (c[i] < r[j]) {
      ++i;
    } else {
      ++j;
    }
  }
  return f1(double(common) / double(c.size()), double(common) / double(r.size()));
}

struct SpanScore {
  double tp, tr, tf, sp, sr, sf;
};

/// Enumerates every pred/gold pairing; a pair contributes only on identical spans.
inline SpanScore memo_writing(const std::vector<MemoRecord>& pred, const std::vector<MemoRecord>& gold) {
  double topic = 0, summary = 0;
  for (const auto& p : pred) {
    for (const auto& g : gold) {
      if (p.start != g.start || p.end != g.end) continue;
      if (norm(p.topic) == norm(g.topic)) topic += 1;
      if (p.summary && g.summary) summary += lexical(*p.summary, *g.summary);
    }
  }
  const double np = double(pred.size()), ng = double(gold.size());
  const double tp = np ? topic / np : 0, tr = ng ? topic / ng : 0;
  const double sp = np ? summary / np : 0, sr = ng ? summary / ng : 0;
  return {tp, tr, f1(tp, tr), sp, sr, f1(sp, sr)};
}

struct RetrievalScore {
  double p, r, f;
};

inline RetrievalScore retrieval(const std::vector<std::size_t>& pred, const std::vector<std::size_t>& gold) {
  if (pred.empty() && gold.empty()) return {1, 1, 1};
  std::size_t hits = 0;
  for (auto a : pred) {
    for (auto b : gold) hits += a == b;
  }
  const double p = pred.empty() ? 0 : double(hits) / double(pred.size());
  const double r = gold.empty() ? 0 : double(hits) / double(gold.size());
  return {p, r, f1(p, r)};
}

}  // namespace oracle
