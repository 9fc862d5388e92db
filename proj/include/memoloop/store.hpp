#pragma once

// Per-session snapshot files: <root>/<session id>/turn-NNNNNN.json, one per
// saved state, each written to a temporary file and renamed into place.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <random>
#include <regex>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "memoloop/error.hpp"
#include "memoloop/json_io.hpp"
#include "memoloop/pipeline.hpp"

namespace memoloop {

struct SessionSnapshot {
  Session session;
  nlohmann::json last_trace;  // null before the first completed turn
};

inline nlohmann::json snapshot_to_json(const SessionSnapshot& s) {
  return {{"session", s.session}, {"last_trace", s.last_trace}};
}

inline SessionSnapshot snapshot_from_json(const nlohmann::json& j) {
  return {j.at("session").get<Session>(), j.value("last_trace", nlohmann::json())};
}

inline bool valid_session_id(std::string_view id) {
  static const std::regex re("[A-Za-z0-9_-]{1,64}");
  return std::regex_match(id.begin(), id.end(), re);
}

inline std::string new_session_id() {
  static thread_local std::mt19937_64 gen{std::random_device{}()};
  static constexpr char hex[] = "0123456789abcdef";
  std::string id(16, '0');
  for (auto& c : id) c = hex[gen() & 15];
  return id;
}

inline void write_atomically(const std::filesystem::path& path, const std::string& content) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + tmp.string());
    out << content;
    out.flush();
    if (!out) throw DataError("write to " + tmp.string() + " failed");
  }
  std::filesystem::rename(tmp, path);
}

class SessionStore {
 public:
  explicit SessionStore(std::filesystem::path root) : root_(std::move(root)) {
    std::error_code ec;
    std::filesystem::create_directories(root_, ec);
    if (ec) throw DataError("cannot create storage at " + root_.string() + ": " + ec.message());
    const auto probe = root_ / ".write-probe";
    write_atomically(probe, "ok");
    std::filesystem::remove(probe);
  }

  const std::filesystem::path& root() const noexcept { return root_; }

  /// Writes the next numbered snapshot and returns its path.
  std::filesystem::path save(const SessionSnapshot& snap) const {
    const auto dir = dir_for(snap.session.id);
    std::filesystem::create_directories(dir);
    const auto files = snapshot_files(dir);
    const std::size_t next = files.empty() ? 1 : sequence_of(files.back()) + 1;
    char name[32];
    std::snprintf(name, sizeof name, "turn-%06zu.json", next);
    const auto path = dir / name;
    write_atomically(path, snapshot_to_json(snap).dump(2));
    return path;
  }

  std::optional<SessionSnapshot> load(const std::string& id) const {
    if (!valid_session_id(id)) return std::nullopt;
    const auto dir = root_ / id;
    if (!std::filesystem::is_directory(dir)) return std::nullopt;
    const auto files = snapshot_files(dir);
    if (files.empty()) return std::nullopt;
    return snapshot_from_json(read_json(files.back()));
  }

  bool exists(const std::string& id) const {
    return valid_session_id(id) && std::filesystem::is_directory(root_ / id);
  }

  bool remove(const std::string& id) const {
    if (!exists(id)) return false;
    std::filesystem::remove_all(root_ / id);
    return true;
  }

  std::vector<std::string> ids() const {
    std::vector<std::string> out;
    for (const auto& e : std::filesystem::directory_iterator(root_)) {
      if (e.is_directory() && valid_session_id(e.path().filename().string())) {
        out.push_back(e.path().filename().string());
      }
    }
    std::sort(out.begin(), out.end());
    return out;
  }

  std::size_t snapshot_count(const std::string& id) const {
    return exists(id) ? snapshot_files(root_ / id).size() : 0;
  }

 private:
  std::filesystem::path dir_for(const std::string& id) const {
    if (!valid_session_id(id)) throw DataError("invalid session id '" + id + "'");
    return root_ / id;
  }

  static std::vector<std::filesystem::path> snapshot_files(const std::filesystem::path& dir) {
    static const std::regex re(R"(turn-(\d{6,})\.json)");
    std::vector<std::filesystem::path> out;
    for (const auto& e : std::filesystem::directory_iterator(dir)) {
      const auto name = e.path().filename().string();
      if (e.is_regular_file() && std::regex_match(name, re)) out.push_back(e.path());
    }
    std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return sequence_of(a) < sequence_of(b); });
    return out;
  }

  static std::size_t sequence_of(const std::filesystem::path& p) {
    const auto name = p.filename().string();
    return std::stoul(name.substr(5, name.size() - 10));
  }

  std::filesystem::path root_;
};

}  // namespace memoloop
