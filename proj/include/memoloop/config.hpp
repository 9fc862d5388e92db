#pragma once

// Engine configuration file (JSON) and backend descriptor parsing.

#include <chrono>
#include <filesystem>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "memoloop/error.hpp"
#include "memoloop/json_io.hpp"
#include "memoloop/pipeline.hpp"
#include "memoloop/remote.hpp"

namespace memoloop {

inline std::string_view to_string(BackendKind k) {
  return k == BackendKind::remote_chat_api ? "remote_chat_api" : "scripted";
}

/// Relative `script_file` paths resolve against `base_dir`.
inline BackendDescriptor descriptor_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {}) {
  BackendDescriptor d;
  try {
    const auto kind = j.at("kind").get<std::string>();
    if (kind == "remote_chat_api") d.kind = BackendKind::remote_chat_api;
    else if (kind == "scripted") d.kind = BackendKind::scripted;
    else throw BackendError(BackendErrorKind::config, "unknown backend kind '" + kind + "'");
    if (j.contains("endpoint")) d.endpoint = j["endpoint"].get<std::string>();
    if (j.contains("model_name")) d.model_name = j["model_name"].get<std::string>();
    if (j.contains("auth_env")) d.auth_env = j["auth_env"].get<std::string>();
    d.retry.max_retries = j.value("max_retries", d.retry.max_retries);
    d.retry.base_delay = std::chrono::milliseconds(j.value("base_delay_ms", d.retry.base_delay.count()));
    d.timeout = std::chrono::seconds(j.value("timeout_s", d.timeout.count()));
    if (j.contains("script")) d.script = ScriptedBackend::parse_script(j["script"]);
    if (j.contains("script_file")) {
      std::filesystem::path p = j["script_file"].get<std::string>();
      if (p.is_relative() && !base_dir.empty()) p = base_dir / p;
      d.script = ScriptedBackend::parse_script(read_json(p));
    }
  } catch (const nlohmann::json::exception& e) {
    throw BackendError(BackendErrorKind::config, std::string("backend descriptor: ") + e.what());
  }
  d.validate();
  return d;
}

inline BackendDescriptor read_descriptor(const std::filesystem::path& path) {
  return descriptor_from_json(read_json(path), path.parent_path());
}

struct EngineConfig {
  BackendDescriptor chat;
  std::optional<BackendDescriptor> judge;
  PipelineConfig pipeline;
  std::filesystem::path storage_path = "sessions";
  std::string listen_address = "127.0.0.1:8080";

  std::pair<std::string, int> listen() const {
    const auto colon = listen_address.rfind(':');
    if (colon == std::string::npos) throw DataError("listen_address must be host:port");
    try {
      const int port = std::stoi(listen_address.substr(colon + 1));
      if (port < 0 || port > 65535) throw DataError("port out of range");
      return {listen_address.substr(0, colon), port};
    } catch (const std::logic_error&) {
      throw DataError("listen_address '" + listen_address + "' has no numeric port");
    }
  }

  void validate() const {
    pipeline.validate();
    chat.validate();
    if (judge) judge->validate();
    listen();
  }
};

inline EngineConfig engine_config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {}) {
  EngineConfig c;
  try {
    if (j.contains("chat_backend")) c.chat = descriptor_from_json(j["chat_backend"], base_dir);
    if (j.contains("judge_backend")) c.judge = descriptor_from_json(j["judge_backend"], base_dir);
    if (j.contains("pipeline")) c.pipeline = j["pipeline"].get<PipelineConfig>();
    if (j.contains("storage_path")) {
      c.storage_path = j["storage_path"].get<std::string>();
      if (c.storage_path.is_relative() && !base_dir.empty()) c.storage_path = base_dir / c.storage_path;
    }
    c.listen_address = j.value("listen_address", c.listen_address);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("engine config: ") + e.what());
  }
  c.validate();
  return c;
}

inline EngineConfig read_engine_config(const std::filesystem::path& path) {
  return engine_config_from_json(read_json(path), path.parent_path());
}

}  // namespace memoloop
