#pragma once

// Command-line entry points: chat, serve, build-data, evaluate, score.
// Exit codes: 0 ok, 1 usage, 2 data error, 3 backend error.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "CLI11.hpp"
#include "memoloop/config.hpp"
#include "memoloop/dataset.hpp"
#include "memoloop/eval.hpp"
#include "memoloop/json_io.hpp"
#include "memoloop/pipeline.hpp"
#include "memoloop/remote.hpp"
#include "memoloop/service.hpp"
#include "memoloop/store.hpp"

namespace memoloop {

enum ExitCode : int { exit_ok = 0, exit_usage = 1, exit_data = 2, exit_backend = 3 };

namespace cli {

struct PipelineOverrides {
  std::optional<std::size_t> memorize_after, recent_window, token_budget, max_new_tokens, max_evidence;
  std::optional<double> temperature;

  void attach(CLI::App& app) {
    app.add_option("--memorize-after", memorize_after, "Unrecorded lines that trigger a memo write");
    app.add_option("--recent-window", recent_window, "Recent dialogue lines shown to the chat stage");
    app.add_option("--token-budget", token_budget, "Token budget per prompt");
    app.add_option("--max-new-tokens", max_new_tokens, "Completion length limit");
    app.add_option("--max-evidence", max_evidence, "Evidence items per chat prompt");
    app.add_option("--temperature", temperature, "Sampling temperature in [0,1]");
  }

  void apply(PipelineConfig& c) const {
    if (memorize_after) c.memorize_after_lines = *memorize_after;
    if (recent_window) c.recent_window_lines = *recent_window;
    if (token_budget) c.token_budget = *token_budget;
    if (max_new_tokens) c.max_new_tokens = *max_new_tokens;
    if (max_evidence) c.max_evidence_items = *max_evidence;
    if (temperature) c.temperature = *temperature;
    c.validate();
  }
};

struct EngineFlags {
  std::string config_path;
  std::string chat_backend;
  std::string storage;
  std::string listen;
  PipelineOverrides pipeline;

  void attach(CLI::App& app) {
    app.add_option("--config", config_path, "Engine config file (JSON)");
    app.add_option("--chat-backend", chat_backend, "Chat backend descriptor file (JSON)");
    app.add_option("--storage", storage, "Session snapshot directory");
    app.add_option("--listen", listen, "host:port to serve on");
    pipeline.attach(app);
  }

  EngineConfig resolve() const {
    EngineConfig c = config_path.empty() ? EngineConfig{} : read_engine_config(config_path);
    if (!chat_backend.empty()) c.chat = read_descriptor(chat_backend);
    if (!storage.empty()) c.storage_path = storage;
    if (!listen.empty()) c.listen_address = listen;
    pipeline.apply(c.pipeline);
    c.validate();
    return c;
  }
};

inline void require_file(const std::string& path, const std::string& what) {
  if (path.empty()) throw DataError(what + " path is required");
  if (!std::filesystem::is_regular_file(path)) throw DataError(what + " '" + path + "' does not exist");
}

inline int run_chat(const EngineFlags& flags, const std::string& session_id, std::istream& in, std::ostream& out,
                    std::ostream& err) {
  const EngineConfig config = flags.resolve();
  auto backend = make_backend(config.chat);
  const Pipeline pipeline;
  std::optional<SessionStore> store;
  if (!flags.storage.empty() || !flags.config_path.empty()) store.emplace(config.storage_path);

  SessionSnapshot snap;
  snap.session.config = config.pipeline;
  if (!session_id.empty()) {
    if (!store) throw DataError("--session needs --storage or --config");
    if (auto loaded = store->load(session_id)) snap = std::move(*loaded);
    else snap.session.id = session_id;
  } else {
    snap.session.id = new_session_id();
  }
  err << "session " << snap.session.id << " (/memo, /trace, /quit)\n";

  int status = exit_ok;
  std::string line;
  while (out << "user: " << std::flush, std::getline(in, line)) {
    line = std::string(text::trim(line));
    if (line.empty()) continue;
    if (line == "/quit") break;
    if (line == "/memo") {
      out << nlohmann::json(snap.session.memo).dump(2) << '\n';
      continue;
    }
    if (line == "/trace") {
      out << snap.last_trace.dump(2) << '\n';
      continue;
    }
    try {
      auto turn = pipeline.handle_user_message(snap.session, line, *backend);
      snap.last_trace = turn.trace;
      for (const auto& w : turn.trace.warnings) err << "warning: " << w << '\n';
      out << "bot: " << turn.reply << '\n';
      status = exit_ok;
    } catch (const StageError& e) {
      err << "error in " << e.stage() << ": " << e.cause().what() << '\n';
      status = exit_backend;
    } catch (const BudgetError& e) {
      err << "error: " << e.what() << '\n';
      status = exit_data;
    }
    if (store) store->save(snap);
  }
  out << '\n';
  return status;
}

inline int run_serve(const EngineFlags& flags, std::ostream& err) {
  const EngineConfig config = flags.resolve();
  Service service(config, make_backend(config.chat));
  err << "listening on " << config.listen_address << ", sessions in " << config.storage_path.string() << '\n';
  service.listen();
  return exit_ok;
}

struct BuildFlags {
  std::string task = "all";
  std::string corpus;
  std::uint64_t seed = 0;
  std::string counts;
  std::string out;
  double noto_probability = 0.10;
  double noto_gold_share = 0.05;
  std::size_t compose_min = 2, compose_max = 4;
  double eval_fraction = 0.0;
  std::string eval_out;
  bool print_stats = false;
};

inline std::map<Task, std::size_t> parse_counts(const std::string& list) {
  std::map<Task, std::size_t> out;
  std::stringstream ss(list);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (text::trim(item).empty()) continue;
    const auto eq = item.find('=');
    if (eq == std::string::npos) throw DataError("count '" + item + "' is not task=n");
    try {
      out[task_from_string(text::trim(item.substr(0, eq)))] = std::stoul(item.substr(eq + 1));
    } catch (const std::logic_error&) {
      throw DataError("count '" + item + "' has no number");
    }
  }
  return out;
}

inline int run_build(const BuildFlags& f, std::ostream& out, std::ostream& err) {
  require_file(f.corpus, "corpus");
  BuildConfig config;
  config.seed = f.seed;
  config.noto_probability = f.noto_probability;
  config.noto_gold_share = f.noto_gold_share;
  config.compose_min = f.compose_min;
  config.compose_max = f.compose_max;
  config.target_counts = parse_counts(f.counts);
  config.validate();
  const auto corpus = read_corpus(f.corpus);

  std::vector<Task> tasks;
  if (f.task == "all") tasks = {Task::memo_writing, Task::memo_retrieval, Task::chat_with_memo};
  else tasks = {task_from_string(f.task)};

  std::vector<InstructionInstance> all;
  for (Task t : tasks) {
    std::vector<InstructionInstance> built;
    if (t == Task::memo_writing) built = build_memo_writing_set(corpus, config);
    else if (t == Task::memo_retrieval) built = build_retrieval_set(corpus, config);
    else if (t == Task::chat_with_memo) {
      ChatBuildReport report;
      built = build_chat_set(corpus, config, &report);
      for (const auto& id : report.skipped) err << "warning: skipped '" << id << "': no final user/bot exchange\n";
    } else {
      throw DataError("build-data cannot build " + std::string(to_string(t)) + " instances");
    }
    for (const auto& inst : built) verify_instance(inst);
    all.insert(all.end(), built.begin(), built.end());
  }

  auto [train, held] = split_eval(all, f.eval_fraction, f.seed);
  if (f.out.empty()) emit(train, out);
  else emit(train, std::filesystem::path(f.out));
  if (!held.empty()) {
    if (f.eval_out.empty()) throw DataError("--eval-fraction needs --eval-out");
    emit(held, std::filesystem::path(f.eval_out));
  }
  if (f.print_stats) {
    const auto rows = stats(all);
    (f.out.empty() ? err : out) << format_stats(rows);
  }
  return exit_ok;
}

struct EvalFlags {
  std::string cases;
  std::string judge_backend;
  std::string out;
  std::size_t jobs = 1;
  EngineFlags engine;
};

inline int run_evaluate(const EvalFlags& f, std::ostream& out, std::ostream& err) {
  require_file(f.cases, "cases");
  EngineConfig config = f.engine.resolve();
  if (!f.judge_backend.empty()) config.judge = read_descriptor(f.judge_backend);
  if (!config.judge) throw DataError("a judge backend is required (--judge-backend or config judge_backend)");

  std::vector<ConsistencyCase> cases;
  for (const auto& row : read_jsonl(f.cases)) cases.push_back(case_from_json(row));
  auto chat = make_backend(config.chat);
  auto judge = make_backend(*config.judge);
  ConsistencyOptions options;
  options.pipeline = config.pipeline;
  options.jobs = f.jobs;
  const auto report = run_consistency_eval(cases, *chat, *judge, options);
  const auto doc = report_to_json(report);
  if (!f.out.empty()) write_atomically(f.out, doc.dump(2));
  else out << doc.dump(2) << '\n';

  std::ostringstream line;
  line << std::fixed << std::setprecision(2) << "overall " << report.overall.reported() << " over "
       << report.overall.count << " case(s)";
  for (const auto& [q, m] : report.by_type) line << ", " << to_string(q) << ' ' << m.reported();
  line << "; invalid " << report.invalid << ", failed " << report.failed;
  (f.out.empty() ? err : out) << line.str() << '\n';
  return exit_ok;
}

inline std::vector<MemoRecord> records_of(const nlohmann::json& row) {
  if (row.is_string()) return extract_records(row.get<std::string>());
  if (row.is_object()) return row.at("records").get<std::vector<MemoRecord>>();
  return row.get<std::vector<MemoRecord>>();
}

inline std::set<std::size_t> selection_of(const nlohmann::json& row) {
  if (row.is_string()) {
    const auto s = row.get<std::string>();
    return text::trim(s).empty() ? std::set<std::size_t>{} : extract_selection(s);
  }
  if (row.is_object()) return row.at("selected").get<std::set<std::size_t>>();
  return row.get<std::set<std::size_t>>();
}

inline std::string response_of(const nlohmann::json& row) {
  return row.is_string() ? row.get<std::string>() : row.at("text").get<std::string>();
}

struct ScoreFlags {
  std::string task;
  std::string pred;
  std::string gold;
  std::string scorer = "lexical_f1";
};

inline int run_score(const ScoreFlags& f, std::ostream& out) {
  require_file(f.pred, "prediction file");
  require_file(f.gold, "gold file");
  const auto pred = read_jsonl(f.pred);
  const auto gold = read_jsonl(f.gold);
  if (pred.size() != gold.size()) {
    throw DataError("prediction file has " + std::to_string(pred.size()) + " rows, gold has " +
                    std::to_string(gold.size()));
  }
  const ScorerRegistry registry;
  const auto& scorer = registry.get(f.scorer);
  nlohmann::json report = {{"task", f.task}, {"rows", pred.size()}};
  try {
    if (f.task == "writing" || f.task == "memo_writing") {
      SpanMatchTally total;
      for (std::size_t i = 0; i < pred.size(); ++i) {
        total += tally_memo_writing(records_of(pred[i]), records_of(gold[i]), scorer);
      }
      report["scorer"] = scorer.name;
      report["micro"] = score_json(total.score());
    } else if (f.task == "retrieval" || f.task == "memo_retrieval") {
      RetrievalTally total;
      for (std::size_t i = 0; i < pred.size(); ++i) total += tally_retrieval(selection_of(pred[i]), selection_of(gold[i]));
      report["micro"] = score_json(total.score());
    } else if (f.task == "response" || f.task == "chat_with_memo") {
      double sum = 0;
      for (std::size_t i = 0; i < pred.size(); ++i) sum += score_response(response_of(pred[i]), response_of(gold[i]), scorer);
      report["scorer"] = scorer.name;
      report["mean"] = pred.empty() ? 0.0 : sum / static_cast<double>(pred.size());
    } else {
      throw DataError("unknown score task '" + f.task + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed score row: ") + e.what());
  }
  out << report.dump(2) << '\n';
  return exit_ok;
}

}  // namespace cli

inline int run_cli(int argc, const char* const* argv, std::istream& in = std::cin, std::ostream& out = std::cout,
                   std::ostream& err = std::cerr) {
  CLI::App app{"Memo-equipped chat loop: sessions, service, dataset building and evaluation", "memoloop"};
  app.require_subcommand(1);

  cli::EngineFlags chat_flags;
  std::string session_id;
  auto* chat = app.add_subcommand("chat", "Interactive chat over one session");
  chat_flags.attach(*chat);
  chat->add_option("--session", session_id, "Resume (or create) this session id in storage");

  cli::EngineFlags serve_flags;
  auto* serve = app.add_subcommand("serve", "Run the HTTP service");
  serve_flags.attach(*serve);

  cli::BuildFlags build;
  auto* build_cmd = app.add_subcommand("build-data", "Build instruction instances from a corpus");
  build_cmd->add_option("--task", build.task, "memo_writing, memo_retrieval, chat_with_memo or all");
  build_cmd->add_option("--corpus", build.corpus, "Corpus JSONL of source dialogues")->required();
  build_cmd->add_option("--seed", build.seed, "Sampling seed");
  build_cmd->add_option("--counts", build.counts, "Target counts, e.g. memo_writing=100,memo_retrieval=200");
  build_cmd->add_option("--out", build.out, "Output JSONL (default stdout)");
  build_cmd->add_option("--noto-probability", build.noto_probability, "Chance of a NOTO option per retrieval instance");
  build_cmd->add_option("--noto-gold-share", build.noto_gold_share, "Share of retrieval instances answered by NOTO");
  build_cmd->add_option("--compose-min", build.compose_min, "Fewest dialogues per composition");
  build_cmd->add_option("--compose-max", build.compose_max, "Most dialogues per composition");
  build_cmd->add_option("--eval-fraction", build.eval_fraction, "Fraction held out into --eval-out");
  build_cmd->add_option("--eval-out", build.eval_out, "Held-out JSONL");
  build_cmd->add_flag("--stats", build.print_stats, "Print per-task counts and average tokens");

  cli::EvalFlags eval;
  auto* eval_cmd = app.add_subcommand("evaluate", "Run the judge-based consistency evaluation");
  eval_cmd->add_option("--cases", eval.cases, "Case JSONL")->required();
  eval_cmd->add_option("--judge-backend", eval.judge_backend, "Judge backend descriptor file (JSON)");
  eval_cmd->add_option("--out", eval.out, "Report JSON (default stdout)");
  eval_cmd->add_option("--jobs", eval.jobs, "Cases evaluated in parallel");
  eval.engine.attach(*eval_cmd);

  cli::ScoreFlags score;
  auto* score_cmd = app.add_subcommand("score", "Score predictions against gold offline");
  score_cmd->add_option("--task", score.task, "writing, retrieval or response")->required();
  score_cmd->add_option("--pred", score.pred, "Prediction JSONL")->required();
  score_cmd->add_option("--gold", score.gold, "Gold JSONL")->required();
  score_cmd->add_option("--scorer", score.scorer, "Similarity scorer name");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? exit_ok : exit_usage;
  }

  try {
    if (chat->parsed()) return cli::run_chat(chat_flags, session_id, in, out, err);
    if (serve->parsed()) return cli::run_serve(serve_flags, err);
    if (build_cmd->parsed()) return cli::run_build(build, out, err);
    if (eval_cmd->parsed()) return cli::run_evaluate(eval, out, err);
    if (score_cmd->parsed()) return cli::run_score(score, out);
  } catch (const StageError& e) {
    err << "error in " << e.stage() << ": " << e.cause().what() << '\n';
    return exit_backend;
  } catch (const BackendError& e) {
    err << "backend error: " << e.what() << '\n';
    return exit_backend;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return exit_data;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    return exit_data;
  }
  return exit_usage;
}

}  // namespace memoloop
