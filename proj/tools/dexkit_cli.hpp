#pragma once

// The dexkit command line. Kept in a header so tests can drive it in-process.

#include <csignal>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "dexkit/experiment.hpp"
#include "dexkit/mp4_index.hpp"

namespace dexkit::cli {

namespace fs = std::filesystem;

/// Set by SIGINT/SIGTERM; long-running subcommands poll it.
inline std::atomic<bool> g_stop{false};

inline void on_signal(int) { g_stop = true; }

inline void install_signal_handlers() {
  struct sigaction sa {};
  sa.sa_handler = on_signal;
  sigemptyset(&sa.sa_mask);
  sigaction(SIGINT, &sa, nullptr);
  sigaction(SIGTERM, &sa, nullptr);
}

struct Streams {
  std::ostream& out;
  std::ostream& err;
  bool json = false;
  bool quiet = false;

  /// Human-readable line on stdout; suppressed by --json and --quiet.
  void say(const std::string& line) const {
    if (!json && !quiet) out << line << '\n';
  }
  void emit(const Json& j) const { out << canonical_dump(j) << '\n'; }
  void note(const std::string& line) const {
    if (!quiet) err << line << '\n';
  }
};

namespace detail {

inline std::string pad(std::string s, std::size_t width) {
  if (s.size() < width) s.append(width - s.size(), ' ');
  return s;
}

inline std::vector<double> parse_pair(const std::string& text, const char* what) {
  const auto comma = text.find(',');
  try {
    if (comma == std::string::npos) throw std::invalid_argument("no comma");
    std::size_t used = 0;
    const double x = std::stod(text.substr(0, comma), &used);
    if (used != comma) throw std::invalid_argument("trailing");
    const auto rest = text.substr(comma + 1);
    const double y = std::stod(rest, &used);
    if (used != rest.size() || !std::isfinite(x) || !std::isfinite(y)) throw std::invalid_argument("trailing");
    return {x, y};
  } catch (const std::exception&) {
    throw Error(ErrorCode::Usage, std::string(what) + " must look like X,Y (got '" + text + "')");
  }
}

inline config::ResolvedConfig resolve_with_overrides(const fs::path& exp, const std::vector<std::string>& sets) {
  const auto [root, nodes] = config::load_config_chain(exp);
  auto cfg = config::resolve_config(root, nodes);
  for (const auto& s : sets) config::apply_override(cfg, s);
  return cfg;
}

inline void print_violations(const Streams& io, const dexdata::ValidationReport& report) {
  for (const auto& v : report.violations) {
    io.say("  " + std::string(v.severity == dexdata::Severity::Error ? "error" : "warning") + " " + v.file + ":" +
           std::to_string(v.line) + " " + std::string(dexdata::to_string(v.kind)) + ": " + v.message);
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Subcommands. Each returns the process exit status; errors propagate as
// dexkit::Error and are mapped in run().

inline int cmd_validate(const Streams& io, const fs::path& dataset) {
  const dexdata::DatasetLayout layout{dataset};
  const auto scan = dexdata::scan_dataset(layout);
  const bool ok = !scan.report.has_errors();
  if (io.json) {
    Json episodes = Json::array(), violations = Json::array();
    for (const auto& e : scan.episodes) episodes.push_back(dexdata::to_json(e));
    for (const auto& v : scan.report.violations) violations.push_back(dexdata::to_json(v));
    io.emit({{"ok", ok}, {"episodes", episodes}, {"violations", violations}});
  } else {
    io.say(std::to_string(scan.episodes.size()) + " episode(s), " + std::to_string(scan.report.error_count()) + " error(s)");
    for (const auto& e : scan.episodes) {
      io.say("  " + e.jsonl_path + "  frames=" + std::to_string(e.num_frames) + " views=" + std::to_string(e.video_paths.size()) +
             " state_dim=" + std::to_string(e.state_dim));
    }
    detail::print_violations(io, scan.report);
  }
  if (!ok) io.err << "dexkit: validation failed with " << scan.report.error_count() << " error(s)\n";
  return ok ? 0 : static_cast<int>(ExitCode::ValidationFailure);
}

inline int cmd_index(const Streams& io, const fs::path& dst, std::optional<std::int64_t> epoch) {
  const auto cache = ingest::build_index_cache({dst}, epoch);
  if (io.json) {
    io.emit(ingest::to_json(cache));
  } else {
    std::size_t frames = 0;
    for (const auto& e : cache.episodes) frames += e.meta.num_frames;
    io.say("indexed " + std::to_string(cache.episodes.size()) + " episode(s), " + std::to_string(frames) + " frame(s) -> " +
           dexdata::DatasetLayout{dst}.index_path().string());
  }
  return 0;
}

inline int cmd_convert(const Streams& io, const fs::path& src, const fs::path& dst, int fps, const std::string& encoder, unsigned threads) {
  if (fps <= 0) throw Error(ErrorCode::Usage, "--fps must be positive");
  const auto metas = ingest::convert_dataset(src, {dst}, {encoder, fps}, threads);
  if (io.json) {
    Json episodes = Json::array();
    for (const auto& m : metas) episodes.push_back(dexdata::to_json(m));
    io.emit({{"episodes", episodes}});
  } else {
    io.say("converted " + std::to_string(metas.size()) + " episode(s) into " + dst.string());
    for (const auto& m : metas) io.say("  " + m.jsonl_path + "  frames=" + std::to_string(m.num_frames));
  }
  return 0;
}

inline int cmd_stats(const Streams& io, const fs::path& src, const fs::path& dst) {
  const auto report = ingest::storage_report(src, {dst});
  if (io.json) {
    io.emit(ingest::to_json(report));
  } else if (!io.quiet) {
    io.out << ingest::render_table(report);
  }
  return 0;
}

inline int cmd_verify(const Streams& io, const fs::path& src, const fs::path& dst, const std::string& decoder) {
  std::optional<ingest::DecoderCommand> dec;
  if (!decoder.empty()) dec = ingest::DecoderCommand{decoder};
  bool ok = true;
  Json reports = Json::array();
  for (const auto& dir : ingest::find_bundles(src)) {
    const auto r = ingest::verify_roundtrip(ingest::load_bundle(dir), {dst}, dec);
    ok = ok && r.ok();
    reports.push_back(ingest::to_json(r));
    io.say(r.episode + ": " + (r.ok() ? "ok" : "MISMATCH") + " (pixels " + (r.pixels_checked ? "checked" : "skipped") + ")");
    for (const auto& i : r.issues) io.say("  " + std::string(to_string(i.code)) + " line " + std::to_string(i.line) + ": " + i.message);
  }
  if (io.json) io.emit({{"ok", ok}, {"episodes", reports}});
  if (!ok) io.err << "dexkit: converted episodes differ from their bundles\n";
  return ok ? 0 : static_cast<int>(ExitCode::ValidationFailure);
}

inline int cmd_config_resolve(const Streams& io, const fs::path& exp, const std::vector<std::string>& sets) {
  const auto cfg = detail::resolve_with_overrides(exp, sets);
  if (io.json) {
    io.emit(config::to_json(cfg));
    return 0;
  }
  std::string chain;
  for (const auto& n : cfg.chain) chain += (chain.empty() ? "" : " -> ") + n;
  io.say("config " + cfg.name + " (chain: " + chain + ")");
  std::size_t width = 3;
  for (const auto& [key, _] : cfg.provenance) width = std::max(width, key.size());
  io.say(detail::pad("key", width) + "  " + detail::pad("value", 24) + "  source");
  for (const auto& [key, source] : cfg.provenance) {
    const Json* v = cfg.find(key);
    io.say(detail::pad(key, width) + "  " + detail::pad(v ? canonical_dump(*v) : "?", 24) + "  " + source);
  }
  return 0;
}

inline int cmd_run(const Streams& io, const fs::path& exp, const std::string& task, const std::vector<std::string>& sets) {
  const auto parsed_task = experiment::parse_task(task);
  const auto cfg = detail::resolve_with_overrides(exp, sets);
  auto reg = experiment::builtin_registry();
  reg.freeze();
  experiment::DispatchHooks hooks;
  hooks.on_ready = [&](const serve::Gateway& gw) { io.note("serving " + gw.backend().name() + " on " + gw.url()); };
  hooks.should_stop = [] { return g_stop.load(); };
  const auto result = experiment::dispatch_task(cfg, parsed_task, reg, hooks);
  if (io.json) {
    io.emit(result.report);
  } else {
    for (const auto& [k, v] : result.report.items()) io.say(k + ": " + (v.is_string() ? v.get<std::string>() : canonical_dump(v)));
  }
  return result.exit_status;
}

struct ServeArgs {
  std::string host = "127.0.0.1";
  int port = 8000;
  std::string backend = "zero";
  std::optional<int> dof;
  double gain = 1.0;
  std::string replay;
};

inline int cmd_serve(const Streams& io, const ServeArgs& a) {
  auto reg = experiment::builtin_registry();
  reg.freeze();
  Json params = {{"backend", a.backend}, {"gain", a.gain}};
  if (a.dof) params["dof"] = *a.dof;
  if (!a.replay.empty()) params["replay_path"] = a.replay;
  serve::Gateway gw(experiment::make_backend(reg, params), {a.host, a.port});
  gw.start();
  if (io.json) {
    io.emit({{"url", gw.url()}, {"backend", gw.backend().name()}, {"dof", gw.backend().dof()}});
  } else {
    io.say("serving " + gw.backend().name() + " (dof " + std::to_string(gw.backend().dof()) + ") on " + gw.url());
  }
  io.out.flush();
  while (!g_stop) std::this_thread::sleep_for(std::chrono::milliseconds(20));
  gw.stop();
  io.note("stopped after " + std::to_string(gw.requests_served()) + " request(s)");
  return 0;
}

struct RolloutArgs {
  std::string url;
  std::string goal = "0.5,0.5";
  int chunk = serve::kDefaultChunk;
  std::int64_t max_steps = 100;
  std::optional<std::uint64_t> seed;
  std::string record;
  double clip = 0.1;
};

inline int cmd_rollout(const Streams& io, const RolloutArgs& a) {
  if (a.max_steps < 0) throw Error(ErrorCode::Usage, "--max-steps must be non-negative");
  if (!(a.clip > 0)) throw Error(ErrorCode::Usage, "--clip must be positive");
  serve::ToyEnv env;
  const auto goal = detail::parse_pair(a.goal, "--goal");
  env.goal = {goal[0], goal[1]};
  env.max_step = a.clip;
  if (a.seed) env.pos = serve::ToyEnv::random_start(*a.seed);
  const auto start = env.pos;
  const auto result = serve::run_rollout(a.url, env, a.max_steps, a.chunk);
  if (!a.record.empty()) serve::write_trajectory(a.record, result);
  if (io.json) {
    Json j = serve::to_json(result);
    j["start_pos"] = start;
    j["goal"] = env.goal;
    io.emit(j);
  } else {
    io.say(std::string(result.success ? "success" : "no success") + " after " + std::to_string(result.steps_taken) + " step(s); final (" +
           format_double(result.final_pos[0]) + ", " + format_double(result.final_pos[1]) + ")");
  }
  return 0;
}

inline int cmd_probe(const Streams& io, const fs::path& path, bool frames) {
  const mp4::FileSource src(path);
  const auto info = mp4::probe_video(src);
  Json j = {{"frame_count", info.frame_count}, {"duration_seconds", info.duration_seconds}, {"timescale", info.timescale}};
  if (frames) {
    Json rows = Json::array();
    for (const auto& e : mp4::index_video(src).entries) rows.push_back({e.byte_offset, e.byte_len, e.pts_ticks});
    j["frames"] = rows;
  }
  if (io.json) {
    io.emit(j);
  } else {
    io.say(path.string() + ": " + std::to_string(info.frame_count) + " frame(s), " + format_double(info.duration_seconds) + " s, timescale " +
           std::to_string(info.timescale));
    if (frames) {
      for (std::size_t i = 0; i < j["frames"].size(); ++i) io.say("  " + std::to_string(i) + " " + canonical_dump(j["frames"][i]));
    }
  }
  return 0;
}

// ---------------------------------------------------------------------------

inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"dexkit: Dexdata conversion, experiment configs and the action service", "dexkit"};
  app.fallthrough();
  Streams io{out, err};
  app.add_flag("--json", io.json, "Canonical JSON on stdout");
  app.add_flag("-q,--quiet", io.quiet, "Suppress human-readable output");
  app.require_subcommand(1);

  std::function<int()> action;

  fs::path dataset, src, dst, exp, mp4_path;
  std::vector<std::string> sets;

  auto* validate = app.add_subcommand("validate", "Check every episode under a Dexdata root");
  validate->add_option("--dataset", dataset, "Dexdata root")->required();
  validate->callback([&] { action = [&] { return cmd_validate(io, dataset); }; });

  std::optional<std::int64_t> epoch;
  auto* index = app.add_subcommand("index", "Build jsonl/index_cache.json");
  index->add_option("--dst", dst, "Dexdata root")->required();
  index->add_option("--epoch", epoch, "Fixed created_unix value (reproducible output)");
  index->callback([&] { action = [&] { return cmd_index(io, dst, epoch); }; });

  int fps = 30;
  std::string encoder;
  unsigned threads = 0;
  auto* convert = app.add_subcommand("convert", "Convert raw episode bundles to Dexdata");
  convert->add_option("--src", src, "Bundle directory")->required();
  convert->add_option("--dst", dst, "Dexdata root")->required();
  convert->add_option("--fps", fps, "Video frame rate")->capture_default_str();
  convert->add_option("--encoder", encoder, "Command template with {input_list} {fps} {output}")->required();
  convert->add_option("--threads", threads, "Worker threads (0 = hardware)");
  convert->callback([&] { action = [&] { return cmd_convert(io, src, dst, fps, encoder, threads); }; });

  auto* stats = app.add_subcommand("stats", "Storage comparison of raw bundles and Dexdata");
  stats->add_option("--src", src, "Bundle directory")->required();
  stats->add_option("--dst", dst, "Dexdata root")->required();
  stats->callback([&] { action = [&] { return cmd_stats(io, src, dst); }; });

  std::string decoder;
  auto* verify = app.add_subcommand("verify", "Compare converted episodes with their bundles");
  verify->add_option("--src", src, "Bundle directory")->required();
  verify->add_option("--dst", dst, "Dexdata root")->required();
  verify->add_option("--decoder", decoder, "Command template with {input} {output_dir}");
  verify->callback([&] { action = [&] { return cmd_verify(io, src, dst, decoder); }; });

  auto* resolve = app.add_subcommand("config-resolve", "Print a resolved experiment config with provenance");
  resolve->add_option("--exp", exp, "Experiment config file")->required();
  resolve->add_option("--set", sets, "section.key=value override (repeatable)");
  resolve->callback([&] { action = [&] { return cmd_config_resolve(io, exp, sets); }; });

  std::string task;
  auto* run_cmd = app.add_subcommand("run", "Run an experiment task");
  run_cmd->add_option("--exp", exp, "Experiment config file")->required();
  run_cmd->add_option("--task", task, "train or infer")->required();
  run_cmd->add_option("--set", sets, "section.key=value override (repeatable)");
  run_cmd->callback([&] { action = [&] { return cmd_run(io, exp, task, sets); }; });

  ServeArgs serve_args;
  auto* serve_cmd = app.add_subcommand("serve", "Start the action service");
  serve_cmd->add_option("--host", serve_args.host)->capture_default_str();
  serve_cmd->add_option("--port", serve_args.port, "0 picks a free port")->capture_default_str();
  serve_cmd->add_option("--backend", serve_args.backend, "zero, pcontrol or replay")->capture_default_str();
  serve_cmd->add_option("--dof", serve_args.dof, "Action dimension");
  serve_cmd->add_option("--gain", serve_args.gain, "pcontrol gain")->capture_default_str();
  serve_cmd->add_option("--replay", serve_args.replay, "Recorded chunk file for the replay backend");
  serve_cmd->callback([&] { action = [&] { return cmd_serve(io, serve_args); }; });

  RolloutArgs ro;
  auto* rollout = app.add_subcommand("rollout", "Drive the toy environment against a running service");
  rollout->add_option("--url", ro.url, "Service base url")->required();
  rollout->add_option("--goal", ro.goal, "Goal as X,Y")->capture_default_str();
  rollout->add_option("--chunk", ro.chunk, "Actions per request")->capture_default_str();
  rollout->add_option("--max-steps", ro.max_steps, "Environment step budget")->capture_default_str();
  rollout->add_option("--seed", ro.seed, "Random start in [-1,1]^2 instead of the origin");
  rollout->add_option("--record", ro.record, "Write the trajectory as jsonl");
  rollout->add_option("--clip", ro.clip, "Per-step displacement limit")->capture_default_str();
  rollout->callback([&] { action = [&] { return cmd_rollout(io, ro); }; });

  bool frames = false;
  auto* probe = app.add_subcommand("probe-mp4", "Frame count and timing of an mp4 file");
  probe->add_option("path", mp4_path, "mp4 file")->required();
  probe->add_flag("--frames", frames, "Also list every frame (offset, size, pts)");
  probe->callback([&] { action = [&] { return cmd_probe(io, mp4_path, frames); }; });

  auto fail = [&](ErrorCode code, const std::string& message) {
    if (io.json) io.emit({{"error", {{"code", std::string(to_string(code))}, {"message", message}}}});
    err << "dexkit: " << message << '\n';
    return static_cast<int>(exit_code_for(code));
  };

  if (argc <= 1) {
    err << app.help();
    return static_cast<int>(ExitCode::UsageError);
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e, out, err);
    err << "Run 'dexkit --help' for usage.\n";
    return fail(ErrorCode::Usage, e.what());
  }

  try {
    return action();
  } catch (const Error& e) {
    return fail(e.code(), e.what());
  } catch (const fs::filesystem_error& e) {
    return fail(ErrorCode::Io, e.what());
  } catch (const std::exception& e) {
    return fail(ErrorCode::Io, std::string("unexpected failure: ") + e.what());
  }
}

}  // namespace dexkit::cli
