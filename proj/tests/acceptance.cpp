// Acceptance run: one PASS/FAIL line per criterion, exit status 0 iff all pass.

#include <chrono>
#include <functional>
#include <future>
#include <iostream>
#include <random>
#include <sstream>

#include "dexkit/action_codec.hpp"
#include "dexkit/dexdata.hpp"
#include "dexkit/exp_config.hpp"
#include "dexkit/ingest.hpp"
#include "dexkit/mp4_index.hpp"
#include "dexkit/serve.hpp"
#include "mp4_writer.hpp"
#include "support/bundle_fixture.hpp"
#include "support/canonical_oracle.hpp"
#include "support/config_oracle.hpp"
#include "support/mp4_oracle.hpp"

using namespace dexkit;
namespace fs = std::filesystem;
using fixtures::TempDir;

namespace {

/// Thrown by check() with the first broken expectation.
struct Failed : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void check(bool ok, const std::string& what) {
  if (!ok) throw Failed(what);
}

template <typename F>
std::optional<ErrorCode> error_code_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  return std::nullopt;
}

ingest::EncoderCommand stub_encoder() { return {fixtures::encoder_template(), 30}; }

// ---------------------------------------------------------------------------

std::string format_fidelity() {
  fixtures::LineGenerator gen(2024);
  for (int i = 0; i < 1000; ++i) {
    const auto line = gen.line();
    const auto once = dexdata::serialize_frame_line(dexdata::parse_frame_line(line));
    const auto twice = dexdata::serialize_frame_line(dexdata::parse_frame_line(once));
    check(once == twice, "round trip changed line " + std::to_string(i));
    check(once == oracle::canonical_text(line), "canonical form differs from reference on line " + std::to_string(i));
  }
  const auto f = dexdata::parse_frame_line(fixtures::kSampleLine);
  check(f.views.size() == 3, "sample line: expected 3 views");
  for (std::size_t k = 0; k < 3; ++k) {
    check(f.views[k].url == "url" + std::to_string(k + 1) && f.views[k].frame_idx == 21, "sample line: view " + std::to_string(k + 1));
  }
  check(f.state == std::vector<double>{0.1, 0.2}, "sample line: state");
  check(f.prompt == "open the door" && f.is_robot && f.extras.empty(), "sample line: prompt/is_robot/extras");
  return "1000 lines canonical; sample line fields exact";
}

std::string mp4_oracle_equivalence() {
  std::mt19937_64 rng(7331);
  std::size_t uniform = 0, per_sample = 0;
  for (int i = 0; i < 200; ++i) {
    const auto t = oracle::random_tables(rng, 500, 10);
    (t.uniform_size ? uniform : per_sample)++;
    check(mp4::build_frame_table(t).entries == oracle::walk_samples(t), "table " + std::to_string(i) + " differs from walker");
  }
  check(uniform > 0 && per_sample > 0, "both stsz modes exercised");

  mux::Mp4Options opts;
  opts.chunk_pattern = {2, 3};
  opts.audio_track_first = true;
  std::vector<mux::Bytes> samples;
  for (std::size_t i = 0; i < 9; ++i) samples.emplace_back(10 + i * 7, static_cast<std::uint8_t>(i));
  const auto clean = mux::write_mp4(samples, opts);
  const auto headers = oracle::header_offsets(clean);
  std::size_t structured = 0;
  for (int i = 0; i < 10000; ++i) {
    auto file = clean;
    for (int m = std::uniform_int_distribution<int>(1, 4)(rng); m > 0; --m) {
      const auto pos = headers[rng() % headers.size()] + rng() % 24;
      if (pos < file.size()) file[pos] = static_cast<std::uint8_t>(rng());
    }
    oracle::RecordingSource src(file);
    try {
      mp4::index_video(src);
    } catch (const Error&) {
      ++structured;
    } catch (const std::exception& e) {
      throw Failed("mutation " + std::to_string(i) + " raised an unstructured error: " + e.what());
    }
    check(src.violations() == 0, "mutation " + std::to_string(i) + " read out of bounds");
  }
  return "200 tables equal; 10000 mutations, " + std::to_string(structured) + " structured errors, 0 out-of-bounds reads";
}

std::string quantization_bounds() {
  using namespace codec;
  check(kBins == 256 && ActionSpace::bins() == 256, "bin count is 256");
  std::mt19937_64 rng(4242);
  std::uniform_real_distribution<double> centre(-50, 50), width(1e-6, 100), unit(0, 1);
  std::size_t pairs = 0;
  while (pairs < 10000) {
    const auto dims = 1 + rng() % 6;
    std::vector<double> lo(dims), hi(dims);
    for (std::size_t d = 0; d < dims; ++d) {
      lo[d] = centre(rng);
      hi[d] = lo[d] + width(rng);
    }
    const ActionSpace space(lo, hi);
    check(to_json(space).at("bins") == 256, "serialized bins");
    std::vector<double> x(dims), y(dims);
    for (std::size_t d = 0; d < dims; ++d) {
      x[d] = lo[d] + unit(rng) * (hi[d] - lo[d]);
      y[d] = lo[d] + (unit(rng) * 1.4 - 0.2) * (hi[d] - lo[d]);  // may leave the range
    }
    const auto tx = quantize_action(x, space), ty = quantize_action(y, space);
    const auto back = dequantize_tokens(tx, space);
    for (std::size_t d = 0; d < dims; ++d) {
      check(tx[d] >= 0 && tx[d] < 256 && ty[d] >= 0 && ty[d] < 256, "token outside [0, 255]");
      if (x[d] >= lo[d] && x[d] <= hi[d]) {
        check(std::abs(x[d] - back[d]) <= (hi[d] - lo[d]) / 512, "half-bin bound violated at pair " + std::to_string(pairs));
      }
      if (x[d] <= y[d]) check(tx[d] <= ty[d], "monotonicity violated");
      if (y[d] <= x[d]) check(ty[d] <= tx[d], "monotonicity violated");
    }
    ++pairs;
  }
  check(error_code_of([] { dequantize_value(256, 0, 1); }) == ErrorCode::TokenOutOfRange, "token 256 rejected");
  check(quantize_value(1e300, 0, 1) == 255 && quantize_value(-1e300, 0, 1) == 0, "clamping to 256 bins");
  return "10000 pairs within (hi-lo)/512, monotone, 256 bins";
}

std::string hybrid_layout() {
  using namespace codec;
  std::mt19937_64 rng(99);
  std::normal_distribution<double> n(0, 3);
  std::size_t round_trips = 0;
  for (Arms arms : {Arms::LeftOnly, Arms::RightOnly, Arms::Dual}) {
    for (std::size_t dof : {7u, 8u}) {
      const Embodiment emb{arms, dof};
      for (int i = 0; i < 500; ++i) {
        std::vector<double> l(dof), r(dof);
        for (auto& v : l) v = n(rng);
        for (auto& v : r) v = n(rng);
        std::optional<std::span<const double>> lp, rp;
        if (emb.has_left()) lp = l;
        if (emb.has_right()) rp = r;
        const auto packed = pack_hybrid(lp, rp, emb);
        check(packed.values.size() == 16 && packed.mask.size() == 16, "token vector length is 16");
        check(packed.mask == loss_mask_for(emb), "pack mask equals loss mask");
        const auto back = unpack_hybrid(packed, emb);
        check(back.left.has_value() == emb.has_left() && back.right.has_value() == emb.has_right(), "arm presence");
        if (back.left) check(*back.left == l, "left arm round trip");
        if (back.right) check(*back.right == r, "right arm round trip");
        if (arms == Arms::LeftOnly) {
          for (std::size_t s = 8; s < 16; ++s) check(!packed.mask[s], "LeftOnly second half must be unsupervised");
        }
        ++round_trips;
      }
    }
  }
  return std::to_string(round_trips) + " round trips over 6 embodiments";
}

std::string end_to_end_pipeline() {
  TempDir tmp("dexkit-accept");
  const auto dir = fixtures::make_bundle(tmp / "src", {.name = "episode_000", .views = 3, .frames = 20});
  const dexdata::DatasetLayout layout{tmp / "dexdata"};
  const auto meta = ingest::convert_episode(ingest::load_bundle(dir), layout, stub_encoder());

  const auto scan = dexdata::scan_dataset(layout);
  check(!scan.report.has_errors() && scan.episodes.size() == 1, "converted dataset validates");

  ingest::build_index_cache(layout, 0);
  const auto first = fixtures::read_text(layout.index_path());
  const auto cache = ingest::read_index_cache(layout);
  check(cache.episodes.size() == 1, "index holds the episode");
  const auto lines = dexdata::detail::read_lines(layout.resolve(meta.jsonl_path)).size();
  const auto& entry = cache.episodes[0];
  check(lines == 20 && entry.meta.num_frames == 20, "jsonl lines == index num_frames == 20");
  check(entry.video_frame_counts.size() == 3, "three views indexed");
  for (std::size_t k = 0; k < 3; ++k) {
    const auto probed = mp4::probe_video(layout.resolve(entry.meta.video_paths[k])).frame_count;
    check(probed == 20 && entry.video_frame_counts[k] == probed, "probed frame count of view " + std::to_string(k + 1));
  }
  ingest::build_index_cache(layout, 0);
  check(fixtures::read_text(layout.index_path()) == first, "index rebuild with epoch 0 is byte-identical");
  return "20 == 20 == 20 on 3 views; rebuild byte-identical";
}

std::string config_engine() {
  using namespace config;
  oracle::ConfigGenerator gen(31337);
  for (int trial = 0; trial < 300; ++trial) {
    const auto chain = gen.chain(gen.pick(1, 6));
    ConfigSet nodes;
    std::vector<std::string> names;
    std::vector<Json> sections;
    for (const auto& n : chain) {
      names.push_back(n.name);
      sections.push_back(n.sections);
      add_node(nodes, n);
    }
    const auto r = resolve_config(chain.back().name, nodes);
    check(r.sections == oracle::sequential_resolve(sections), "chain " + std::to_string(trial) + " differs from sequential merge");
    check(r.provenance == oracle::naive_provenance(names, sections, r.sections), "chain " + std::to_string(trial) + " provenance");
  }
  std::size_t cycles = 0;
  for (int trial = 0; trial < 300; ++trial) {
    auto chain = gen.chain(gen.pick(1, 6), "c");
    chain.front().parent = chain[static_cast<std::size_t>(gen.pick(0, static_cast<int>(chain.size()) - 1))].name;
    ConfigSet nodes;
    for (auto& n : chain) add_node(nodes, n);
    for (const auto& n : chain) {
      check(error_code_of([&] { resolve_config(n.name, nodes); }) == ErrorCode::CycleDetected, "injected cycle missed");
      ++cycles;
    }
  }
  ConfigSet example;
  add_node(example, {"base", std::nullopt, Json::parse(R"({"optimizer":{"lr":1e-4,"bs":16}})")});
  add_node(example, {"child", "base", Json::parse(R"({"optimizer":{"lr":5e-5}})")});
  const auto r = resolve_config("child", example);
  check(canonical_dump(r.sections) == R"({"optimizer":{"bs":16,"lr":5e-05}})", "base-override example");
  check(r.provenance.at("optimizer.lr") == "child" && r.provenance.at("optimizer.bs") == "base", "base-override provenance");
  return "300 chains equal to oracle; " + std::to_string(cycles) + " cycle resolutions detected; lr example exact";
}

std::string serving_loop() {
  using namespace serve;
  // pcontrol against the hand-applied clipped proportional law
  Gateway pgw(std::make_shared<PControlBackend>(1.0));
  pgw.start();
  ToyEnv env;
  const auto r = run_rollout(pgw.url(), env, 10, 4);
  double x = 0, y = 0;
  std::int64_t steps = 0;
  std::vector<std::vector<double>> expected_actions;
  while (std::hypot(x - 0.5, y - 0.5) > 0.01 && steps < 10) {
    const double ax = 0.5 - x, ay = 0.5 - y;
    for (int i = 0; i < 4 && steps < 10 && std::hypot(x - 0.5, y - 0.5) > 0.01; ++i, ++steps) {
      expected_actions.push_back({ax, ay});
      x += std::clamp(ax, -0.1, 0.1);
      y += std::clamp(ay, -0.1, 0.1);
    }
  }
  check(r.success && r.steps_taken <= 10, "pcontrol reaches the goal within 10 steps");
  check(r.steps_taken == steps && r.final_pos[0] == x && r.final_pos[1] == y, "rollout matches the hand simulation");
  for (std::size_t i = 0; i < r.trajectory.size(); ++i) check(r.trajectory[i].action == expected_actions[i], "action at step " + std::to_string(i));

  Gateway zgw(std::make_shared<ZeroBackend>(7));
  zgw.start();
  const auto z = run_rollout(zgw.url(), ToyEnv{}, 200, 8);
  check(!z.success && z.steps_taken == 200 && z.final_pos == (std::array<double, 2>{0, 0}), "zero backend never succeeds");

  // 100 concurrent requests, compared with serial in-process answers
  const auto backend = std::make_shared<PControlBackend>(0.5, 6);
  Gateway cgw(backend);
  cgw.start();
  const auto [host, port] = parse_url(cgw.url());
  std::vector<std::string> bodies;
  for (int i = 0; i < 100; ++i) {
    bodies.push_back(canonical_dump(to_json(ActRequest{"reach " + std::to_string(i % 7) + " 0.5", {0.01 * i, -0.02 * i}, {}, 1 + i % 16, std::nullopt})));
  }
  std::vector<std::future<std::string>> replies;
  for (const auto& body : bodies) {
    replies.push_back(std::async(std::launch::async, [host = host, port = port, body] {
      httplib::Client c(host, port);
      auto res = c.Post("/v1/act", body, "application/json");
      return res && res->status == 200 ? res->body : std::string();
    }));
  }
  for (std::size_t i = 0; i < bodies.size(); ++i) {
    const auto text = replies[i].get();
    check(Json::accept(text), "concurrent request " + std::to_string(i) + " failed");
    Json got = Json::parse(text), want = handle_act(*backend, bodies[i]).body;
    const auto chunk = static_cast<std::size_t>(1 + i % 16);
    check(got.at("actions").size() == chunk, "rows == chunk_size");
    for (const auto& row : got.at("actions")) check(row.size() == 6, "row width == dof");
    got.erase("latency_ms");
    want.erase("latency_ms");
    check(got == want, "concurrent response " + std::to_string(i) + " differs from serial answer");
  }
  return "success in " + std::to_string(r.steps_taken) + " steps (hand law agrees); zero backend 200/200 steps without success; 100 concurrent OK";
}

std::string storage_accounting() {
  TempDir tmp("dexkit-accept");
  fixtures::make_bundle(tmp / "src", {.name = "episode_000", .views = 3, .frames = 200, .seed = 5});
  const dexdata::DatasetLayout layout{tmp / "dexdata"};
  ingest::convert_dataset(tmp / "src", layout, stub_encoder());
  ingest::build_index_cache(layout, 0);
  const auto report = ingest::storage_report(tmp / "src", layout);
  check(report.source_total == fixtures::directory_bytes(tmp / "src"), "source total equals byte-sum oracle");
  check(report.dexdata_total == fixtures::directory_bytes(layout.root), "dexdata total equals byte-sum oracle");
  check(report.ratio.has_value(), "ratio reported");
  check(*report.ratio > 1.0, "ratio > 1 on the low-motion fixture");
  std::ostringstream msg;
  msg << "source " << report.source_total << " B, dexdata " << report.dexdata_total << " B, ratio " << std::fixed << std::setprecision(2) << *report.ratio;
  return msg.str();
}

struct Criterion {
  int id;
  const char* title;
  double limit_s;  // 0 = no runtime limit
  std::function<std::string()> run;
};

}  // namespace

int main() {
  const std::vector<Criterion> criteria = {
      {1, "format fidelity", 5, format_fidelity},
      {2, "mp4 oracle equivalence", 60, mp4_oracle_equivalence},
      {3, "quantization bounds", 5, quantization_bounds},
      {4, "hybrid layout", 0, hybrid_layout},
      {5, "end-to-end pipeline", 30, end_to_end_pipeline},
      {6, "config engine", 0, config_engine},
      {7, "serving loop", 20, serving_loop},
      {8, "storage accounting", 0, storage_accounting},
  };
  int failures = 0;
  for (const auto& c : criteria) {
    const auto start = std::chrono::steady_clock::now();
    std::string detail;
    bool ok = true;
    try {
      detail = c.run();
    } catch (const std::exception& e) {
      ok = false;
      detail = e.what();
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (ok && c.limit_s > 0 && secs >= c.limit_s) {
      ok = false;
      detail = "took " + std::to_string(secs) + " s, limit " + std::to_string(c.limit_s) + " s";
    }
    failures += ok ? 0 : 1;
    std::ostringstream line;
    line << (ok ? "PASS" : "FAIL") << " criterion " << c.id << " (" << c.title << ") " << std::fixed << std::setprecision(2) << secs << "s: " << detail;
    std::cout << line.str() << std::endl;
  }
  std::cout << (failures ? std::to_string(failures) + " criterion(s) failed" : std::string("all criteria passed")) << std::endl;
  return failures ? 1 : 0;
}
