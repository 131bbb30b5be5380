#pragma once

// Conversion of raw per-frame image recordings into Dexdata, index cache
// generation, storage accounting and round-trip verification.
//
// A raw bundle is a directory:
//
//   images_1/ ... images_K/   numbered image files, one per frame
//   states.json               [[...], ...] one state vector per frame
//   actions.json              optional, one action vector per frame
//   prompt.txt                the instruction (trailing newlines dropped)
//   meta.json                 optional {"is_robot": bool}
//
// Video encoding is delegated to an external command.

#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <charconv>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <iomanip>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "dexkit/action_codec.hpp"
#include "dexkit/canonical_json.hpp"
#include "dexkit/dexdata.hpp"
#include "dexkit/error.hpp"
#include "dexkit/image_info.hpp"
#include "dexkit/mp4_index.hpp"
#include "dexkit/parallel.hpp"
#include "dexkit/process.hpp"

namespace dexkit::ingest {

namespace fs = std::filesystem;
using dexdata::DatasetLayout;
using dexdata::EpisodeMeta;

inline constexpr std::string_view kStatesFile = "states.json";
inline constexpr std::string_view kActionsFile = "actions.json";
inline constexpr std::string_view kPromptFile = "prompt.txt";
inline constexpr std::string_view kBundleMetaFile = "meta.json";

struct RawEpisodeBundle {
  std::string name;
  fs::path dir;
  /// views[k][i] is frame i of view images_<k+1>.
  std::vector<std::vector<fs::path>> views;
  std::vector<std::vector<double>> states;
  std::optional<std::vector<std::vector<double>>> actions;
  std::string prompt;
  bool is_robot = true;

  std::size_t num_frames() const { return states.size(); }
};

namespace detail {

inline bool is_image_file(const fs::path& p) {
  auto ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return ext == ".png" || ext == ".ppm" || ext == ".pgm" || ext == ".jpg" || ext == ".jpeg" || ext == ".bmp";
}

/// Image files of one directory ordered by their numeric stem.
inline std::vector<fs::path> numbered_images(const fs::path& dir) {
  std::vector<std::pair<std::uint64_t, fs::path>> found;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file() || !is_image_file(entry.path())) continue;
    const auto stem = entry.path().stem().string();
    std::uint64_t n = 0;
    auto [ptr, ec] = std::from_chars(stem.data(), stem.data() + stem.size(), n);
    if (stem.empty() || ec != std::errc{} || ptr != stem.data() + stem.size()) {
      throw Error(ErrorCode::BadBundle, entry.path().string() + ": frame file name is not a number");
    }
    found.emplace_back(n, entry.path());
  }
  std::sort(found.begin(), found.end());
  for (std::size_t i = 1; i < found.size(); ++i) {
    if (found[i].first == found[i - 1].first) {
      throw Error(ErrorCode::BadBundle, dir.string() + ": duplicate frame number " + std::to_string(found[i].first));
    }
  }
  std::vector<fs::path> out;
  out.reserve(found.size());
  for (auto& [_, p] : found) out.push_back(std::move(p));
  return out;
}

inline std::vector<std::vector<double>> read_vectors(const fs::path& path) {
  const Json j = read_json_file(path);
  if (!j.is_array()) throw Error(ErrorCode::BadBundle, path.string() + ": expected an array of vectors");
  std::vector<std::vector<double>> rows;
  rows.reserve(j.size());
  for (std::size_t i = 0; i < j.size(); ++i) {
    const auto& row = j[i];
    if (!row.is_array()) throw Error(ErrorCode::BadBundle, path.string() + ": entry " + std::to_string(i) + " is not an array");
    std::vector<double> v;
    v.reserve(row.size());
    for (const auto& x : row) {
      if (!x.is_number()) throw Error(ErrorCode::BadBundle, path.string() + ": entry " + std::to_string(i) + " is not numeric");
      v.push_back(x.get<double>());
    }
    if (!rows.empty() && v.size() != rows.front().size()) {
      throw Error(ErrorCode::BadBundle, path.string() + ": entry " + std::to_string(i) + " has dimension " +
                                            std::to_string(v.size()) + ", expected " + std::to_string(rows.front().size()));
    }
    rows.push_back(std::move(v));
  }
  return rows;
}

inline std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot read " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace detail

inline RawEpisodeBundle load_bundle(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw Error(ErrorCode::Io, dir.string() + " is not a directory");
  RawEpisodeBundle b;
  b.dir = dir;
  b.name = dir.filename().string();
  if (b.name.empty()) b.name = dir.parent_path().filename().string();

  std::map<std::size_t, fs::path> view_dirs;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_directory()) continue;
    const auto name = entry.path().filename().string();
    if (auto k = dexdata::detail::parse_view_index(name)) {
      if (*k == 0) throw Error(ErrorCode::BadBundle, entry.path().string() + ": bad view directory name");
      view_dirs.emplace(*k, entry.path());
    }
  }
  if (view_dirs.empty()) throw Error(ErrorCode::BadBundle, dir.string() + ": no images_<k> view directories");
  std::size_t expect = 1;
  for (const auto& [k, path] : view_dirs) {
    if (k != expect++) throw Error(ErrorCode::BadBundle, dir.string() + ": view directories are not images_1..images_K");
    b.views.push_back(detail::numbered_images(path));
  }

  const auto states_path = dir / kStatesFile;
  if (!fs::exists(states_path)) throw Error(ErrorCode::BadBundle, dir.string() + ": missing " + std::string(kStatesFile));
  b.states = detail::read_vectors(states_path);
  if (b.states.empty()) throw Error(ErrorCode::BadBundle, dir.string() + ": episode has no frames");

  if (const auto p = dir / kActionsFile; fs::exists(p)) b.actions = detail::read_vectors(p);

  const auto prompt_path = dir / kPromptFile;
  if (!fs::exists(prompt_path)) throw Error(ErrorCode::BadBundle, dir.string() + ": missing " + std::string(kPromptFile));
  b.prompt = detail::read_file(prompt_path);
  while (!b.prompt.empty() && (b.prompt.back() == '\n' || b.prompt.back() == '\r')) b.prompt.pop_back();

  if (const auto p = dir / kBundleMetaFile; fs::exists(p)) {
    const Json meta = read_json_file(p);
    if (!meta.is_object()) throw Error(ErrorCode::BadBundle, p.string() + ": expected an object");
    if (auto it = meta.find("is_robot"); it != meta.end()) {
      if (!it->is_boolean()) throw Error(ErrorCode::BadBundle, p.string() + ": is_robot must be a boolean");
      b.is_robot = it->get<bool>();
    }
  }

  const auto n = b.states.size();
  for (std::size_t k = 0; k < b.views.size(); ++k) {
    if (b.views[k].size() != n) {
      throw Error(ErrorCode::BadBundle, dir.string() + ": " + dexdata::view_name(k) + " has " + std::to_string(b.views[k].size()) +
                                            " frames but states has " + std::to_string(n));
    }
  }
  if (b.actions && b.actions->size() != n) {
    throw Error(ErrorCode::BadBundle, dir.string() + ": actions has " + std::to_string(b.actions->size()) + " entries but states has " +
                                          std::to_string(n));
  }
  return b;
}

/// Bundles directly below root (any subdirectory holding states.json), or
/// root itself if it is a bundle. Sorted by name.
inline std::vector<fs::path> find_bundles(const fs::path& root) {
  if (!fs::is_directory(root)) throw Error(ErrorCode::Io, root.string() + " is not a directory");
  if (fs::exists(root / kStatesFile)) return {root};
  std::vector<fs::path> out;
  for (const auto& entry : fs::directory_iterator(root)) {
    if (entry.is_directory() && fs::exists(entry.path() / kStatesFile)) out.push_back(entry.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

// ---------------------------------------------------------------------------
// Conversion

/// Command template with {input_list} {fps} {output}. The input list is a
/// text file of absolute image paths, one per line, in frame order.
struct EncoderCommand {
  std::string tmpl;
  int fps = 30;
};

/// Command template with {input} {output_dir}; writes one numbered image per
/// decoded frame into output_dir.
struct DecoderCommand {
  std::string tmpl;
};

inline std::string video_url(const std::string& episode, std::size_t view) {
  return std::string(dexdata::kVideoDir) + "/" + episode + "_" + dexdata::view_name(view) + ".mp4";
}

inline std::string jsonl_url(const std::string& episode) { return std::string(dexdata::kJsonlDir) + "/" + episode + ".jsonl"; }

namespace detail {

struct ScratchDir {
  fs::path path;
  explicit ScratchDir(const std::string& tag) {
    static std::atomic<std::uint64_t> counter{0};
    const auto stamp = std::chrono::steady_clock::now().time_since_epoch().count();
    path = fs::temp_directory_path() /
           ("dexkit-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(stamp) + "-" + std::to_string(counter++));
    fs::create_directories(path);
  }
  ~ScratchDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
  ScratchDir(const ScratchDir&) = delete;
  ScratchDir& operator=(const ScratchDir&) = delete;
};

inline std::string first_lines(const std::string& text, std::size_t max_lines = 5) {
  std::istringstream in(text);
  std::string line, out;
  for (std::size_t i = 0; i < max_lines && std::getline(in, line); ++i) {
    if (!out.empty()) out += " | ";
    out += line;
  }
  return out;
}

inline void encode_view(const std::vector<fs::path>& frames, const fs::path& output, const EncoderCommand& encoder) {
  ScratchDir scratch("enc");
  const auto list_path = scratch.path / "frames.txt";
  {
    std::ofstream list(list_path, std::ios::binary);
    for (const auto& f : frames) list << fs::absolute(f).string() << '\n';
    if (!list) throw Error(ErrorCode::Io, "cannot write " + list_path.string());
  }
  std::error_code ec;
  fs::remove(output, ec);
  const auto cmd = expand_command(encoder.tmpl, {{"input_list", list_path.string()},
                                                 {"fps", std::to_string(encoder.fps)},
                                                 {"output", output.string()}});
  const auto result = run_command(cmd);
  if (result.exit_code != 0) {
    throw Error(ErrorCode::EncoderFailed, "encoder exited with status " + std::to_string(result.exit_code) +
                                              (result.stderr_text.empty() ? "" : ": " + first_lines(result.stderr_text)));
  }
  if (!fs::exists(output)) throw Error(ErrorCode::EncoderFailed, "encoder produced no file at " + output.string());
  const auto info = mp4::probe_video(output);
  if (info.frame_count != frames.size()) {
    throw Error(ErrorCode::FrameCountMismatch, output.string() + ": encoder wrote " + std::to_string(info.frame_count) +
                                                   " frames, source has " + std::to_string(frames.size()));
  }
}

inline std::string summarize(const dexdata::ValidationReport& report, std::size_t max_items = 5) {
  std::string out;
  std::size_t shown = 0;
  for (const auto& v : report.violations) {
    if (v.severity != dexdata::Severity::Error) continue;
    if (shown++ == max_items) {
      out += "; ...";
      break;
    }
    if (!out.empty()) out += "; ";
    out += v.file + ":" + std::to_string(v.line) + ": " + v.message;
  }
  return out;
}

}  // namespace detail

inline std::vector<dexdata::EpisodeFrame> frames_for_bundle(const RawEpisodeBundle& bundle) {
  std::vector<dexdata::EpisodeFrame> frames(bundle.num_frames());
  for (std::size_t i = 0; i < frames.size(); ++i) {
    auto& f = frames[i];
    for (std::size_t k = 0; k < bundle.views.size(); ++k) f.views.push_back({video_url(bundle.name, k), static_cast<std::int64_t>(i)});
    f.state = bundle.states[i];
    f.prompt = bundle.prompt;
    f.is_robot = bundle.is_robot;
    if (bundle.actions) f.extras[std::string(dexdata::kActionKey)] = (*bundle.actions)[i];
  }
  return frames;
}

/// Encodes every view, writes the episode jsonl and checks the result.
inline EpisodeMeta convert_episode(const RawEpisodeBundle& bundle, const DatasetLayout& layout, const EncoderCommand& encoder) {
  fs::create_directories(layout.video_dir());
  fs::create_directories(layout.jsonl_dir());
  for (std::size_t k = 0; k < bundle.views.size(); ++k) {
    detail::encode_view(bundle.views[k], layout.resolve(video_url(bundle.name, k)), encoder);
  }
  const auto jsonl_path = layout.resolve(jsonl_url(bundle.name));
  dexdata::write_episode_frames(jsonl_path, frames_for_bundle(bundle));

  auto check = dexdata::validate_episode(jsonl_path, layout);
  if (!check.ok()) throw Error(ErrorCode::ValidationFailed, detail::summarize(check.report));
  return *check.meta;
}

/// Converts every bundle under src_root; bundles run in parallel.
inline std::vector<EpisodeMeta> convert_dataset(const fs::path& src_root, const DatasetLayout& layout, const EncoderCommand& encoder,
                                                unsigned max_threads = 0) {
  const auto dirs = find_bundles(src_root);
  std::vector<EpisodeMeta> metas(dirs.size());
  fs::create_directories(layout.video_dir());
  fs::create_directories(layout.jsonl_dir());
  parallel_for(
      dirs.size(),
      [&](std::size_t i) {
        try {
          metas[i] = convert_episode(load_bundle(dirs[i]), layout, encoder);
        } catch (const Error& e) {
          throw Error(e.code(), dirs[i].filename().string() + ": " + e.detail());
        }
      },
      max_threads);
  return metas;
}

// ---------------------------------------------------------------------------
// Index cache

inline constexpr int kIndexVersion = 1;

struct IndexEntry {
  EpisodeMeta meta;
  std::vector<std::uint64_t> video_frame_counts;  // per view, probed from the mp4

  bool operator==(const IndexEntry&) const = default;
};

struct IndexCache {
  int version = kIndexVersion;
  std::int64_t created_unix = 0;
  std::vector<IndexEntry> episodes;  // sorted by meta.jsonl_path

  bool operator==(const IndexCache&) const = default;
};

inline Json to_json(const IndexCache& cache) {
  Json episodes = Json::array();
  for (const auto& e : cache.episodes) {
    Json j = dexdata::to_json(e.meta);
    j["video_frame_counts"] = e.video_frame_counts;
    episodes.push_back(std::move(j));
  }
  return {{"version", cache.version}, {"created_unix", cache.created_unix}, {"episodes", std::move(episodes)}};
}

inline IndexCache index_cache_from_json(const Json& j) {
  try {
    IndexCache cache;
    cache.version = j.at("version").get<int>();
    if (cache.version != kIndexVersion) {
      throw Error(ErrorCode::BadFieldType, "unsupported index cache version " + std::to_string(cache.version));
    }
    cache.created_unix = j.at("created_unix").get<std::int64_t>();
    for (const auto& e : j.at("episodes")) {
      cache.episodes.push_back({dexdata::episode_meta_from_json(e), e.at("video_frame_counts").get<std::vector<std::uint64_t>>()});
    }
    return cache;
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::MalformedJson, std::string("index cache: ") + e.what());
  }
}

inline IndexCache read_index_cache(const DatasetLayout& layout) { return index_cache_from_json(read_json_file(layout.index_path())); }

namespace detail {

inline void write_atomically(const fs::path& path, const Json& j) {
  auto tmp = path;
  tmp += ".tmp";
  write_canonical_file(tmp, j);
  fs::rename(tmp, path);
}

inline std::int64_t now_unix() {
  return std::chrono::duration_cast<std::chrono::seconds>(std::chrono::system_clock::now().time_since_epoch()).count();
}

}  // namespace detail

/// Scans, cross-checks every frame reference against the probed mp4s and
/// writes index_cache.json. When episodes carry actions of one common
/// dimension, a fitted action space is written alongside.
inline IndexCache build_index_cache(const DatasetLayout& layout, std::optional<std::int64_t> epoch = std::nullopt) {
  auto scan = dexdata::scan_dataset(layout);
  if (scan.report.has_errors()) {
    throw Error(ErrorCode::ValidationFailed, std::to_string(scan.report.error_count()) + " error(s): " + detail::summarize(scan.report));
  }

  const auto n = scan.episodes.size();
  IndexCache cache;
  cache.created_unix = epoch ? *epoch : detail::now_unix();
  cache.episodes.resize(n);
  std::vector<std::vector<std::vector<double>>> actions(n);

  parallel_for(n, [&](std::size_t i) {
    const auto& meta = scan.episodes[i];
    const auto frames = dexdata::read_episode_frames(layout.resolve(meta.jsonl_path));
    std::vector<std::uint64_t> counts;
    for (const auto& url : meta.video_paths) {
      const auto path = layout.resolve(url);
      if (!fs::exists(path)) throw Error(ErrorCode::StaleVideo, meta.jsonl_path + " references missing video " + url);
      counts.push_back(mp4::probe_video(path).frame_count);
    }
    for (std::size_t line = 0; line < frames.size(); ++line) {
      const auto& f = frames[line];
      for (std::size_t k = 0; k < f.views.size(); ++k) {
        if (static_cast<std::uint64_t>(f.views[k].frame_idx) >= counts[k]) {
          throw Error(ErrorCode::FrameIdxOutOfRange, meta.jsonl_path + ":" + std::to_string(line + 1) + ": " + dexdata::view_name(k) +
                                                         " frame_idx " + std::to_string(f.views[k].frame_idx) + " >= frame count " +
                                                         std::to_string(counts[k]) + " of " + meta.video_paths[k]);
        }
      }
      if (meta.action_dim) {
        actions[i].push_back(f.extras.at(std::string(dexdata::kActionKey)).get<std::vector<double>>());
      }
    }
    cache.episodes[i] = {meta, std::move(counts)};
  });

  std::set<std::size_t> dims;
  std::vector<std::vector<double>> all_actions;
  for (std::size_t i = 0; i < n; ++i) {
    if (!scan.episodes[i].action_dim) continue;
    dims.insert(*scan.episodes[i].action_dim);
    for (auto& a : actions[i]) all_actions.push_back(std::move(a));
  }

  fs::create_directories(layout.jsonl_dir());
  if (dims.size() == 1 && *dims.begin() > 0) {
    detail::write_atomically(layout.action_space_path(), codec::to_json(codec::fit_space(all_actions)));
  }
  detail::write_atomically(layout.index_path(), to_json(cache));
  return cache;
}

// ---------------------------------------------------------------------------
// Storage accounting

struct EpisodeStorage {
  std::string name;
  std::uint64_t source_bytes = 0;
  std::uint64_t dexdata_bytes = 0;
};

struct StorageReport {
  std::vector<EpisodeStorage> episodes;  // sorted by name
  std::uint64_t source_total = 0;        // every regular file under the source root
  std::uint64_t dexdata_total = 0;       // every regular file under the dataset root
  std::optional<double> ratio;           // source_total / dexdata_total; unset when dexdata_total is 0
};

/// Sum of the sizes of all regular files below root (symlinks not followed).
inline std::uint64_t tree_bytes(const fs::path& root) {
  std::error_code ec;
  if (fs::is_regular_file(root, ec)) return fs::file_size(root);
  std::uint64_t total = 0;
  for (auto it = fs::recursive_directory_iterator(root, ec); !ec && it != fs::recursive_directory_iterator(); it.increment(ec)) {
    if (it->is_regular_file() && !it->is_symlink()) total += it->file_size();
  }
  if (ec) throw Error(ErrorCode::Io, "cannot walk " + root.string() + ": " + ec.message());
  return total;
}

inline StorageReport storage_report(const fs::path& source_root, const DatasetLayout& layout) {
  for (const auto& p : {source_root, layout.root}) {
    if (!fs::is_directory(p)) throw Error(ErrorCode::Io, p.string() + " is not a directory");
  }
  std::map<std::string, EpisodeStorage> per;

  for (const auto& dir : find_bundles(source_root)) {
    if (dir == source_root) continue;
    auto& e = per[dir.filename().string()];
    e.name = dir.filename().string();
    e.source_bytes = tree_bytes(dir);
  }
  if (fs::exists(source_root / kStatesFile)) {
    auto& e = per[source_root.filename().string()];
    e.name = source_root.filename().string();
    e.source_bytes = tree_bytes(source_root);
  }

  for (const auto& jsonl : dexdata::list_episode_files(layout)) {
    auto rel = fs::relative(jsonl, layout.jsonl_dir()).generic_string();
    rel.resize(rel.size() - std::string_view(".jsonl").size());
    auto& e = per[rel];
    e.name = rel;
    e.dexdata_bytes = fs::file_size(jsonl);
    std::set<std::string> videos;
    for (const auto& f : dexdata::read_episode_frames(jsonl)) {
      for (const auto& v : f.views) videos.insert(v.url);
    }
    for (const auto& url : videos) {
      const auto path = layout.resolve(url);
      std::error_code ec;
      if (fs::is_regular_file(path, ec)) e.dexdata_bytes += fs::file_size(path);
    }
  }

  StorageReport report;
  for (auto& [_, e] : per) report.episodes.push_back(std::move(e));
  report.source_total = tree_bytes(source_root);
  report.dexdata_total = tree_bytes(layout.root);
  if (report.dexdata_total > 0) {
    report.ratio = static_cast<double>(report.source_total) / static_cast<double>(report.dexdata_total);
  }
  return report;
}

inline Json to_json(const StorageReport& r) {
  Json episodes = Json::array();
  for (const auto& e : r.episodes) {
    episodes.push_back({{"name", e.name}, {"source_bytes", e.source_bytes}, {"dexdata_bytes", e.dexdata_bytes}});
  }
  return {{"episodes", std::move(episodes)},
          {"source_total", r.source_total},
          {"dexdata_total", r.dexdata_total},
          {"ratio", r.ratio ? Json(*r.ratio) : Json(nullptr)}};
}

inline std::string render_table(const StorageReport& r) {
  std::size_t width = 7;
  for (const auto& e : r.episodes) width = std::max(width, e.name.size());
  std::ostringstream out;
  auto row = [&](std::string_view name, const std::string& src, const std::string& dex) {
    out << std::left << std::setw(static_cast<int>(width)) << name << "  " << std::right << std::setw(14) << src << "  " << std::setw(14)
        << dex << '\n';
  };
  row("episode", "source_bytes", "dexdata_bytes");
  for (const auto& e : r.episodes) row(e.name, std::to_string(e.source_bytes), std::to_string(e.dexdata_bytes));
  row("total", std::to_string(r.source_total), std::to_string(r.dexdata_total));
  out << "ratio: ";
  if (r.ratio) {
    out << std::fixed << std::setprecision(3) << *r.ratio;
  } else {
    out << "n/a";
  }
  out << '\n';
  return out.str();
}

// ---------------------------------------------------------------------------
// Round-trip verification

struct VerifyIssue {
  ErrorCode code;
  std::size_t line = 0;  // 1-based jsonl line, 0 when not line-specific
  std::string message;
};

struct VerifyReport {
  std::string episode;
  std::vector<VerifyIssue> issues;
  bool pixels_checked = false;

  bool ok() const { return issues.empty(); }
};

inline Json to_json(const VerifyReport& r) {
  Json issues = Json::array();
  for (const auto& i : r.issues) {
    issues.push_back({{"code", std::string(to_string(i.code))}, {"line", i.line}, {"message", i.message}});
  }
  return {{"episode", r.episode}, {"ok", r.ok()}, {"pixels", r.pixels_checked ? "checked" : "skipped"}, {"issues", std::move(issues)}};
}

namespace detail {

inline void verify_metadata(const RawEpisodeBundle& bundle, const DatasetLayout& layout, VerifyReport& report) {
  auto issue = [&](std::size_t line, std::string msg) { report.issues.push_back({ErrorCode::MetadataMismatch, line, std::move(msg)}); };
  const auto path = layout.resolve(jsonl_url(bundle.name));
  if (!fs::exists(path)) {
    issue(0, "missing " + jsonl_url(bundle.name));
    return;
  }
  const auto lines = dexdata::detail::read_lines(path);
  const auto expected = frames_for_bundle(bundle);
  if (lines.size() != expected.size()) {
    issue(0, "jsonl has " + std::to_string(lines.size()) + " lines, bundle has " + std::to_string(expected.size()) + " frames");
  }
  for (std::size_t i = 0; i < std::min(lines.size(), expected.size()); ++i) {
    dexdata::EpisodeFrame got;
    try {
      got = dexdata::parse_frame_line(lines[i]);
    } catch (const Error& e) {
      issue(i + 1, e.what());
      continue;
    }
    const auto& want = expected[i];
    if (got == want) continue;
    std::vector<std::string> fields;
    if (dexdata::serialize_frame_line({{}, got.state, {}, true, Json::object()}) !=
        dexdata::serialize_frame_line({{}, want.state, {}, true, Json::object()})) {
      fields.push_back("state");
    }
    if (got.prompt != want.prompt) fields.push_back("prompt");
    if (got.is_robot != want.is_robot) fields.push_back("is_robot");
    if (got.views.size() != want.views.size()) {
      fields.push_back("views");
    } else {
      for (std::size_t k = 0; k < got.views.size(); ++k) {
        if (!(got.views[k] == want.views[k])) fields.push_back(dexdata::view_name(k));
      }
    }
    if (canonical_dump(got.extras) != canonical_dump(want.extras)) fields.push_back("extras");
    std::string joined;
    for (const auto& f : fields) joined += (joined.empty() ? "" : ", ") + f;
    issue(i + 1, "frame differs from source in: " + joined);
  }
}

inline void verify_pixels(const RawEpisodeBundle& bundle, const DatasetLayout& layout, const DecoderCommand& decoder,
                          VerifyReport& report) {
  for (std::size_t k = 0; k < bundle.views.size(); ++k) {
    auto issue = [&](std::string msg) {
      report.issues.push_back({ErrorCode::DecodeMismatch, 0, dexdata::view_name(k) + ": " + std::move(msg)});
    };
    ScratchDir scratch("dec");
    const auto video = layout.resolve(video_url(bundle.name, k));
    const auto result = run_command(expand_command(decoder.tmpl, {{"input", video.string()}, {"output_dir", scratch.path.string()}}));
    if (result.exit_code != 0) {
      issue("decoder exited with status " + std::to_string(result.exit_code) +
            (result.stderr_text.empty() ? "" : ": " + first_lines(result.stderr_text)));
      continue;
    }
    std::vector<fs::path> decoded;
    try {
      decoded = numbered_images(scratch.path);
    } catch (const Error& e) {
      issue(e.detail());
      continue;
    }
    const auto& source = bundle.views[k];
    if (decoded.size() != source.size()) {
      issue("decoded " + std::to_string(decoded.size()) + " frames, source has " + std::to_string(source.size()));
      continue;
    }
    for (std::size_t i = 0; i < source.size(); ++i) {
      const auto want = image_size(source[i]);
      const auto got = image_size(decoded[i]);
      if (!got || (want && !(*got == *want))) {
        issue("frame " + std::to_string(i) + " dimensions differ from source");
        break;
      }
    }
  }
}

}  // namespace detail

/// Checks the converted episode against its source bundle. Metadata must match
/// exactly; with a decoder, frame counts and dimensions must match too.
inline VerifyReport verify_roundtrip(const RawEpisodeBundle& bundle, const DatasetLayout& layout,
                                     const std::optional<DecoderCommand>& decoder = std::nullopt) {
  VerifyReport report;
  report.episode = bundle.name;
  detail::verify_metadata(bundle, layout, report);
  if (decoder) {
    report.pixels_checked = true;
    detail::verify_pixels(bundle, layout, *decoder, report);
  }
  return report;
}

}  // namespace dexkit::ingest
