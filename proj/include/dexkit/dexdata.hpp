#pragma once

// Dexdata episodic dataset format:
//
//   <root>/video/*.mp4
//   <root>/jsonl/*.jsonl            one episode per file, one frame per line
//   <root>/jsonl/index_cache.json   generated metadata for all episodes
//
// A frame line carries views images_1..images_K (each a reference to a
// frame of an mp4 file), a state vector, a prompt and an is_robot flag.
// Unknown top-level keys are kept verbatim in EpisodeFrame::extras.

#include <algorithm>
#include <bit>
#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "dexkit/canonical_json.hpp"
#include "dexkit/error.hpp"
#include "dexkit/parallel.hpp"

namespace dexkit::dexdata {

namespace fs = std::filesystem;

inline constexpr std::string_view kVideoDir = "video";
inline constexpr std::string_view kJsonlDir = "jsonl";
inline constexpr std::string_view kIndexFile = "index_cache.json";
inline constexpr std::string_view kActionSpaceFile = "action_space.json";
inline constexpr std::string_view kViewPrefix = "images_";
/// Extras key under which converted episodes store per-frame actions.
inline constexpr std::string_view kActionKey = "action";

/// Reference to one frame of an mp4 file. Serialized kind is always "video".
struct ImageRef {
  std::string url;
  std::int64_t frame_idx = 0;

  bool operator==(const ImageRef&) const = default;
};

inline std::string view_name(std::size_t index) {
  return std::string(kViewPrefix) + std::to_string(index + 1);
}

struct EpisodeFrame {
  /// views[k] is the view named images_<k+1>; contiguity holds by construction.
  std::vector<ImageRef> views;
  std::vector<double> state;
  std::string prompt;
  bool is_robot = true;
  /// Unknown top-level keys, always a JSON object.
  Json extras = Json::object();

  std::size_t state_dim() const { return state.size(); }
};

/// Frames compare equal iff their canonical serializations are byte-equal:
/// state values compare bitwise (so 0.0 and -0.0 differ) and extras compare
/// by canonical form.
inline bool operator==(const EpisodeFrame& a, const EpisodeFrame& b) {
  if (a.views != b.views || a.prompt != b.prompt || a.is_robot != b.is_robot) return false;
  if (a.state.size() != b.state.size()) return false;
  for (std::size_t i = 0; i < a.state.size(); ++i) {
    if (std::bit_cast<std::uint64_t>(a.state[i]) != std::bit_cast<std::uint64_t>(b.state[i])) return false;
  }
  return canonical_dump(a.extras) == canonical_dump(b.extras);
}

struct EpisodeMeta {
  std::string jsonl_path;               // relative to the dataset root
  std::vector<std::string> video_paths;  // one per view, as written in the frames
  std::size_t num_frames = 0;
  std::size_t state_dim = 0;
  std::string prompt;
  std::optional<std::size_t> action_dim;

  bool operator==(const EpisodeMeta&) const = default;
};

inline Json to_json(const EpisodeMeta& meta) {
  Json j = {
      {"jsonl_path", meta.jsonl_path},
      {"video_paths", meta.video_paths},
      {"num_frames", meta.num_frames},
      {"state_dim", meta.state_dim},
      {"prompt", meta.prompt},
  };
  j["action_dim"] = meta.action_dim ? Json(*meta.action_dim) : Json(nullptr);
  return j;
}

inline EpisodeMeta episode_meta_from_json(const Json& j) {
  try {
    EpisodeMeta meta;
    meta.jsonl_path = j.at("jsonl_path").get<std::string>();
    meta.video_paths = j.at("video_paths").get<std::vector<std::string>>();
    meta.num_frames = j.at("num_frames").get<std::size_t>();
    meta.state_dim = j.at("state_dim").get<std::size_t>();
    meta.prompt = j.at("prompt").get<std::string>();
    if (j.contains("action_dim") && !j.at("action_dim").is_null()) {
      meta.action_dim = j.at("action_dim").get<std::size_t>();
    }
    return meta;
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::MalformedJson, std::string("episode meta: ") + e.what());
  }
}

/// Fixed directory structure rooted at one dataset directory.
struct DatasetLayout {
  fs::path root;

  fs::path video_dir() const { return root / kVideoDir; }
  fs::path jsonl_dir() const { return root / kJsonlDir; }
  fs::path index_path() const { return jsonl_dir() / kIndexFile; }
  fs::path action_space_path() const { return jsonl_dir() / kActionSpaceFile; }

  /// Resolves a url written in a frame line against the dataset root.
  fs::path resolve(std::string_view url) const {
    fs::path p{std::string(url)};
    return p.is_absolute() ? p : root / p;
  }
};

// ---------------------------------------------------------------------------
// Frame lines

namespace detail {

/// Returns n for "images_<n>" with n >= 1 and no leading zeros.
inline std::optional<std::size_t> parse_view_index(std::string_view key) {
  if (!key.starts_with(kViewPrefix)) return std::nullopt;
  std::string_view digits = key.substr(kViewPrefix.size());
  if (digits.empty() || digits.front() == '0') return 0;
  std::size_t n = 0;
  auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), n);
  if (ec != std::errc{} || ptr != digits.data() + digits.size()) return 0;
  return n;
}

inline ImageRef parse_image_ref(const std::string& key, const Json& value) {
  if (!value.is_object()) throw Error(ErrorCode::BadImageRef, key + " is not an object");
  for (const auto& [field, _] : value.items()) {
    if (field != "type" && field != "url" && field != "frame_idx") {
      throw Error(ErrorCode::BadImageRef, key + " has unexpected key \"" + field + "\"");
    }
  }
  auto type = value.find("type");
  if (type == value.end() || !type->is_string() || type->get_ref<const std::string&>() != "video") {
    throw Error(ErrorCode::BadImageRef, key + ".type must be \"video\"");
  }
  auto url = value.find("url");
  if (url == value.end() || !url->is_string()) {
    throw Error(ErrorCode::BadImageRef, key + ".url must be a string");
  }
  auto idx = value.find("frame_idx");
  if (idx == value.end() || !(idx->is_number_integer())) {
    throw Error(ErrorCode::BadImageRef, key + ".frame_idx must be an integer");
  }
  if (idx->is_number_unsigned()) {
    auto u = idx->get<std::uint64_t>();
    if (u > static_cast<std::uint64_t>(INT64_MAX)) {
      throw Error(ErrorCode::BadImageRef, key + ".frame_idx out of range");
    }
    return ImageRef{url->get<std::string>(), static_cast<std::int64_t>(u)};
  }
  auto i = idx->get<std::int64_t>();
  if (i < 0) throw Error(ErrorCode::BadImageRef, key + ".frame_idx is negative");
  return ImageRef{url->get<std::string>(), i};
}

}  // namespace detail

inline EpisodeFrame frame_from_json(const Json& object) {
  if (!object.is_object()) throw Error(ErrorCode::MalformedJson, "frame line is not a JSON object");

  EpisodeFrame frame;
  std::map<std::size_t, ImageRef> views;
  bool has_state = false, has_prompt = false, has_robot = false;

  for (const auto& [key, value] : object.items()) {
    if (auto index = detail::parse_view_index(key)) {
      if (*index == 0) throw Error(ErrorCode::BadViewName, "invalid view name \"" + key + "\"");
      views.emplace(*index, detail::parse_image_ref(key, value));
    } else if (key == "state") {
      if (!value.is_array()) throw Error(ErrorCode::BadFieldType, "state must be an array");
      frame.state.reserve(value.size());
      for (const auto& x : value) {
        if (!x.is_number()) throw Error(ErrorCode::BadFieldType, "state entries must be numbers");
        frame.state.push_back(x.get<double>());
      }
      has_state = true;
    } else if (key == "prompt") {
      if (!value.is_string()) throw Error(ErrorCode::BadFieldType, "prompt must be a string");
      frame.prompt = value.get<std::string>();
      has_prompt = true;
    } else if (key == "is_robot") {
      if (!value.is_boolean()) throw Error(ErrorCode::BadFieldType, "is_robot must be a boolean");
      frame.is_robot = value.get<bool>();
      has_robot = true;
    } else {
      frame.extras[key] = value;
    }
  }

  if (views.empty()) throw Error(ErrorCode::MissingField, "no images_<n> views");
  if (!has_state) throw Error(ErrorCode::MissingField, "state");
  if (!has_prompt) throw Error(ErrorCode::MissingField, "prompt");
  if (!has_robot) throw Error(ErrorCode::MissingField, "is_robot");

  std::size_t expected = 1;
  for (auto& [index, ref] : views) {
    if (index != expected) {
      throw Error(ErrorCode::BadViewName, "views must be contiguous from images_1; missing " + view_name(expected - 1));
    }
    frame.views.push_back(std::move(ref));
    ++expected;
  }
  return frame;
}

inline EpisodeFrame parse_frame_line(std::string_view line) {
  if (line.empty()) throw Error(ErrorCode::MalformedJson, "empty line");
  return frame_from_json(parse_json(line));
}

inline Json frame_to_json(const EpisodeFrame& frame) {
  Json j = frame.extras.is_object() ? frame.extras : Json::object();
  for (std::size_t k = 0; k < frame.views.size(); ++k) {
    j[view_name(k)] = {{"type", "video"}, {"url", frame.views[k].url}, {"frame_idx", frame.views[k].frame_idx}};
  }
  Json state = Json::array();
  for (double x : frame.state) state.push_back(x);
  j["state"] = std::move(state);
  j["prompt"] = frame.prompt;
  j["is_robot"] = frame.is_robot;
  return j;
}

/// One canonical JSON line, without the trailing newline.
inline std::string serialize_frame_line(const EpisodeFrame& frame) { return canonical_dump(frame_to_json(frame)); }

// ---------------------------------------------------------------------------
// Episode validation

enum class ViolationKind {
  Io,
  EmptyEpisode,
  MalformedJson,
  MissingField,
  BadFieldType,
  BadImageRef,
  BadViewName,
  InconsistentStateDim,
  InconsistentPrompt,
  InconsistentViews,
  InconsistentActionDim,
  BadExtension,
  BadVideoExtension,
  AbsolutePath,
};

inline std::string_view to_string(ViolationKind kind) {
  switch (kind) {
    case ViolationKind::Io: return "Io";
    case ViolationKind::EmptyEpisode: return "EmptyEpisode";
    case ViolationKind::MalformedJson: return "MalformedJson";
    case ViolationKind::MissingField: return "MissingField";
    case ViolationKind::BadFieldType: return "BadFieldType";
    case ViolationKind::BadImageRef: return "BadImageRef";
    case ViolationKind::BadViewName: return "BadViewName";
    case ViolationKind::InconsistentStateDim: return "InconsistentStateDim";
    case ViolationKind::InconsistentPrompt: return "InconsistentPrompt";
    case ViolationKind::InconsistentViews: return "InconsistentViews";
    case ViolationKind::InconsistentActionDim: return "InconsistentActionDim";
    case ViolationKind::BadExtension: return "BadExtension";
    case ViolationKind::BadVideoExtension: return "BadVideoExtension";
    case ViolationKind::AbsolutePath: return "AbsolutePath";
  }
  return "Unknown";
}

enum class Severity { Error, Warning };

struct Violation {
  std::string file;      // dataset-relative jsonl path
  std::size_t line = 0;  // 1-based; 0 for file-level findings
  ViolationKind kind = ViolationKind::MalformedJson;
  Severity severity = Severity::Error;
  std::string message;
};

inline Json to_json(const Violation& v) {
  return {{"file", v.file},
          {"line", v.line},
          {"kind", std::string(to_string(v.kind))},
          {"severity", v.severity == Severity::Error ? "error" : "warning"},
          {"message", v.message}};
}

struct ValidationReport {
  std::vector<Violation> violations;

  bool has_errors() const {
    return std::any_of(violations.begin(), violations.end(),
                       [](const Violation& v) { return v.severity == Severity::Error; });
  }
  std::size_t error_count() const {
    return static_cast<std::size_t>(std::count_if(violations.begin(), violations.end(),
                                                  [](const Violation& v) { return v.severity == Severity::Error; }));
  }
};

/// meta is set iff the report holds no errors (warnings may still be present).
struct EpisodeValidation {
  std::optional<EpisodeMeta> meta;
  ValidationReport report;

  bool ok() const { return meta.has_value(); }
};

namespace detail {

inline ViolationKind violation_kind_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::MissingField: return ViolationKind::MissingField;
    case ErrorCode::BadFieldType: return ViolationKind::BadFieldType;
    case ErrorCode::BadImageRef: return ViolationKind::BadImageRef;
    case ErrorCode::BadViewName: return ViolationKind::BadViewName;
    default: return ViolationKind::MalformedJson;
  }
}

inline std::string relative_to_root(const fs::path& path, const DatasetLayout& layout) {
  std::error_code ec;
  auto rel = fs::relative(path, layout.root, ec);
  if (ec || rel.empty() || *rel.begin() == "..") return path.generic_string();
  return rel.generic_string();
}

/// Reads a file into lines, dropping one trailing newline and any '\r'.
inline std::vector<std::string> read_lines(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot read " + path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(std::move(line));
  }
  if (in.bad()) throw Error(ErrorCode::Io, "read failure on " + path.string());
  return lines;
}

}  // namespace detail

/// Checks one episode file and accumulates every violation rather than
/// stopping at the first. Throws Error(Io) only when the file cannot be read.
inline EpisodeValidation validate_episode(const fs::path& jsonl_path, const DatasetLayout& layout) {
  const std::string rel = detail::relative_to_root(jsonl_path, layout);
  EpisodeValidation result;
  auto& violations = result.report.violations;
  auto add = [&](std::size_t line, ViolationKind kind, std::string message, Severity sev = Severity::Error) {
    violations.push_back(Violation{rel, line, kind, sev, std::move(message)});
  };

  if (jsonl_path.extension() != ".jsonl") add(0, ViolationKind::BadExtension, "episode file must end in .jsonl");

  const auto lines = detail::read_lines(jsonl_path);
  if (lines.empty()) {
    add(0, ViolationKind::EmptyEpisode, "episode has no frames");
    return result;
  }

  std::optional<EpisodeFrame> first;
  std::size_t first_line = 0;
  std::optional<std::size_t> action_dim;
  bool action_dim_broken = false;

  for (std::size_t i = 0; i < lines.size(); ++i) {
    const std::size_t line_no = i + 1;
    EpisodeFrame frame;
    try {
      frame = parse_frame_line(lines[i]);
    } catch (const Error& e) {
      add(line_no, detail::violation_kind_for(e.code()), e.detail());
      continue;
    }

    for (std::size_t k = 0; k < frame.views.size(); ++k) {
      const auto& url = frame.views[k].url;
      if (fs::path(url).extension() != ".mp4") {
        add(line_no, ViolationKind::BadVideoExtension, view_name(k) + " url \"" + url + "\" is not an .mp4 file");
      }
      if (fs::path(url).is_absolute()) {
        add(line_no, ViolationKind::AbsolutePath, view_name(k) + " url is absolute", Severity::Warning);
      }
    }

    std::optional<std::size_t> this_action_dim;
    if (auto it = frame.extras.find(kActionKey); it != frame.extras.end()) {
      if (!it->is_array()) {
        add(line_no, ViolationKind::BadFieldType, "action must be an array of numbers");
      } else {
        this_action_dim = it->size();
      }
    }

    if (!first) {
      first = std::move(frame);
      first_line = line_no;
      action_dim = this_action_dim;
      continue;
    }
    if (frame.state.size() != first->state.size()) {
      add(line_no, ViolationKind::InconsistentStateDim,
          "state has " + std::to_string(frame.state.size()) + " values, line " + std::to_string(first_line) +
              " has " + std::to_string(first->state.size()));
    }
    if (frame.prompt != first->prompt) {
      add(line_no, ViolationKind::InconsistentPrompt, "prompt differs from line " + std::to_string(first_line));
    }
    if (frame.views.size() != first->views.size()) {
      add(line_no, ViolationKind::InconsistentViews,
          std::to_string(frame.views.size()) + " views, line " + std::to_string(first_line) + " has " +
              std::to_string(first->views.size()));
    } else {
      for (std::size_t k = 0; k < frame.views.size(); ++k) {
        if (frame.views[k].url != first->views[k].url) {
          add(line_no, ViolationKind::InconsistentViews, view_name(k) + " url changes within the episode");
        }
      }
    }
    if (this_action_dim != action_dim && !action_dim_broken) {
      add(line_no, ViolationKind::InconsistentActionDim, "action length differs from line " + std::to_string(first_line));
      action_dim_broken = true;
    }
  }

  if (result.report.has_errors() || !first) return result;

  EpisodeMeta meta;
  meta.jsonl_path = rel;
  for (const auto& view : first->views) meta.video_paths.push_back(view.url);
  meta.num_frames = lines.size();
  meta.state_dim = first->state.size();
  meta.prompt = first->prompt;
  meta.action_dim = action_dim;
  result.meta = std::move(meta);
  return result;
}

/// Parses every frame of an episode, throwing on the first malformed line.
inline std::vector<EpisodeFrame> read_episode_frames(const fs::path& jsonl_path) {
  std::vector<EpisodeFrame> frames;
  const auto lines = detail::read_lines(jsonl_path);
  frames.reserve(lines.size());
  for (std::size_t i = 0; i < lines.size(); ++i) {
    try {
      frames.push_back(parse_frame_line(lines[i]));
    } catch (const Error& e) {
      throw Error(e.code(), jsonl_path.string() + ":" + std::to_string(i + 1) + ": " + e.detail());
    }
  }
  return frames;
}

inline void write_episode_frames(const fs::path& jsonl_path, const std::vector<EpisodeFrame>& frames) {
  std::ofstream out(jsonl_path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + jsonl_path.string());
  for (const auto& frame : frames) out << serialize_frame_line(frame) << '\n';
  if (!out) throw Error(ErrorCode::Io, "short write to " + jsonl_path.string());
}

// ---------------------------------------------------------------------------
// Dataset scan

struct ScanResult {
  std::vector<EpisodeMeta> episodes;  // sorted by jsonl_path
  ValidationReport report;            // combined over all episodes
};

/// All episode files under jsonl/, sorted by byte-lexicographic relative path.
inline std::vector<fs::path> list_episode_files(const DatasetLayout& layout) {
  std::error_code ec;
  if (!fs::is_directory(layout.root, ec)) throw Error(ErrorCode::Io, "dataset root " + layout.root.string() + " is not a directory");
  std::vector<std::pair<std::string, fs::path>> found;
  if (fs::is_directory(layout.jsonl_dir(), ec)) {
    for (auto it = fs::recursive_directory_iterator(layout.jsonl_dir(), ec); !ec && it != fs::recursive_directory_iterator();
         it.increment(ec)) {
      if (!it->is_regular_file() || it->path().extension() != ".jsonl") continue;
      found.emplace_back(detail::relative_to_root(it->path(), layout), it->path());
    }
    if (ec) throw Error(ErrorCode::Io, "cannot list " + layout.jsonl_dir().string() + ": " + ec.message());
  }
  std::sort(found.begin(), found.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  std::vector<fs::path> paths;
  paths.reserve(found.size());
  for (auto& [_, p] : found) paths.push_back(std::move(p));
  return paths;
}

inline ScanResult scan_dataset(const DatasetLayout& layout) {
  const auto files = list_episode_files(layout);
  std::vector<EpisodeValidation> checks(files.size());
  parallel_for(files.size(), [&](std::size_t i) { checks[i] = validate_episode(files[i], layout); });

  ScanResult result;
  for (auto& check : checks) {
    if (check.meta) result.episodes.push_back(std::move(*check.meta));
    for (auto& v : check.report.violations) result.report.violations.push_back(std::move(v));
  }
  return result;
}

}  // namespace dexkit::dexdata
