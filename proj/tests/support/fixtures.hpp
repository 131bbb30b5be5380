#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include "json.hpp"

namespace fixtures {

namespace fs = std::filesystem;

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag = "dexkit") {
    static std::mt19937_64 rng{std::random_device{}()};
    path_ = fs::temp_directory_path() / (tag + "-" + std::to_string(rng()));
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& rel) const { return path_ / rel; }

 private:
  fs::path path_;
};

inline void write_text(const fs::path& path, const std::string& text) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << text;
}

inline void write_bytes(const fs::path& path, const std::vector<std::uint8_t>& bytes) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

inline std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

/// Independent recursive byte sum over regular files.
inline std::uint64_t directory_bytes(const fs::path& root) {
  std::uint64_t total = 0;
  if (!fs::exists(root)) return 0;
  for (const auto& entry : fs::recursive_directory_iterator(root)) {
    if (entry.is_regular_file()) total += entry.file_size();
  }
  return total;
}

inline const char* kSampleLine =
    R"({"images_1": {"type": "video", "url": "url1", "frame_idx": 21}, )"
    R"("images_2": {"type": "video", "url": "url2", "frame_idx": 21}, )"
    R"("images_3": {"type": "video", "url": "url3", "frame_idx": 21}, )"
    R"("state": [0.1, 0.2], "prompt": "open the door", "is_robot": true})";

// ---------------------------------------------------------------------------
// Random frame lines written in deliberately non-canonical text form.

class LineGenerator {
 public:
  explicit LineGenerator(std::uint64_t seed) : rng_(seed) {}

  std::string line() {
    std::vector<std::pair<std::string, std::string>> members;
    const int views = pick(1, 4);
    for (int k = 1; k <= views; ++k) {
      members.emplace_back("images_" + std::to_string(k), image_ref());
    }
    std::string state = "[";
    const int dims = pick(0, 8);
    for (int d = 0; d < dims; ++d) state += (d ? "," + space() : "") + float_text();
    members.emplace_back("state", state + "]");
    members.emplace_back("prompt", string_text());
    members.emplace_back("is_robot", pick(0, 1) ? "true" : "false");
    const int extras = pick(0, 3);
    for (int e = 0; e < extras; ++e) members.emplace_back("x_" + std::to_string(pick(0, 999)), value(2));
    std::shuffle(members.begin(), members.end(), rng_);

    std::string out = "{" + space();
    for (std::size_t i = 0; i < members.size(); ++i) {
      if (i) out += "," + space();
      out += "\"" + members[i].first + "\"" + space() + ":" + space() + members[i].second;
    }
    return out + space() + "}";
  }

 private:
  int pick(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng_); }

  std::string space() {
    static const char* kSpaces[] = {"", "", " ", "  ", "\t"};
    return kSpaces[pick(0, 4)];
  }

  std::string float_text() {
    double v = 0;
    switch (pick(0, 4)) {
      case 0: v = std::uniform_real_distribution<double>(-1, 1)(rng_); break;
      case 1: v = std::uniform_real_distribution<double>(-1e6, 1e6)(rng_); break;
      case 2: v = std::ldexp(std::uniform_real_distribution<double>(0.5, 1)(rng_), pick(-60, 60)); break;
      case 3: v = pick(-1000, 1000) / 8.0; break;
      default: v = pick(-5, 5) * 0.1; break;
    }
    char buf[64];
    std::snprintf(buf, sizeof buf, pick(0, 1) ? "%.17g" : "%.17e", v);
    std::string s(buf);
    if (s.find_first_of(".e") == std::string::npos) s += ".0";
    return s;
  }

  std::string string_text() {
    static const std::vector<std::string> kPieces = {"open", " the ", "door", "pick", "cube", "\\\"", "\\\\", "\\n",
                                                      "\\u00e9", "中文", "\\t", "/", "\\u0001", "reach 0.5"};
    std::string s = "\"";
    const int n = pick(0, 6);
    for (int i = 0; i < n; ++i) s += kPieces[static_cast<std::size_t>(pick(0, static_cast<int>(kPieces.size()) - 1))];
    return s + "\"";
  }

  std::string image_ref() {
    std::vector<std::string> fields = {"\"type\":" + space() + "\"video\"",
                                       "\"url\":" + space() + "\"video/ep" + std::to_string(pick(0, 99)) + ".mp4\"",
                                       "\"frame_idx\":" + space() + std::to_string(pick(0, 5000))};
    std::shuffle(fields.begin(), fields.end(), rng_);
    return "{" + fields[0] + "," + space() + fields[1] + "," + fields[2] + "}";
  }

  std::string value(int depth) {
    switch (pick(0, depth > 0 ? 6 : 4)) {
      case 0: return std::to_string(pick(-100000, 100000));
      case 1: return float_text();
      case 2: return string_text();
      case 3: return pick(0, 1) ? "true" : "false";
      case 4: return "null";
      case 5: {
        std::string s = "[";
        const int n = pick(0, 3);
        for (int i = 0; i < n; ++i) s += (i ? "," : "") + value(depth - 1);
        return s + "]";
      }
      default: {
        std::string s = "{";
        const int n = pick(0, 3);
        for (int i = 0; i < n; ++i) s += std::string(i ? "," : "") + "\"k" + std::to_string(i) + "\":" + value(depth - 1);
        return s + "}";
      }
    }
  }

  std::mt19937_64 rng_;
};

}  // namespace fixtures
