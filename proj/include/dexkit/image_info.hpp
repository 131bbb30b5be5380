#pragma once

// Reads image dimensions from file headers (PNG, binary PPM/PGM) without
// decoding pixels.

#include <cctype>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>

namespace dexkit {

struct ImageSize {
  std::uint32_t width = 0;
  std::uint32_t height = 0;

  bool operator==(const ImageSize&) const = default;
};

inline std::optional<ImageSize> image_size(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return std::nullopt;
  unsigned char head[24] = {};
  in.read(reinterpret_cast<char*>(head), sizeof head);
  const auto got = in.gcount();

  static constexpr unsigned char kPng[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1A, '\n'};
  if (got >= 24 && std::equal(kPng, kPng + 8, head) && std::equal(head + 12, head + 16, "IHDR")) {
    auto be32 = [&](int at) {
      return (std::uint32_t{head[at]} << 24) | (std::uint32_t{head[at + 1]} << 16) | (std::uint32_t{head[at + 2]} << 8) |
             head[at + 3];
    };
    return ImageSize{be32(16), be32(20)};
  }

  if (got >= 2 && head[0] == 'P' && (head[1] == '5' || head[1] == '6')) {
    in.clear();
    in.seekg(2);
    std::uint32_t values[2] = {};
    for (auto& v : values) {
      int c = in.get();
      while (c != EOF && (std::isspace(c) || c == '#')) {
        if (c == '#') {
          while (c != EOF && c != '\n') c = in.get();
        }
        c = in.get();
      }
      if (c == EOF || !std::isdigit(c)) return std::nullopt;
      while (c != EOF && std::isdigit(c)) {
        v = v * 10 + static_cast<std::uint32_t>(c - '0');
        c = in.get();
      }
    }
    return ImageSize{values[0], values[1]};
  }
  return std::nullopt;
}

}  // namespace dexkit
