#pragma once

// ISO BMFF (mp4) box-tree and sample-table reader. Maps a decode-order frame
// index of the first video track to the exact byte range of its encoded
// sample, without decoding anything.

#include <array>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "dexkit/error.hpp"

namespace dexkit::mp4 {

// ---------------------------------------------------------------------------
// Byte sources

/// Random-access bytes. Callers must keep every read inside [0, size());
/// implementations throw std::out_of_range otherwise.
class ByteSource {
 public:
  virtual ~ByteSource() = default;
  virtual std::uint64_t size() const = 0;
  virtual void read(std::uint64_t offset, std::span<std::uint8_t> out) const = 0;
};

class MemorySource : public ByteSource {
 public:
  explicit MemorySource(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::uint64_t size() const override { return bytes_.size(); }
  void read(std::uint64_t offset, std::span<std::uint8_t> out) const override {
    if (offset > bytes_.size() || out.size() > bytes_.size() - offset) {
      throw std::out_of_range("MemorySource read past end");
    }
    std::memcpy(out.data(), bytes_.data() + offset, out.size());
  }

 private:
  std::span<const std::uint8_t> bytes_;
};

class FileSource : public ByteSource {
 public:
  explicit FileSource(const std::filesystem::path& path) : in_(path, std::ios::binary), path_(path.string()) {
    if (!in_) throw Error(ErrorCode::Io, "cannot open " + path_);
    in_.seekg(0, std::ios::end);
    size_ = static_cast<std::uint64_t>(in_.tellg());
  }

  std::uint64_t size() const override { return size_; }
  void read(std::uint64_t offset, std::span<std::uint8_t> out) const override {
    if (offset > size_ || out.size() > size_ - offset) throw std::out_of_range("FileSource read past end");
    in_.clear();
    in_.seekg(static_cast<std::streamoff>(offset));
    in_.read(reinterpret_cast<char*>(out.data()), static_cast<std::streamsize>(out.size()));
    if (static_cast<std::size_t>(in_.gcount()) != out.size()) throw Error(ErrorCode::Io, "short read from " + path_);
  }

 private:
  mutable std::ifstream in_;
  std::string path_;
  std::uint64_t size_ = 0;
};

// ---------------------------------------------------------------------------
// Box tree

struct FourCC {
  std::array<char, 4> code{};

  constexpr FourCC() = default;
  constexpr FourCC(const char (&s)[5]) : code{s[0], s[1], s[2], s[3]} {}

  std::string str() const { return std::string(code.data(), 4); }
  bool operator==(const FourCC&) const = default;
};

struct BoxHeader {
  std::uint64_t size = 0;  // whole box, header included, largesize resolved
  FourCC type;
  std::uint64_t offset = 0;  // absolute offset of the box start
  std::uint32_t header_len = 8;

  std::uint64_t payload_offset() const { return offset + header_len; }
  std::uint64_t payload_size() const { return size - header_len; }
  std::uint64_t end() const { return offset + size; }
};

struct Box {
  BoxHeader header;
  std::vector<Box> children;

  const Box* find(FourCC type) const {
    for (const auto& child : children) {
      if (child.header.type == type) return &child;
    }
    return nullptr;
  }
};

struct BoxTree {
  std::vector<Box> top_level;
  std::uint64_t file_size = 0;
  std::size_t moov_index = 0;   // into top_level
  std::size_t video_track = 0;  // into moov().children

  const Box& moov() const { return top_level[moov_index]; }
  const Box& video_trak() const { return moov().children[video_track]; }
};

namespace detail {

inline std::uint32_t be32(const std::uint8_t* p) {
  return (std::uint32_t{p[0]} << 24) | (std::uint32_t{p[1]} << 16) | (std::uint32_t{p[2]} << 8) | std::uint32_t{p[3]};
}
inline std::uint64_t be64(const std::uint8_t* p) { return (std::uint64_t{be32(p)} << 32) | be32(p + 4); }

inline bool is_container(FourCC type) {
  static constexpr FourCC kContainers[] = {"moov", "trak", "mdia", "minf", "stbl", "edts", "dinf", "mvex"};
  for (auto c : kContainers) {
    if (c == type) return true;
  }
  return false;
}

inline bool is_known_top_level(FourCC type) {
  static constexpr FourCC kTop[] = {"ftyp", "styp", "moov", "mdat", "free", "skip", "wide", "pdin",
                                    "uuid", "moof", "mfra", "meta", "sidx", "pnot", "prft"};
  for (auto c : kTop) {
    if (c == type) return true;
  }
  return false;
}

inline constexpr int kMaxDepth = 16;

/// Parses sibling boxes covering exactly [begin, end).
inline std::vector<Box> parse_range(const ByteSource& src, std::uint64_t begin, std::uint64_t end, int depth) {
  if (depth > kMaxDepth) throw Mp4Error(ErrorCode::TruncatedBox, "box nesting too deep", begin);
  std::vector<Box> boxes;
  std::uint64_t pos = begin;
  while (pos < end) {
    if (end - pos < 8) throw Mp4Error(ErrorCode::TruncatedBox, "fewer than 8 bytes left for a box header", pos);
    std::uint8_t head[16];
    src.read(pos, {head, 8});
    BoxHeader h;
    h.offset = pos;
    h.type.code = {static_cast<char>(head[4]), static_cast<char>(head[5]), static_cast<char>(head[6]),
                   static_cast<char>(head[7])};
    if (depth == 0 && boxes.empty() && !is_known_top_level(h.type)) {
      throw Mp4Error(ErrorCode::NoMoov, "not an ISO BMFF file (first box type is not a known top-level box)", pos);
    }
    const std::uint32_t size32 = be32(head);
    bool large = false;
    if (size32 == 1) {
      if (end - pos < 16) throw Mp4Error(ErrorCode::TruncatedBox, "largesize header truncated", pos);
      src.read(pos + 8, {head + 8, 8});
      h.header_len = 16;
      h.size = be64(head + 8);
      large = true;
    } else if (size32 == 0) {
      h.size = end - pos;  // box extends to the end of its parent
    } else {
      h.size = size32;
    }
    if (h.size < h.header_len) {
      throw Mp4Error(ErrorCode::TruncatedBox, "declared size " + std::to_string(h.size) + " smaller than header", pos);
    }
    if (h.size > end - pos) {
      throw Mp4Error(large ? ErrorCode::LargesizeOverflow : ErrorCode::TruncatedBox,
                     "box '" + h.type.str() + "' of size " + std::to_string(h.size) + " overruns its parent", pos);
    }
    if (h.type == FourCC("moof") || h.type == FourCC("mvex")) {
      throw Mp4Error(ErrorCode::UnsupportedFragmented, "fragmented mp4 is not supported", pos);
    }
    Box box{h, {}};
    if (is_container(h.type)) box.children = parse_range(src, h.payload_offset(), h.end(), depth + 1);
    boxes.push_back(std::move(box));
    pos = h.end();
  }
  return boxes;
}

/// Bounds-checked big-endian reader over a box payload.
class Cursor {
 public:
  Cursor(std::vector<std::uint8_t> bytes, std::uint64_t origin) : bytes_(std::move(bytes)), origin_(origin) {}

  std::size_t remaining() const { return bytes_.size() - pos_; }
  void need(std::uint64_t n, std::string_view what) const {
    if (n > remaining()) throw Mp4Error(ErrorCode::TruncatedBox, std::string(what) + " truncated", origin_);
  }
  void skip(std::size_t n, std::string_view what) {
    need(n, what);
    pos_ += n;
  }
  std::uint32_t u32(std::string_view what) {
    need(4, what);
    auto v = be32(bytes_.data() + pos_);
    pos_ += 4;
    return v;
  }
  std::uint64_t u64(std::string_view what) {
    need(8, what);
    auto v = be64(bytes_.data() + pos_);
    pos_ += 8;
    return v;
  }
  std::uint8_t u8(std::string_view what) {
    need(1, what);
    return bytes_[pos_++];
  }

 private:
  std::vector<std::uint8_t> bytes_;
  std::size_t pos_ = 0;
  std::uint64_t origin_;
};

inline Cursor payload(const ByteSource& src, const Box& box) {
  std::vector<std::uint8_t> bytes(static_cast<std::size_t>(box.header.payload_size()));
  src.read(box.header.payload_offset(), bytes);
  return Cursor(std::move(bytes), box.header.offset);
}

inline std::optional<FourCC> handler_type(const ByteSource& src, const Box& trak) {
  const Box* mdia = trak.find("mdia");
  const Box* hdlr = mdia ? mdia->find("hdlr") : nullptr;
  if (!hdlr) return std::nullopt;
  Cursor c = payload(src, *hdlr);
  c.skip(8, "hdlr");  // version/flags, pre_defined
  FourCC type;
  for (auto& ch : type.code) ch = static_cast<char>(c.u8("hdlr"));
  return type;
}

}  // namespace detail

/// Parses the whole box hierarchy and locates moov and its first video track.
inline BoxTree parse_boxes(const ByteSource& src) {
  BoxTree tree;
  tree.file_size = src.size();
  if (tree.file_size < 8) throw Mp4Error(ErrorCode::TruncatedBox, "file shorter than one box header", 0);
  tree.top_level = detail::parse_range(src, 0, tree.file_size, 0);

  bool found_moov = false;
  for (std::size_t i = 0; i < tree.top_level.size(); ++i) {
    if (tree.top_level[i].header.type == FourCC("moov")) {
      tree.moov_index = i;
      found_moov = true;
      break;
    }
  }
  if (!found_moov) throw Mp4Error(ErrorCode::NoMoov, "no moov box", 0);

  const Box& moov = tree.moov();
  for (std::size_t i = 0; i < moov.children.size(); ++i) {
    const Box& child = moov.children[i];
    if (child.header.type != FourCC("trak")) continue;
    if (auto handler = detail::handler_type(src, child); handler && *handler == FourCC("vide")) {
      tree.video_track = i;
      return tree;
    }
  }
  throw Mp4Error(ErrorCode::NoVideoTrack, "no track with handler 'vide'", moov.header.offset);
}

// ---------------------------------------------------------------------------
// Sample tables

struct ChunkRun {
  std::uint32_t first_chunk = 1;  // 1-based
  std::uint32_t samples_per_chunk = 0;

  bool operator==(const ChunkRun&) const = default;
};

struct TimeRun {
  std::uint32_t count = 0;
  std::uint32_t delta = 0;

  bool operator==(const TimeRun&) const = default;
};

struct SampleTables {
  /// Non-zero: every sample has this size and entry_sizes is empty.
  std::uint32_t uniform_size = 0;
  std::uint32_t sample_count = 0;
  std::vector<std::uint32_t> entry_sizes;
  std::vector<std::uint64_t> chunk_offsets;
  std::vector<ChunkRun> sample_to_chunk;
  std::vector<TimeRun> time_deltas;
  std::uint32_t timescale = 0;

  std::uint32_t sample_size(std::size_t i) const { return uniform_size ? uniform_size : entry_sizes[i]; }
};

struct FrameEntry {
  std::uint64_t byte_offset = 0;
  std::uint32_t byte_len = 0;
  std::uint64_t pts_ticks = 0;

  bool operator==(const FrameEntry&) const = default;
};

struct FrameTable {
  std::vector<FrameEntry> entries;
  std::uint32_t timescale = 0;

  std::size_t size() const { return entries.size(); }
  bool operator==(const FrameTable&) const = default;
};

/// Reads mdhd/stsz/stco|co64/stsc/stts of the tree's video track.
inline SampleTables read_sample_tables(const ByteSource& src, const BoxTree& tree) {
  const Box& trak = tree.video_trak();
  const Box* mdia = trak.find("mdia");
  const Box* mdhd = mdia ? mdia->find("mdhd") : nullptr;
  const Box* minf = mdia ? mdia->find("minf") : nullptr;
  const Box* stbl = minf ? minf->find("stbl") : nullptr;
  const std::uint64_t at = trak.header.offset;
  if (!mdhd) throw Mp4Error(ErrorCode::MissingSampleTable, "video track has no mdhd", at);
  if (!stbl) throw Mp4Error(ErrorCode::MissingSampleTable, "video track has no stbl", at);

  SampleTables t;
  {
    auto c = detail::payload(src, *mdhd);
    const std::uint8_t version = c.u8("mdhd");
    c.skip(3, "mdhd");
    c.skip(version == 1 ? 16 : 8, "mdhd");
    t.timescale = c.u32("mdhd timescale");
  }

  const Box* stsz = stbl->find("stsz");
  if (!stsz) throw Mp4Error(ErrorCode::MissingSampleTable, "no stsz", stbl->header.offset);
  {
    auto c = detail::payload(src, *stsz);
    c.skip(4, "stsz");
    t.uniform_size = c.u32("stsz");
    t.sample_count = c.u32("stsz");
    if (t.uniform_size == 0) {
      c.need(std::uint64_t{t.sample_count} * 4, "stsz entries");
      t.entry_sizes.resize(t.sample_count);
      for (auto& s : t.entry_sizes) s = c.u32("stsz entry");
    } else if (std::uint64_t{t.uniform_size} * t.sample_count > tree.file_size) {
      throw Mp4Error(ErrorCode::InconsistentTables, "uniform samples cannot fit in the file", stsz->header.offset);
    }
  }

  if (const Box* stco = stbl->find("stco")) {
    auto c = detail::payload(src, *stco);
    c.skip(4, "stco");
    const std::uint32_t n = c.u32("stco");
    c.need(std::uint64_t{n} * 4, "stco entries");
    t.chunk_offsets.resize(n);
    for (auto& off : t.chunk_offsets) off = c.u32("stco entry");
  } else if (const Box* co64 = stbl->find("co64")) {
    auto c = detail::payload(src, *co64);
    c.skip(4, "co64");
    const std::uint32_t n = c.u32("co64");
    c.need(std::uint64_t{n} * 8, "co64 entries");
    t.chunk_offsets.resize(n);
    for (auto& off : t.chunk_offsets) off = c.u64("co64 entry");
  } else {
    throw Mp4Error(ErrorCode::MissingSampleTable, "no stco or co64", stbl->header.offset);
  }

  const Box* stsc = stbl->find("stsc");
  if (!stsc) throw Mp4Error(ErrorCode::MissingSampleTable, "no stsc", stbl->header.offset);
  {
    auto c = detail::payload(src, *stsc);
    c.skip(4, "stsc");
    const std::uint32_t n = c.u32("stsc");
    c.need(std::uint64_t{n} * 12, "stsc entries");
    t.sample_to_chunk.resize(n);
    for (auto& run : t.sample_to_chunk) {
      run.first_chunk = c.u32("stsc entry");
      run.samples_per_chunk = c.u32("stsc entry");
      c.skip(4, "stsc entry");  // sample_description_index
    }
  }

  const Box* stts = stbl->find("stts");
  if (!stts) throw Mp4Error(ErrorCode::MissingSampleTable, "no stts", stbl->header.offset);
  {
    auto c = detail::payload(src, *stts);
    c.skip(4, "stts");
    const std::uint32_t n = c.u32("stts");
    c.need(std::uint64_t{n} * 8, "stts entries");
    t.time_deltas.resize(n);
    for (auto& run : t.time_deltas) {
      run.count = c.u32("stts entry");
      run.delta = c.u32("stts entry");
    }
  }
  return t;
}

/// Expands the chunk runs into one byte range and timestamp per sample.
inline FrameTable build_frame_table(const SampleTables& t) {
  auto inconsistent = [](const std::string& msg) { return Error(ErrorCode::InconsistentTables, msg); };

  if (t.uniform_size == 0 && t.entry_sizes.size() != t.sample_count) {
    throw inconsistent("stsz lists " + std::to_string(t.entry_sizes.size()) + " sizes for " +
                       std::to_string(t.sample_count) + " samples");
  }
  std::uint64_t timed = 0;
  for (const auto& run : t.time_deltas) timed += run.count;
  if (timed != t.sample_count) {
    throw inconsistent("stts covers " + std::to_string(timed) + " samples, stsz has " + std::to_string(t.sample_count));
  }

  const std::uint64_t num_chunks = t.chunk_offsets.size();
  if (t.sample_count > 0 && (t.sample_to_chunk.empty() || t.sample_to_chunk.front().first_chunk != 1)) {
    throw inconsistent("stsc must start at chunk 1");
  }
  for (std::size_t r = 0; r < t.sample_to_chunk.size(); ++r) {
    const auto first = t.sample_to_chunk[r].first_chunk;
    if (first == 0 || first > num_chunks) throw inconsistent("stsc chunk index " + std::to_string(first) + " out of range");
    if (r > 0 && first <= t.sample_to_chunk[r - 1].first_chunk) throw inconsistent("stsc chunk indices not increasing");
  }

  FrameTable table;
  table.timescale = t.timescale;
  table.entries.reserve(t.sample_count);

  std::size_t sample = 0;
  for (std::size_t r = 0; r < t.sample_to_chunk.size(); ++r) {
    const std::uint64_t first = t.sample_to_chunk[r].first_chunk;
    const std::uint64_t last = r + 1 < t.sample_to_chunk.size() ? t.sample_to_chunk[r + 1].first_chunk - 1 : num_chunks;
    const std::uint32_t per_chunk = t.sample_to_chunk[r].samples_per_chunk;
    for (std::uint64_t chunk = first; chunk <= last; ++chunk) {
      if (per_chunk > t.sample_count - sample) throw inconsistent("stsc describes more samples than stsz");
      std::uint64_t offset = t.chunk_offsets[chunk - 1];
      for (std::uint32_t k = 0; k < per_chunk; ++k, ++sample) {
        const std::uint32_t len = t.sample_size(sample);
        if (offset > std::numeric_limits<std::uint64_t>::max() - len) throw inconsistent("sample offset overflows");
        table.entries.push_back(FrameEntry{offset, len, 0});
        offset += len;
      }
    }
  }
  if (sample != t.sample_count) {
    throw inconsistent("stsc describes " + std::to_string(sample) + " samples, stsz has " + std::to_string(t.sample_count));
  }

  std::uint64_t pts = 0;
  std::size_t i = 0;
  for (const auto& run : t.time_deltas) {
    for (std::uint32_t k = 0; k < run.count; ++k, ++i) {
      table.entries[i].pts_ticks = pts;
      pts += run.delta;
    }
  }
  return table;
}

struct FrameLocation {
  std::uint64_t offset = 0;
  std::uint32_t length = 0;
  double pts_seconds = 0.0;
};

inline FrameLocation locate_frame(const FrameTable& table, std::int64_t frame_idx) {
  if (frame_idx < 0 || static_cast<std::uint64_t>(frame_idx) >= table.entries.size()) {
    throw Error(ErrorCode::FrameOutOfRange,
                "frame " + std::to_string(frame_idx) + " not in [0, " + std::to_string(table.entries.size()) + ")");
  }
  const auto& e = table.entries[static_cast<std::size_t>(frame_idx)];
  const double seconds = table.timescale ? static_cast<double>(e.pts_ticks) / table.timescale : 0.0;
  return {e.byte_offset, e.byte_len, seconds};
}

namespace detail {

inline void check_in_file(const FrameTable& table, std::uint64_t file_size) {
  for (std::size_t i = 0; i < table.entries.size(); ++i) {
    const auto& e = table.entries[i];
    if (e.byte_offset > file_size || e.byte_len > file_size - e.byte_offset) {
      throw Mp4Error(ErrorCode::InconsistentTables, "sample " + std::to_string(i) + " lies outside the file", e.byte_offset);
    }
  }
}

}  // namespace detail

/// Parses a source end to end and checks every sample lies inside the file.
inline FrameTable index_video(const ByteSource& src) {
  const BoxTree tree = parse_boxes(src);
  FrameTable table = build_frame_table(read_sample_tables(src, tree));
  detail::check_in_file(table, tree.file_size);
  return table;
}

struct VideoInfo {
  std::size_t frame_count = 0;
  double duration_seconds = 0.0;
  std::uint32_t timescale = 0;
};

inline VideoInfo probe_video(const ByteSource& src) {
  const BoxTree tree = parse_boxes(src);
  const SampleTables tables = read_sample_tables(src, tree);
  const FrameTable table = build_frame_table(tables);
  detail::check_in_file(table, tree.file_size);
  std::uint64_t ticks = 0;
  for (const auto& run : tables.time_deltas) ticks += std::uint64_t{run.count} * run.delta;
  VideoInfo info;
  info.frame_count = table.entries.size();
  info.timescale = tables.timescale;
  info.duration_seconds = tables.timescale ? static_cast<double>(ticks) / tables.timescale : 0.0;
  return info;
}

inline VideoInfo probe_video(const std::filesystem::path& path) { return probe_video(FileSource(path)); }

}  // namespace dexkit::mp4
