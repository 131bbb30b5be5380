#pragma once

// Minimal unfragmented mp4 writer: ftyp + mdat + moov with one video track
// (and optionally a leading audio track). Samples are opaque byte strings.
// Shared by the dexkit-mux stub encoder and the test fixtures; it does not
// depend on the dexkit parser.

#include <cstdint>
#include <algorithm>
#include <numeric>
#include <utility>
#include <string>
#include <string_view>
#include <vector>

namespace dexkit::mux {

using Bytes = std::vector<std::uint8_t>;

inline void put8(Bytes& b, std::uint8_t v) { b.push_back(v); }
inline void put16(Bytes& b, std::uint16_t v) {
  b.push_back(static_cast<std::uint8_t>(v >> 8));
  b.push_back(static_cast<std::uint8_t>(v));
}
inline void put32(Bytes& b, std::uint32_t v) {
  for (int s = 24; s >= 0; s -= 8) b.push_back(static_cast<std::uint8_t>(v >> s));
}
inline void put64(Bytes& b, std::uint64_t v) {
  for (int s = 56; s >= 0; s -= 8) b.push_back(static_cast<std::uint8_t>(v >> s));
}
inline void put_type(Bytes& b, std::string_view type) {
  for (int i = 0; i < 4; ++i) b.push_back(static_cast<std::uint8_t>(type[static_cast<std::size_t>(i)]));
}
inline void append(Bytes& b, const Bytes& more) { b.insert(b.end(), more.begin(), more.end()); }

inline Bytes make_box(std::string_view type, const Bytes& payload, bool largesize = false) {
  Bytes b;
  if (largesize) {
    put32(b, 1);
    put_type(b, type);
    put64(b, payload.size() + 16);
  } else {
    put32(b, static_cast<std::uint32_t>(payload.size() + 8));
    put_type(b, type);
  }
  append(b, payload);
  return b;
}

inline Bytes make_full_box(std::string_view type, std::uint8_t version, std::uint32_t flags, const Bytes& body) {
  Bytes payload;
  put32(payload, (std::uint32_t{version} << 24) | (flags & 0xFFFFFF));
  append(payload, body);
  return make_box(type, payload);
}

inline Bytes concat(std::initializer_list<Bytes> parts) {
  Bytes out;
  for (const auto& p : parts) append(out, p);
  return out;
}

struct Mp4Options {
  std::uint32_t timescale = 30;
  std::uint32_t sample_delta = 1;
  std::uint16_t width = 64;
  std::uint16_t height = 64;
  std::string codec = "zdlt";
  /// Samples per chunk, cycled; {} means all samples in one chunk.
  std::vector<std::uint32_t> chunk_pattern;
  bool use_co64 = false;
  bool largesize_mdat = false;
  bool force_per_entry_sizes = false;
  bool audio_track_first = false;
  std::uint8_t mdhd_version = 0;
};

namespace detail {

inline Bytes matrix() {
  Bytes b;
  const std::uint32_t m[9] = {0x00010000, 0, 0, 0, 0x00010000, 0, 0, 0, 0x40000000};
  for (auto v : m) put32(b, v);
  return b;
}

inline Bytes mdhd(const Mp4Options& o, std::uint64_t duration) {
  Bytes body;
  if (o.mdhd_version == 1) {
    put64(body, 0);
    put64(body, 0);
    put32(body, o.timescale);
    put64(body, duration);
  } else {
    put32(body, 0);
    put32(body, 0);
    put32(body, o.timescale);
    put32(body, static_cast<std::uint32_t>(duration));
  }
  put16(body, 0x55C4);  // language "und"
  put16(body, 0);
  return make_full_box("mdhd", o.mdhd_version, 0, body);
}

inline Bytes hdlr(std::string_view handler, std::string_view name) {
  Bytes body;
  put32(body, 0);
  put_type(body, handler);
  for (int i = 0; i < 3; ++i) put32(body, 0);
  for (char c : name) body.push_back(static_cast<std::uint8_t>(c));
  body.push_back(0);
  return make_full_box("hdlr", 0, 0, body);
}

inline Bytes dinf() {
  Bytes url_box = make_full_box("url ", 0, 1, {});
  Bytes dref_body;
  put32(dref_body, 1);
  append(dref_body, url_box);
  return make_box("dinf", make_full_box("dref", 0, 0, dref_body));
}

inline Bytes visual_sample_entry(const Mp4Options& o) {
  Bytes e;
  for (int i = 0; i < 6; ++i) put8(e, 0);
  put16(e, 1);  // data_reference_index
  put16(e, 0);
  put16(e, 0);
  for (int i = 0; i < 3; ++i) put32(e, 0);
  put16(e, o.width);
  put16(e, o.height);
  put32(e, 0x00480000);
  put32(e, 0x00480000);
  put32(e, 0);
  put16(e, 1);  // frame_count
  for (int i = 0; i < 32; ++i) put8(e, 0);
  put16(e, 0x0018);
  put16(e, 0xFFFF);
  return make_box(o.codec, e);
}

inline Bytes tkhd(std::uint32_t track_id, std::uint64_t duration, std::uint16_t width, std::uint16_t height) {
  Bytes body;
  put32(body, 0);
  put32(body, 0);
  put32(body, track_id);
  put32(body, 0);
  put32(body, static_cast<std::uint32_t>(duration));
  put32(body, 0);
  put32(body, 0);
  put16(body, 0);
  put16(body, 0);
  put16(body, 0);
  put16(body, 0);
  append(body, matrix());
  put32(body, std::uint32_t{width} << 16);
  put32(body, std::uint32_t{height} << 16);
  return make_full_box("tkhd", 0, 3, body);
}

/// Audio track with an empty sample table; exists to exercise track selection.
inline Bytes audio_trak() {
  Bytes stbl_body;
  Bytes stsd;
  put32(stsd, 0);
  append(stbl_body, make_full_box("stsd", 0, 0, stsd));
  Bytes empty_count;
  put32(empty_count, 0);
  append(stbl_body, make_full_box("stts", 0, 0, empty_count));
  append(stbl_body, make_full_box("stsc", 0, 0, empty_count));
  Bytes stsz;
  put32(stsz, 0);
  put32(stsz, 0);
  append(stbl_body, make_full_box("stsz", 0, 0, stsz));
  append(stbl_body, make_full_box("stco", 0, 0, empty_count));
  Bytes smhd;
  put32(smhd, 0);
  Bytes minf = make_box("minf", concat({make_full_box("smhd", 0, 0, smhd), dinf(), make_box("stbl", stbl_body)}));
  Mp4Options audio;
  audio.timescale = 48000;
  Bytes mdia = make_box("mdia", concat({mdhd(audio, 0), hdlr("soun", "audio"), minf}));
  return make_box("trak", concat({tkhd(2, 0, 0, 0), mdia}));
}

}  // namespace detail

/// Serializes the samples of one video track into a complete mp4 file.
inline Bytes write_mp4(const std::vector<Bytes>& samples, const Mp4Options& o = {}) {
  const std::size_t n = samples.size();

  // chunk layout
  std::vector<std::uint32_t> per_chunk;
  if (o.chunk_pattern.empty()) {
    if (n > 0) per_chunk.push_back(static_cast<std::uint32_t>(n));
  } else {
    std::size_t left = n, k = 0;
    while (left > 0) {
      auto take = static_cast<std::uint32_t>(std::min<std::size_t>(o.chunk_pattern[k++ % o.chunk_pattern.size()], left));
      if (take == 0) continue;
      per_chunk.push_back(take);
      left -= take;
    }
  }

  Bytes ftyp_body;
  put_type(ftyp_body, "isom");
  put32(ftyp_body, 0x200);
  put_type(ftyp_body, "isom");
  put_type(ftyp_body, "mp41");
  const Bytes ftyp = make_box("ftyp", ftyp_body);

  Bytes mdat_payload;
  for (const auto& s : samples) append(mdat_payload, s);
  const Bytes mdat = make_box("mdat", mdat_payload, o.largesize_mdat);
  const std::uint64_t data_start = ftyp.size() + (o.largesize_mdat ? 16 : 8);

  std::vector<std::uint64_t> chunk_offsets;
  {
    std::uint64_t off = data_start;
    std::size_t s = 0;
    for (auto count : per_chunk) {
      chunk_offsets.push_back(off);
      for (std::uint32_t k = 0; k < count; ++k) off += samples[s++].size();
    }
  }

  const std::uint64_t duration = std::uint64_t{o.sample_delta} * n;

  Bytes stsd_body;
  put32(stsd_body, 1);
  append(stsd_body, detail::visual_sample_entry(o));

  Bytes stts_body;
  if (n > 0) {
    put32(stts_body, 1);
    put32(stts_body, static_cast<std::uint32_t>(n));
    put32(stts_body, o.sample_delta);
  } else {
    put32(stts_body, 0);
  }

  Bytes stsc_body;
  {
    std::vector<std::pair<std::uint32_t, std::uint32_t>> runs;
    for (std::size_t c = 0; c < per_chunk.size(); ++c) {
      if (runs.empty() || runs.back().second != per_chunk[c]) runs.emplace_back(static_cast<std::uint32_t>(c + 1), per_chunk[c]);
    }
    put32(stsc_body, static_cast<std::uint32_t>(runs.size()));
    for (auto [first, count] : runs) {
      put32(stsc_body, first);
      put32(stsc_body, count);
      put32(stsc_body, 1);
    }
  }

  Bytes stsz_body;
  {
    bool uniform = n > 0 && !o.force_per_entry_sizes && !samples[0].empty();
    for (const auto& s : samples) uniform = uniform && s.size() == samples[0].size();
    if (uniform) {
      put32(stsz_body, static_cast<std::uint32_t>(samples[0].size()));
      put32(stsz_body, static_cast<std::uint32_t>(n));
    } else {
      put32(stsz_body, 0);
      put32(stsz_body, static_cast<std::uint32_t>(n));
      for (const auto& s : samples) put32(stsz_body, static_cast<std::uint32_t>(s.size()));
    }
  }

  Bytes offsets_box;
  {
    Bytes body;
    put32(body, static_cast<std::uint32_t>(chunk_offsets.size()));
    for (auto off : chunk_offsets) {
      if (o.use_co64) {
        put64(body, off);
      } else {
        put32(body, static_cast<std::uint32_t>(off));
      }
    }
    offsets_box = make_full_box(o.use_co64 ? "co64" : "stco", 0, 0, body);
  }

  const Bytes stbl = make_box("stbl", concat({make_full_box("stsd", 0, 0, stsd_body), make_full_box("stts", 0, 0, stts_body),
                                              make_full_box("stsc", 0, 0, stsc_body), make_full_box("stsz", 0, 0, stsz_body),
                                              offsets_box}));
  Bytes vmhd_body;
  put16(vmhd_body, 0);
  for (int i = 0; i < 3; ++i) put16(vmhd_body, 0);
  const Bytes minf = make_box("minf", concat({make_full_box("vmhd", 0, 1, vmhd_body), detail::dinf(), stbl}));
  const Bytes mdia = make_box("mdia", concat({detail::mdhd(o, duration), detail::hdlr("vide", "video"), minf}));
  const Bytes video_trak = make_box("trak", concat({detail::tkhd(1, duration, o.width, o.height), mdia}));

  Bytes mvhd_body;
  put32(mvhd_body, 0);
  put32(mvhd_body, 0);
  put32(mvhd_body, o.timescale);
  put32(mvhd_body, static_cast<std::uint32_t>(duration));
  put32(mvhd_body, 0x00010000);
  put16(mvhd_body, 0x0100);
  put16(mvhd_body, 0);
  put32(mvhd_body, 0);
  put32(mvhd_body, 0);
  append(mvhd_body, detail::matrix());
  for (int i = 0; i < 6; ++i) put32(mvhd_body, 0);
  put32(mvhd_body, 3);
  const Bytes mvhd = make_full_box("mvhd", 0, 0, mvhd_body);

  Bytes moov_body = mvhd;
  if (o.audio_track_first) append(moov_body, detail::audio_trak());
  append(moov_body, video_trak);
  const Bytes moov = make_box("moov", moov_body);

  return concat({ftyp, mdat, moov});
}

}  // namespace dexkit::mux
