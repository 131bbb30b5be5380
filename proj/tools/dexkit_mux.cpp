// dexkit-mux: a small lossless frame muxer usable as the external encoder and
// decoder for dexkit conversion.
//
//   encode --list FILE --fps N --output OUT.mp4 [--codec zdlt|raw] [--drop N]
//   decode --input IN.mp4 --output-dir DIR
//
// Codec "zdlt": every frame is decoded to RGB8; sample 0 holds the deflated
// frame and sample i the deflated XOR against frame i-1. Codec "raw" stores
// the input files verbatim. --drop omits the last N frames (for fault
// injection).

#include <png.h>
#include <zlib.h>

#include <CLI11.hpp>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "dexkit/error.hpp"
#include "dexkit/mp4_index.hpp"
#include "mp4_writer.hpp"

namespace fs = std::filesystem;
using dexkit::ErrorCode;
using dexkit::mux::Bytes;

namespace {

struct Image {
  std::uint32_t width = 0;
  std::uint32_t height = 0;
  Bytes rgb;
};

Bytes read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw dexkit::Error(ErrorCode::Io, "cannot read " + p.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

Image read_ppm(const Bytes& data, const fs::path& p) {
  std::size_t pos = 2;
  auto next_int = [&]() {
    while (pos < data.size() && (std::isspace(data[pos]) || data[pos] == '#')) {
      if (data[pos] == '#') {
        while (pos < data.size() && data[pos] != '\n') ++pos;
      } else {
        ++pos;
      }
    }
    std::uint32_t v = 0;
    if (pos >= data.size() || !std::isdigit(data[pos])) throw dexkit::Error(ErrorCode::BadBundle, p.string() + ": bad PPM header");
    while (pos < data.size() && std::isdigit(data[pos])) v = v * 10 + (data[pos++] - '0');
    return v;
  };
  Image img;
  img.width = next_int();
  img.height = next_int();
  if (next_int() != 255) throw dexkit::Error(ErrorCode::BadBundle, p.string() + ": only 8-bit PPM is supported");
  ++pos;
  const std::size_t need = std::size_t{img.width} * img.height * 3;
  if (data[1] != '6' || data.size() - pos < need) throw dexkit::Error(ErrorCode::BadBundle, p.string() + ": truncated or non-P6 PPM");
  img.rgb.assign(data.begin() + static_cast<std::ptrdiff_t>(pos), data.begin() + static_cast<std::ptrdiff_t>(pos + need));
  return img;
}

Image read_image(const fs::path& p) {
  const Bytes data = read_file(p);
  if (data.size() >= 2 && data[0] == 'P' && data[1] == '6') return read_ppm(data, p);
  png_image png{};
  png.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&png, data.data(), data.size())) {
    throw dexkit::Error(ErrorCode::BadBundle, p.string() + ": " + png.message);
  }
  png.format = PNG_FORMAT_RGB;
  Image img{png.width, png.height, Bytes(PNG_IMAGE_SIZE(png))};
  if (!png_image_finish_read(&png, nullptr, img.rgb.data(), 0, nullptr)) {
    png_image_free(&png);
    throw dexkit::Error(ErrorCode::BadBundle, p.string() + ": " + png.message);
  }
  return img;
}

void write_png(const fs::path& p, const Image& img) {
  png_image png{};
  png.version = PNG_IMAGE_VERSION;
  png.width = img.width;
  png.height = img.height;
  png.format = PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&png, p.string().c_str(), 0, img.rgb.data(), 0, nullptr)) {
    throw dexkit::Error(ErrorCode::Io, p.string() + ": " + png.message);
  }
}

Bytes deflate(const Bytes& in) {
  uLongf len = compressBound(static_cast<uLong>(in.size()));
  Bytes out(len);
  if (compress2(out.data(), &len, in.data(), static_cast<uLong>(in.size()), Z_BEST_COMPRESSION) != Z_OK) {
    throw dexkit::Error(ErrorCode::EncoderFailed, "zlib compression failed");
  }
  out.resize(len);
  return out;
}

Bytes inflate(const Bytes& in, std::size_t expected) {
  Bytes out(expected);
  uLongf len = static_cast<uLongf>(expected);
  if (uncompress(out.data(), &len, in.data(), static_cast<uLong>(in.size())) != Z_OK || len != expected) {
    throw dexkit::Error(ErrorCode::DecodeMismatch, "corrupt zdlt sample");
  }
  return out;
}

std::vector<fs::path> read_list(const fs::path& list) {
  std::ifstream in(list);
  if (!in) throw dexkit::Error(ErrorCode::Io, "cannot read " + list.string());
  std::vector<fs::path> out;
  for (std::string line; std::getline(in, line);) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) out.emplace_back(line);
  }
  return out;
}

void encode(const fs::path& list, std::uint32_t fps, const fs::path& output, const std::string& codec, std::size_t drop) {
  auto frames = read_list(list);
  frames.resize(frames.size() - std::min(drop, frames.size()));

  dexkit::mux::Mp4Options opts;
  opts.timescale = fps;
  opts.sample_delta = 1;
  opts.codec = codec;
  std::vector<Bytes> samples;
  if (codec == "raw ") {
    for (const auto& f : frames) samples.push_back(read_file(f));
  } else {
    Bytes prev;
    for (std::size_t i = 0; i < frames.size(); ++i) {
      Image img = read_image(frames[i]);
      if (i == 0) {
        opts.width = static_cast<std::uint16_t>(img.width);
        opts.height = static_cast<std::uint16_t>(img.height);
        if (img.width > 0xFFFF || img.height > 0xFFFF) throw dexkit::Error(ErrorCode::EncoderFailed, "frame too large");
      } else if (img.width != opts.width || img.height != opts.height) {
        throw dexkit::Error(ErrorCode::EncoderFailed, frames[i].string() + ": frame size differs from frame 0");
      }
      Bytes delta = img.rgb;
      if (i > 0) {
        for (std::size_t b = 0; b < delta.size(); ++b) delta[b] ^= prev[b];
      }
      samples.push_back(deflate(delta));
      prev = std::move(img.rgb);
    }
  }
  const Bytes file = dexkit::mux::write_mp4(samples, opts);
  std::ofstream out(output, std::ios::binary | std::ios::trunc);
  out.write(reinterpret_cast<const char*>(file.data()), static_cast<std::streamsize>(file.size()));
  if (!out) throw dexkit::Error(ErrorCode::Io, "cannot write " + output.string());
}

struct SampleEntry {
  std::string codec;
  std::uint32_t width = 0;
  std::uint32_t height = 0;
};

SampleEntry sample_entry(const dexkit::mp4::ByteSource& src, const dexkit::mp4::BoxTree& tree) {
  const auto* mdia = tree.video_trak().find("mdia");
  const auto* minf = mdia ? mdia->find("minf") : nullptr;
  const auto* stbl = minf ? minf->find("stbl") : nullptr;
  const auto* stsd = stbl ? stbl->find("stsd") : nullptr;
  if (!stsd) throw dexkit::Error(ErrorCode::MissingSampleTable, "no stsd box");
  auto c = dexkit::mp4::detail::payload(src, *stsd);
  c.skip(8, "stsd");  // version/flags, entry count
  c.skip(4, "stsd entry");
  SampleEntry e;
  for (int i = 0; i < 4; ++i) e.codec += static_cast<char>(c.u8("stsd entry"));
  c.skip(24, "stsd entry");
  e.width = (std::uint32_t{c.u8("width")} << 8) | c.u8("width");
  e.height = (std::uint32_t{c.u8("height")} << 8) | c.u8("height");
  return e;
}

void decode(const fs::path& input, const fs::path& out_dir) {
  dexkit::mp4::FileSource src(input);
  const auto tree = dexkit::mp4::parse_boxes(src);
  const auto table = dexkit::mp4::build_frame_table(dexkit::mp4::read_sample_tables(src, tree));
  dexkit::mp4::detail::check_in_file(table, src.size());
  const auto entry = sample_entry(src, tree);
  fs::create_directories(out_dir);

  Bytes prev;
  for (std::size_t i = 0; i < table.entries.size(); ++i) {
    const auto& f = table.entries[i];
    Bytes sample(f.byte_len);
    src.read(f.byte_offset, sample);
    char name[32];
    std::snprintf(name, sizeof name, "%06zu", i);
    if (entry.codec == "raw ") {
      std::ofstream out(out_dir / (std::string(name) + ".png"), std::ios::binary);
      out.write(reinterpret_cast<const char*>(sample.data()), static_cast<std::streamsize>(sample.size()));
      continue;
    }
    if (entry.codec != "zdlt") throw dexkit::Error(ErrorCode::DecodeMismatch, "unsupported codec '" + entry.codec + "'");
    Bytes rgb = inflate(sample, std::size_t{entry.width} * entry.height * 3);
    if (i > 0) {
      for (std::size_t b = 0; b < rgb.size(); ++b) rgb[b] ^= prev[b];
    }
    write_png(out_dir / (std::string(name) + ".png"), {entry.width, entry.height, rgb});
    prev = std::move(rgb);
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"dexkit-mux: lossless frame muxer for dexkit conversion"};
  app.require_subcommand(1);

  std::string list, output, codec = "zdlt";
  std::uint32_t fps = 30;
  std::size_t drop = 0;
  auto* enc = app.add_subcommand("encode", "pack numbered frames into an mp4");
  enc->add_option("--list", list, "text file of frame paths in order")->required();
  enc->add_option("--fps", fps, "frame rate (mdhd timescale)")->check(CLI::Range(1u, 1000000u));
  enc->add_option("--output", output, "mp4 to write")->required();
  enc->add_option("--codec", codec, "zdlt or raw")->check(CLI::IsMember({"zdlt", "raw"}));
  enc->add_option("--drop", drop, "omit the last N frames");

  std::string input, out_dir;
  auto* dec = app.add_subcommand("decode", "unpack an mp4 written by encode into PNG frames");
  dec->add_option("--input", input, "mp4 to read")->required();
  dec->add_option("--output-dir", out_dir, "directory for decoded frames")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  try {
    if (*enc) encode(list, fps, output, codec == "raw" ? "raw " : codec, drop);
    if (*dec) decode(input, out_dir);
  } catch (const dexkit::Error& e) {
    std::cerr << "dexkit-mux: " << e.what() << '\n';
    return static_cast<int>(dexkit::exit_code_for(e.code()));
  } catch (const std::exception& e) {
    std::cerr << "dexkit-mux: " << e.what() << '\n';
    return 3;
  }
  return 0;
}
