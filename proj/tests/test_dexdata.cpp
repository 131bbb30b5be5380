#include <gtest/gtest.h>

#include <algorithm>
#include <set>

#include "dexkit/dexdata.hpp"
#include "support/canonical_oracle.hpp"
#include "support/fixtures.hpp"

using namespace dexkit;
using namespace dexkit::dexdata;
using fixtures::TempDir;

namespace {

std::string minimal_line(const std::string& state = "[0.0]", const std::string& prompt = "noop") {
  return R"({"images_1":{"type":"video","url":"e1.mp4","frame_idx":0},"state":)" + state + R"(,"prompt":")" + prompt +
         R"(","is_robot":true})";
}

ErrorCode parse_error(const std::string& line) {
  try {
    parse_frame_line(line);
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "expected an error for " << line;
  return ErrorCode::Usage;
}

}  // namespace

TEST(ParseFrameLine, SampleLine) {
  const EpisodeFrame f = parse_frame_line(fixtures::kSampleLine);
  ASSERT_EQ(f.views.size(), 3u);
  for (std::size_t k = 0; k < 3; ++k) {
    EXPECT_EQ(f.views[k].frame_idx, 21);
    EXPECT_EQ(f.views[k].url, "url" + std::to_string(k + 1));
  }
  EXPECT_EQ(f.state, (std::vector<double>{0.1, 0.2}));
  EXPECT_EQ(f.prompt, "open the door");
  EXPECT_TRUE(f.is_robot);
  EXPECT_TRUE(f.extras.empty());
}

TEST(ParseFrameLine, MinimalLine) {
  const EpisodeFrame f = parse_frame_line(minimal_line());
  EXPECT_EQ(f.views.size(), 1u);
  EXPECT_EQ(f.state_dim(), 1u);
  EXPECT_EQ(f.prompt, "noop");
}

TEST(ParseFrameLine, ErrorClasses) {
  EXPECT_EQ(parse_error("[1,2]"), ErrorCode::MalformedJson);
  EXPECT_EQ(parse_error("{not json"), ErrorCode::MalformedJson);
  EXPECT_EQ(parse_error(""), ErrorCode::MalformedJson);
  EXPECT_EQ(parse_error(R"({"state":[0.0],"prompt":"p","is_robot":true})"), ErrorCode::MissingField);
  EXPECT_EQ(parse_error(R"({"images_1":{"type":"video","url":"a.mp4","frame_idx":0},"prompt":"p","is_robot":true})"),
            ErrorCode::MissingField);
  EXPECT_EQ(parse_error(R"({"images_1":{"type":"video","url":"a.mp4","frame_idx":0},"state":[],"is_robot":true})"),
            ErrorCode::MissingField);
  EXPECT_EQ(parse_error(R"({"images_1":{"type":"video","url":"a.mp4","frame_idx":0},"state":[],"prompt":"p"})"),
            ErrorCode::MissingField);
  EXPECT_EQ(parse_error(R"({"images_1":{"type":"image","url":"a.mp4","frame_idx":0},"state":[],"prompt":"p","is_robot":true})"),
            ErrorCode::BadImageRef);
  EXPECT_EQ(parse_error(R"({"images_1":{"type":"video","url":"a.mp4","frame_idx":-1},"state":[],"prompt":"p","is_robot":true})"),
            ErrorCode::BadImageRef);
  EXPECT_EQ(parse_error(R"({"images_1":{"type":"video","url":"a.mp4","frame_idx":1.5},"state":[],"prompt":"p","is_robot":true})"),
            ErrorCode::BadImageRef);
  EXPECT_EQ(parse_error(R"({"images_2":{"type":"video","url":"a.mp4","frame_idx":0},"state":[],"prompt":"p","is_robot":true})"),
            ErrorCode::BadViewName);
  EXPECT_EQ(parse_error(R"({"images_01":{"type":"video","url":"a.mp4","frame_idx":0},"state":[],"prompt":"p","is_robot":true})"),
            ErrorCode::BadViewName);
  EXPECT_EQ(parse_error(R"({"images_1":{"type":"video","url":"a.mp4","frame_idx":0},"state":["x"],"prompt":"p","is_robot":true})"),
            ErrorCode::BadFieldType);
  EXPECT_EQ(parse_error(R"({"images_1":{"type":"video","url":"a.mp4","frame_idx":0},"state":[],"prompt":"p","is_robot":1})"),
            ErrorCode::BadFieldType);
}

TEST(ParseFrameLine, ViewsOrderedNumerically) {
  std::string line = "{";
  for (int k = 12; k >= 1; --k) {
    line += "\"images_" + std::to_string(k) + "\":{\"type\":\"video\",\"url\":\"v" + std::to_string(k) + ".mp4\",\"frame_idx\":" +
            std::to_string(k) + "},";
  }
  line += R"("state":[],"prompt":"","is_robot":false})";
  const auto f = parse_frame_line(line);
  ASSERT_EQ(f.views.size(), 12u);
  for (std::size_t k = 0; k < 12; ++k) EXPECT_EQ(f.views[k].frame_idx, static_cast<std::int64_t>(k + 1));
}

TEST(SerializeFrameLine, SampleLineCanonical) {
  const std::string out = serialize_frame_line(parse_frame_line(fixtures::kSampleLine));
  EXPECT_NE(out.find(R"("prompt":"open the door")"), std::string::npos);
  EXPECT_EQ(out,
            R"({"images_1":{"frame_idx":21,"type":"video","url":"url1"},"images_2":{"frame_idx":21,"type":"video","url":"url2"},)"
            R"("images_3":{"frame_idx":21,"type":"video","url":"url3"},"is_robot":true,"prompt":"open the door","state":[0.1,0.2]})");
  EXPECT_EQ(out.find('\n'), std::string::npos);
}

TEST(SerializeFrameLine, EmptyExtrasEmitsOnlySemanticKeys) {
  const auto j = nlohmann::json::parse(serialize_frame_line(parse_frame_line(fixtures::kSampleLine)));
  std::set<std::string> keys;
  for (auto it = j.begin(); it != j.end(); ++it) keys.insert(it.key());
  EXPECT_EQ(keys, (std::set<std::string>{"images_1", "images_2", "images_3", "is_robot", "prompt", "state"}));
}

TEST(SerializeFrameLine, ExtrasPreserved) {
  const std::string line = R"({"action":[1.5,-2.0],"images_1":{"type":"video","url":"a.mp4","frame_idx":3},)"
                           R"("meta":{"z":1,"a":[true,null]},"state":[],"prompt":"p","is_robot":false})";
  const auto f = parse_frame_line(line);
  ASSERT_TRUE(f.extras.contains("action"));
  ASSERT_TRUE(f.extras.contains("meta"));
  EXPECT_EQ(serialize_frame_line(f), oracle::canonical_text(line));
  EXPECT_EQ(parse_frame_line(serialize_frame_line(f)), f);
}

TEST(SerializeFrameLine, MatchesIndependentCanonicalizer) {
  fixtures::LineGenerator gen(7);
  for (int i = 0; i < 300; ++i) {
    const std::string line = gen.line();
    const EpisodeFrame f = parse_frame_line(line);
    ASSERT_EQ(serialize_frame_line(f), oracle::canonical_text(line)) << line;
  }
}

TEST(SerializeFrameLine, DoubleRoundTripProperty) {
  fixtures::LineGenerator gen(11);
  for (int i = 0; i < 300; ++i) {
    const EpisodeFrame once = parse_frame_line(gen.line());
    const EpisodeFrame twice = parse_frame_line(serialize_frame_line(once));
    ASSERT_EQ(twice, once);
    ASSERT_EQ(serialize_frame_line(twice), serialize_frame_line(once));
  }
}

TEST(SerializeFrameLine, EqualityMatchesCanonicalBytes) {
  auto a = parse_frame_line(minimal_line("[0.0]"));
  auto b = parse_frame_line(minimal_line("[-0.0]"));
  EXPECT_FALSE(a == b);
  EXPECT_NE(serialize_frame_line(a), serialize_frame_line(b));
  auto c = parse_frame_line(minimal_line("[0e0]"));
  EXPECT_TRUE(a == c);
  EXPECT_EQ(serialize_frame_line(a), serialize_frame_line(c));
}

TEST(FormatDouble, ShortestRoundTrip) {
  EXPECT_EQ(format_double(0.1), "0.1");
  EXPECT_EQ(format_double(1.0), "1.0");
  EXPECT_EQ(format_double(-0.0), "-0.0");
  EXPECT_EQ(format_double(1e21), "1e+21");
  EXPECT_EQ(format_double(0.00390625), "0.00390625");
  for (double v : {0.1, 1.0 / 3.0, 123456.789, 5e-324, 1.7976931348623157e308, 1e-7, 2.5e15}) {
    EXPECT_EQ(format_double(v), oracle::shortest_double(v)) << v;
    EXPECT_EQ(std::strtod(format_double(v).c_str(), nullptr), v);
  }
}

// ---------------------------------------------------------------------------

namespace {

std::string episode_text(std::initializer_list<std::string> lines) {
  std::string out;
  for (const auto& l : lines) out += l + "\n";
  return out;
}

std::string frame_line(int idx, const std::string& state = "[0.1,0.2]", const std::string& prompt = "open the door",
                       const std::string& url = "video/episode1.mp4") {
  return R"({"images_1":{"type":"video","url":")" + url + R"(","frame_idx":)" + std::to_string(idx) + R"(},"state":)" +
         state + R"(,"prompt":")" + prompt + R"(","is_robot":true})";
}

}  // namespace

TEST(ValidateEpisode, TwoConsistentLines) {
  TempDir dir;
  DatasetLayout layout{dir.path()};
  fixtures::write_text(layout.jsonl_dir() / "episode1.jsonl", episode_text({frame_line(0), frame_line(1)}));
  const auto v = validate_episode(layout.jsonl_dir() / "episode1.jsonl", layout);
  ASSERT_TRUE(v.ok()) << v.report.violations.size();
  EXPECT_EQ(v.meta->num_frames, 2u);
  EXPECT_EQ(v.meta->state_dim, 2u);
  EXPECT_EQ(v.meta->prompt, "open the door");
  EXPECT_EQ(v.meta->jsonl_path, "jsonl/episode1.jsonl");
  EXPECT_EQ(v.meta->video_paths, (std::vector<std::string>{"video/episode1.mp4"}));
  EXPECT_FALSE(v.meta->action_dim.has_value());
}

TEST(ValidateEpisode, EmptyFile) {
  TempDir dir;
  DatasetLayout layout{dir.path()};
  fixtures::write_text(layout.jsonl_dir() / "e.jsonl", "");
  const auto v = validate_episode(layout.jsonl_dir() / "e.jsonl", layout);
  ASSERT_FALSE(v.ok());
  ASSERT_EQ(v.report.violations.size(), 1u);
  EXPECT_EQ(v.report.violations[0].kind, ViolationKind::EmptyEpisode);
}

TEST(ValidateEpisode, InconsistentStateDimCitesLine) {
  TempDir dir;
  DatasetLayout layout{dir.path()};
  fixtures::write_text(layout.jsonl_dir() / "e.jsonl", episode_text({frame_line(0), frame_line(1, "[0.1,0.2,0.3]")}));
  const auto v = validate_episode(layout.jsonl_dir() / "e.jsonl", layout);
  ASSERT_FALSE(v.ok());
  ASSERT_EQ(v.report.violations.size(), 1u);
  EXPECT_EQ(v.report.violations[0].kind, ViolationKind::InconsistentStateDim);
  EXPECT_EQ(v.report.violations[0].line, 2u);
}

TEST(ValidateEpisode, AccumulatesEveryViolation) {
  TempDir dir;
  DatasetLayout layout{dir.path()};
  fixtures::write_text(layout.jsonl_dir() / "e.jsonl",
                       episode_text({frame_line(0), "garbage", frame_line(2, "[1.0]"), frame_line(3, "[0.1,0.2]", "other"),
                                     frame_line(4, "[0.1,0.2]", "open the door", "video/x.avi")}));
  const auto v = validate_episode(layout.jsonl_dir() / "e.jsonl", layout);
  ASSERT_FALSE(v.ok());
  std::vector<std::pair<std::size_t, ViolationKind>> got;
  for (const auto& x : v.report.violations) got.emplace_back(x.line, x.kind);
  const std::vector<std::pair<std::size_t, ViolationKind>> want = {
      {2, ViolationKind::MalformedJson},     {3, ViolationKind::InconsistentStateDim},
      {4, ViolationKind::InconsistentPrompt}, {5, ViolationKind::BadVideoExtension},
      {5, ViolationKind::InconsistentViews}};
  EXPECT_EQ(got, want);
}

TEST(ValidateEpisode, AbsolutePathIsWarningOnly) {
  TempDir dir;
  DatasetLayout layout{dir.path()};
  fixtures::write_text(layout.jsonl_dir() / "e.jsonl",
                       episode_text({frame_line(0, "[0.1,0.2]", "p", "/data/v.mp4")}));
  const auto v = validate_episode(layout.jsonl_dir() / "e.jsonl", layout);
  ASSERT_TRUE(v.ok());
  ASSERT_EQ(v.report.violations.size(), 1u);
  EXPECT_EQ(v.report.violations[0].kind, ViolationKind::AbsolutePath);
  EXPECT_EQ(v.report.violations[0].severity, Severity::Warning);
}

TEST(ValidateEpisode, ActionDimFromExtras) {
  TempDir dir;
  DatasetLayout layout{dir.path()};
  auto with_action = [](int i, const std::string& action) {
    auto l = frame_line(i);
    return l.substr(0, l.size() - 1) + R"(,"action":)" + action + "}";
  };
  fixtures::write_text(layout.jsonl_dir() / "a.jsonl", episode_text({with_action(0, "[1.0,2.0,3.0]"), with_action(1, "[0.0,0.0,0.0]")}));
  auto v = validate_episode(layout.jsonl_dir() / "a.jsonl", layout);
  ASSERT_TRUE(v.ok());
  EXPECT_EQ(v.meta->action_dim, 3u);

  fixtures::write_text(layout.jsonl_dir() / "b.jsonl", episode_text({with_action(0, "[1.0]"), frame_line(1)}));
  v = validate_episode(layout.jsonl_dir() / "b.jsonl", layout);
  ASSERT_FALSE(v.ok());
  EXPECT_EQ(v.report.violations[0].kind, ViolationKind::InconsistentActionDim);
}

TEST(ValidateEpisode, UnreadableFileIsFatal) {
  TempDir dir;
  DatasetLayout layout{dir.path()};
  try {
    validate_episode(layout.jsonl_dir() / "missing.jsonl", layout);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::Io);
  }
}

TEST(ValidateEpisode, GeneratedEpisodesNeverReportViolations) {
  TempDir dir;
  DatasetLayout layout{dir.path()};
  fixtures::LineGenerator gen(3);
  for (int e = 0; e < 20; ++e) {
    const EpisodeFrame proto = parse_frame_line(gen.line());
    std::vector<EpisodeFrame> frames;
    for (int i = 0; i < 5; ++i) {
      EpisodeFrame f = proto;
      for (auto& view : f.views) view.frame_idx = i;
      for (auto& x : f.state) x += i;
      frames.push_back(f);
    }
    const auto path = layout.jsonl_dir() / ("gen" + std::to_string(e) + ".jsonl");
    std::filesystem::create_directories(path.parent_path());
    write_episode_frames(path, frames);
    const auto v = validate_episode(path, layout);
    ASSERT_TRUE(v.ok());
    EXPECT_TRUE(v.report.violations.empty());
    EXPECT_EQ(read_episode_frames(path), frames);
  }
}

TEST(ScanDataset, DocumentedLayoutTwoEpisodes) {
  TempDir dir;
  DatasetLayout layout{dir.path()};
  fixtures::write_text(layout.jsonl_dir() / "episode2.jsonl", episode_text({frame_line(0)}));
  fixtures::write_text(layout.jsonl_dir() / "episode1.jsonl", episode_text({frame_line(0), frame_line(1)}));
  fixtures::write_text(layout.index_path(), "{}");
  const auto scan = scan_dataset(layout);
  ASSERT_EQ(scan.episodes.size(), 2u);
  EXPECT_EQ(scan.episodes[0].jsonl_path, "jsonl/episode1.jsonl");
  EXPECT_EQ(scan.episodes[1].jsonl_path, "jsonl/episode2.jsonl");
  EXPECT_TRUE(scan.report.violations.empty());
}

TEST(ScanDataset, EmptyJsonlDir) {
  TempDir dir;
  DatasetLayout layout{dir.path()};
  std::filesystem::create_directories(layout.jsonl_dir());
  EXPECT_TRUE(scan_dataset(layout).episodes.empty());
}

TEST(ScanDataset, MissingRootIsIo) {
  DatasetLayout layout{"/nonexistent/dexkit/root"};
  EXPECT_THROW(scan_dataset(layout), Error);
}

TEST(ScanDataset, CombinesReports) {
  TempDir dir;
  DatasetLayout layout{dir.path()};
  fixtures::write_text(layout.jsonl_dir() / "good.jsonl", episode_text({frame_line(0)}));
  fixtures::write_text(layout.jsonl_dir() / "bad.jsonl", "");
  const auto scan = scan_dataset(layout);
  ASSERT_EQ(scan.episodes.size(), 1u);
  ASSERT_EQ(scan.report.violations.size(), 1u);
  EXPECT_EQ(scan.report.violations[0].file, "jsonl/bad.jsonl");
}

TEST(ScanDataset, HundredEpisodesDeterministic) {
  TempDir dir;
  DatasetLayout layout{dir.path()};
  // written in reverse order so directory enumeration order differs from the result
  for (int e = 99; e >= 0; --e) {
    fixtures::write_text(layout.jsonl_dir() / ("ep" + std::to_string(e) + ".jsonl"), episode_text({frame_line(0), frame_line(1)}));
  }
  const auto a = scan_dataset(layout);
  const auto b = scan_dataset(layout);
  ASSERT_EQ(a.episodes.size(), 100u);
  EXPECT_TRUE(std::is_sorted(a.episodes.begin(), a.episodes.end(),
                             [](const auto& x, const auto& y) { return x.jsonl_path < y.jsonl_path; }));
  std::string sa, sb;
  for (const auto& m : a.episodes) sa += canonical_dump(to_json(m));
  for (const auto& m : b.episodes) sb += canonical_dump(to_json(m));
  EXPECT_EQ(sa, sb);
}

TEST(EpisodeMeta, JsonRoundTrip) {
  EpisodeMeta m{"jsonl/e.jsonl", {"video/a.mp4", "video/b.mp4"}, 5, 2, "open", 7};
  EXPECT_EQ(episode_meta_from_json(to_json(m)), m);
  m.action_dim.reset();
  EXPECT_EQ(episode_meta_from_json(to_json(m)), m);
}
