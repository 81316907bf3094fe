#include "gesturerep/errors.hpp"
#include "gesturerep/pose_data.hpp"
#include "support.hpp"

#include <doctest.h>

#include <algorithm>
#include <bit>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include <unistd.h>

using namespace gesturerep;
namespace fs = std::filesystem;
using doctest::Approx;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    static int counter = 0;
    path = fs::temp_directory_path() / ("gesturerep_pose_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream(p) << text;
}

std::string keypoint_row(int frame, std::size_t joints, double x, double y, double c) {
  std::ostringstream os;
  os << frame;
  for (std::size_t j = 0; j < joints; ++j) os << ',' << x << ',' << y << ',' << c;
  return os.str() + "\n";
}

GestureRecord record(std::string id, std::string spk, std::string dlg, std::string ref, std::int64_t s, std::int64_t e) {
  return {std::move(id), std::move(spk), std::move(dlg), std::move(ref), s, e};
}

// Every aligned start whose overlap with the stroke exceeds min_overlap of
// the window, counted frame by frame.
std::vector<std::int64_t> brute_starts(std::int64_t s, std::int64_t e, std::int64_t w, std::int64_t offset,
                                       std::int64_t total, double min_overlap) {
  std::vector<std::int64_t> out;
  for (std::int64_t start = 0; start + w <= total; start += offset) {
    std::int64_t overlap = 0;
    for (std::int64_t f = start; f < start + w; ++f) overlap += (f >= s && f <= e);
    if (static_cast<double>(overlap) / static_cast<double>(w) > min_overlap) out.push_back(start);
  }
  return out;
}

std::vector<std::int64_t> starts_of(const WindowSampling& ws) {
  std::vector<std::int64_t> out;
  for (const auto& w : ws.windows) out.push_back(w.start_frame);
  return out;
}

}  // namespace

TEST_CASE("keypoint loading") {
  TempDir dir;
  const auto file = dir.path / "kp.csv";
  std::string two_frames;
  for (int f = 0; f < 2; ++f) {
    std::ostringstream os;
    os << f << ",100,200,0.9";
    for (std::size_t j = 1; j < kJointCount; ++j) os << ",1,2,0.5";
    two_frames += os.str() + "\n";
  }
  write_text(file, two_frames);
  const auto seq = load_keypoints(file, 25);
  REQUIRE(seq.frames == 2);
  for (std::size_t f = 0; f < 2; ++f) {
    CHECK(seq.at(f, 0, 0) == 100.0);
    CHECK(seq.at(f, 0, 1) == 200.0);
    CHECK(seq.at(f, 0, 2) == 0.9);
  }

  write_text(file, keypoint_row(0, kJointCount, 1, 2, 0.5) + keypoint_row(1, kJointCount - 1, 1, 2, 0.5));
  try {
    load_keypoints(file, 25);
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find(":2") != std::string::npos);
  }

  write_text(file, keypoint_row(0, kJointCount, 1, 2, 1.3));
  CHECK(load_keypoints(file, 25).at(0, 5, 2) == 1.0);

  CHECK_THROWS_AS(load_keypoints(dir.path / "missing.csv", 25), IoError);
}

TEST_CASE("keypoint save and load round trip") {
  TempDir dir;
  std::mt19937_64 rng(1);
  KeypointSequence seq;
  seq.frames = 4;
  seq.data.resize(seq.frames * kJointCount * kChannels);
  std::uniform_real_distribution<double> u(0, 500), c(0, 1);
  for (std::size_t i = 0; i < seq.data.size(); ++i) seq.data[i] = i % 3 == 2 ? c(rng) : u(rng);
  save_keypoints(dir.path / "k.csv", seq);
  const auto back = load_keypoints(dir.path / "k.csv", 25);
  CHECK(back.data == seq.data);
}

TEST_CASE("sample_windows matches the frame-counting oracle") {
  SamplingOptions opt;
  opt.fps = 10;
  const auto ws = sample_windows({record("g", "s", "d", "r", 10, 20)}, 40, opt);
  CHECK(starts_of(ws) == std::vector<std::int64_t>{6, 8, 10, 12, 14});
  CHECK(starts_of(ws) == brute_starts(10, 20, 10, 2, 40, 0.5));

  const auto whole = sample_windows({record("g", "s", "d", "r", 0, 39)}, 40, opt);
  CHECK(starts_of(whole) == std::vector<std::int64_t>{0, 2, 4, 6, 8, 10, 12, 14, 16, 18, 20, 22, 24, 26, 28, 30});

  std::mt19937_64 rng(2);
  for (int rep = 0; rep < 300; ++rep) {
    std::uniform_int_distribution<std::int64_t> total_d(20, 1000);
    const std::int64_t total = total_d(rng);
    std::uniform_int_distribution<std::int64_t> s_d(0, total - 1);
    std::int64_t s = s_d(rng), e = s_d(rng);
    if (s > e) std::swap(s, e);
    SamplingOptions o;
    o.fps = 25;
    o.offset_frames = 1 + rep % 4;
    o.min_overlap = rep % 2 ? 0.5 : 0.3;
    const auto got = sample_windows({record("g", "s", "d", "r", s, e)}, total, o);
    CHECK(starts_of(got) == brute_starts(s, e, window_frames(o.fps, o.window_seconds), o.offset_frames, total, o.min_overlap));
  }
}

TEST_CASE("sample_windows ignores record order and skips records outside the recording") {
  std::vector<GestureRecord> recs{record("a", "s", "d", "r", 10, 40), record("b", "s", "d", "r", 60, 90),
                                  record("c", "s", "d", "r", 95, 130), record("bad", "s", "d", "r", 190, 230)};
  const auto ws = sample_windows(recs, 200);
  CHECK(ws.skipped_records == 1);
  auto key = [&](const std::vector<GestureRecord>& rs, const WindowSampling& w) {
    std::vector<std::pair<std::string, std::int64_t>> k;
    for (const auto& x : w.windows) k.emplace_back(rs[x.record].gesture_id, x.start_frame);
    std::sort(k.begin(), k.end());
    return k;
  };
  auto reversed = recs;
  std::reverse(reversed.begin(), reversed.end());
  CHECK(key(recs, ws) == key(reversed, sample_windows(reversed, 200)));
}

TEST_CASE("speech window around a gesture") {
  auto a = pair_speech_window({3.0, 4.0}, 60.0);
  CHECK(a.start == Approx(2.5));
  CHECK(a.end == Approx(4.5));
  auto b = pair_speech_window({0.2, 1.2}, 60.0);
  CHECK(b.start == 0.0);
  CHECK(b.end == Approx(1.7));
  auto c = pair_speech_window({10.0, 11.0}, 11.2);
  CHECK(c.start == Approx(9.5));
  CHECK(c.end == Approx(11.2));
}

TEST_CASE("speech slices have a fixed length") {
  SpeechFeatures f;
  f.layers = 2;
  f.frames = 30;
  f.dims = 3;
  for (std::size_t i = 0; i < f.layers * f.frames * f.dims; ++i) f.data.push_back(static_cast<float>(i));
  const auto inside = slice_speech_window(f, 10.0, {1.0, 3.0}, 2.0, "g");
  CHECK(inside.frames == 20);
  CHECK(inside.data[0] == f.data[10 * 3]);
  const auto clamped = slice_speech_window(f, 10.0, {2.5, 3.0}, 2.0, "g");
  CHECK(clamped.frames == 20);
  // frames past the end repeat the last frame
  const std::size_t last = (0 * f.frames + 29) * f.dims;
  CHECK(clamped.data[(19) * 3] == f.data[last]);
}

TEST_CASE("normalize_window") {
  SkeletonWindow w(2, 25, "g");
  for (std::size_t t = 0; t < 2; ++t) {
    for (std::size_t j = 0; j < kJointCount; ++j) {
      w.at(0, t, j) = 1.0;
      w.at(1, t, j) = 1.0;
      w.at(2, t, j) = 0.25 + 0.01 * static_cast<double>(j);
    }
    w.at(0, t, kLeftShoulder) = 0.0;
    w.at(1, t, kLeftShoulder) = 0.0;
    w.at(0, t, kRightShoulder) = 2.0;
    w.at(1, t, kRightShoulder) = 0.0;
  }
  const auto n = normalize_window(w);
  CHECK(n.at(0, 0, kNose) == Approx(0.0));
  CHECK(n.at(1, 0, kNose) == Approx(0.5));
  for (std::size_t t = 0; t < 2; ++t) {
    for (std::size_t j = 0; j < kJointCount; ++j) CHECK(n.at(2, t, j) == w.at(2, t, j));
  }

  std::mt19937_64 rng(3);
  for (int rep = 0; rep < 50; ++rep) {
    const auto r = oracle::random_window(5, rng, 300.0);
    const auto once = normalize_window(r);
    const auto twice = normalize_window(once);
    for (std::size_t i = 0; i < once.data.size(); ++i) CHECK(twice.data[i] == Approx(once.data[i]).epsilon(1e-12));
    CHECK(oracle::joint_distance(once, 0, kLeftShoulder, kRightShoulder) == Approx(1.0));
  }

  w.at(0, 0, kRightShoulder) = 0.0;
  CHECK_THROWS_AS(normalize_window(w), DegeneratePoseError);
}

TEST_CASE("gesture records and pair annotations") {
  TempDir dir;
  write_text(dir.path / "g.csv",
             "gesture_id,speaker_id,dialogue_id,referent_id,start_frame,end_frame\n"
             "g1,s1,d1,r1,0,10\ng2,s2,d1,r1,20,30\ng3,s1,d1,r2,40,50\n");
  const auto recs = load_gesture_records(dir.path / "g.csv");
  REQUIRE(recs.size() == 3);
  CHECK(recs[1].stroke_end_frame == 30);

  const std::string header = "pair_id,gesture_a,gesture_b,handedness,shape,movement,rotation,position\n";
  write_text(dir.path / "p.csv", header + "p1,g1,g2,1,1,1,1,1\np2,g3,g2,0,1,0,1,0\n");
  const auto pairs = load_pair_annotations(dir.path / "p.csv", recs);
  REQUIRE(pairs.size() == 2);
  CHECK(pairs[0].shared_count() == 5);
  CHECK(pairs[1].shared_count() == 2);
  CHECK(pairs[1].has(FormFeature::Shape));
  CHECK_FALSE(pairs[1].has(FormFeature::Position));

  write_text(dir.path / "p.csv", header + "p1,g1,g2,1,2,1,1,1\n");
  CHECK_THROWS_AS(load_pair_annotations(dir.path / "p.csv", recs), ParseError);
  write_text(dir.path / "p.csv", header + "p1,g1,g9,1,0,1,1,1\n");
  CHECK_THROWS_AS(load_pair_annotations(dir.path / "p.csv", recs), IntegrityError);
  write_text(dir.path / "p.csv", header + "p1,g1,g3,1,0,1,1,1\n");
  CHECK_THROWS_AS(load_pair_annotations(dir.path / "p.csv", recs), IntegrityError);
}

TEST_CASE("shared count is the popcount") {
  for (unsigned mask = 0; mask < 32; ++mask) {
    PairAnnotation p;
    for (std::size_t f = 0; f < kFormFeatureCount; ++f) p.features[f] = (mask >> f) & 1u;
    CHECK(p.shared_count() == std::popcount(mask));
    CHECK(p.shared_count() >= 0);
    CHECK(p.shared_count() <= 5);
  }
}

TEST_CASE("speech feature file") {
  TempDir dir;
  SpeechFeatures f;
  f.layers = 3;
  f.frames = 4;
  f.dims = 2;
  for (std::size_t i = 0; i < 24; ++i) f.data.push_back(0.5f * static_cast<float>(i) - 3.0f);
  const auto path = dir.path / "s.gspf";
  save_speech_features(path, f);
  CHECK(fs::file_size(path) == 16 + 4 * 24);
  const auto back = load_speech_features(path);
  CHECK(back.layers == 3);
  CHECK(back.frames == 4);
  CHECK(back.dims == 2);
  CHECK(back.data == f.data);

  std::string bytes;
  {
    std::ifstream in(path, std::ios::binary);
    bytes.assign(std::istreambuf_iterator<char>(in), {});
  }
  CHECK(bytes.substr(0, 4) == "GSPF");
  std::ofstream(path, std::ios::binary) << bytes.substr(0, bytes.size() - 3);
  CHECK_THROWS_AS(load_speech_features(path), FormatError);
  std::string wrong = bytes;
  wrong[0] = 'X';
  std::ofstream(path, std::ios::binary) << wrong;
  CHECK_THROWS_AS(load_speech_features(path), FormatError);
}

TEST_CASE("skeleton graph adjacency") {
  const auto g = make_skeleton_graph();
  REQUIRE(g.normalized_adjacency.size() == kJointCount * kJointCount);
  for (std::size_t i = 0; i < kJointCount; ++i) {
    double row = 0;
    for (std::size_t j = 0; j < kJointCount; ++j) {
      const double a = g.normalized_adjacency[i * kJointCount + j];
      CHECK(a == Approx(g.normalized_adjacency[j * kJointCount + i]));
      row += a;
    }
    CHECK(std::isfinite(row));
    CHECK(g.normalized_adjacency[i * kJointCount + i] > 0.0);
  }
  // every hand base hangs off its wrist
  auto connected = [&](std::size_t a, std::size_t b) { return g.normalized_adjacency[a * kJointCount + b] != 0.0; };
  for (std::size_t k = 0; k < kHandJoints; k += 2) {
    CHECK(connected(kLeftWrist, kLeftHandBegin + k));
    CHECK(connected(kRightWrist, kRightHandBegin + k));
  }
}
