#include "gesturerep/pose_data.hpp"

#include "gesturerep/errors.hpp"
#include "text_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace gesturerep {

namespace {

constexpr char kSpeechMagic[4] = {'G', 'S', 'P', 'F'};

std::string where(const std::filesystem::path& path, std::size_t line) {
  return path.string() + ":" + std::to_string(line);
}

std::int64_t parse_int(std::string_view field, const std::filesystem::path& path, std::size_t line) {
  std::int64_t v = 0;
  if (!textio::parse_number(field, v)) {
    throw ParseError(where(path, line) + ": expected integer, got '" + std::string(field) + "'");
  }
  return v;
}

void check_header(const std::vector<std::string>& got, const std::vector<std::string>& want,
                  const std::filesystem::path& path) {
  if (got != want) {
    std::string expected;
    for (const auto& w : want) expected += (expected.empty() ? "" : ",") + w;
    throw ParseError(where(path, 1) + ": expected header " + expected);
  }
}

void write_u32(std::ostream& os, std::uint32_t v) {
  const unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                              static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t read_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

}  // namespace

SkeletonWindow::SkeletonWindow(std::size_t frames_, int fps_, std::string gesture_id_)
    : frames(frames_), fps(fps_), gesture_id(std::move(gesture_id_)),
      data(kChannels * frames_ * kJointCount, 0.0) {}

int PairAnnotation::shared_count() const {
  return static_cast<int>(std::count(features.begin(), features.end(), true));
}

// ---- graph --------------------------------------------------------------------

std::vector<double> normalize_adjacency(std::size_t joint_count,
                                        const std::vector<std::pair<std::size_t, std::size_t>>& edges) {
  std::vector<double> a(joint_count * joint_count, 0.0);
  for (std::size_t i = 0; i < joint_count; ++i) a[i * joint_count + i] = 1.0;
  for (auto [u, v] : edges) {
    a[u * joint_count + v] = 1.0;
    a[v * joint_count + u] = 1.0;
  }
  std::vector<double> inv_sqrt_deg(joint_count);
  for (std::size_t i = 0; i < joint_count; ++i) {
    double d = 0.0;
    for (std::size_t k = 0; k < joint_count; ++k) d += a[i * joint_count + k];
    inv_sqrt_deg[i] = 1.0 / std::sqrt(d);
  }
  for (std::size_t i = 0; i < joint_count; ++i)
    for (std::size_t k = 0; k < joint_count; ++k)
      a[i * joint_count + k] *= inv_sqrt_deg[i] * inv_sqrt_deg[k];
  return a;
}

SkeletonGraph make_skeleton_graph() {
  SkeletonGraph g;
  g.spatial_edges = {{kNose, kLeftShoulder}, {kNose, kRightShoulder}, {kLeftShoulder, kRightShoulder},
                     {kLeftShoulder, 3},     {3, kLeftWrist},         {kRightShoulder, 4},
                     {4, kRightWrist}};
  for (auto [begin, wrist] : {std::pair{kLeftHandBegin, kLeftWrist}, std::pair{kRightHandBegin, kRightWrist}}) {
    for (std::size_t finger = 0; finger < 5; ++finger) {
      const std::size_t base = begin + 2 * finger;
      g.spatial_edges.emplace_back(wrist, base);
      g.spatial_edges.emplace_back(base, base + 1);
    }
  }
  g.normalized_adjacency = normalize_adjacency(g.joint_count, g.spatial_edges);
  return g;
}

// ---- keypoints ------------------------------------------------------------------

KeypointSequence load_keypoints(const std::filesystem::path& path, int fps) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open keypoint file " + path.string());
  KeypointSequence seq;
  seq.fps = fps;
  std::string line;
  std::size_t line_no = 0;
  constexpr std::size_t kFields = 1 + kJointCount * kChannels;
  while (std::getline(in, line)) {
    ++line_no;
    if (textio::is_blank(line)) continue;
    const auto fields = textio::split_csv(line);
    if (fields.size() != kFields) {
      throw ParseError(where(path, line_no) + ": expected " + std::to_string(kJointCount) +
                       " joints (" + std::to_string(kFields) + " fields), got " +
                       std::to_string(fields.size()) + " fields");
    }
    parse_int(fields[0], path, line_no);
    for (std::size_t k = 1; k < kFields; ++k) {
      double v = 0.0;
      if (!textio::parse_number(fields[k], v) || !std::isfinite(v)) {
        throw ParseError(where(path, line_no) + ": bad value '" + fields[k] + "'");
      }
      if ((k - 1) % kChannels == 2) v = std::clamp(v, 0.0, 1.0);
      seq.data.push_back(v);
    }
    ++seq.frames;
  }
  return seq;
}

void save_keypoints(const std::filesystem::path& path, const KeypointSequence& seq) {
  std::string out;
  for (std::size_t f = 0; f < seq.frames; ++f) {
    out += std::to_string(f);
    for (std::size_t k = 0; k < kJointCount * kChannels; ++k) {
      out += ',';
      out += textio::format_number(seq.data[f * kJointCount * kChannels + k]);
    }
    out += '\n';
  }
  textio::write_file_atomic(path, out);
}

// ---- gesture records ----------------------------------------------------------------

std::vector<GestureRecord> load_gesture_records(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open gesture records " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw ParseError(where(path, 1) + ": empty file");
  check_header(textio::split_csv(line),
               {"gesture_id", "speaker_id", "dialogue_id", "referent_id", "start_frame", "end_frame"}, path);
  std::vector<GestureRecord> records;
  std::set<std::string> ids;
  std::map<std::string, std::string> speaker_dialogue;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (textio::is_blank(line)) continue;
    const auto f = textio::split_csv(line);
    if (f.size() != 6) {
      throw ParseError(where(path, line_no) + ": expected 6 fields, got " + std::to_string(f.size()));
    }
    GestureRecord r{f[0], f[1], f[2], f[3], parse_int(f[4], path, line_no), parse_int(f[5], path, line_no)};
    if (r.stroke_end_frame < r.stroke_start_frame) {
      throw ParseError(where(path, line_no) + ": end_frame before start_frame");
    }
    if (!ids.insert(r.gesture_id).second) {
      throw IntegrityError(where(path, line_no) + ": duplicate gesture id " + r.gesture_id);
    }
    auto [it, inserted] = speaker_dialogue.emplace(r.speaker_id, r.dialogue_id);
    if (!inserted && it->second != r.dialogue_id) {
      throw IntegrityError(where(path, line_no) + ": speaker " + r.speaker_id +
                           " appears in dialogues " + it->second + " and " + r.dialogue_id);
    }
    records.push_back(std::move(r));
  }
  return records;
}

void save_gesture_records(const std::filesystem::path& path, const std::vector<GestureRecord>& records) {
  std::string out = "gesture_id,speaker_id,dialogue_id,referent_id,start_frame,end_frame\n";
  for (const auto& r : records) {
    out += r.gesture_id + ',' + r.speaker_id + ',' + r.dialogue_id + ',' + r.referent_id + ',' +
           std::to_string(r.stroke_start_frame) + ',' + std::to_string(r.stroke_end_frame) + '\n';
  }
  textio::write_file_atomic(path, out);
}

// ---- pair annotations ----------------------------------------------------------------

std::vector<PairAnnotation> load_pair_annotations(const std::filesystem::path& path,
                                                  const std::vector<GestureRecord>& records) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open pair annotations " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw ParseError(where(path, 1) + ": empty file");
  check_header(textio::split_csv(line), {"pair_id", "gesture_a", "gesture_b", "handedness", "shape",
                                         "movement", "rotation", "position"},
               path);
  std::unordered_map<std::string, const GestureRecord*> by_id;
  for (const auto& r : records) by_id.emplace(r.gesture_id, &r);

  std::vector<PairAnnotation> pairs;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (textio::is_blank(line)) continue;
    const auto f = textio::split_csv(line);
    if (f.size() != 8) {
      throw ParseError(where(path, line_no) + ": expected 8 fields, got " + std::to_string(f.size()));
    }
    PairAnnotation p{f[0], f[1], f[2], {}};
    for (std::size_t k = 0; k < kFormFeatureCount; ++k) {
      const auto& v = f[3 + k];
      if (v != "0" && v != "1") {
        throw ParseError(where(path, line_no) + ": " + kFormFeatureNames[k] + " flag must be 0 or 1, got '" +
                         v + "'");
      }
      p.features[k] = v == "1";
    }
    auto a = by_id.find(p.gesture_a);
    auto b = by_id.find(p.gesture_b);
    if (a == by_id.end() || b == by_id.end()) {
      throw IntegrityError(where(path, line_no) + ": unknown gesture id " +
                           (a == by_id.end() ? p.gesture_a : p.gesture_b));
    }
    if (a->second->speaker_id == b->second->speaker_id ||
        a->second->dialogue_id != b->second->dialogue_id) {
      throw IntegrityError(where(path, line_no) +
                           ": annotated gestures must come from different speakers of one dialogue");
    }
    pairs.push_back(std::move(p));
  }
  return pairs;
}

void save_pair_annotations(const std::filesystem::path& path, const std::vector<PairAnnotation>& pairs) {
  std::string out = "pair_id,gesture_a,gesture_b,handedness,shape,movement,rotation,position\n";
  for (const auto& p : pairs) {
    out += p.pair_id + ',' + p.gesture_a + ',' + p.gesture_b;
    for (bool flag : p.features) out += flag ? ",1" : ",0";
    out += '\n';
  }
  textio::write_file_atomic(path, out);
}

// ---- speech features -------------------------------------------------------------------

SpeechFeatures load_speech_features(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open speech features " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() < 16 || std::memcmp(bytes.data(), kSpeechMagic, 4) != 0) {
    throw FormatError(path.string() + ": not a GSPF speech feature file");
  }
  SpeechFeatures f;
  f.layers = read_u32(bytes.data() + 4);
  f.frames = read_u32(bytes.data() + 8);
  f.dims = read_u32(bytes.data() + 12);
  const std::size_t count = f.layers * f.frames * f.dims;
  if (f.layers == 0) throw FormatError(path.string() + ": zero layers");
  if (bytes.size() != 16 + 4 * count) {
    throw FormatError(path.string() + ": size " + std::to_string(bytes.size()) + " does not match header (" +
                      std::to_string(16 + 4 * count) + " expected)");
  }
  f.data.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    const std::uint32_t bits = read_u32(bytes.data() + 16 + 4 * i);
    std::memcpy(&f.data[i], &bits, 4);
    if (!std::isfinite(f.data[i])) throw FormatError(path.string() + ": non-finite feature value");
  }
  return f;
}

void save_speech_features(const std::filesystem::path& path, const SpeechFeatures& features) {
  std::ostringstream os(std::ios::binary);
  os.write(kSpeechMagic, 4);
  write_u32(os, static_cast<std::uint32_t>(features.layers));
  write_u32(os, static_cast<std::uint32_t>(features.frames));
  write_u32(os, static_cast<std::uint32_t>(features.dims));
  for (float v : features.data) {
    std::uint32_t bits = 0;
    std::memcpy(&bits, &v, 4);
    write_u32(os, bits);
  }
  textio::write_file_atomic(path, os.str());
}

// ---- windows --------------------------------------------------------------------------------

std::int64_t window_frames(int fps, double window_seconds) {
  return static_cast<std::int64_t>(std::llround(fps * window_seconds));
}

WindowSampling sample_windows(const std::vector<GestureRecord>& records, std::int64_t total_frames,
                              const SamplingOptions& options) {
  return sample_windows(records, std::vector<std::int64_t>(records.size(), total_frames), options);
}

WindowSampling sample_windows(const std::vector<GestureRecord>& records,
                              const std::vector<std::int64_t>& total_frames_per_record,
                              const SamplingOptions& options) {
  if (options.offset_frames < 1) throw ParameterError("sample_windows: offset_frames must be >= 1");
  if (!(options.min_overlap > 0.0 && options.min_overlap <= 1.0)) {
    throw ParameterError("sample_windows: min_overlap must lie in (0, 1]");
  }
  if (total_frames_per_record.size() != records.size()) {
    throw ParameterError("sample_windows: one frame count per record required");
  }
  const std::int64_t w = window_frames(options.fps, options.window_seconds);
  if (w < 1) throw ParameterError("sample_windows: window shorter than one frame");

  WindowSampling out;
  for (std::size_t r = 0; r < records.size(); ++r) {
    const auto& rec = records[r];
    const std::int64_t total = total_frames_per_record[r];
    if (rec.stroke_start_frame < 0 || rec.stroke_end_frame >= total) {
      ++out.skipped_records;
      continue;
    }
    // Only starts within w of the stroke can overlap it.
    const std::int64_t first = std::max<std::int64_t>(0, rec.stroke_start_frame - w + 1);
    const std::int64_t aligned = (first + options.offset_frames - 1) / options.offset_frames * options.offset_frames;
    for (std::int64_t s = aligned; s + w <= total && s <= rec.stroke_end_frame; s += options.offset_frames) {
      const std::int64_t lo = std::max(s, rec.stroke_start_frame);
      const std::int64_t hi = std::min(s + w - 1, rec.stroke_end_frame);
      const std::int64_t overlap = hi - lo + 1;
      if (overlap > 0 && static_cast<double>(overlap) / static_cast<double>(w) > options.min_overlap) {
        out.windows.push_back({r, s});
      }
    }
  }
  return out;
}

SkeletonWindow materialize_window(const KeypointSequence& seq, std::int64_t start_frame,
                                  std::int64_t frames, const std::string& gesture_id) {
  if (start_frame < 0 || frames < 1 || static_cast<std::size_t>(start_frame + frames) > seq.frames) {
    throw ParameterError("materialize_window: window [" + std::to_string(start_frame) + ", " +
                         std::to_string(start_frame + frames) + ") outside recording of " +
                         std::to_string(seq.frames) + " frames");
  }
  SkeletonWindow w(static_cast<std::size_t>(frames), seq.fps, gesture_id);
  for (std::size_t t = 0; t < w.frames; ++t)
    for (std::size_t j = 0; j < kJointCount; ++j)
      for (std::size_t c = 0; c < kChannels; ++c)
        w.at(c, t, j) = seq.at(static_cast<std::size_t>(start_frame) + t, j, c);
  return w;
}

TimeInterval window_interval(std::int64_t start_frame, std::int64_t frames, int fps) {
  return {static_cast<double>(start_frame) / fps, static_cast<double>(start_frame + frames) / fps};
}

TimeInterval pair_speech_window(const TimeInterval& gesture, double recording_seconds, double margin_seconds) {
  return {std::max(0.0, gesture.start - margin_seconds),
          std::min(recording_seconds, gesture.end + margin_seconds)};
}

SpeechFeatureWindow slice_speech_window(const SpeechFeatures& features, double frame_rate,
                                        const TimeInterval& interval, double duration_seconds,
                                        const std::string& gesture_id) {
  if (features.frames == 0) throw ParameterError("slice_speech_window: empty feature sequence");
  SpeechFeatureWindow w;
  w.layers = features.layers;
  w.dims = features.dims;
  w.frames = static_cast<std::size_t>(std::llround(duration_seconds * frame_rate));
  w.gesture_id = gesture_id;
  w.data.resize(w.layers * w.frames * w.dims);
  // Anchor on whichever side was not clamped so the content stays aligned
  // with the gesture.
  double start = interval.start;
  if (interval.end - interval.start < duration_seconds - 1e-9 && interval.start <= 0.0) {
    start = interval.end - duration_seconds;
  }
  const auto first = static_cast<std::int64_t>(std::llround(start * frame_rate));
  const auto last = static_cast<std::int64_t>(features.frames) - 1;
  for (std::size_t l = 0; l < w.layers; ++l)
    for (std::size_t t = 0; t < w.frames; ++t) {
      const auto src = std::clamp<std::int64_t>(first + static_cast<std::int64_t>(t), 0, last);
      for (std::size_t d = 0; d < w.dims; ++d) {
        w.data[(l * w.frames + t) * w.dims + d] =
            features.data[(l * features.frames + static_cast<std::size_t>(src)) * features.dims + d];
      }
    }
  return w;
}

void validate_window(const SkeletonWindow& window) {
  if (window.data.size() != kChannels * window.frames * kJointCount) {
    throw ParameterError("window: data size does not match (3, frames, 27)");
  }
  for (std::size_t i = 0; i < window.data.size(); ++i) {
    if (!std::isfinite(window.data[i])) throw ParameterError("window: non-finite value");
  }
  for (std::size_t t = 0; t < window.frames; ++t)
    for (std::size_t j = 0; j < kJointCount; ++j) {
      const double c = window.at(2, t, j);
      if (c < 0.0 || c > 1.0) throw ParameterError("window: confidence outside [0, 1]");
    }
}

SkeletonWindow normalize_window(const SkeletonWindow& window) {
  if (window.frames == 0) throw DegeneratePoseError("normalize_window: empty window");
  if (window.at(2, 0, kLeftShoulder) <= 0.0 || window.at(2, 0, kRightShoulder) <= 0.0) {
    throw DegeneratePoseError("normalize_window: shoulder not detected in frame 0");
  }
  const double lx = window.at(0, 0, kLeftShoulder), ly = window.at(1, 0, kLeftShoulder);
  const double rx = window.at(0, 0, kRightShoulder), ry = window.at(1, 0, kRightShoulder);
  const double dist = std::hypot(lx - rx, ly - ry);
  if (!(dist > 1e-12)) throw DegeneratePoseError("normalize_window: coincident shoulders in frame 0");
  const double cx = 0.5 * (lx + rx), cy = 0.5 * (ly + ry);
  SkeletonWindow out = window;
  for (std::size_t t = 0; t < window.frames; ++t)
    for (std::size_t j = 0; j < kJointCount; ++j) {
      out.at(0, t, j) = (window.at(0, t, j) - cx) / dist;
      out.at(1, t, j) = (window.at(1, t, j) - cy) / dist;
    }
  return out;
}

}  // namespace gesturerep
