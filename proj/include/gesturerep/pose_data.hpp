#pragma once

// Skeleton windows, gesture metadata, pair annotations and speech features.
//
// Joint ordering (27 joints): body 0-6, left hand 7-16, right hand 17-26.
//   0 nose, 1 left shoulder, 2 right shoulder, 3 left elbow, 4 right elbow,
//   5 left wrist, 6 right wrist.
//   Each hand: base/tip pairs for thumb, index, middle, ring, pinky, with
//   every base attached to that side's wrist.

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <unordered_map>
#include <vector>

namespace gesturerep {

inline constexpr std::size_t kJointCount = 27;
inline constexpr std::size_t kChannels = 3;  // x, y, confidence
inline constexpr std::size_t kNose = 0;
inline constexpr std::size_t kLeftShoulder = 1;
inline constexpr std::size_t kRightShoulder = 2;
inline constexpr std::size_t kLeftWrist = 5;
inline constexpr std::size_t kRightWrist = 6;
inline constexpr std::size_t kLeftHandBegin = 7;
inline constexpr std::size_t kRightHandBegin = 17;
inline constexpr std::size_t kHandJoints = 10;

// Per-frame keypoints of one recording: frames x 27 x 3.
struct KeypointSequence {
  std::size_t frames = 0;
  int fps = 25;
  std::vector<double> data;

  double& at(std::size_t frame, std::size_t joint, std::size_t channel) {
    return data[(frame * kJointCount + joint) * kChannels + channel];
  }
  double at(std::size_t frame, std::size_t joint, std::size_t channel) const {
    return data[(frame * kJointCount + joint) * kChannels + channel];
  }
};

// One gesture window laid out as (channel, frame, joint).
struct SkeletonWindow {
  std::size_t frames = 0;
  int fps = 25;
  std::string gesture_id;
  std::vector<double> data;

  SkeletonWindow() = default;
  SkeletonWindow(std::size_t frames, int fps, std::string gesture_id = {});

  double& at(std::size_t channel, std::size_t frame, std::size_t joint) {
    return data[(channel * frames + frame) * kJointCount + joint];
  }
  double at(std::size_t channel, std::size_t frame, std::size_t joint) const {
    return data[(channel * frames + frame) * kJointCount + joint];
  }
};

struct SkeletonGraph {
  std::size_t joint_count = kJointCount;
  std::vector<std::pair<std::size_t, std::size_t>> spatial_edges;
  // Row-major joint_count x joint_count, D^-1/2 (A + I) D^-1/2.
  std::vector<double> normalized_adjacency;
};

// The fixed 27-joint body/hand graph.
SkeletonGraph make_skeleton_graph();
std::vector<double> normalize_adjacency(std::size_t joint_count,
                                        const std::vector<std::pair<std::size_t, std::size_t>>& edges);

struct GestureRecord {
  std::string gesture_id;
  std::string speaker_id;
  std::string dialogue_id;
  std::string referent_id;
  std::int64_t stroke_start_frame = 0;
  std::int64_t stroke_end_frame = 0;  // inclusive
};

enum class FormFeature : std::size_t { Handedness = 0, Shape, Movement, Rotation, Position };
inline constexpr std::size_t kFormFeatureCount = 5;
inline constexpr std::array<const char*, kFormFeatureCount> kFormFeatureNames = {
    "handedness", "shape", "movement", "rotation", "position"};

struct PairAnnotation {
  std::string pair_id;
  std::string gesture_a;
  std::string gesture_b;
  std::array<bool, kFormFeatureCount> features{};

  int shared_count() const;
  bool has(FormFeature f) const { return features[static_cast<std::size_t>(f)]; }
};

// Precomputed per-layer speech features: (layers, frames, dims) row-major.
struct SpeechFeatures {
  std::size_t layers = 0;
  std::size_t frames = 0;
  std::size_t dims = 0;
  std::vector<float> data;
};

struct SpeechFeatureWindow {
  std::size_t layers = 0;
  std::size_t frames = 0;
  std::size_t dims = 0;
  std::string gesture_id;
  std::vector<double> data;
};

struct TimeInterval {
  double start = 0.0;
  double end = 0.0;
};

// Lazily materialised window: which record, and the first frame.
struct WindowIndex {
  std::size_t record = 0;
  std::int64_t start_frame = 0;
};

struct WindowSampling {
  std::vector<WindowIndex> windows;
  std::size_t skipped_records = 0;
};

struct SamplingOptions {
  int fps = 25;
  double window_seconds = 1.0;
  std::int64_t offset_frames = 2;
  double min_overlap = 0.5;
};

// ---- loaders ----------------------------------------------------------------

KeypointSequence load_keypoints(const std::filesystem::path& path, int fps);
void save_keypoints(const std::filesystem::path& path, const KeypointSequence& seq);

std::vector<GestureRecord> load_gesture_records(const std::filesystem::path& path);
void save_gesture_records(const std::filesystem::path& path, const std::vector<GestureRecord>& records);

// Enforces flags in {0,1}, known gesture ids, and that the two gestures come
// from different speakers of one dialogue.
std::vector<PairAnnotation> load_pair_annotations(const std::filesystem::path& path,
                                                  const std::vector<GestureRecord>& records);
void save_pair_annotations(const std::filesystem::path& path, const std::vector<PairAnnotation>& pairs);

SpeechFeatures load_speech_features(const std::filesystem::path& path);
void save_speech_features(const std::filesystem::path& path, const SpeechFeatures& features);

// ---- windows ----------------------------------------------------------------

std::int64_t window_frames(int fps, double window_seconds);

// Window starts on the grid {0, offset, 2*offset, ...} whose overlap with the
// stroke, divided by the window length, exceeds min_overlap. All records are
// assumed to share one recording of total_frames frames.
WindowSampling sample_windows(const std::vector<GestureRecord>& records, std::int64_t total_frames,
                              const SamplingOptions& options = {});

// Per-record variant: total frames looked up per record (one recording per speaker).
WindowSampling sample_windows(const std::vector<GestureRecord>& records,
                              const std::vector<std::int64_t>& total_frames_per_record,
                              const SamplingOptions& options = {});

SkeletonWindow materialize_window(const KeypointSequence& seq, std::int64_t start_frame,
                                  std::int64_t frames, const std::string& gesture_id);

TimeInterval window_interval(std::int64_t start_frame, std::int64_t frames, int fps);

// [start - 0.5 s, end + 0.5 s] clamped to [0, recording_seconds].
TimeInterval pair_speech_window(const TimeInterval& gesture, double recording_seconds,
                                double margin_seconds = 0.5);

// Slices `duration_seconds` worth of frames starting at interval.start.
// Frames outside the recording repeat the nearest edge frame so every window
// has the same length.
SpeechFeatureWindow slice_speech_window(const SpeechFeatures& features, double frame_rate,
                                        const TimeInterval& interval, double duration_seconds,
                                        const std::string& gesture_id);

// Translates frame-0 mid-shoulder to the origin and scales so the frame-0
// shoulder distance is 1. Confidence is untouched.
SkeletonWindow normalize_window(const SkeletonWindow& window);

void validate_window(const SkeletonWindow& window);

}  // namespace gesturerep
