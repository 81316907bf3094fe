#pragma once

// A dataset directory on disk and the materialised windows derived from it.
//
// Layout:
//   dataset.cfg               data.fps, data.speech_rate (key = value)
//   gestures.csv              gesture records
//   pairs.csv                 pair annotations (optional)
//   keypoints/<speaker>.csv   one recording per speaker
//   speech/<speaker>.gspf     speech features for the same recording

#include "gesturerep/pose_data.hpp"

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace gesturerep {

struct Corpus {
  int fps = 25;
  double speech_rate = 10.0;  // speech feature frames per second
  std::vector<GestureRecord> records;
  std::vector<PairAnnotation> pairs;
  std::map<std::string, KeypointSequence> keypoints;
  std::map<std::string, SpeechFeatures> speech;
};

Corpus load_corpus(const std::filesystem::path& dir);
void save_corpus(const std::filesystem::path& dir, const Corpus& corpus);

struct BankOptions {
  SamplingOptions sampling;
  double speech_window_seconds = 2.0;
  double speech_margin_seconds = 0.5;
};

// Every sampled window, materialised once. Index i refers to the same window
// in raw, normalized, speech and record_of.
struct WindowBank {
  std::vector<SkeletonWindow> raw;
  std::vector<SkeletonWindow> normalized;
  std::vector<SpeechFeatureWindow> speech;
  std::vector<std::size_t> record_of;
  // Gesture ids with at least one window, in record order, and their windows.
  std::vector<std::string> gesture_ids;
  std::vector<std::vector<std::size_t>> windows_of_gesture;
  std::size_t skipped_records = 0;
  std::size_t skipped_windows = 0;

  std::size_t size() const { return raw.size(); }
};

// Records outside their recording and windows with an undetected or
// degenerate frame-0 shoulder pair are skipped with a warning.
WindowBank build_window_bank(const Corpus& corpus, const BankOptions& options = {});

}  // namespace gesturerep
