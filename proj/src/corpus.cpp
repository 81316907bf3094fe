#include "gesturerep/corpus.hpp"

#include "gesturerep/errors.hpp"
#include "gesturerep/log.hpp"
#include "text_io.hpp"

#include <set>

namespace gesturerep {

namespace fs = std::filesystem;

Corpus load_corpus(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw IoError("dataset directory not found: " + dir.string());
  Corpus c;
  const auto cfg_path = dir / "dataset.cfg";
  if (fs::exists(cfg_path)) {
    for (const auto& [key, value] : textio::parse_key_values(textio::read_file(cfg_path), cfg_path.string())) {
      if (key == "data.fps") {
        if (!textio::parse_number(value, c.fps) || c.fps <= 0) throw ParseError(cfg_path.string() + ": bad data.fps");
      } else if (key == "data.speech_rate") {
        if (!textio::parse_number(value, c.speech_rate) || !(c.speech_rate > 0.0)) {
          throw ParseError(cfg_path.string() + ": bad data.speech_rate");
        }
      } else {
        throw ParseError(cfg_path.string() + ": unknown key " + key);
      }
    }
  }
  c.records = load_gesture_records(dir / "gestures.csv");
  if (fs::exists(dir / "pairs.csv")) c.pairs = load_pair_annotations(dir / "pairs.csv", c.records);

  std::set<std::string> speakers;
  for (const auto& r : c.records) speakers.insert(r.speaker_id);
  for (const auto& spk : speakers) {
    c.keypoints.emplace(spk, load_keypoints(dir / "keypoints" / (spk + ".csv"), c.fps));
    const auto speech_path = dir / "speech" / (spk + ".gspf");
    if (fs::exists(speech_path)) c.speech.emplace(spk, load_speech_features(speech_path));
  }
  return c;
}

void save_corpus(const fs::path& dir, const Corpus& corpus) {
  fs::create_directories(dir);
  textio::write_file_atomic(dir / "dataset.cfg", "data.fps = " + std::to_string(corpus.fps) +
                                                      "\ndata.speech_rate = " +
                                                      textio::format_number(corpus.speech_rate) + "\n");
  save_gesture_records(dir / "gestures.csv", corpus.records);
  save_pair_annotations(dir / "pairs.csv", corpus.pairs);
  for (const auto& [spk, seq] : corpus.keypoints) save_keypoints(dir / "keypoints" / (spk + ".csv"), seq);
  for (const auto& [spk, feats] : corpus.speech) save_speech_features(dir / "speech" / (spk + ".gspf"), feats);
}

WindowBank build_window_bank(const Corpus& corpus, const BankOptions& options) {
  SamplingOptions sampling = options.sampling;
  sampling.fps = corpus.fps;
  std::vector<std::int64_t> totals;
  totals.reserve(corpus.records.size());
  for (const auto& r : corpus.records) {
    const auto it = corpus.keypoints.find(r.speaker_id);
    if (it == corpus.keypoints.end()) throw IntegrityError("no keypoint recording for speaker " + r.speaker_id);
    totals.push_back(static_cast<std::int64_t>(it->second.frames));
  }
  const auto sampled = sample_windows(corpus.records, totals, sampling);
  const auto w = window_frames(corpus.fps, sampling.window_seconds);

  WindowBank bank;
  bank.skipped_records = sampled.skipped_records;
  if (sampled.skipped_records > 0) {
    warn(std::to_string(sampled.skipped_records) + " gesture record(s) lie outside their recording and were skipped");
  }
  std::map<std::size_t, std::size_t> gesture_slot;
  for (const auto& idx : sampled.windows) {
    const auto& rec = corpus.records[idx.record];
    const auto& seq = corpus.keypoints.at(rec.speaker_id);
    auto raw = materialize_window(seq, idx.start_frame, w, rec.gesture_id);
    SkeletonWindow norm;
    try {
      norm = normalize_window(raw);
    } catch (const DegeneratePoseError&) {
      ++bank.skipped_windows;
      continue;
    }
    const auto sp = corpus.speech.find(rec.speaker_id);
    if (sp == corpus.speech.end()) throw IntegrityError("no speech features for speaker " + rec.speaker_id);
    const double seconds = static_cast<double>(seq.frames) / corpus.fps;
    const auto interval = pair_speech_window(window_interval(idx.start_frame, w, corpus.fps), seconds,
                                             options.speech_margin_seconds);
    bank.speech.push_back(slice_speech_window(sp->second, corpus.speech_rate, interval,
                                              options.speech_window_seconds, rec.gesture_id));
    bank.raw.push_back(std::move(raw));
    bank.normalized.push_back(std::move(norm));
    bank.record_of.push_back(idx.record);
    auto [it, inserted] = gesture_slot.emplace(idx.record, bank.gesture_ids.size());
    if (inserted) {
      bank.gesture_ids.push_back(rec.gesture_id);
      bank.windows_of_gesture.emplace_back();
    }
    bank.windows_of_gesture[it->second].push_back(bank.raw.size() - 1);
  }
  if (bank.skipped_windows > 0) {
    warn(std::to_string(bank.skipped_windows) + " window(s) with undetected or coincident shoulders were skipped");
  }
  return bank;
}

}  // namespace gesturerep
