#pragma once

// Synthetic dialogue corpus with planted structure.
//
// Every gesture carries five latent form attributes (handedness, shape,
// movement, rotation, position). Within a dialogue each referent has a
// canonical attribute tuple; each attribute of a gesture keeps the canonical
// value unless it is redrawn. Canonical values come from the conventional
// half of each alphabet and redraws from the idiosyncratic half, so two
// same-referent gestures share a feature exactly when neither redrew it.
// Canonical tuples partly follow a global
// per-referent prototype, so referents stay recognisable across dialogues.
// Speakers add a persistent style (hand placement, amplitude, tempo) and
// dialogues a smaller shared style. Speech features carry a noisy referent
// code, strongest in one layer.

#include "gesturerep/corpus.hpp"

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace gesturerep {

inline constexpr std::array<std::size_t, kFormFeatureCount> kSynthAlphabet = {3, 4, 4, 3, 4};

struct SynthConfig {
  std::size_t n_dialogues = 8;
  std::size_t speakers_per_dialogue = 2;
  std::size_t referents = 16;
  std::size_t gestures_per_speaker = 32;
  int fps = 25;

  // Master noise multiplier; 0 makes every gesture a pure function of
  // (speaker, dialogue, referent).
  double noise_scale = 1.0;
  // Probability (times noise_scale) that a gesture redraws an attribute.
  double attribute_redraw = 0.3;
  // Probability that a dialogue's canonical attribute follows the global
  // referent prototype rather than a fresh draw.
  double prototype_share = 0.5;
  double keypoint_noise_px = 1.5;
  // Per-gesture random body lean and wrist drift, shoulder units.
  double gesture_nuisance = 0.08;
  double speaker_style = 0.35;
  double dialogue_style = 0.12;
  double shoulder_px = 100.0;

  std::size_t stroke_frames_min = 26;
  std::size_t stroke_frames_max = 36;
  std::size_t gap_frames_min = 14;
  std::size_t gap_frames_max = 24;

  std::size_t speech_layers = 4;
  std::size_t speech_dims = 16;
  double speech_rate = 10.0;
  std::size_t speech_signal_layer = 2;
  double speech_signal = 1.5;
  double speech_leak = 0.25;  // signal fraction in the other layers
  double speech_noise = 1.0;

  std::uint64_t seed = 0;

  void validate() const;
};

struct GestureLatent {
  std::string gesture_id;
  std::array<std::size_t, kFormFeatureCount> attributes{};
};

struct SynthCorpus {
  Corpus corpus;
  std::vector<GestureLatent> latents;  // aligned with corpus.records
};

SynthCorpus generate(const SynthConfig& cfg);
// Writes the corpus in the dataset-directory layout.
void write_synth_corpus(const std::filesystem::path& dir, const SynthCorpus& synth);

struct GeometryReport {
  std::size_t same_referent_pairs = 0;
  std::size_t different_referent_pairs = 0;
  double mean_same = 0.0;
  double mean_different = 0.0;
  double u_statistic = 0.0;
  double p_value = 1.0;
  bool passed = false;
};

// Mann-Whitney comparison of normalized stroke-centred keypoint distances for
// same-referent versus different-referent gesture pairs within dialogues.
// Passes when same-referent distances are smaller with p < alpha.
GeometryReport planted_geometry_check(const SynthCorpus& synth, double alpha = 0.01);
GeometryReport planted_geometry_check(const SynthConfig& cfg, double alpha = 0.01);

}  // namespace gesturerep
