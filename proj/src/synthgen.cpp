#include "gesturerep/synthgen.hpp"

#include "gesturerep/augment.hpp"
#include "gesturerep/errors.hpp"
#include "gesturerep/stats.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <random>

namespace gesturerep {

namespace {

constexpr std::size_t kHandedness = 0, kShape = 1, kMovement = 2, kRotation = 3, kPosition = 4;
constexpr std::size_t kLeftOnly = 0, kRightOnly = 1;

struct Vec2 {
  double x = 0.0, y = 0.0;
};
Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
Vec2 operator*(double s, Vec2 a) { return {s * a.x, s * a.y}; }

Vec2 direction(double degrees) {
  const double r = degrees * std::numbers::pi / 180.0;
  return {std::sin(r), -std::cos(r)};  // 0 degrees points up in image coordinates
}

double gauss(Rng& rng, double sigma) { return sigma == 0.0 ? 0.0 : std::normal_distribution<double>(0.0, sigma)(rng); }
double uniform(Rng& rng, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }
std::size_t pick(Rng& rng, std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng); }

// The lower half of each alphabet holds the conventional forms canonical
// tuples draw from; a redrawn attribute takes an idiosyncratic form from the
// upper half, so it never matches another gesture's canonical value.
std::size_t conventional_count(std::size_t f) { return (kSynthAlphabet[f] + 1) / 2; }
std::size_t pick_conventional(Rng& rng, std::size_t f) { return pick(rng, conventional_count(f)); }
std::size_t pick_idiosyncratic(Rng& rng, std::size_t f) {
  return conventional_count(f) + pick(rng, kSynthAlphabet[f] - conventional_count(f));
}

// Wrist centre offsets (outward, down) relative to the same-side shoulder.
constexpr std::array<Vec2, 4> kPositions = {Vec2{0.10, 1.00}, Vec2{-0.25, 0.45}, Vec2{0.75, 0.55}, Vec2{0.15, -0.15}};
constexpr std::array<double, 3> kRotations = {-55.0, 0.0, 55.0};
constexpr std::array<double, 5> kFingerFan = {-65.0, -22.0, 0.0, 20.0, 40.0};
constexpr std::array<double, 5> kFingerLength = {0.15, 0.22, 0.24, 0.22, 0.18};

struct ShapeSpec {
  std::array<double, 5> extension;
  double spread;
};
constexpr std::array<ShapeSpec, 4> kShapes = {
    ShapeSpec{{1.0, 1.0, 1.0, 1.0, 1.0}, 0.5},     // flat
    ShapeSpec{{0.3, 0.25, 0.25, 0.25, 0.25}, 0.5},  // fist
    ShapeSpec{{0.3, 1.0, 0.25, 0.25, 0.25}, 0.5},   // point
    ShapeSpec{{1.0, 1.0, 1.0, 1.0, 1.0}, 1.6},      // spread
};

Vec2 movement_offset(std::size_t m, double u, double cycles) {
  const double tau = 2.0 * std::numbers::pi;
  switch (m) {
    case 0:
      return {std::sin(tau * cycles * u), 0.0};
    case 1:
      return {0.0, std::sin(tau * cycles * u)};
    case 2:
      return {0.8 * std::sin(tau * u), 0.8 * (1.0 - std::cos(tau * u))};
    default:
      return {0.35 * std::sin(tau * 3.0 * cycles * u), 0.35 * std::sin(tau * 3.0 * cycles * u)};
  }
}

struct Style {
  Vec2 offset;
  double amplitude = 1.0;
  double tempo = 1.0;
  double rotation = 0.0;
};

struct Body {
  Vec2 centre;  // mid-shoulder, pixels
  double scale = 100.0;
};

struct HandPose {
  Vec2 wrist;
  double angle = 180.0;
  std::size_t shape = 0;
};

struct GesturePlan {
  std::size_t record = 0;
  std::int64_t start = 0;
  std::int64_t end = 0;  // inclusive
  std::array<std::size_t, kFormFeatureCount> attr{};
  Vec2 drift;
  double amplitude = 1.0;
};

Vec2 shoulder(const Body& b, double side) { return b.centre + Vec2{side * 0.5 * b.scale, 0.0}; }

HandPose rest_pose(const Body& b, double side) {
  return {shoulder(b, side) + b.scale * Vec2{side * -0.05, 1.5}, 180.0 - side * 10.0, 0};
}

HandPose active_pose(const Body& b, double side, const GesturePlan& g, const Style& spk, const Style& dlg, double u) {
  const auto pos = kPositions[g.attr[kPosition]];
  const double amp = 0.3 * spk.amplitude * dlg.amplitude * g.amplitude;
  const double cycles = 1.5 * spk.tempo * dlg.tempo;
  auto mv = movement_offset(g.attr[kMovement], u, cycles);
  Vec2 local = Vec2{side * pos.x, pos.y} + spk.offset + dlg.offset + g.drift + amp * Vec2{side * mv.x, mv.y};
  HandPose h;
  h.wrist = shoulder(b, side) + b.scale * local;
  h.angle = side * (kRotations[g.attr[kRotation]] + spk.rotation + dlg.rotation);
  h.shape = g.attr[kShape];
  return h;
}

HandPose blend(const HandPose& a, const HandPose& b, double w) {
  HandPose h;
  h.wrist = (1.0 - w) * a.wrist + w * b.wrist;
  h.angle = (1.0 - w) * a.angle + w * b.angle;
  h.shape = w < 0.5 ? a.shape : b.shape;
  return h;
}

void write_hand(KeypointSequence& seq, std::size_t frame, const Body& b, double side, std::size_t hand_begin,
                std::size_t wrist_joint, std::size_t elbow_joint, const HandPose& h) {
  const auto sh = shoulder(b, side);
  const Vec2 elbow = sh + 0.5 * (h.wrist - sh) + Vec2{side * 0.28 * b.scale, 0.1 * b.scale};
  seq.at(frame, elbow_joint, 0) = elbow.x;
  seq.at(frame, elbow_joint, 1) = elbow.y;
  seq.at(frame, wrist_joint, 0) = h.wrist.x;
  seq.at(frame, wrist_joint, 1) = h.wrist.y;
  const auto& shape = kShapes[h.shape];
  for (std::size_t f = 0; f < 5; ++f) {
    const double a = h.angle + side * kFingerFan[f] * shape.spread;
    const Vec2 base = h.wrist + 0.12 * b.scale * direction(a);
    const Vec2 tip = base + kFingerLength[f] * shape.extension[f] * b.scale * direction(a);
    seq.at(frame, hand_begin + 2 * f, 0) = base.x;
    seq.at(frame, hand_begin + 2 * f, 1) = base.y;
    seq.at(frame, hand_begin + 2 * f + 1, 0) = tip.x;
    seq.at(frame, hand_begin + 2 * f + 1, 1) = tip.y;
  }
}

double smoothstep(double x) {
  x = std::clamp(x, 0.0, 1.0);
  return x * x * (3.0 - 2.0 * x);
}

Style draw_style(Rng& rng, double scale) {
  Style s;
  s.offset = {gauss(rng, scale), gauss(rng, scale)};
  s.amplitude = std::max(0.3, 1.0 + gauss(rng, scale));
  s.tempo = std::max(0.5, 1.0 + 0.5 * gauss(rng, scale));
  s.rotation = gauss(rng, 30.0 * scale);
  return s;
}

std::string two_digits(std::size_t v, char prefix) {
  char buf[24];
  std::snprintf(buf, sizeof buf, "%c%02zu", prefix, v);
  return buf;
}

}  // namespace

void SynthConfig::validate() const {
  if (n_dialogues == 0 || speakers_per_dialogue < 1 || referents == 0 || gestures_per_speaker == 0 || fps <= 0) {
    throw ParameterError("synth: all counts must be positive");
  }
  if (stroke_frames_min == 0 || stroke_frames_max < stroke_frames_min || gap_frames_max < gap_frames_min) {
    throw ParameterError("synth: invalid stroke or gap frame range");
  }
  if (speech_layers == 0 || speech_dims == 0 || !(speech_rate > 0.0)) throw ParameterError("synth: invalid speech shape");
  if (speech_signal_layer >= speech_layers) throw ParameterError("synth: speech signal layer out of range");
  if (noise_scale < 0.0 || attribute_redraw < 0.0 || attribute_redraw > 1.0 || prototype_share < 0.0 ||
      prototype_share > 1.0) {
    throw ParameterError("synth: probabilities must lie in [0, 1] and noise scale must be non-negative");
  }
}

SynthCorpus generate(const SynthConfig& cfg) {
  cfg.validate();
  Rng root(cfg.seed);
  SynthCorpus out;
  Corpus& corpus = out.corpus;
  corpus.fps = cfg.fps;
  corpus.speech_rate = cfg.speech_rate;

  // Global referent prototypes and speech codes.
  std::vector<std::array<std::size_t, kFormFeatureCount>> prototype(cfg.referents);
  for (auto& p : prototype)
    for (std::size_t f = 0; f < kFormFeatureCount; ++f) p[f] = pick_conventional(root, f);
  std::vector<std::vector<double>> code(cfg.referents, std::vector<double>(cfg.speech_dims));
  for (auto& c : code)
    for (auto& v : c) v = gauss(root, 1.0);

  const double redraw = std::min(1.0, cfg.attribute_redraw * cfg.noise_scale);
  const std::size_t stroke_span = cfg.stroke_frames_max - cfg.stroke_frames_min;
  const std::size_t gap_span = cfg.gap_frames_max - cfg.gap_frames_min;
  constexpr std::int64_t kRamp = 6;
  std::size_t pair_counter = 0;

  for (std::size_t d = 0; d < cfg.n_dialogues; ++d) {
    Rng drng(derive_seed(cfg.seed, 100 + d));
    const std::string dialogue = two_digits(d, 'd');
    std::vector<std::array<std::size_t, kFormFeatureCount>> canonical(cfg.referents);
    for (std::size_t r = 0; r < cfg.referents; ++r)
      for (std::size_t f = 0; f < kFormFeatureCount; ++f) {
        canonical[r][f] = uniform(drng, 0.0, 1.0) < cfg.prototype_share ? prototype[r][f] : pick_conventional(drng, f);
      }
    const Style dlg_style = draw_style(drng, cfg.dialogue_style);

    // gesture record index ranges per speaker, for pair emission
    std::vector<std::vector<std::size_t>> speaker_records(cfg.speakers_per_dialogue);

    for (std::size_t s = 0; s < cfg.speakers_per_dialogue; ++s) {
      Rng srng(derive_seed(cfg.seed, 10000 + d * 1000 + s));
      const std::string speaker = dialogue + "_" + two_digits(s, 's');
      const Style spk_style = draw_style(srng, cfg.speaker_style);
      Body body;
      body.scale = cfg.shoulder_px * uniform(srng, 0.85, 1.15);
      body.centre = {320.0 + uniform(srng, -40.0, 40.0), 200.0 + uniform(srng, -20.0, 20.0)};
      std::vector<double> voice(cfg.speech_dims);
      for (auto& v : voice) v = gauss(srng, 0.3);

      // Referent order: shuffled passes over all referents.
      std::vector<std::size_t> order;
      while (order.size() < cfg.gestures_per_speaker) {
        std::vector<std::size_t> pass(cfg.referents);
        for (std::size_t r = 0; r < cfg.referents; ++r) pass[r] = r;
        std::shuffle(pass.begin(), pass.end(), srng);
        order.insert(order.end(), pass.begin(), pass.end());
      }
      order.resize(cfg.gestures_per_speaker);

      std::vector<GesturePlan> plans;
      std::int64_t cursor = 20;
      for (std::size_t g = 0; g < cfg.gestures_per_speaker; ++g) {
        GesturePlan p;
        const auto len = static_cast<std::int64_t>(cfg.stroke_frames_min +
                                                   static_cast<std::size_t>(std::llround(cfg.noise_scale * uniform(srng, 0.0, 1.0) * stroke_span)));
        const auto gap = static_cast<std::int64_t>(cfg.gap_frames_min + pick(srng, gap_span + 1));
        p.start = cursor;
        p.end = cursor + std::max<std::int64_t>(len, 1) - 1;
        cursor = p.end + 1 + gap;
        const std::size_t r = order[g];
        for (std::size_t f = 0; f < kFormFeatureCount; ++f) {
          p.attr[f] = uniform(srng, 0.0, 1.0) < redraw ? pick_idiosyncratic(srng, f) : canonical[r][f];
        }
        p.drift = {gauss(srng, cfg.gesture_nuisance * cfg.noise_scale), gauss(srng, cfg.gesture_nuisance * cfg.noise_scale)};
        p.amplitude = std::max(0.3, 1.0 + gauss(srng, cfg.gesture_nuisance * cfg.noise_scale));

        GestureRecord rec;
        rec.gesture_id = speaker + "_" + two_digits(g, 'g');
        rec.speaker_id = speaker;
        rec.dialogue_id = dialogue;
        rec.referent_id = two_digits(r, 'r');
        rec.stroke_start_frame = p.start;
        rec.stroke_end_frame = p.end;
        p.record = corpus.records.size();
        speaker_records[s].push_back(corpus.records.size());
        corpus.records.push_back(rec);
        out.latents.push_back({rec.gesture_id, p.attr});
        plans.push_back(p);
      }

      // Keypoints.
      KeypointSequence seq;
      seq.fps = cfg.fps;
      seq.frames = static_cast<std::size_t>(cursor + 20);
      seq.data.assign(seq.frames * kJointCount * kChannels, 0.0);
      const double noise = cfg.keypoint_noise_px * cfg.noise_scale;
      std::size_t next = 0;
      for (std::size_t t = 0; t < seq.frames; ++t) {
        const auto ti = static_cast<std::int64_t>(t);
        while (next < plans.size() && plans[next].end + kRamp < ti) ++next;
        HandPose left = rest_pose(body, -1.0), right = rest_pose(body, 1.0);
        if (next < plans.size() && ti >= plans[next].start - kRamp) {
          const auto& p = plans[next];
          const double u = std::clamp(static_cast<double>(ti - p.start) / static_cast<double>(std::max<std::int64_t>(1, p.end - p.start)), 0.0, 1.0);
          double w = 1.0;
          if (ti < p.start) w = smoothstep(static_cast<double>(ti - (p.start - kRamp)) / kRamp);
          if (ti > p.end) w = smoothstep(static_cast<double>(p.end + kRamp - ti) / kRamp);
          const auto hand = p.attr[kHandedness];
          if (hand != kRightOnly) left = blend(left, active_pose(body, -1.0, p, spk_style, dlg_style, u), w);
          if (hand != kLeftOnly) right = blend(right, active_pose(body, 1.0, p, spk_style, dlg_style, u), w);
        }
        const Vec2 nose = body.centre + Vec2{0.0, -0.6 * body.scale};
        seq.at(t, kNose, 0) = nose.x;
        seq.at(t, kNose, 1) = nose.y;
        for (double side : {-1.0, 1.0}) {
          const auto sh = shoulder(body, side);
          const std::size_t j = side < 0 ? kLeftShoulder : kRightShoulder;
          seq.at(t, j, 0) = sh.x;
          seq.at(t, j, 1) = sh.y;
        }
        write_hand(seq, t, body, -1.0, kLeftHandBegin, kLeftWrist, 3, left);
        write_hand(seq, t, body, 1.0, kRightHandBegin, kRightWrist, 4, right);
        for (std::size_t j = 0; j < kJointCount; ++j) {
          for (std::size_t c = 0; c < 2; ++c) {
            seq.at(t, j, c) = std::round((seq.at(t, j, c) + gauss(srng, noise)) * 100.0) / 100.0;
          }
          seq.at(t, j, 2) = std::round((1.0 - cfg.noise_scale * uniform(srng, 0.0, 0.15)) * 1000.0) / 1000.0;
        }
      }
      corpus.keypoints.emplace(speaker, std::move(seq));

      // Speech features over the same recording.
      SpeechFeatures sf;
      sf.layers = cfg.speech_layers;
      sf.dims = cfg.speech_dims;
      const double seconds = static_cast<double>(corpus.keypoints.at(speaker).frames) / cfg.fps;
      sf.frames = static_cast<std::size_t>(std::ceil(seconds * cfg.speech_rate));
      sf.data.resize(sf.layers * sf.frames * sf.dims);
      std::size_t g_idx = 0;
      for (std::size_t f = 0; f < sf.frames; ++f) {
        const double time = static_cast<double>(f) / cfg.speech_rate;
        const auto frame = static_cast<std::int64_t>(std::floor(time * cfg.fps));
        while (g_idx < plans.size() && plans[g_idx].end < frame) ++g_idx;
        const bool speaking = g_idx < plans.size() && frame >= plans[g_idx].start;
        for (std::size_t l = 0; l < sf.layers; ++l) {
          const double gain = l == cfg.speech_signal_layer ? cfg.speech_signal : cfg.speech_signal * cfg.speech_leak;
          for (std::size_t k = 0; k < sf.dims; ++k) {
            double v = voice[k] + gauss(srng, cfg.speech_noise);
            if (speaking) v += gain * code[order[g_idx]][k];
            sf.data[(l * sf.frames + f) * sf.dims + k] = static_cast<float>(v);
          }
        }
      }
      corpus.speech.emplace(speaker, std::move(sf));
    }

    // Annotated pairs: same referent, different speakers, this dialogue.
    for (std::size_t s1 = 0; s1 < cfg.speakers_per_dialogue; ++s1)
      for (std::size_t s2 = s1 + 1; s2 < cfg.speakers_per_dialogue; ++s2)
        for (auto a : speaker_records[s1])
          for (auto b : speaker_records[s2]) {
            if (corpus.records[a].referent_id != corpus.records[b].referent_id) continue;
            PairAnnotation pa;
            char buf[16];
            std::snprintf(buf, sizeof buf, "p%05zu", pair_counter++);
            pa.pair_id = buf;
            pa.gesture_a = corpus.records[a].gesture_id;
            pa.gesture_b = corpus.records[b].gesture_id;
            for (std::size_t f = 0; f < kFormFeatureCount; ++f) {
              pa.features[f] = out.latents[a].attributes[f] == out.latents[b].attributes[f];
            }
            corpus.pairs.push_back(pa);
          }
  }
  return out;
}

void write_synth_corpus(const std::filesystem::path& dir, const SynthCorpus& synth) { save_corpus(dir, synth.corpus); }

GeometryReport planted_geometry_check(const SynthCorpus& synth, double alpha) {
  const auto& c = synth.corpus;
  const auto w = window_frames(c.fps, 1.0);
  std::vector<std::vector<double>> desc(c.records.size());
  for (std::size_t i = 0; i < c.records.size(); ++i) {
    const auto& r = c.records[i];
    const auto& seq = c.keypoints.at(r.speaker_id);
    const auto mid = (r.stroke_start_frame + r.stroke_end_frame) / 2;
    const auto start = std::clamp<std::int64_t>(mid - w / 2, 0, static_cast<std::int64_t>(seq.frames) - w);
    const auto win = normalize_window(materialize_window(seq, start, w, r.gesture_id));
    desc[i].assign(win.data.begin(), win.data.begin() + static_cast<std::ptrdiff_t>(2 * win.frames * kJointCount));
  }
  std::vector<double> same, different;
  for (std::size_t i = 0; i < c.records.size(); ++i)
    for (std::size_t j = i + 1; j < c.records.size(); ++j) {
      if (c.records[i].dialogue_id != c.records[j].dialogue_id) continue;
      double d2 = 0.0;
      for (std::size_t k = 0; k < desc[i].size(); ++k) d2 += (desc[i][k] - desc[j][k]) * (desc[i][k] - desc[j][k]);
      (c.records[i].referent_id == c.records[j].referent_id ? same : different).push_back(std::sqrt(d2));
    }
  GeometryReport rep;
  rep.same_referent_pairs = same.size();
  rep.different_referent_pairs = different.size();
  if (same.empty() || different.empty()) return rep;
  rep.mean_same = stats::mean(same);
  rep.mean_different = stats::mean(different);
  const auto mw = stats::mann_whitney_u(same, different);
  rep.u_statistic = mw.statistic;
  rep.p_value = mw.p_value;
  const double centre = static_cast<double>(same.size()) * static_cast<double>(different.size()) / 2.0;
  rep.passed = mw.statistic < centre && mw.p_value < alpha;
  return rep;
}

GeometryReport planted_geometry_check(const SynthConfig& cfg, double alpha) {
  return planted_geometry_check(generate(cfg), alpha);
}

}  // namespace gesturerep
