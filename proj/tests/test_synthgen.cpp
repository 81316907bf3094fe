#include "gesturerep/synthgen.hpp"

#include <doctest.h>

#include <array>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

using namespace gesturerep;

namespace {

std::vector<double> stroke_slice(const Corpus& c, const GestureRecord& r) {
  const auto& seq = c.keypoints.at(r.speaker_id);
  std::vector<double> out;
  for (auto t = r.stroke_start_frame; t <= r.stroke_end_frame; ++t) {
    for (std::size_t j = 0; j < kJointCount; ++j) {
      for (std::size_t ch = 0; ch < kChannels; ++ch) out.push_back(seq.at(static_cast<std::size_t>(t), j, ch));
    }
  }
  return out;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("noise zero makes gestures a function of speaker and referent") {
  SynthConfig sc;
  sc.n_dialogues = 2;
  sc.referents = 3;
  sc.gestures_per_speaker = 6;
  sc.noise_scale = 0.0;
  sc.seed = 4;
  const auto syn = generate(sc);
  std::size_t compared = 0;
  const auto& recs = syn.corpus.records;
  for (std::size_t i = 0; i < recs.size(); ++i) {
    for (std::size_t j = i + 1; j < recs.size(); ++j) {
      if (recs[i].speaker_id != recs[j].speaker_id || recs[i].referent_id != recs[j].referent_id) continue;
      CHECK(syn.latents[i].attributes == syn.latents[j].attributes);
      CHECK(stroke_slice(syn.corpus, recs[i]) == stroke_slice(syn.corpus, recs[j]));
      ++compared;
    }
  }
  CHECK(compared > 0);
  CHECK(planted_geometry_check(syn).passed);
}

TEST_CASE("default corpus has enough pairs in every bucket") {
  SynthConfig sc;
  sc.seed = 7;
  const auto syn = generate(sc);
  CHECK(syn.corpus.pairs.size() >= 400);
  CHECK(syn.latents.size() == syn.corpus.records.size());
  std::array<std::size_t, 6> buckets{};
  for (const auto& p : syn.corpus.pairs) ++buckets[p.shared_count()];
  for (auto b : buckets) CHECK(b > 0);

  std::map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < syn.corpus.records.size(); ++i) index[syn.corpus.records[i].gesture_id] = i;
  for (const auto& p : syn.corpus.pairs) {
    const auto& a = syn.corpus.records[index.at(p.gesture_a)];
    const auto& b = syn.corpus.records[index.at(p.gesture_b)];
    CHECK(a.speaker_id != b.speaker_id);
    CHECK(a.referent_id == b.referent_id);
    for (std::size_t f = 0; f < kFormFeatureCount; ++f) {
      const bool same = syn.latents[index.at(p.gesture_a)].attributes[f] == syn.latents[index.at(p.gesture_b)].attributes[f];
      CHECK(p.features[f] == same);
    }
  }
  const auto geo = planted_geometry_check(syn);
  CHECK(geo.passed);
  CHECK(geo.mean_same < geo.mean_different);
}

TEST_CASE("attributes stay inside their alphabets") {
  SynthConfig sc;
  sc.n_dialogues = 2;
  sc.seed = 1;
  for (const auto& l : generate(sc).latents) {
    for (std::size_t f = 0; f < kFormFeatureCount; ++f) CHECK(l.attributes[f] < kSynthAlphabet[f]);
  }
}

TEST_CASE("same seed writes identical bytes and files load back") {
  SynthConfig sc;
  sc.n_dialogues = 2;
  sc.referents = 4;
  sc.gestures_per_speaker = 8;
  sc.seed = 9;
  const auto base = std::filesystem::temp_directory_path() / "gesturerep_synth_test";
  std::filesystem::remove_all(base);
  write_synth_corpus(base / "a", generate(sc));
  write_synth_corpus(base / "b", generate(sc));
  std::size_t files = 0;
  for (const auto& e : std::filesystem::recursive_directory_iterator(base / "a")) {
    if (!e.is_regular_file()) continue;
    const auto rel = std::filesystem::relative(e.path(), base / "a");
    CHECK(slurp(e.path()) == slurp(base / "b" / rel));
    ++files;
  }
  CHECK(files >= 4);

  const auto syn = generate(sc);
  const auto loaded = load_corpus(base / "a");
  CHECK(loaded.records.size() == syn.corpus.records.size());
  CHECK(loaded.pairs.size() == syn.corpus.pairs.size());
  CHECK(loaded.fps == syn.corpus.fps);
  CHECK(loaded.keypoints.size() == syn.corpus.keypoints.size());
  CHECK(loaded.speech.size() == syn.corpus.speech.size());
  CHECK(build_window_bank(loaded).size() > 0);

  sc.seed = 10;
  write_synth_corpus(base / "c", generate(sc));
  CHECK(slurp(base / "a" / "gestures.csv") != slurp(base / "c" / "gestures.csv"));
  std::filesystem::remove_all(base);
}

TEST_CASE("invalid configs are rejected") {
  SynthConfig sc;
  sc.attribute_redraw = 1.5;
  CHECK_THROWS(sc.validate());
  sc = {};
  sc.stroke_frames_min = 0;
  CHECK_THROWS(sc.validate());
}
