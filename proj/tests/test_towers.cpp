#include "gesturerep/towers.hpp"
#include "support.hpp"

#include <doctest.h>

#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

using namespace gesturerep;
using diff::Array;
using doctest::Approx;

namespace {

GestureEncoderConfig toy_encoder() {
  GestureEncoderConfig c;
  c.widths = {4, 6};
  c.strides = {1, 2};
  c.temporal_kernel = 3;
  c.output_dim = 8;
  return c;
}

Array random_batch(std::size_t n, std::size_t frames, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(n * kChannels * frames * kJointCount);
  for (auto& x : v) x = u(rng);
  return Array::constant({n, kChannels, frames, kJointCount}, std::move(v));
}

}  // namespace

TEST_CASE("identity network pools the raw channels") {
  GestureEncoderConfig cfg;
  cfg.widths = {3};
  cfg.strides = {1};
  cfg.temporal_kernel = 1;
  cfg.output_dim = 3;
  cfg.residual = false;
  cfg.adjacency.assign(kJointCount * kJointCount, 0.0);
  for (std::size_t j = 0; j < kJointCount; ++j) cfg.adjacency[j * kJointCount + j] = 1.0;
  ParameterStore store;
  store.add("gesture_encoder.block0.graph_weight", {3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
  store.add("gesture_encoder.block0.graph_bias", {3}, {0, 0, 0});
  store.add("gesture_encoder.block0.temporal_weight", {3, 3, 1}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
  store.add("gesture_encoder.block0.temporal_bias", {3}, {0, 0, 0});

  std::mt19937_64 rng(1);
  const auto batch = random_batch(2, 5, rng, 0.0, 3.0);
  const auto out = encode_gesture(store, cfg, batch);
  REQUIRE(out.shape() == diff::Shape{2, 3});
  for (std::size_t n = 0; n < 2; ++n) {
    for (std::size_t c = 0; c < 3; ++c) {
      double mean = 0;
      for (std::size_t t = 0; t < 5; ++t) {
        for (std::size_t j = 0; j < kJointCount; ++j) mean += batch.values()[((n * 3 + c) * 5 + t) * kJointCount + j];
      }
      CHECK(out.values()[n * 3 + c] == Approx(mean / (5.0 * kJointCount)).epsilon(1e-12));
    }
  }
}

TEST_CASE("encoder is equivariant to joint permutations") {
  std::mt19937_64 rng(2);
  const auto cfg = toy_encoder();
  auto store = [&] {
    ParameterStore s;
    init_gesture_encoder(s, cfg, rng);
    return s;
  }();
  std::vector<std::size_t> perm(kJointCount);
  std::iota(perm.begin(), perm.end(), 0);
  for (int rep = 0; rep < 5; ++rep) {
    std::shuffle(perm.begin(), perm.end(), rng);
    const auto batch = random_batch(3, 8, rng);
    std::vector<double> moved(batch.size());
    for (std::size_t r = 0; r < batch.size() / kJointCount; ++r) {
      for (std::size_t j = 0; j < kJointCount; ++j) moved[r * kJointCount + perm[j]] = batch.values()[r * kJointCount + j];
    }
    auto pcfg = cfg;
    for (std::size_t i = 0; i < kJointCount; ++i) {
      for (std::size_t j = 0; j < kJointCount; ++j) {
        pcfg.adjacency[perm[i] * kJointCount + perm[j]] = cfg.adjacency[i * kJointCount + j];
      }
    }
    const auto a = encode_gesture(store, cfg, batch);
    const auto b = encode_gesture(store, pcfg, Array::constant(batch.shape(), moved));
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(b.values()[i] == Approx(a.values()[i]).epsilon(1e-10));
  }
}

TEST_CASE("zero inputs with zero biases give zero embeddings") {
  std::mt19937_64 rng(3);
  ModelConfig m;
  m.gesture = toy_encoder();
  m.speech.layers = 3;
  m.speech.dims = 4;
  m.gesture_projection = {8, 5};
  m.speech_projection = {128, 5};
  const auto store = init_model(m, rng);
  const auto g = encode_gesture(store, m.gesture, Array::zeros({2, kChannels, 6, kJointCount}));
  for (double v : g.values()) CHECK(v == 0.0);
  const auto s = encode_speech(store, m.speech, Array::zeros({2, 3, 5 * 4}));
  for (double v : s.values()) CHECK(v == 0.0);
  const auto p = project(store, m.gesture_projection, Array::zeros({2, 8}), kGestureProjection);
  for (double v : p.values()) CHECK(v == 0.0);
}

TEST_CASE("default output sizes") {
  std::mt19937_64 rng(4);
  ModelConfig m;
  m.gesture.widths = {8, 16};
  m.gesture.strides = {1, 2};
  m.speech.layers = 2;
  m.speech.dims = 3;
  const auto store = init_model(m, rng);
  const auto g = encode_gesture(store, m.gesture, random_batch(2, 10, rng));
  CHECK(g.shape() == diff::Shape{2, 256});
  const auto s = encode_speech(store, m.speech, Array::constant({2, 2, 12}, std::vector<double>(48, 0.3)));
  CHECK(s.shape() == diff::Shape{2, 128});
  CHECK(project(store, m.gesture_projection, g, kGestureProjection).shape() == diff::Shape{2, 128});
  CHECK(project(store, m.speech_projection, s, kSpeechProjection).shape() == diff::Shape{2, 128});
  for (double v : g.values()) CHECK(std::isfinite(v));
}

TEST_CASE("speech layer mixing") {
  std::mt19937_64 rng(5);
  SpeechHeadConfig one{1, 3, 6, 4};
  ParameterStore s1;
  init_speech_head(s1, one, rng);
  std::uniform_real_distribution<double> u(-1, 1);
  std::vector<double> feats(2 * 1 * 5 * 3);
  for (auto& x : feats) x = u(rng);
  const auto batch = Array::constant({2, 1, 15}, feats);
  const auto before = encode_speech(s1, one, batch);
  s1.get("speech_head.layer_logits").mutable_values()[0] = 7.5;
  const auto after = encode_speech(s1, one, batch);
  for (std::size_t i = 0; i < before.size(); ++i) CHECK(after.values()[i] == Approx(before.values()[i]).epsilon(1e-14));

  SpeechHeadConfig two{2, 3, 6, 4};
  ParameterStore s2;
  init_speech_head(s2, two, rng);
  std::vector<double> dup;
  for (std::size_t n = 0; n < 2; ++n) {
    for (int l = 0; l < 2; ++l) dup.insert(dup.end(), feats.begin() + static_cast<long>(n * 15), feats.begin() + static_cast<long>(n * 15 + 15));
  }
  const auto dbatch = Array::constant({2, 2, 15}, dup);
  const auto x = encode_speech(s2, two, dbatch);
  s2.get("speech_head.layer_logits").mutable_values()[1] = -3.0;
  const auto y = encode_speech(s2, two, dbatch);
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(y.values()[i] == Approx(x.values()[i]).epsilon(1e-12));

  CHECK_THROWS_AS(encode_speech(s2, two, batch), diff::ShapeError);
}

TEST_CASE("identity projection returns nonnegative input") {
  ParameterStore store;
  std::vector<double> eye(16, 0.0);
  for (std::size_t i = 0; i < 4; ++i) eye[i * 4 + i] = 1.0;
  store.add("p.fc1_weight", {4, 4}, eye);
  store.add("p.fc1_bias", {4}, std::vector<double>(4, 0.0));
  store.add("p.fc2_weight", {4, 4}, eye);
  store.add("p.fc2_bias", {4}, std::vector<double>(4, 0.0));
  const auto x = Array::constant({1, 4}, {0.5, 0.0, 2.0, 1.25});
  const auto y = project(store, {4, 4}, x, "p");
  for (std::size_t i = 0; i < 4; ++i) CHECK(y.values()[i] == x.values()[i]);
  CHECK_THROWS_AS(project(store, {4, 4}, Array::constant({1, 3}, {1, 2, 3}), "p"), diff::ShapeError);
}

TEST_CASE("input checks") {
  std::mt19937_64 rng(6);
  const auto cfg = toy_encoder();
  ParameterStore store;
  init_gesture_encoder(store, cfg, rng);
  CHECK_THROWS_AS(encode_gesture(store, cfg, random_batch(1, 3, rng)), InputTooShortError);
  CHECK_THROWS_AS(encode_gesture(store, cfg, Array::zeros({1, 2, 8, kJointCount})), diff::ShapeError);
}

TEST_CASE("doubling the input coordinates changes the embedding") {
  std::mt19937_64 rng(7);
  const auto cfg = toy_encoder();
  ParameterStore store;
  init_gesture_encoder(store, cfg, rng);
  for (int rep = 0; rep < 10; ++rep) {
    const auto w = oracle::random_window(8, rng, 300.0);
    auto doubled = w;
    for (std::size_t t = 0; t < w.frames; ++t) {
      for (std::size_t j = 0; j < kJointCount; ++j) {
        doubled.at(0, t, j) *= 2;
        doubled.at(1, t, j) *= 2;
      }
    }
    const std::vector<SkeletonWindow> a{w}, b{doubled};
    const auto ea = encode_gesture(store, cfg, windows_to_batch(a));
    const auto eb = encode_gesture(store, cfg, windows_to_batch(b));
    double diffsum = 0;
    for (std::size_t i = 0; i < ea.size(); ++i) diffsum += std::abs(ea.values()[i] - eb.values()[i]);
    CHECK(diffsum > 1e-6);
  }
}

TEST_CASE("encoder and projection gradients") {
  std::mt19937_64 rng(8);
  ModelConfig m;
  m.gesture = toy_encoder();
  m.gesture_projection = {8, 4};
  auto store = init_model(m, rng);
  // bias shift keeps relu inputs off the kinks for a smooth check
  for (const auto& [name, a] : store.entries()) {
    if (name.ends_with("_bias")) {
      for (auto& v : Array(a).mutable_values()) v += 0.5;
    }
  }
  auto w = Array::constant({2, 4}, {0.3, -0.2, 0.9, 0.1, -0.5, 0.4, 0.2, 0.7});
  bool checked = false;
  for (int attempt = 0; attempt < 50 && !checked; ++attempt) {
    const auto batch = random_batch(2, 6, rng, 0.0, 1.0);
    auto fn = [&] {
      auto z = project(store, m.gesture_projection, encode_gesture(store, m.gesture, batch), kGestureProjection);
      return diff::sum(diff::mul(z, w));
    };
    diff::ReluMarginProbe probe;
    fn();
    if (probe.margin() < 1e-3) continue;
    CHECK(diff::check_gradients(fn, store.arrays(), {1e-6, 0, 0}) < 1e-4);
    checked = true;
  }
  CHECK(checked);
}

TEST_CASE("parameter serialisation round trip") {
  std::mt19937_64 rng(9);
  ModelConfig m;
  m.gesture = toy_encoder();
  m.gesture_projection = {8, 4};
  const auto store = init_model(m, rng);
  std::stringstream ss;
  write_parameters(ss, store);
  const auto back = read_parameters(ss);
  CHECK(back.fingerprint() == store.fingerprint());
  CHECK(back.parameter_count() == store.parameter_count());
  const auto batch = random_batch(2, 6, rng);
  const auto a = encode_gesture(store, m.gesture, batch);
  const auto b = encode_gesture(back, m.gesture, batch);
  CHECK(std::equal(a.values().begin(), a.values().end(), b.values().begin()));
}
