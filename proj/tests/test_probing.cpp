#include "gesturerep/errors.hpp"
#include "gesturerep/probing.hpp"
#include "gesturerep/synthgen.hpp"

#include <doctest.h>

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <random>
#include <set>

using namespace gesturerep;
using doctest::Approx;

namespace {

ProbeConfig small_probe(std::size_t dim) {
  ProbeConfig c;
  c.input_dim = dim;
  c.hidden = 8;
  c.epochs = 30;
  c.learning_rate = 5e-3;
  c.seeds = 10;
  return c;
}

// Pairs with independent random labels; the first `encoded` features are
// written into dimension f of the a-side embedding.
struct Fixture {
  std::vector<PairAnnotation> pairs;
  EmbeddingTable encoded, noise;
};

Fixture fixture(std::size_t n_pairs, std::size_t dim, std::size_t encoded, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0, 1);
  std::bernoulli_distribution coin(0.5);
  Fixture fx;
  for (std::size_t i = 0; i < n_pairs; ++i) {
    PairAnnotation p;
    p.pair_id = "p" + std::to_string(i);
    p.gesture_a = "a" + std::to_string(i);
    p.gesture_b = "b" + std::to_string(i);
    for (auto& f : p.features) f = coin(rng);
    std::vector<double> a(dim), b(dim), na(dim), nb(dim);
    for (std::size_t k = 0; k < dim; ++k) {
      a[k] = 0.3 * g(rng);
      b[k] = 0.3 * g(rng);
      na[k] = g(rng);
      nb[k] = g(rng);
    }
    for (std::size_t f = 0; f < encoded; ++f) a[f] += p.features[f] ? 1.0 : -1.0;
    fx.encoded.add(p.gesture_a, a);
    fx.encoded.add(p.gesture_b, b);
    fx.noise.add(p.gesture_a, na);
    fx.noise.add(p.gesture_b, nb);
    fx.pairs.push_back(p);
  }
  return fx;
}

std::vector<ProbeExample> examples_for(const Fixture& fx, const EmbeddingTable& t, std::size_t feature) {
  std::vector<ProbeExample> ex;
  for (const auto& p : fx.pairs) ex.push_back({*t.find(p.gesture_a), *t.find(p.gesture_b), p.features[feature]});
  return ex;
}

}  // namespace

TEST_CASE("zero weights give one half") {
  auto cfg = small_probe(4);
  Rng rng(1);
  auto probe = init_probe(cfg, rng);
  for (const auto& [name, a] : probe.entries()) {
    for (auto& v : diff::Array(a).mutable_values()) v = 0.0;
  }
  const auto a = diff::Array::constant({3, 4}, std::vector<double>(12, 0.7));
  const auto out = probe_forward(probe, cfg, a, a);
  REQUIRE(out.shape() == diff::Shape{3, 1});
  for (double v : out.values()) CHECK(v == 0.5);
}

TEST_CASE("probabilities stay in the open unit interval") {
  auto cfg = small_probe(6);
  Rng rng(2);
  const auto probe = init_probe(cfg, rng);
  std::normal_distribution<double> g(0, 30);
  std::vector<double> va(60), vb(60);
  for (auto& x : va) x = g(rng);
  for (auto& x : vb) x = g(rng);
  const auto out = probe_forward(probe, cfg, diff::Array::constant({10, 6}, va), diff::Array::constant({10, 6}, vb));
  for (double v : out.values()) {
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }
  const auto big = diff::Array::constant({2, 1}, {800.0, -800.0});
  const auto loss = binary_cross_entropy_with_logits(big, {1, 0});
  CHECK(std::isfinite(loss.values()[0]));
  CHECK(loss.values()[0] == Approx(0.0).epsilon(1e-12));
  const auto one = binary_cross_entropy_with_logits(diff::Array::constant({1, 1}, {0.0}), {1});
  CHECK(one.values()[0] == Approx(std::log(2.0)));
}

TEST_CASE("probe gradients match finite differences") {
  for (bool shared : {true, false}) {
    auto cfg = small_probe(5);
    cfg.shared_weights = shared;
    Rng rng(3);
    auto probe = init_probe(cfg, rng);
    for (const auto& [name, a] : probe.entries()) {
      if (name.find("bias") != std::string::npos) {
        for (auto& v : diff::Array(a).mutable_values()) v += 0.3;
      }
    }
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<double> va(20), vb(20);
    for (auto& x : va) x = u(rng);
    for (auto& x : vb) x = u(rng);
    const auto a = diff::Array::constant({4, 5}, va);
    const auto b = diff::Array::constant({4, 5}, vb);
    const std::vector<int> labels{1, 0, 0, 1};
    auto fn = [&] { return binary_cross_entropy_with_logits(probe_logits(probe, cfg, a, b), labels); };
    diff::ReluMarginProbe margin;
    fn();
    if (margin.margin() > 1e-4) CHECK(diff::check_gradients(fn, probe.arrays(), {1e-6, 0, 0}) < 1e-4);
  }
}

TEST_CASE("split keeps classes in every part") {
  std::vector<int> labels(100, 0);
  for (std::size_t i = 0; i < 30; ++i) labels[i * 3] = 1;
  const auto cfg = small_probe(4);
  const auto s = split_probe_examples(labels, cfg, 9);
  std::set<std::size_t> all;
  for (const auto* part : {&s.train, &s.val, &s.test}) {
    bool pos = false, neg = false;
    for (auto i : *part) {
      all.insert(i);
      (labels[i] ? pos : neg) = true;
    }
    CHECK(pos);
    CHECK(neg);
  }
  CHECK(all.size() == 100);
  CHECK(s.train.size() + s.val.size() + s.test.size() == 100);
  CHECK(s.train.size() == 60);

  std::vector<int> one_class(50, 1);
  CHECK_THROWS_AS(split_probe_examples(one_class, cfg, 1), ProbeSplitError);
}

TEST_CASE("separable data trains to a high AUC and noise stays at chance") {
  const auto fx = fixture(240, 6, 1, 4);
  const auto cfg = small_probe(6);
  const auto run = train_probe(examples_for(fx, fx.encoded, 0), cfg, 1);
  CHECK(run.test_auc >= 0.95);
  const auto again = train_probe(examples_for(fx, fx.encoded, 0), cfg, 1);
  CHECK(again.test_auc == run.test_auc);
  CHECK(again.best_epoch == run.best_epoch);

  double mean = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) mean += train_probe(examples_for(fx, fx.noise, 2), cfg, seed).test_auc;
  mean /= 20;
  CHECK(std::abs(mean - 0.5) <= 0.08);
}

TEST_CASE("experiment flags exactly the encoded features") {
  const auto fx = fixture(240, 8, 3, 5);
  const auto results = run_probe_experiment(fx.pairs, fx.encoded, fx.noise, small_probe(8));
  REQUIRE(results.size() == 10);
  std::set<std::string> flagged;
  for (const auto& r : results) {
    CHECK(r.aucs.size() == 10);
    if (r.representation == "trained" && r.significant) flagged.insert(r.feature);
  }
  CHECK(flagged == std::set<std::string>{kFormFeatureNames[0], kFormFeatureNames[1], kFormFeatureNames[2]});
  const auto j = nlohmann::json::parse(probe_report_json(results));
  CHECK(j.size() == 10);
  CHECK(j[0].contains("p_adjusted"));
}

TEST_CASE("identical representations are never significant") {
  const auto fx = fixture(200, 6, 3, 6);
  auto cfg = small_probe(6);
  cfg.seeds = 5;
  for (const auto& r : run_probe_experiment(fx.pairs, fx.encoded, fx.encoded, cfg)) CHECK_FALSE(r.significant);
}

TEST_CASE("missing embeddings are an integrity error") {
  auto fx = fixture(40, 4, 1, 7);
  fx.pairs.push_back(fx.pairs.front());
  fx.pairs.back().gesture_b = "nowhere";
  CHECK_THROWS_AS(run_probe_experiment(fx.pairs, fx.encoded, fx.noise, small_probe(4)), IntegrityError);
}

TEST_CASE("shuffled labels keep column counts") {
  const auto fx = fixture(100, 4, 0, 8);
  const auto shuffled = shuffle_feature_labels(fx.pairs, 3);
  REQUIRE(shuffled.size() == fx.pairs.size());
  for (std::size_t f = 0; f < kFormFeatureCount; ++f) {
    int before = 0, after = 0;
    for (std::size_t i = 0; i < fx.pairs.size(); ++i) {
      before += fx.pairs[i].features[f];
      after += shuffled[i].features[f];
    }
    CHECK(before == after);
  }
  CHECK(shuffle_feature_labels(fx.pairs, 3)[5].features == shuffled[5].features);
}

TEST_CASE("random baseline embeddings are seeded") {
  SynthConfig sc;
  sc.n_dialogues = 1;
  sc.referents = 3;
  sc.gestures_per_speaker = 3;
  sc.seed = 2;
  const auto bank = build_window_bank(generate(sc).corpus);
  GestureEncoderConfig enc;
  enc.widths = {4, 8};
  enc.strides = {1, 2};
  const auto a = random_baseline_embeddings(enc, bank, 11);
  const auto b = random_baseline_embeddings(enc, bank, 11);
  const auto c = random_baseline_embeddings(enc, bank, 12);
  CHECK(a.dim == 256);
  CHECK(a.size() == bank.gesture_ids.size());
  CHECK(a.vectors == b.vectors);
  CHECK(a.vectors != c.vectors);
}
