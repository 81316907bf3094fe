#include "gesturerep/errors.hpp"
#include "gesturerep/synthgen.hpp"
#include "gesturerep/trainer.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <set>

using namespace gesturerep;
using doctest::Approx;

namespace {

struct Tiny {
  SynthCorpus syn;
  WindowBank bank;
  TrainConfig cfg;
};

Tiny tiny_setup(std::uint64_t seed = 3) {
  SynthConfig sc;
  sc.n_dialogues = 1;
  sc.referents = 4;
  sc.gestures_per_speaker = 6;
  sc.seed = seed;
  Tiny t;
  t.syn = generate(sc);
  t.bank = build_window_bank(t.syn.corpus);
  t.cfg.model.gesture.widths = {4, 8};
  t.cfg.model.gesture.strides = {1, 2};
  t.cfg.model.gesture.temporal_kernel = 3;
  t.cfg.model.speech.layers = sc.speech_layers;
  t.cfg.model.speech.dims = sc.speech_dims;
  t.cfg.batch_size = 8;
  t.cfg.windows_per_gesture = 2;
  t.cfg.max_epochs = 3;
  t.cfg.seed = 5;
  return t;
}

std::vector<double> flat(const ParameterStore& p) {
  std::vector<double> out;
  for (const auto& [name, a] : p.entries()) out.insert(out.end(), a.values().begin(), a.values().end());
  return out;
}

std::filesystem::path temp_file(const std::string& name) { return std::filesystem::temp_directory_path() / name; }

}  // namespace

TEST_CASE("first Adam step moves each weight by lr against the gradient sign") {
  ParameterStore store;
  auto& w = store.add("w", {4}, {0.5, -1.0, 2.0, 0.0});
  const auto c = diff::Array::constant({4}, {3.0, -0.7, 1e-2, 12.0});
  diff::sum(diff::mul(w, c)).backward();
  Adam adam(1e-3);
  adam.step(store);
  const std::vector<double> before{0.5, -1.0, 2.0, 0.0};
  for (std::size_t i = 0; i < 4; ++i) {
    const double sign = c.values()[i] > 0 ? 1.0 : -1.0;
    CHECK(std::abs(store.get("w").values()[i] - (before[i] - 1e-3 * sign)) < 1e-9);
  }
  CHECK(adam.steps() == 1);
}

TEST_CASE("zero learning rate leaves parameters unchanged") {
  ParameterStore store;
  auto& w = store.add("w", {3}, {0.1, 0.2, 0.3});
  diff::sum(diff::mul(w, w)).backward();
  Adam adam(0.0);
  adam.step(store);
  CHECK(flat(store) == std::vector<double>{0.1, 0.2, 0.3});
}

TEST_CASE("dataset split sizes and seeding") {
  const auto big = split_dataset(70153, 0.9, 1);
  CHECK(big.train.size() == 63137);
  CHECK(big.val.size() == 7016);
  std::vector<std::size_t> all = big.train;
  all.insert(all.end(), big.val.begin(), big.val.end());
  std::sort(all.begin(), all.end());
  std::vector<std::size_t> expect(70153);
  std::iota(expect.begin(), expect.end(), std::size_t{0});
  CHECK(all == expect);

  const auto small = split_dataset(10, 0.9, 2);
  CHECK(small.train.size() == 9);
  CHECK(small.val.size() == 1);
  CHECK(split_dataset(500, 0.9, 7).train == split_dataset(500, 0.9, 7).train);
  CHECK(split_dataset(500, 0.9, 7).train != split_dataset(500, 0.9, 8).train);
  CHECK_THROWS(split_dataset(1, 0.9, 0));
  CHECK_THROWS_AS(split_dataset(10, 1.0, 0), ParameterError);
}

TEST_CASE("config validation") {
  TrainConfig c;
  c.batch_size = 1;
  CHECK_THROWS_AS(c.validate(), ParameterError);
  c = {};
  c.temperature = 0.0;
  CHECK_THROWS_AS(c.validate(), ParameterError);
  c = {};
  c.validation_fraction = 0.0;
  CHECK_THROWS_AS(c.validate(), ParameterError);
  CHECK(parse_objective_mode(to_string(ObjectiveMode::Multimodal)) == ObjectiveMode::Multimodal);
  CHECK(config_hash(TrainConfig{}) == config_hash(TrainConfig{}));
  TrainConfig d;
  d.learning_rate = 2e-3;
  CHECK(config_hash(d) != config_hash(TrainConfig{}));
}

TEST_CASE("zero epochs returns the initialisation") {
  auto t = tiny_setup();
  t.cfg.max_epochs = 0;
  const auto ckpt = fit(t.bank, t.cfg);
  CHECK(ckpt.epoch == 0);
  CHECK(ckpt.history.empty());
  CHECK(ckpt.params.fingerprint() == initial_parameters(t.cfg).fingerprint());
}

TEST_CASE("training lowers the loss and is deterministic") {
  auto t = tiny_setup();
  t.cfg.max_epochs = 30;
  std::vector<double> losses;
  std::vector<EpochMetrics> epochs;
  FitObserver obs;
  obs.on_step = [&](std::size_t, double loss) { losses.push_back(loss); };
  obs.on_epoch = [&](const EpochMetrics& m) { epochs.push_back(m); };
  const auto ckpt = fit(t.bank, t.cfg, obs);
  REQUIRE(epochs.size() == 30);
  double first = 0, last = 0;
  for (int i = 0; i < 5; ++i) {
    first += epochs[i].train_loss;
    last += epochs[epochs.size() - 1 - i].train_loss;
  }
  CHECK(last < first);
  for (const auto& m : epochs) CHECK(std::isfinite(m.val_loss));
  const auto best = std::min_element(epochs.begin(), epochs.end(),
                                     [](const auto& a, const auto& b) { return a.val_loss < b.val_loss; });
  CHECK(ckpt.epoch >= 1);
  CHECK(ckpt.history.size() == 30);
  CHECK(ckpt.epoch == best->epoch);

  auto again = t;
  again.cfg.max_epochs = 2;
  std::vector<double> replay;
  FitObserver obs2;
  obs2.on_step = [&](std::size_t, double loss) { replay.push_back(loss); };
  fit(again.bank, again.cfg, obs2);
  REQUIRE(replay.size() >= 5);
  for (std::size_t i = 0; i < 5; ++i) CHECK(replay[i] == losses[i]);
}

TEST_CASE("every objective mode trains one step") {
  auto t = tiny_setup();
  for (auto mode : {ObjectiveMode::Unimodal, ObjectiveMode::Multimodal, ObjectiveMode::Combined}) {
    CAPTURE(to_string(mode));
    t.cfg.mode = mode;
    auto params = initial_parameters(t.cfg);
    const auto before = flat(params);
    Adam adam(t.cfg.learning_rate);
    Rng rng(1);
    const std::vector<std::size_t> batch{0, 1, 2, 3, 4, 5, 6, 7};
    const double loss = train_step(t.bank, batch, t.cfg, params, adam, rng, 0);
    CHECK(std::isfinite(loss));
    CHECK(loss > 0.0);
    CHECK(flat(params) != before);
  }
}

TEST_CASE("checkpoint round trip and corruption") {
  auto t = tiny_setup();
  t.cfg.max_epochs = 2;
  const auto ckpt = fit(t.bank, t.cfg);
  const auto path = temp_file("gesturerep_ckpt_test.bin");
  save_checkpoint(path, ckpt);
  const auto back = load_checkpoint(path);
  CHECK(back.params.fingerprint() == ckpt.params.fingerprint());
  CHECK(back.epoch == ckpt.epoch);
  CHECK(back.config_hash == ckpt.config_hash);
  CHECK(back.metadata == ckpt.metadata);
  REQUIRE(back.history.size() == ckpt.history.size());
  for (std::size_t i = 0; i < back.history.size(); ++i) CHECK(back.history[i].val_loss == ckpt.history[i].val_loss);

  CHECK_FALSE(config_mismatch(back, t.cfg).has_value());
  auto other = t.cfg;
  other.temperature = 0.2;
  const auto warning = config_mismatch(back, other);
  REQUIRE(warning.has_value());
  CHECK(warning->find("differs") != std::string::npos);

  const auto size = std::filesystem::file_size(path);
  std::filesystem::resize_file(path, size / 2);
  CHECK_THROWS_AS(load_checkpoint(path), FormatError);
  {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    os << "NOPE and some more bytes";
  }
  CHECK_THROWS_AS(load_checkpoint(path), FormatError);
  std::filesystem::remove(path);
  CHECK_THROWS_AS(load_checkpoint(path), IoError);
}

TEST_CASE("resume continues from the stored epoch") {
  auto t = tiny_setup();
  t.cfg.max_epochs = 2;
  auto ckpt = fit(t.bank, t.cfg);
  ckpt.epoch = 2;
  t.cfg.max_epochs = 3;
  std::vector<std::size_t> seen;
  FitObserver obs;
  obs.on_epoch = [&](const EpochMetrics& m) { seen.push_back(m.epoch); };
  fit(t.bank, t.cfg, obs, &ckpt);
  CHECK(seen == std::vector<std::size_t>{3});
}
