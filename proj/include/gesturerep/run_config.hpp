#pragma once

// Run configuration: profile defaults, then a flat `key = value` file, then
// command-line overrides. Unknown keys are errors.

#include "gesturerep/corpus.hpp"
#include "gesturerep/intrinsic_eval.hpp"
#include "gesturerep/probing.hpp"
#include "gesturerep/synthgen.hpp"
#include "gesturerep/trainer.hpp"

#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace gesturerep {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

enum class Profile { Paper, Desk };
std::string to_string(Profile p);
Profile parse_profile(const std::string& name);

struct RunConfig {
  Profile profile = Profile::Paper;
  std::optional<std::uint64_t> seed;
  std::filesystem::path data_dir = "data";
  std::filesystem::path out_dir = "out";

  BankOptions bank;
  TrainConfig train;
  SynthConfig synth;
  ProbeConfig probe;
  PairSetOptions pair_sets;
  EmbeddingLayer layer = EmbeddingLayer::Projection;
  double alpha = 0.05;

  // Copies the single seed into every consumer.
  void propagate_seed(std::uint64_t s);
};

// Defaults for a profile. Paper: published hyperparameters. Desk: a smaller
// encoder, batch 32, 30 epochs, one window per gesture per epoch, 20 probe
// seeds.
RunConfig make_run_config(Profile profile);

struct KeyDoc {
  std::string key;
  std::string description;
};
const std::vector<KeyDoc>& documented_keys();

void set_config_value(RunConfig& cfg, const std::string& key, const std::string& value);
// run.profile is read first when present; other keys apply in file order.
RunConfig load_run_config(const std::optional<std::filesystem::path>& path, std::optional<Profile> profile_override);
std::optional<Profile> profile_in_file(const std::filesystem::path& path);

// One `key = value` line per documented key.
std::string render_run_config(const RunConfig& cfg);

}  // namespace gesturerep
