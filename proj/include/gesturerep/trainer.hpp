#pragma once

// Batch assembly, Adam, the fit loop with validation-based selection, and
// checkpoint files.

#include "gesturerep/augment.hpp"
#include "gesturerep/corpus.hpp"
#include "gesturerep/objectives.hpp"
#include "gesturerep/towers.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

namespace gesturerep {

enum class ObjectiveMode { Unimodal, Multimodal, Combined };

std::string to_string(ObjectiveMode mode);
ObjectiveMode parse_objective_mode(const std::string& name);

struct TrainConfig {
  ObjectiveMode mode = ObjectiveMode::Combined;
  double learning_rate = 1e-3;
  std::size_t batch_size = 128;
  std::size_t max_epochs = 200;
  double temperature = 0.1;
  double validation_fraction = 0.1;
  std::uint64_t seed = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_epsilon = 1e-8;
  // Per epoch, at most this many windows of each gesture are drawn (0 = all).
  std::size_t windows_per_gesture = 0;
  ModelConfig model;
  AugmentationPipeline augment;

  void validate() const;
};

// Stable text form of every field; hashed into checkpoints.
std::string describe(const TrainConfig& cfg);
std::uint64_t config_hash(const TrainConfig& cfg);

struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
};

// Seeded uniform shuffle of [0, n); the first floor(n * train_fraction)
// indices (at least one, at most n - 1) become the training part.
Split split_dataset(std::size_t n, double train_fraction, std::uint64_t seed);

class Adam {
 public:
  Adam(double lr, double beta1 = 0.9, double beta2 = 0.999, double epsilon = 1e-8);

  // Applies one bias-corrected update to every parameter with a gradient.
  void step(ParameterStore& params);
  std::size_t steps() const { return t_; }
  double learning_rate() const { return lr_; }

 private:
  double lr_, beta1_, beta2_, eps_;
  std::size_t t_ = 0;
  std::vector<diff::Buffer> m_, v_;
};

// Loss for one batch of window indices into the bank. Unimodal views come
// from the augmentation pipeline driven by `rng`; the multimodal term uses the
// un-augmented normalized window.
diff::Array batch_loss(const WindowBank& bank, std::span<const std::size_t> batch, const TrainConfig& cfg,
                       const ParameterStore& params, Rng& rng);

// Forward, backward and one Adam update. Returns the pre-update loss. Throws
// NumericError naming the step, the loss and the largest gradient norms when
// the loss or any gradient is non-finite.
double train_step(const WindowBank& bank, std::span<const std::size_t> batch, const TrainConfig& cfg,
                  ParameterStore& params, Adam& optimizer, Rng& rng, std::size_t step_index);

struct EpochMetrics {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double wall_ms = 0.0;
};

struct Checkpoint {
  ParameterStore params;
  ModelConfig model;
  std::size_t epoch = 0;
  std::vector<EpochMetrics> history;
  std::uint64_t config_hash = 0;
  std::string metadata;
};

struct FitObserver {
  std::function<void(std::size_t step, double loss)> on_step;
  std::function<void(const EpochMetrics&)> on_epoch;
  // JSON-lines metrics, one object per epoch.
  std::ostream* metrics_log = nullptr;
};

// Trains up to cfg.max_epochs and returns the parameters with the lowest
// validation loss (epoch 0 is the initialisation). When `resume` is given its
// parameters seed the run and training continues from its epoch.
Checkpoint fit(const WindowBank& bank, const TrainConfig& cfg, const FitObserver& observer = {},
               const Checkpoint* resume = nullptr);

// Fresh parameters for cfg.model drawn from cfg.seed.
ParameterStore initial_parameters(const TrainConfig& cfg);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);
// Warning text when the checkpoint was produced under a different config.
std::optional<std::string> config_mismatch(const Checkpoint& ckpt, const TrainConfig& cfg);

}  // namespace gesturerep
