#pragma once

// Pairwise diagnostic probes on frozen gesture embeddings.
//
// probe(a, b) = sigmoid(w2 . [relu(W1 a + b1), relu(W1' b + b1')] + b2)
// with W1' = W1 unless shared_weights is off.

#include "gesturerep/intrinsic_eval.hpp"
#include "gesturerep/stats.hpp"
#include "gesturerep/towers.hpp"

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace gesturerep {

struct ProbeConfig {
  std::size_t input_dim = 256;
  std::size_t hidden = 32;
  std::size_t epochs = 50;
  double learning_rate = 5e-4;
  std::array<double, 3> fractions{0.6, 0.2, 0.2};
  std::size_t seeds = 100;
  double alpha = 0.05;
  std::size_t batch_size = 16;
  bool shared_weights = true;
  bool select_best_validation = true;
  // Inputs standardised with training-split statistics.
  bool standardize = true;
  std::size_t max_split_retries = 20;
  std::uint64_t seed = 0;

  void validate() const;
};

class ProbeSplitError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

ParameterStore init_probe(const ProbeConfig& cfg, Rng& rng);

// a, b: (N, input_dim) -> probabilities (N, 1).
diff::Array probe_logits(const ParameterStore& probe, const ProbeConfig& cfg, const diff::Array& a, const diff::Array& b);
diff::Array probe_forward(const ParameterStore& probe, const ProbeConfig& cfg, const diff::Array& a, const diff::Array& b);
// Mean binary cross-entropy from logits, computed stably.
diff::Array binary_cross_entropy_with_logits(const diff::Array& logits, const std::vector<int>& labels);

struct ProbeExample {
  std::vector<double> a;
  std::vector<double> b;
  int label = 0;
};

struct ProbeSplit {
  std::vector<std::size_t> train, val, test;
  std::size_t attempts = 1;
};

// Seeded split with every part containing both classes; retries with derived
// seeds and throws ProbeSplitError after cfg.max_split_retries attempts.
ProbeSplit split_probe_examples(const std::vector<int>& labels, const ProbeConfig& cfg, std::uint64_t seed);

struct ProbeRun {
  double test_auc = 0.5;
  std::size_t best_epoch = 0;
  std::size_t split_attempts = 1;
};

ProbeRun train_probe(const std::vector<ProbeExample>& examples, const ProbeConfig& cfg, std::uint64_t seed);

struct ProbeResult {
  std::string feature;
  std::string representation;  // "trained" or "random-baseline"
  std::vector<double> aucs;
  double auc_mean = 0.0;
  std::optional<stats::TestResult> test;  // trained versus baseline
  double p_adjusted = 1.0;
  bool significant = false;
};

// Five features x two representations. Throws IntegrityError when either
// table misses an annotated gesture.
std::vector<ProbeResult> run_probe_experiment(const std::vector<PairAnnotation>& annotations,
                                              const EmbeddingTable& trained, const EmbeddingTable& baseline,
                                              const ProbeConfig& cfg);

// Each feature column permuted independently across pairs.
std::vector<PairAnnotation> shuffle_feature_labels(const std::vector<PairAnnotation>& annotations, std::uint64_t seed);

// Frozen random-init encoder, encoder-layer outputs, gesture-level means.
EmbeddingTable random_baseline_embeddings(const GestureEncoderConfig& encoder, const WindowBank& bank,
                                          std::uint64_t seed);

std::string probe_report_json(const std::vector<ProbeResult>& results);
std::string probe_report_csv(const std::vector<ProbeResult>& results);

}  // namespace gesturerep
