#pragma once

// Gesture-level embeddings and the intrinsic evaluation battery: similarity
// versus shared form features, and referent/speaker/dialogue pair sets.

#include "gesturerep/corpus.hpp"
#include "gesturerep/stats.hpp"
#include "gesturerep/towers.hpp"

#include <array>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace gesturerep {

enum class EmbeddingLayer { Projection, Encoder };
std::string to_string(EmbeddingLayer layer);
EmbeddingLayer parse_embedding_layer(const std::string& name);

struct EmbeddingTable {
  std::size_t dim = 0;
  std::vector<std::string> ids;
  std::vector<std::vector<double>> vectors;

  void add(const std::string& id, std::vector<double> v);
  // nullptr when absent.
  const std::vector<double>* find(const std::string& id) const;
  std::size_t size() const { return ids.size(); }

 private:
  std::map<std::string, std::size_t> index_;
};

// Window embeddings for bank indices, batched.
std::vector<std::vector<double>> embed_windows(const ParameterStore& params, const ModelConfig& model,
                                               const WindowBank& bank, const std::vector<std::size_t>& windows,
                                               EmbeddingLayer layer, std::size_t batch_size = 64);

// One embedding per gesture: the mean over its windows. Records of `corpus`
// that produced no window are reported with a warning.
EmbeddingTable embed_gestures(const ParameterStore& params, const ModelConfig& model, const WindowBank& bank,
                              EmbeddingLayer layer, const std::vector<GestureRecord>* records = nullptr,
                              std::size_t batch_size = 64);

// CSV: gesture_id,dim_0,...,dim_{k-1}
void save_embedding_table(const std::filesystem::path& path, const EmbeddingTable& table);
EmbeddingTable load_embedding_table(const std::filesystem::path& path);

// ---- form-feature correlation ------------------------------------------------------------

struct PairSimilarity {
  std::string pair_id;
  std::string gesture_a;
  std::string gesture_b;
  int shared_count = 0;
  double similarity = 0.0;
};

struct NamedTest {
  std::string group_a;
  std::string group_b;
  std::optional<stats::TestResult> result;  // empty when not evaluable
  std::string note;
};

struct FormCorrelationReport {
  std::vector<PairSimilarity> pairs;
  stats::Correlation spearman;
  std::array<std::vector<double>, 6> by_shared_count;
  std::array<std::optional<double>, 6> mean_by_shared_count;
  // 5-shared versus 0, 1 and 2 shared, Bonferroni over these tests.
  std::vector<NamedTest> tests;
};

// Throws IntegrityError listing every annotated gesture without an embedding.
FormCorrelationReport form_feature_correlation(const EmbeddingTable& embeddings,
                                               const std::vector<PairAnnotation>& annotations);

// ---- pair sets and hypotheses ------------------------------------------------------------

enum class PairCondition {
  SameRefSameSpk,
  SameRefDiffSpk,
  DiffRefSameSpk,
  DiffRefDiffSpk,
  SameRefDiffSpkDiffDlg,
  DiffRefDiffSpkDiffDlg,
};
inline constexpr std::size_t kPairConditionCount = 6;
std::string to_string(PairCondition c);

enum class PairScope { WithinDialogue, CrossDialogue };

// The condition of an unordered pair of distinct records.
PairCondition classify_pair(const GestureRecord& a, const GestureRecord& b);

struct PairSet {
  PairCondition condition;
  std::vector<std::pair<std::size_t, std::size_t>> pairs;  // record indices, first < second
  std::vector<double> scores;
  double mean = 0.0;
};

struct PairSetOptions {
  // Seeded per-set downsampling cap (0 keeps every pair).
  std::size_t max_pairs_per_set = 0;
  std::uint64_t seed = 0;
};

// Within-dialogue scope yields the four same-dialogue sets; cross-dialogue
// scope adds the two different-dialogue sets. Sets are returned in
// PairCondition order.
std::vector<PairSet> build_pair_sets(const std::vector<GestureRecord>& records, PairScope scope,
                                     const PairSetOptions& options = {});

enum class Verdict { Supported, NotSupported, NotEvaluable };
std::string to_string(Verdict v);

struct HypothesisReport {
  std::vector<PairSet> sets;          // scores filled in
  std::vector<std::string> zero_variance_sets;
  std::size_t skipped_pairs = 0;      // pairs with a gesture lacking an embedding
  std::vector<NamedTest> within_tests;  // all pairs of the four within-dialogue sets
  std::vector<NamedTest> cross_tests;   // all pairs of the four different-speaker sets
  Verdict h1a = Verdict::NotEvaluable;
  Verdict h1b = Verdict::NotEvaluable;
  Verdict h2 = Verdict::NotEvaluable;
  Verdict h3 = Verdict::NotEvaluable;
};

HypothesisReport hypothesis_battery(const EmbeddingTable& embeddings, const std::vector<GestureRecord>& records,
                                    std::vector<PairSet> sets, double alpha = 0.05);

// ---- reports ------------------------------------------------------------------------------

std::string form_report_json(const FormCorrelationReport& report);
std::string form_pairs_csv(const FormCorrelationReport& report);
std::string hypothesis_report_json(const HypothesisReport& report);
// Text histogram of similarities per shared-count bucket.
std::string form_histogram_text(const FormCorrelationReport& report, std::size_t bins = 10);

}  // namespace gesturerep
