#include "gesturerep/probing.hpp"

#include "gesturerep/errors.hpp"
#include "gesturerep/log.hpp"
#include "gesturerep/trainer.hpp"
#include "text_io.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

namespace gesturerep {

using diff::Array;
using json = nlohmann::json;

namespace {

std::vector<double> he_uniform(std::size_t count, std::size_t fan_in, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  std::uniform_real_distribution<double> u(-bound, bound);
  std::vector<double> v(count);
  for (auto& x : v) x = u(rng);
  return v;
}

Array rows_to_array(const std::vector<const std::vector<double>*>& rows, std::size_t dim) {
  std::vector<double> data;
  data.reserve(rows.size() * dim);
  for (const auto* r : rows) data.insert(data.end(), r->begin(), r->end());
  return Array::constant({rows.size(), dim}, std::move(data));
}

std::vector<double> scores_for(const ParameterStore& probe, const ProbeConfig& cfg,
                               const std::vector<ProbeExample>& ex, const std::vector<std::size_t>& idx) {
  std::vector<const std::vector<double>*> a, b;
  for (auto i : idx) {
    a.push_back(&ex[i].a);
    b.push_back(&ex[i].b);
  }
  const auto logits = probe_logits(probe, cfg, rows_to_array(a, cfg.input_dim), rows_to_array(b, cfg.input_dim));
  return {logits.values().begin(), logits.values().end()};
}

std::vector<int> labels_for(const std::vector<ProbeExample>& ex, const std::vector<std::size_t>& idx) {
  std::vector<int> y;
  for (auto i : idx) y.push_back(ex[i].label);
  return y;
}

bool both_classes(const std::vector<int>& labels, const std::vector<std::size_t>& idx) {
  bool pos = false, neg = false;
  for (auto i : idx) (labels[i] ? pos : neg) = true;
  return pos && neg;
}

}  // namespace

void ProbeConfig::validate() const {
  if (input_dim == 0 || hidden == 0) throw ParameterError("probe: widths must be positive");
  const double total = fractions[0] + fractions[1] + fractions[2];
  if (std::abs(total - 1.0) > 1e-9 || fractions[0] <= 0.0 || fractions[1] <= 0.0 || fractions[2] <= 0.0) {
    throw ParameterError("probe: split fractions must be positive and sum to 1");
  }
  if (!(learning_rate >= 0.0)) throw ParameterError("probe: learning rate must be non-negative");
  if (seeds == 0) throw ParameterError("probe: at least one seed required");
  if (batch_size == 0) throw ParameterError("probe: batch size must be positive");
}

ParameterStore init_probe(const ProbeConfig& cfg, Rng& rng) {
  ParameterStore p;
  p.add("probe.fc_weight", {cfg.input_dim, cfg.hidden}, he_uniform(cfg.input_dim * cfg.hidden, cfg.input_dim, rng));
  p.add("probe.fc_bias", {cfg.hidden}, std::vector<double>(cfg.hidden, 0.0));
  if (!cfg.shared_weights) {
    p.add("probe.fc_b_weight", {cfg.input_dim, cfg.hidden}, he_uniform(cfg.input_dim * cfg.hidden, cfg.input_dim, rng));
    p.add("probe.fc_b_bias", {cfg.hidden}, std::vector<double>(cfg.hidden, 0.0));
  }
  p.add("probe.out_weight", {2 * cfg.hidden, 1}, he_uniform(2 * cfg.hidden, 2 * cfg.hidden, rng));
  p.add("probe.out_bias", {1}, {0.0});
  return p;
}

Array probe_logits(const ParameterStore& probe, const ProbeConfig& cfg, const Array& a, const Array& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != cfg.input_dim || b.dim(1) != cfg.input_dim ||
      a.dim(0) != b.dim(0)) {
    throw diff::ShapeError("probe: inputs must both be (N, " + std::to_string(cfg.input_dim) + "), got " +
                           diff::shape_str(a.shape()) + " and " + diff::shape_str(b.shape()));
  }
  const auto ha = diff::relu(diff::add_bias(diff::matmul(a, probe.get("probe.fc_weight")), probe.get("probe.fc_bias")));
  const std::string wb = cfg.shared_weights ? "probe.fc_weight" : "probe.fc_b_weight";
  const std::string bb = cfg.shared_weights ? "probe.fc_bias" : "probe.fc_b_bias";
  const auto hb = diff::relu(diff::add_bias(diff::matmul(b, probe.get(wb)), probe.get(bb)));
  return diff::add_bias(diff::matmul(diff::concat(ha, hb, 1), probe.get("probe.out_weight")), probe.get("probe.out_bias"));
}

Array probe_forward(const ParameterStore& probe, const ProbeConfig& cfg, const Array& a, const Array& b) {
  return diff::sigmoid(probe_logits(probe, cfg, a, b));
}

Array binary_cross_entropy_with_logits(const Array& logits, const std::vector<int>& labels) {
  if (logits.size() != labels.size()) throw diff::ShapeError("bce: one label per logit required");
  std::vector<double> y(labels.begin(), labels.end());
  const auto target = Array::constant(logits.shape(), std::move(y));
  // -[y log s(z) + (1 - y) log(1 - s(z))] = softplus(z) - y z
  return diff::mean(diff::sub(diff::softplus(logits), diff::mul(logits, target)));
}

ProbeSplit split_probe_examples(const std::vector<int>& labels, const ProbeConfig& cfg, std::uint64_t seed) {
  const std::size_t n = labels.size();
  if (n < 3) throw ProbeSplitError("probe: need at least three examples to split");
  for (std::size_t attempt = 0; attempt < cfg.max_split_retries; ++attempt) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(derive_seed(seed, attempt));
    std::shuffle(order.begin(), order.end(), rng);
    const auto n_train = std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(cfg.fractions[0] * n)));
    const auto n_val = std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(cfg.fractions[1] * n)));
    if (n_train + n_val >= n) throw ProbeSplitError("probe: too few examples for a three-way split");
    ProbeSplit s;
    s.train.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
    s.val.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train),
                 order.begin() + static_cast<std::ptrdiff_t>(n_train + n_val));
    s.test.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train + n_val), order.end());
    s.attempts = attempt + 1;
    if (both_classes(labels, s.train) && both_classes(labels, s.val) && both_classes(labels, s.test)) {
      if (attempt > 0) warn("probe split resampled " + std::to_string(attempt) + " time(s) to obtain both classes");
      return s;
    }
  }
  throw ProbeSplitError("probe: no split with both classes in every part after " +
                        std::to_string(cfg.max_split_retries) + " attempts");
}

ProbeRun train_probe(const std::vector<ProbeExample>& examples_in, const ProbeConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  std::vector<int> labels;
  for (const auto& e : examples_in) {
    if (e.a.size() != cfg.input_dim || e.b.size() != cfg.input_dim) {
      throw diff::ShapeError("probe: example dimension does not match input_dim " + std::to_string(cfg.input_dim));
    }
    labels.push_back(e.label);
  }
  const auto split = split_probe_examples(labels, cfg, seed);

  // Standardise with statistics of the training part, both slots pooled.
  std::vector<ProbeExample> ex = examples_in;
  if (cfg.standardize) {
    std::vector<double> mu(cfg.input_dim, 0.0), sd(cfg.input_dim, 0.0);
    const double n = 2.0 * static_cast<double>(split.train.size());
    for (auto i : split.train)
      for (std::size_t d = 0; d < cfg.input_dim; ++d) mu[d] += examples_in[i].a[d] + examples_in[i].b[d];
    for (auto& m : mu) m /= n;
    for (auto i : split.train)
      for (std::size_t d = 0; d < cfg.input_dim; ++d) {
        sd[d] += (examples_in[i].a[d] - mu[d]) * (examples_in[i].a[d] - mu[d]);
        sd[d] += (examples_in[i].b[d] - mu[d]) * (examples_in[i].b[d] - mu[d]);
      }
    for (auto& s : sd) s = std::sqrt(s / n) + 1e-8;
    for (auto& e : ex)
      for (std::size_t d = 0; d < cfg.input_dim; ++d) {
        e.a[d] = (e.a[d] - mu[d]) / sd[d];
        e.b[d] = (e.b[d] - mu[d]) / sd[d];
      }
  }

  Rng rng(derive_seed(seed, 0x9b0bULL));
  auto probe = init_probe(cfg, rng);
  Adam opt(cfg.learning_rate);
  const auto val_labels = labels_for(ex, split.val);
  const auto test_labels = labels_for(ex, split.test);

  ProbeRun run;
  run.split_attempts = split.attempts;
  double best_val = -1.0;
  auto order = split.train;
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t pos = 0; pos < order.size(); pos += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), pos + cfg.batch_size);
      std::vector<const std::vector<double>*> a, b;
      std::vector<int> y;
      for (std::size_t k = pos; k < end; ++k) {
        const auto& e = ex[order[k]];
        const bool swap = std::bernoulli_distribution(0.5)(rng);
        a.push_back(swap ? &e.b : &e.a);
        b.push_back(swap ? &e.a : &e.b);
        y.push_back(e.label);
      }
      probe.zero_grad();
      const auto loss = binary_cross_entropy_with_logits(
          probe_logits(probe, cfg, rows_to_array(a, cfg.input_dim), rows_to_array(b, cfg.input_dim)), y);
      loss.backward();
      opt.step(probe);
    }
    if (cfg.select_best_validation) {
      const double val_auc = stats::roc_auc(scores_for(probe, cfg, ex, split.val), val_labels);
      if (val_auc > best_val) {
        best_val = val_auc;
        run.best_epoch = epoch;
        run.test_auc = stats::roc_auc(scores_for(probe, cfg, ex, split.test), test_labels);
      }
    }
  }
  if (!cfg.select_best_validation || cfg.epochs == 0) {
    run.best_epoch = cfg.epochs;
    run.test_auc = stats::roc_auc(scores_for(probe, cfg, ex, split.test), test_labels);
  }
  return run;
}

std::vector<ProbeResult> run_probe_experiment(const std::vector<PairAnnotation>& annotations,
                                              const EmbeddingTable& trained, const EmbeddingTable& baseline,
                                              const ProbeConfig& cfg) {
  cfg.validate();
  std::set<std::string> missing;
  for (const auto* table : {&trained, &baseline})
    for (const auto& a : annotations) {
      if (!table->find(a.gesture_a)) missing.insert(a.gesture_a);
      if (!table->find(a.gesture_b)) missing.insert(a.gesture_b);
    }
  if (!missing.empty()) {
    std::string msg = "probe: gestures missing from an embedding table:";
    for (const auto& id : missing) msg += " " + id;
    throw IntegrityError(msg);
  }

  std::vector<ProbeResult> results;
  std::vector<double> raw_p;
  for (std::size_t f = 0; f < kFormFeatureCount; ++f) {
    ProbeResult rt{kFormFeatureNames[f], "trained", {}, 0.0, std::nullopt, 1.0, false};
    ProbeResult rb{kFormFeatureNames[f], "random-baseline", {}, 0.0, std::nullopt, 1.0, false};
    for (auto [table, result] : {std::pair{&trained, &rt}, std::pair{&baseline, &rb}}) {
      ProbeConfig c = cfg;
      c.input_dim = table->dim;
      std::vector<ProbeExample> ex;
      for (const auto& a : annotations) ex.push_back({*table->find(a.gesture_a), *table->find(a.gesture_b), a.features[f] ? 1 : 0});
      for (std::size_t s = 0; s < cfg.seeds; ++s) {
        // Run s uses the same split seed for both representations.
        result->aucs.push_back(train_probe(ex, c, derive_seed(cfg.seed, s)).test_auc);
      }
      result->auc_mean = stats::mean(result->aucs);
    }
    const auto mw = stats::mann_whitney_u(rt.aucs, rb.aucs);
    rt.test = mw;
    rb.test = mw;
    raw_p.push_back(mw.p_value);
    results.push_back(std::move(rt));
    results.push_back(std::move(rb));
  }
  const auto adj = stats::benjamini_hochberg(raw_p);
  for (std::size_t f = 0; f < kFormFeatureCount; ++f) {
    auto& rt = results[2 * f];
    auto& rb = results[2 * f + 1];
    rt.p_adjusted = rb.p_adjusted = adj[f];
    rt.test->adjusted_p = rb.test->adjusted_p = adj[f];
    rt.significant = rb.significant = adj[f] < cfg.alpha && rt.auc_mean > rb.auc_mean;
  }
  return results;
}

std::vector<PairAnnotation> shuffle_feature_labels(const std::vector<PairAnnotation>& annotations, std::uint64_t seed) {
  auto out = annotations;
  for (std::size_t f = 0; f < kFormFeatureCount; ++f) {
    std::vector<bool> col;
    for (const auto& a : annotations) col.push_back(a.features[f]);
    Rng rng(derive_seed(seed, f));
    std::shuffle(col.begin(), col.end(), rng);
    for (std::size_t i = 0; i < out.size(); ++i) out[i].features[f] = col[i];
  }
  return out;
}

EmbeddingTable random_baseline_embeddings(const GestureEncoderConfig& encoder, const WindowBank& bank,
                                          std::uint64_t seed) {
  Rng rng(seed);
  ParameterStore store;
  init_gesture_encoder(store, encoder, rng);
  ModelConfig model;
  model.gesture = encoder;
  return embed_gestures(store, model, bank, EmbeddingLayer::Encoder);
}

std::string probe_report_json(const std::vector<ProbeResult>& results) {
  json arr = json::array();
  for (const auto& r : results) {
    arr.push_back({{"feature", r.feature},
                   {"representation", r.representation},
                   {"auc_mean", r.auc_mean},
                   {"auc_values", r.aucs},
                   {"u_statistic", r.test ? json(r.test->statistic) : json(nullptr)},
                   {"p", r.test ? json(r.test->p_value) : json(nullptr)},
                   {"p_adjusted", r.p_adjusted},
                   {"significant", r.significant}});
  }
  return arr.dump(2) + "\n";
}

std::string probe_report_csv(const std::vector<ProbeResult>& results) {
  std::string out = "feature,representation,seed_index,auc\n";
  for (const auto& r : results)
    for (std::size_t s = 0; s < r.aucs.size(); ++s) {
      out += r.feature + "," + r.representation + "," + std::to_string(s) + "," + textio::format_number(r.aucs[s]) + "\n";
    }
  return out;
}

}  // namespace gesturerep
