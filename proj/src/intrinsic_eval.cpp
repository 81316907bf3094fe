#include "gesturerep/intrinsic_eval.hpp"

#include "gesturerep/augment.hpp"
#include "gesturerep/errors.hpp"
#include "gesturerep/log.hpp"
#include "text_io.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

namespace gesturerep {

using json = nlohmann::json;

std::string to_string(EmbeddingLayer layer) { return layer == EmbeddingLayer::Projection ? "projection" : "encoder"; }

EmbeddingLayer parse_embedding_layer(const std::string& name) {
  if (name == "projection") return EmbeddingLayer::Projection;
  if (name == "encoder") return EmbeddingLayer::Encoder;
  throw ParameterError("unknown layer '" + name + "' (projection, encoder)");
}

void EmbeddingTable::add(const std::string& id, std::vector<double> v) {
  if (ids.empty() && dim == 0) dim = v.size();
  if (v.size() != dim) throw IntegrityError("embedding for " + id + " has dimension " + std::to_string(v.size()));
  if (!index_.emplace(id, ids.size()).second) throw IntegrityError("duplicate embedding for " + id);
  ids.push_back(id);
  vectors.push_back(std::move(v));
}

const std::vector<double>* EmbeddingTable::find(const std::string& id) const {
  const auto it = index_.find(id);
  return it == index_.end() ? nullptr : &vectors[it->second];
}

std::vector<std::vector<double>> embed_windows(const ParameterStore& params, const ModelConfig& model,
                                               const WindowBank& bank, const std::vector<std::size_t>& windows,
                                               EmbeddingLayer layer, std::size_t batch_size) {
  std::vector<std::vector<double>> out;
  out.reserve(windows.size());
  batch_size = std::max<std::size_t>(1, batch_size);
  for (std::size_t pos = 0; pos < windows.size(); pos += batch_size) {
    const std::size_t end = std::min(windows.size(), pos + batch_size);
    std::vector<SkeletonWindow> views;
    for (std::size_t i = pos; i < end; ++i) views.push_back(bank.normalized[windows[i]]);
    auto z = encode_gesture(params, model.gesture, windows_to_batch(views));
    if (layer == EmbeddingLayer::Projection) z = project(params, model.gesture_projection, z, kGestureProjection);
    const auto vals = z.values();
    const std::size_t d = z.dim(1);
    for (std::size_t r = 0; r < end - pos; ++r) out.emplace_back(vals.begin() + r * d, vals.begin() + (r + 1) * d);
  }
  return out;
}

EmbeddingTable embed_gestures(const ParameterStore& params, const ModelConfig& model, const WindowBank& bank,
                              EmbeddingLayer layer, const std::vector<GestureRecord>* records, std::size_t batch_size) {
  std::vector<std::size_t> all;
  for (const auto& w : bank.windows_of_gesture) all.insert(all.end(), w.begin(), w.end());
  const auto window_emb = embed_windows(params, model, bank, all, layer, batch_size);

  EmbeddingTable table;
  std::size_t cursor = 0;
  for (std::size_t g = 0; g < bank.gesture_ids.size(); ++g) {
    const auto n = bank.windows_of_gesture[g].size();
    std::vector<double> mean(window_emb[cursor].size(), 0.0);
    for (std::size_t k = 0; k < n; ++k)
      for (std::size_t i = 0; i < mean.size(); ++i) mean[i] += window_emb[cursor + k][i];
    for (auto& v : mean) v /= static_cast<double>(n);
    cursor += n;
    table.add(bank.gesture_ids[g], std::move(mean));
  }
  if (records) {
    std::size_t missing = 0;
    std::string first;
    for (const auto& r : *records) {
      if (!table.find(r.gesture_id)) {
        if (missing++ == 0) first = r.gesture_id;
      }
    }
    if (missing) warn(std::to_string(missing) + " gesture(s) have no sampled window and were excluded (first: " + first + ")");
  }
  return table;
}

void save_embedding_table(const std::filesystem::path& path, const EmbeddingTable& table) {
  std::string out = "gesture_id";
  for (std::size_t d = 0; d < table.dim; ++d) out += ",dim_" + std::to_string(d);
  out += '\n';
  for (std::size_t i = 0; i < table.size(); ++i) {
    out += table.ids[i];
    for (double v : table.vectors[i]) out += "," + textio::format_number(v);
    out += '\n';
  }
  textio::write_file_atomic(path, out);
}

EmbeddingTable load_embedding_table(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::string line;
  std::size_t line_no = 1;
  if (!std::getline(in, line)) throw ParseError(path.string() + ":1: missing header");
  const auto header = textio::split_csv(line);
  if (header.empty() || header[0] != "gesture_id") throw ParseError(path.string() + ":1: expected gesture_id column");
  for (std::size_t d = 1; d < header.size(); ++d) {
    if (header[d] != "dim_" + std::to_string(d - 1)) throw ParseError(path.string() + ":1: bad column " + header[d]);
  }
  EmbeddingTable table;
  table.dim = header.size() - 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (textio::is_blank(line)) continue;
    const auto f = textio::split_csv(line);
    if (f.size() != header.size()) {
      throw ParseError(path.string() + ":" + std::to_string(line_no) + ": expected " + std::to_string(header.size()) + " fields");
    }
    std::vector<double> v(table.dim);
    for (std::size_t d = 0; d < table.dim; ++d) {
      if (!textio::parse_number(f[d + 1], v[d])) {
        throw ParseError(path.string() + ":" + std::to_string(line_no) + ": bad number '" + f[d + 1] + "'");
      }
    }
    table.add(f[0], std::move(v));
  }
  return table;
}

// ---- form-feature correlation ------------------------------------------------------------

namespace {

NamedTest run_welch(const std::string& name_a, const std::vector<double>& a, const std::string& name_b,
                    const std::vector<double>& b) {
  NamedTest t{name_a, name_b, std::nullopt, {}};
  if (a.size() < 2 || b.size() < 2) {
    t.note = "not evaluable: fewer than two values in a group";
    return t;
  }
  try {
    t.result = stats::welch_t_test(a, b);
  } catch (const stats::DomainError&) {
    t.note = "not evaluable: zero variance in both groups";
  }
  return t;
}

void adjust_bonferroni(std::vector<NamedTest>& tests) {
  std::vector<double> p;
  for (const auto& t : tests) p.push_back(t.result ? t.result->p_value : 1.0);
  // The family includes tests that could not be run.
  const auto adj = stats::bonferroni(p);
  for (std::size_t i = 0; i < tests.size(); ++i) {
    if (tests[i].result) tests[i].result->adjusted_p = adj[i];
  }
}

json test_json(const NamedTest& t) {
  json j{{"group_a", t.group_a}, {"group_b", t.group_b}};
  if (t.result) {
    const auto& r = *t.result;
    j["method"] = r.method;
    j["statistic"] = r.statistic;
    j["df"] = r.df;
    j["p"] = r.p_value;
    j["p_adjusted"] = r.adjusted_p ? json(*r.adjusted_p) : json(nullptr);
    j["n_a"] = r.n_a;
    j["n_b"] = r.n_b;
    j["mean_a"] = r.mean_a;
    j["mean_b"] = r.mean_b;
  } else {
    j["note"] = t.note;
  }
  return j;
}

}  // namespace

FormCorrelationReport form_feature_correlation(const EmbeddingTable& embeddings,
                                               const std::vector<PairAnnotation>& annotations) {
  std::set<std::string> missing;
  for (const auto& a : annotations) {
    if (!embeddings.find(a.gesture_a)) missing.insert(a.gesture_a);
    if (!embeddings.find(a.gesture_b)) missing.insert(a.gesture_b);
  }
  if (!missing.empty()) {
    std::string msg = "annotated gestures without embeddings:";
    for (const auto& id : missing) msg += " " + id;
    throw IntegrityError(msg);
  }
  FormCorrelationReport rep;
  std::vector<double> sims, counts;
  for (const auto& a : annotations) {
    PairSimilarity p{a.pair_id, a.gesture_a, a.gesture_b, a.shared_count(),
                     stats::cosine_similarity(*embeddings.find(a.gesture_a), *embeddings.find(a.gesture_b))};
    rep.by_shared_count[static_cast<std::size_t>(p.shared_count)].push_back(p.similarity);
    sims.push_back(p.similarity);
    counts.push_back(p.shared_count);
    rep.pairs.push_back(std::move(p));
  }
  rep.spearman = stats::spearman(sims, counts);
  for (std::size_t k = 0; k < 6; ++k) {
    if (!rep.by_shared_count[k].empty()) rep.mean_by_shared_count[k] = stats::mean(rep.by_shared_count[k]);
  }
  for (std::size_t k : {0, 1, 2}) {
    rep.tests.push_back(run_welch("shared_5", rep.by_shared_count[5], "shared_" + std::to_string(k), rep.by_shared_count[k]));
  }
  adjust_bonferroni(rep.tests);
  return rep;
}

// ---- pair sets ----------------------------------------------------------------------------

std::string to_string(PairCondition c) {
  switch (c) {
    case PairCondition::SameRefSameSpk:
      return "same-ref-same-spk";
    case PairCondition::SameRefDiffSpk:
      return "same-ref-diff-spk";
    case PairCondition::DiffRefSameSpk:
      return "diff-ref-same-spk";
    case PairCondition::DiffRefDiffSpk:
      return "diff-ref-diff-spk";
    case PairCondition::SameRefDiffSpkDiffDlg:
      return "same-ref-diff-spk-diff-dlg";
    case PairCondition::DiffRefDiffSpkDiffDlg:
      return "diff-ref-diff-spk-diff-dlg";
  }
  return "?";
}

std::string to_string(Verdict v) {
  switch (v) {
    case Verdict::Supported:
      return "supported";
    case Verdict::NotSupported:
      return "not supported";
    case Verdict::NotEvaluable:
      return "not evaluable";
  }
  return "?";
}

PairCondition classify_pair(const GestureRecord& a, const GestureRecord& b) {
  const bool same_ref = a.referent_id == b.referent_id;
  if (a.dialogue_id != b.dialogue_id) {
    return same_ref ? PairCondition::SameRefDiffSpkDiffDlg : PairCondition::DiffRefDiffSpkDiffDlg;
  }
  const bool same_spk = a.speaker_id == b.speaker_id;
  if (same_ref) return same_spk ? PairCondition::SameRefSameSpk : PairCondition::SameRefDiffSpk;
  return same_spk ? PairCondition::DiffRefSameSpk : PairCondition::DiffRefDiffSpk;
}

std::vector<PairSet> build_pair_sets(const std::vector<GestureRecord>& records, PairScope scope,
                                     const PairSetOptions& options) {
  const std::size_t n_sets = scope == PairScope::WithinDialogue ? 4 : kPairConditionCount;
  std::vector<PairSet> sets;
  for (std::size_t c = 0; c < n_sets; ++c) sets.push_back(PairSet{static_cast<PairCondition>(c), {}, {}, 0.0});
  for (std::size_t i = 0; i < records.size(); ++i)
    for (std::size_t j = i + 1; j < records.size(); ++j) {
      const auto c = static_cast<std::size_t>(classify_pair(records[i], records[j]));
      if (c < n_sets) sets[c].pairs.emplace_back(i, j);
    }
  if (options.max_pairs_per_set > 0) {
    for (std::size_t c = 0; c < n_sets; ++c) {
      auto& p = sets[c].pairs;
      if (p.size() <= options.max_pairs_per_set) continue;
      Rng rng(derive_seed(options.seed, c));
      std::shuffle(p.begin(), p.end(), rng);
      p.resize(options.max_pairs_per_set);
      std::sort(p.begin(), p.end());
    }
  }
  return sets;
}

HypothesisReport hypothesis_battery(const EmbeddingTable& embeddings, const std::vector<GestureRecord>& records,
                                    std::vector<PairSet> sets, double alpha) {
  HypothesisReport rep;
  std::vector<const std::vector<double>*> emb(records.size());
  for (std::size_t i = 0; i < records.size(); ++i) emb[i] = embeddings.find(records[i].gesture_id);

  std::array<const PairSet*, kPairConditionCount> by_condition{};
  for (auto& s : sets) {
    s.scores.clear();
    for (const auto& [a, b] : s.pairs) {
      if (!emb[a] || !emb[b]) {
        ++rep.skipped_pairs;
        continue;
      }
      s.scores.push_back(stats::cosine_similarity(*emb[a], *emb[b]));
    }
    s.mean = s.scores.empty() ? 0.0 : stats::mean(s.scores);
    if (s.scores.size() >= 2 && stats::variance(s.scores) == 0.0) rep.zero_variance_sets.push_back(to_string(s.condition));
  }
  if (rep.skipped_pairs) warn(std::to_string(rep.skipped_pairs) + " pair(s) skipped: gesture without embedding");
  rep.sets = std::move(sets);
  for (const auto& s : rep.sets) by_condition[static_cast<std::size_t>(s.condition)] = &s;

  auto family = [&](std::initializer_list<PairCondition> conds) {
    std::vector<NamedTest> tests;
    std::vector<PairCondition> cs(conds);
    for (std::size_t i = 0; i < cs.size(); ++i)
      for (std::size_t j = i + 1; j < cs.size(); ++j) {
        const auto* a = by_condition[static_cast<std::size_t>(cs[i])];
        const auto* b = by_condition[static_cast<std::size_t>(cs[j])];
        if (!a || !b) continue;
        tests.push_back(run_welch(to_string(cs[i]), a->scores, to_string(cs[j]), b->scores));
      }
    adjust_bonferroni(tests);
    return tests;
  };
  using PC = PairCondition;
  rep.within_tests = family({PC::SameRefSameSpk, PC::SameRefDiffSpk, PC::DiffRefSameSpk, PC::DiffRefDiffSpk});
  if (by_condition[static_cast<std::size_t>(PC::SameRefDiffSpkDiffDlg)]) {
    rep.cross_tests = family({PC::SameRefDiffSpk, PC::DiffRefDiffSpk, PC::SameRefDiffSpkDiffDlg, PC::DiffRefDiffSpkDiffDlg});
  }

  // Greater(a, b): mean of a exceeds mean of b with adjusted p < alpha.
  auto greater = [&](const std::vector<NamedTest>& tests, PC a, PC b) {
    for (const auto& t : tests) {
      const bool forward = t.group_a == to_string(a) && t.group_b == to_string(b);
      const bool backward = t.group_a == to_string(b) && t.group_b == to_string(a);
      if (!forward && !backward) continue;
      if (!t.result) return Verdict::NotEvaluable;
      const double ma = forward ? t.result->mean_a : t.result->mean_b;
      const double mb = forward ? t.result->mean_b : t.result->mean_a;
      return ma > mb && *t.result->adjusted_p < alpha ? Verdict::Supported : Verdict::NotSupported;
    }
    return Verdict::NotEvaluable;
  };
  rep.h1a = greater(rep.within_tests, PC::SameRefSameSpk, PC::DiffRefSameSpk);
  rep.h1b = greater(rep.within_tests, PC::SameRefDiffSpk, PC::DiffRefDiffSpk);
  rep.h2 = greater(rep.within_tests, PC::SameRefSameSpk, PC::SameRefDiffSpk);
  const auto h3a = greater(rep.cross_tests, PC::SameRefDiffSpk, PC::SameRefDiffSpkDiffDlg);
  const auto h3b = greater(rep.cross_tests, PC::DiffRefDiffSpk, PC::DiffRefDiffSpkDiffDlg);
  if (h3a == Verdict::NotEvaluable || h3b == Verdict::NotEvaluable) {
    rep.h3 = Verdict::NotEvaluable;
  } else {
    rep.h3 = h3a == Verdict::Supported && h3b == Verdict::Supported ? Verdict::Supported : Verdict::NotSupported;
  }
  return rep;
}

// ---- reports ------------------------------------------------------------------------------

std::string form_report_json(const FormCorrelationReport& r) {
  json j;
  j["n_pairs"] = r.pairs.size();
  j["spearman"] = {{"rho", r.spearman.rho}, {"p", r.spearman.p_value}, {"n", r.spearman.n}};
  json buckets = json::array();
  for (std::size_t k = 0; k < 6; ++k) {
    buckets.push_back({{"shared_count", k},
                       {"n", r.by_shared_count[k].size()},
                       {"mean", r.mean_by_shared_count[k] ? json(*r.mean_by_shared_count[k]) : json(nullptr)}});
  }
  j["by_shared_count"] = buckets;
  json tests = json::array();
  for (const auto& t : r.tests) tests.push_back(test_json(t));
  j["tests"] = tests;
  return j.dump(2) + "\n";
}

std::string form_pairs_csv(const FormCorrelationReport& r) {
  std::string out = "pair_id,gesture_a,gesture_b,shared_count,similarity\n";
  for (const auto& p : r.pairs) {
    out += p.pair_id + "," + p.gesture_a + "," + p.gesture_b + "," + std::to_string(p.shared_count) + "," +
           textio::format_number(p.similarity) + "\n";
  }
  return out;
}

std::string hypothesis_report_json(const HypothesisReport& r) {
  json j;
  json sets = json::array();
  for (const auto& s : r.sets) {
    sets.push_back({{"condition", to_string(s.condition)}, {"n_pairs", s.pairs.size()}, {"n_scored", s.scores.size()},
                    {"mean", s.mean}});
  }
  j["sets"] = sets;
  j["zero_variance_sets"] = r.zero_variance_sets;
  j["skipped_pairs"] = r.skipped_pairs;
  json within = json::array(), cross = json::array();
  for (const auto& t : r.within_tests) within.push_back(test_json(t));
  for (const auto& t : r.cross_tests) cross.push_back(test_json(t));
  j["within_dialogue_tests"] = within;
  j["cross_dialogue_tests"] = cross;
  j["verdicts"] = {{"H1a", to_string(r.h1a)}, {"H1b", to_string(r.h1b)}, {"H2", to_string(r.h2)}, {"H3", to_string(r.h3)}};
  return j.dump(2) + "\n";
}

std::string form_histogram_text(const FormCorrelationReport& r, std::size_t bins) {
  bins = std::max<std::size_t>(1, bins);
  std::ostringstream os;
  os << "similarity by shared form features (rho = " << r.spearman.rho << ", p = " << r.spearman.p_value << ")\n";
  for (std::size_t k = 0; k < 6; ++k) {
    const auto& v = r.by_shared_count[k];
    os << "shared " << k << " (n=" << v.size() << ")";
    if (r.mean_by_shared_count[k]) os << " mean " << *r.mean_by_shared_count[k];
    os << "\n";
    std::vector<std::size_t> counts(bins, 0);
    for (double s : v) {
      auto b = static_cast<std::size_t>(std::floor((s + 1.0) / 2.0 * static_cast<double>(bins)));
      counts[std::min(b, bins - 1)]++;
    }
    const std::size_t peak = std::max<std::size_t>(1, *std::max_element(counts.begin(), counts.end()));
    for (std::size_t b = 0; b < bins; ++b) {
      const double lo = -1.0 + 2.0 * static_cast<double>(b) / static_cast<double>(bins);
      char label[32];
      std::snprintf(label, sizeof label, "  %+.2f |", lo);
      os << label << std::string(counts[b] * 40 / peak, '#') << " " << counts[b] << "\n";
    }
  }
  return os.str();
}

}  // namespace gesturerep
