#include "gesturerep/corpus.hpp"
#include "gesturerep/errors.hpp"
#include "gesturerep/grad_suite.hpp"
#include "gesturerep/intrinsic_eval.hpp"
#include "gesturerep/log.hpp"
#include "gesturerep/probing.hpp"
#include "gesturerep/run_config.hpp"
#include "gesturerep/synthgen.hpp"
#include "gesturerep/trainer.hpp"
#include "text_io.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <iostream>
#include <random>
#include <sstream>
#include <unistd.h>

namespace fs = std::filesystem;
using namespace gesturerep;

namespace {

enum Exit : int {
  kOk = 0,
  kCheckFailed = 1,
  kUsage = 2,
  kInput = 3,
  kNumeric = 4,
  kInternal = 5,
};

struct CommonFlags {
  std::optional<std::string> config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> profile;
  bool desk = false;
  std::vector<std::string> sets;
  std::optional<std::string> mode;
  std::optional<std::string> layer;
  std::optional<std::string> out;
  std::optional<std::string> data;
};

void add_common(CLI::App* cmd, CommonFlags& f) {
  cmd->add_option("--config", f.config, "key = value config file");
  cmd->add_option("--seed", f.seed, "seed for every random draw (default: entropy, logged)");
  cmd->add_option("--profile", f.profile, "paper or desk")->check(CLI::IsMember({"paper", "desk"}));
  cmd->add_flag("--desk", f.desk, "shorthand for --profile desk");
  cmd->add_option("--set", f.sets, "override a config key, KEY=VALUE (repeatable)");
  cmd->add_option("--mode", f.mode, "unimodal, multimodal or combined")
      ->check(CLI::IsMember({"unimodal", "multimodal", "combined"}));
  cmd->add_option("--layer", f.layer, "projection or encoder")->check(CLI::IsMember({"projection", "encoder"}));
  cmd->add_option("--out", f.out, "output directory");
  cmd->add_option("--data", f.data, "dataset directory");
}

RunConfig resolve(const CommonFlags& f) {
  std::optional<Profile> profile;
  if (f.profile) profile = parse_profile(*f.profile);
  if (f.desk) {
    if (profile && *profile != Profile::Desk) throw ConfigError("--desk conflicts with --profile " + *f.profile);
    profile = Profile::Desk;
  }
  std::optional<fs::path> path;
  if (f.config) path = *f.config;
  RunConfig cfg = load_run_config(path, profile);

  for (const auto& s : f.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects KEY=VALUE, got '" + s + "'");
    const std::string key{textio::trim(std::string_view(s).substr(0, eq))};
    const std::string value{textio::trim(std::string_view(s).substr(eq + 1))};
    if (key == "run.profile") throw ConfigError("use --profile to select a profile");
    set_config_value(cfg, key, value);
  }
  if (f.seed) cfg.propagate_seed(*f.seed);
  if (f.mode) cfg.train.mode = parse_objective_mode(*f.mode);
  if (f.layer) cfg.layer = parse_embedding_layer(*f.layer);
  if (f.out) cfg.out_dir = *f.out;
  if (f.data) cfg.data_dir = *f.data;

  if (!cfg.seed) {
    std::random_device rd;
    const std::uint64_t s = (static_cast<std::uint64_t>(rd()) << 32) ^ rd();
    cfg.propagate_seed(s);
    std::cerr << "seed " << s << " (entropy)\n";
  }
  return cfg;
}

void write_output(const fs::path& path, std::string_view contents) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  textio::write_file_atomic(path, contents);
  std::cerr << "wrote " << path.string() << "\n";
}

void record_config(const RunConfig& cfg, const std::string& command) {
  write_output(cfg.out_dir / (command + ".config.txt"), render_run_config(cfg));
}

struct LoadedData {
  Corpus corpus;
  WindowBank bank;
};

LoadedData load_data(const RunConfig& cfg) {
  LoadedData d;
  d.corpus = load_corpus(cfg.data_dir);
  BankOptions bank = cfg.bank;
  bank.sampling.fps = d.corpus.fps;
  d.bank = build_window_bank(d.corpus, bank);
  if (d.bank.size() == 0) throw IntegrityError(cfg.data_dir.string() + ": no usable gesture windows");
  std::cerr << d.corpus.records.size() << " gestures, " << d.bank.size() << " windows, " << d.corpus.pairs.size()
            << " annotated pairs\n";
  return d;
}

void match_speech_shape(ModelConfig& model, const WindowBank& bank) {
  if (bank.speech.empty()) return;
  model.speech.layers = bank.speech.front().layers;
  model.speech.dims = bank.speech.front().dims;
}

fs::path default_checkpoint(const RunConfig& cfg) { return cfg.out_dir / "model.ckpt"; }
fs::path default_table(const RunConfig& cfg) { return cfg.out_dir / "embeddings.csv"; }

// ---- commands ---------------------------------------------------------------------------

int cmd_synth(const RunConfig& cfg) {
  const SynthCorpus synth = generate(cfg.synth);
  const fs::path target = cfg.out_dir;
  fs::path tmp = target;
  tmp += ".tmp-" + std::to_string(::getpid());
  fs::remove_all(tmp);
  write_synth_corpus(tmp, synth);
  fs::remove_all(target);
  if (target.has_parent_path()) fs::create_directories(target.parent_path());
  fs::rename(tmp, target);
  std::cerr << "wrote " << target.string() << ": " << synth.corpus.records.size() << " gestures, "
            << synth.corpus.pairs.size() << " annotated pairs\n";

  const GeometryReport g = planted_geometry_check(synth);
  std::fprintf(stderr, "planted geometry: same-referent %.4f vs different %.4f (n=%zu/%zu), p=%.3g, %s\n",
               g.mean_same, g.mean_different, g.same_referent_pairs, g.different_referent_pairs, g.p_value,
               g.passed ? "ok" : "WEAK");
  return kOk;
}

int cmd_train(RunConfig cfg, const std::optional<std::string>& resume_path) {
  LoadedData d = load_data(cfg);
  match_speech_shape(cfg.train.model, d.bank);
  cfg.train.validate();
  record_config(cfg, "train");

  std::optional<Checkpoint> resume;
  if (resume_path) {
    resume = load_checkpoint(*resume_path);
    if (auto msg = config_mismatch(*resume, cfg.train)) warn(*msg);
  }

  std::ostringstream metrics;
  FitObserver obs;
  obs.metrics_log = &metrics;
  obs.on_epoch = [](const EpochMetrics& m) {
    std::fprintf(stderr, "epoch %3zu  train %.5f  val %.5f  %.0f ms\n", m.epoch, m.train_loss, m.val_loss, m.wall_ms);
  };
  Checkpoint ckpt = fit(d.bank, cfg.train, obs, resume ? &*resume : nullptr);
  ckpt.metadata = "data=" + cfg.data_dir.string() + " seed=" + std::to_string(*cfg.seed);

  fs::create_directories(cfg.out_dir);
  save_checkpoint(default_checkpoint(cfg), ckpt);
  std::cerr << "wrote " << default_checkpoint(cfg).string() << " (epoch " << ckpt.epoch << ")\n";
  write_output(cfg.out_dir / "metrics.jsonl", metrics.str());
  return kOk;
}

int cmd_embed(RunConfig cfg, const std::optional<std::string>& ckpt_path, bool random_init,
              const std::optional<std::string>& table_path) {
  LoadedData d = load_data(cfg);
  ParameterStore params;
  ModelConfig model;
  if (random_init) {
    match_speech_shape(cfg.train.model, d.bank);
    model = cfg.train.model;
    params = initial_parameters(cfg.train);
  } else {
    Checkpoint ckpt = load_checkpoint(ckpt_path ? fs::path(*ckpt_path) : default_checkpoint(cfg));
    model = ckpt.model;
    params = std::move(ckpt.params);
  }
  const EmbeddingTable table = embed_gestures(params, model, d.bank, cfg.layer, &d.corpus.records);

  fs::path out = table_path ? fs::path(*table_path) : default_table(cfg);
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  save_embedding_table(out, table);
  std::cerr << "wrote " << out.string() << ": " << table.size() << " x " << table.dim << " (" << to_string(cfg.layer)
            << ")\n";
  return kOk;
}

int cmd_eval_form(const RunConfig& cfg, const std::optional<std::string>& table_path) {
  const Corpus corpus = load_corpus(cfg.data_dir);
  if (corpus.pairs.empty()) throw IntegrityError(cfg.data_dir.string() + ": no pair annotations");
  const EmbeddingTable table = load_embedding_table(table_path ? fs::path(*table_path) : default_table(cfg));
  const FormCorrelationReport report = form_feature_correlation(table, corpus.pairs);

  write_output(cfg.out_dir / "form_report.json", form_report_json(report));
  write_output(cfg.out_dir / "form_pairs.csv", form_pairs_csv(report));
  std::cerr << form_histogram_text(report);
  std::fprintf(stderr, "spearman rho %.4f  p %.3g  n %zu\n", report.spearman.rho, report.spearman.p_value,
               report.spearman.n);
  return kOk;
}

int cmd_eval_dialogue(const RunConfig& cfg, const std::optional<std::string>& table_path) {
  const Corpus corpus = load_corpus(cfg.data_dir);
  const EmbeddingTable table = load_embedding_table(table_path ? fs::path(*table_path) : default_table(cfg));
  auto sets = build_pair_sets(corpus.records, PairScope::CrossDialogue, cfg.pair_sets);
  const HypothesisReport report = hypothesis_battery(table, corpus.records, std::move(sets), cfg.alpha);

  write_output(cfg.out_dir / "hypotheses.json", hypothesis_report_json(report));
  for (const auto& s : report.sets) {
    std::fprintf(stderr, "%-28s n %7zu  mean %.4f\n", to_string(s.condition).c_str(), s.scores.size(), s.mean);
  }
  std::fprintf(stderr, "H1a %s  H1b %s  H2 %s  H3 %s\n", to_string(report.h1a).c_str(), to_string(report.h1b).c_str(),
               to_string(report.h2).c_str(), to_string(report.h3).c_str());
  return kOk;
}

int cmd_probe(RunConfig cfg, const std::optional<std::string>& ckpt_path, bool shuffle) {
  LoadedData d = load_data(cfg);
  if (d.corpus.pairs.empty()) throw IntegrityError(cfg.data_dir.string() + ": no pair annotations");
  Checkpoint ckpt = load_checkpoint(ckpt_path ? fs::path(*ckpt_path) : default_checkpoint(cfg));

  const EmbeddingTable trained =
      embed_gestures(ckpt.params, ckpt.model, d.bank, EmbeddingLayer::Encoder, &d.corpus.records);
  const EmbeddingTable baseline = random_baseline_embeddings(ckpt.model.gesture, d.bank, derive_seed(*cfg.seed, 11));
  cfg.probe.input_dim = trained.dim;
  cfg.probe.validate();
  record_config(cfg, "probe");

  auto pairs = d.corpus.pairs;
  if (shuffle) pairs = shuffle_feature_labels(pairs, derive_seed(*cfg.seed, 12));
  const auto results = run_probe_experiment(pairs, trained, baseline, cfg.probe);

  write_output(cfg.out_dir / "probe_report.json", probe_report_json(results));
  write_output(cfg.out_dir / "probe_report.csv", probe_report_csv(results));
  for (const auto& r : results) {
    if (r.representation != "trained") continue;
    double base = 0.0;
    for (const auto& b : results) {
      if (b.feature == r.feature && b.representation != "trained") base = b.auc_mean;
    }
    std::fprintf(stderr, "%-11s trained %.4f  baseline %.4f  p_adj %.3g%s\n", r.feature.c_str(), r.auc_mean, base,
                 r.p_adjusted, r.significant ? "  *" : "");
  }
  return kOk;
}

int cmd_grad_check(const RunConfig& cfg) {
  GradSuiteOptions opt;
  opt.seed = *cfg.seed;
  opt.temperature = cfg.train.temperature;
  const auto entries = run_grad_suite(opt);

  nlohmann::ordered_json doc = nlohmann::ordered_json::array();
  double worst = 0.0;
  for (const auto& e : entries) {
    doc.push_back({{"loss", e.loss},
                   {"batch_size", e.batch_size},
                   {"coordinates", e.coordinates},
                   {"max_relative_error", e.max_relative_error},
                   {"relu_margin", e.relu_margin},
                   {"draws", e.draws}});
    std::fprintf(stderr, "%-10s N=%zu  coords %5zu  max rel err %.3e\n", e.loss.c_str(), e.batch_size, e.coordinates,
                 e.max_relative_error);
    worst = std::max(worst, e.max_relative_error);
  }
  write_output(cfg.out_dir / "grad_check.json", doc.dump(2) + "\n");
  if (worst >= 1e-4) {
    std::fprintf(stderr, "gradient check failed: %.3e >= 1e-4\n", worst);
    return kCheckFailed;
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Contrastive gesture representation toolkit"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all");

  bool list_keys = false;
  app.add_flag("--list-keys", list_keys, "print every config key and exit");

  CommonFlags f;
  std::optional<std::string> ckpt_path, resume_path, table_path;
  bool random_init = false, shuffle = false;

  auto* synth = app.add_subcommand("synth", "generate a synthetic corpus into --out");
  auto* train = app.add_subcommand("train", "train both towers on --data");
  auto* embed = app.add_subcommand("embed", "write a gesture embedding table");
  auto* eval_form = app.add_subcommand("eval-form", "form-feature correlation report");
  auto* eval_dialogue = app.add_subcommand("eval-dialogue", "within/cross-dialogue hypothesis battery");
  auto* probe = app.add_subcommand("probe", "form-feature probes, trained versus random encoder");
  auto* grad = app.add_subcommand("grad-check", "finite-difference check of every loss and tower");
  for (auto* c : {synth, train, embed, eval_form, eval_dialogue, probe, grad}) add_common(c, f);

  train->add_option("--resume", resume_path, "continue from a checkpoint");
  embed->add_option("--checkpoint", ckpt_path, "checkpoint (default OUT/model.ckpt)");
  embed->add_flag("--random-init", random_init, "embed with freshly initialised parameters");
  embed->add_option("--table", table_path, "output table (default OUT/embeddings.csv)");
  eval_form->add_option("--table", table_path, "embedding table (default OUT/embeddings.csv)");
  eval_dialogue->add_option("--table", table_path, "embedding table (default OUT/embeddings.csv)");
  probe->add_option("--checkpoint", ckpt_path, "checkpoint (default OUT/model.ckpt)");
  probe->add_flag("--shuffle-labels", shuffle, "permute feature labels (null run)");

  if (argc > 1 && std::string_view(argv[1]) == "--list-keys") {
    for (const auto& k : documented_keys()) std::cout << k.key << "\t" << k.description << "\n";
    return kOk;
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    const RunConfig cfg = resolve(f);
    if (*synth) return cmd_synth(cfg);
    if (*train) return cmd_train(cfg, resume_path);
    if (*embed) return cmd_embed(cfg, ckpt_path, random_init, table_path);
    if (*eval_form) return cmd_eval_form(cfg, table_path);
    if (*eval_dialogue) return cmd_eval_dialogue(cfg, table_path);
    if (*probe) return cmd_probe(cfg, ckpt_path, shuffle);
    if (*grad) return cmd_grad_check(cfg);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kUsage;
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kInput;
  } catch (const ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kInput;
  } catch (const FormatError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kInput;
  } catch (const IntegrityError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kInput;
  } catch (const diff::NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return kNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kInternal;
  }
  return kUsage;
}
