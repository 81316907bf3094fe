#include "gesturerep/run_config.hpp"

#include "gesturerep/errors.hpp"
#include "text_io.hpp"

#include <functional>
#include <map>
#include <sstream>

namespace gesturerep {

namespace {

template <typename T>
T number(const std::string& key, const std::string& value) {
  T out{};
  if (!textio::parse_number(value, out)) throw ConfigError(key + ": expected a number, got '" + value + "'");
  return out;
}

bool boolean(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1" || value == "yes") return true;
  if (value == "false" || value == "0" || value == "no") return false;
  throw ConfigError(key + ": expected true or false, got '" + value + "'");
}

std::vector<std::string> list(const std::string& value) {
  std::vector<std::string> out;
  for (auto& f : textio::split_csv(value)) {
    if (!f.empty()) out.push_back(f);
  }
  return out;
}

std::vector<std::size_t> size_list(const std::string& key, const std::string& value) {
  std::vector<std::size_t> out;
  for (const auto& f : list(value)) out.push_back(number<std::size_t>(key, f));
  if (out.empty()) throw ConfigError(key + ": empty list");
  return out;
}

template <typename T>
std::string join(const std::vector<T>& v) {
  std::ostringstream os;
  for (std::size_t i = 0; i < v.size(); ++i) os << (i ? "," : "") << v[i];
  return os.str();
}

std::string fmt(double v) { return textio::format_number(v); }
std::string fmt(bool v) { return v ? "true" : "false"; }

struct KeyHandler {
  std::string description;
  std::function<void(RunConfig&, const std::string& key, const std::string& value)> set;
  std::function<std::string(const RunConfig&)> get;
};

const std::vector<std::pair<std::string, KeyHandler>>& handlers() {
  using H = KeyHandler;
  static const std::vector<std::pair<std::string, KeyHandler>> table = {
      {"run.profile", H{"paper or desk; selects the defaults below",
                        [](RunConfig&, const std::string&, const std::string& v) { parse_profile(v); },
                        [](const RunConfig& c) { return to_string(c.profile); }}},
      {"run.seed", H{"single seed for every random draw",
                     [](RunConfig& c, const std::string& k, const std::string& v) { c.propagate_seed(number<std::uint64_t>(k, v)); },
                     [](const RunConfig& c) { return c.seed ? std::to_string(*c.seed) : std::string("entropy"); }}},
      {"run.data", H{"dataset directory", [](RunConfig& c, const std::string&, const std::string& v) { c.data_dir = v; },
                     [](const RunConfig& c) { return c.data_dir.string(); }}},
      {"run.out", H{"output directory", [](RunConfig& c, const std::string&, const std::string& v) { c.out_dir = v; },
                    [](const RunConfig& c) { return c.out_dir.string(); }}},

      {"data.window_seconds", H{"gesture window length in seconds",
                                [](RunConfig& c, const std::string& k, const std::string& v) { c.bank.sampling.window_seconds = number<double>(k, v); },
                                [](const RunConfig& c) { return fmt(c.bank.sampling.window_seconds); }}},
      {"data.offset_frames", H{"sliding-window step in frames",
                               [](RunConfig& c, const std::string& k, const std::string& v) { c.bank.sampling.offset_frames = number<std::int64_t>(k, v); },
                               [](const RunConfig& c) { return std::to_string(c.bank.sampling.offset_frames); }}},
      {"data.min_overlap", H{"required stroke overlap as a fraction of the window",
                             [](RunConfig& c, const std::string& k, const std::string& v) { c.bank.sampling.min_overlap = number<double>(k, v); },
                             [](const RunConfig& c) { return fmt(c.bank.sampling.min_overlap); }}},
      {"data.speech_window_seconds", H{"speech window length in seconds",
                                       [](RunConfig& c, const std::string& k, const std::string& v) { c.bank.speech_window_seconds = number<double>(k, v); },
                                       [](const RunConfig& c) { return fmt(c.bank.speech_window_seconds); }}},
      {"data.speech_margin_seconds", H{"speech context added before and after a gesture window",
                                       [](RunConfig& c, const std::string& k, const std::string& v) { c.bank.speech_margin_seconds = number<double>(k, v); },
                                       [](const RunConfig& c) { return fmt(c.bank.speech_margin_seconds); }}},

      {"train.mode", H{"unimodal, multimodal or combined",
                       [](RunConfig& c, const std::string&, const std::string& v) { c.train.mode = parse_objective_mode(v); },
                       [](const RunConfig& c) { return to_string(c.train.mode); }}},
      {"train.lr", H{"Adam learning rate", [](RunConfig& c, const std::string& k, const std::string& v) { c.train.learning_rate = number<double>(k, v); },
                     [](const RunConfig& c) { return fmt(c.train.learning_rate); }}},
      {"train.batch_size", H{"windows per batch", [](RunConfig& c, const std::string& k, const std::string& v) { c.train.batch_size = number<std::size_t>(k, v); },
                             [](const RunConfig& c) { return std::to_string(c.train.batch_size); }}},
      {"train.epochs", H{"maximum epochs", [](RunConfig& c, const std::string& k, const std::string& v) { c.train.max_epochs = number<std::size_t>(k, v); },
                         [](const RunConfig& c) { return std::to_string(c.train.max_epochs); }}},
      {"train.temperature", H{"contrastive temperature", [](RunConfig& c, const std::string& k, const std::string& v) { c.train.temperature = number<double>(k, v); },
                              [](const RunConfig& c) { return fmt(c.train.temperature); }}},
      {"train.val_fraction", H{"validation share of windows",
                               [](RunConfig& c, const std::string& k, const std::string& v) { c.train.validation_fraction = number<double>(k, v); },
                               [](const RunConfig& c) { return fmt(c.train.validation_fraction); }}},
      {"train.beta1", H{"Adam beta1", [](RunConfig& c, const std::string& k, const std::string& v) { c.train.beta1 = number<double>(k, v); },
                        [](const RunConfig& c) { return fmt(c.train.beta1); }}},
      {"train.beta2", H{"Adam beta2", [](RunConfig& c, const std::string& k, const std::string& v) { c.train.beta2 = number<double>(k, v); },
                        [](const RunConfig& c) { return fmt(c.train.beta2); }}},
      {"train.eps", H{"Adam epsilon", [](RunConfig& c, const std::string& k, const std::string& v) { c.train.adam_epsilon = number<double>(k, v); },
                      [](const RunConfig& c) { return fmt(c.train.adam_epsilon); }}},
      {"train.windows_per_gesture", H{"windows drawn per gesture per epoch (0 = all)",
                                      [](RunConfig& c, const std::string& k, const std::string& v) { c.train.windows_per_gesture = number<std::size_t>(k, v); },
                                      [](const RunConfig& c) { return std::to_string(c.train.windows_per_gesture); }}},

      {"model.widths", H{"gesture encoder block widths",
                         [](RunConfig& c, const std::string& k, const std::string& v) { c.train.model.gesture.widths = size_list(k, v); },
                         [](const RunConfig& c) { return join(c.train.model.gesture.widths); }}},
      {"model.strides", H{"gesture encoder temporal strides",
                          [](RunConfig& c, const std::string& k, const std::string& v) { c.train.model.gesture.strides = size_list(k, v); },
                          [](const RunConfig& c) { return join(c.train.model.gesture.strides); }}},
      {"model.kernel", H{"temporal kernel size", [](RunConfig& c, const std::string& k, const std::string& v) { c.train.model.gesture.temporal_kernel = number<std::size_t>(k, v); },
                         [](const RunConfig& c) { return std::to_string(c.train.model.gesture.temporal_kernel); }}},
      {"model.min_frames", H{"shortest accepted window in frames",
                             [](RunConfig& c, const std::string& k, const std::string& v) { c.train.model.gesture.min_frames = number<std::size_t>(k, v); },
                             [](const RunConfig& c) { return std::to_string(c.train.model.gesture.min_frames); }}},
      {"model.residual", H{"residual connections where shapes permit",
                           [](RunConfig& c, const std::string& k, const std::string& v) { c.train.model.gesture.residual = boolean(k, v); },
                           [](const RunConfig& c) { return fmt(c.train.model.gesture.residual); }}},
      {"model.gesture_dim", H{"gesture embedding size",
                              [](RunConfig& c, const std::string& k, const std::string& v) {
                                c.train.model.gesture.output_dim = number<std::size_t>(k, v);
                                c.train.model.gesture_projection.input_dim = c.train.model.gesture.output_dim;
                              },
                              [](const RunConfig& c) { return std::to_string(c.train.model.gesture.output_dim); }}},
      {"model.speech_hidden", H{"speech head hidden width",
                                [](RunConfig& c, const std::string& k, const std::string& v) { c.train.model.speech.hidden = number<std::size_t>(k, v); },
                                [](const RunConfig& c) { return std::to_string(c.train.model.speech.hidden); }}},
      {"model.speech_dim", H{"speech embedding size",
                             [](RunConfig& c, const std::string& k, const std::string& v) {
                               c.train.model.speech.output_dim = number<std::size_t>(k, v);
                               c.train.model.speech_projection.input_dim = c.train.model.speech.output_dim;
                             },
                             [](const RunConfig& c) { return std::to_string(c.train.model.speech.output_dim); }}},
      {"model.projection_dim", H{"joint embedding size of both projection heads",
                                 [](RunConfig& c, const std::string& k, const std::string& v) {
                                   const auto d = number<std::size_t>(k, v);
                                   c.train.model.gesture_projection.output_dim = d;
                                   c.train.model.speech_projection.output_dim = d;
                                 },
                                 [](const RunConfig& c) { return std::to_string(c.train.model.gesture_projection.output_dim); }}},

      {"augment.kinds", H{"augmentations for positive views",
                          [](RunConfig& c, const std::string& k, const std::string& v) {
                            std::vector<AugmentationKind> kinds;
                            try {
                              for (const auto& n : list(v)) kinds.push_back(parse_augmentation_kind(n));
                            } catch (const std::exception& e) {
                              throw ConfigError(k + ": " + e.what());
                            }
                            c.train.augment.kinds = kinds;
                            c.train.augment.per_kind_probability.clear();
                          },
                          [](const RunConfig& c) {
                            std::vector<std::string> names;
                            for (auto kind : c.train.augment.kinds) names.push_back(to_string(kind));
                            return join(names);
                          }}},
      {"augment.probability", H{"probability of applying each augmentation",
                                [](RunConfig& c, const std::string& k, const std::string& v) { c.train.augment.probability = number<double>(k, v); },
                                [](const RunConfig& c) { return fmt(c.train.augment.probability); }}},
      {"augment.seed", H{"seed for standalone pipeline draws",
                         [](RunConfig& c, const std::string& k, const std::string& v) { c.train.augment.seed = number<std::uint64_t>(k, v); },
                         [](const RunConfig& c) { return std::to_string(c.train.augment.seed); }}},

      {"synth.dialogues", H{"synthetic dialogues", [](RunConfig& c, const std::string& k, const std::string& v) { c.synth.n_dialogues = number<std::size_t>(k, v); },
                            [](const RunConfig& c) { return std::to_string(c.synth.n_dialogues); }}},
      {"synth.speakers", H{"speakers per dialogue", [](RunConfig& c, const std::string& k, const std::string& v) { c.synth.speakers_per_dialogue = number<std::size_t>(k, v); },
                           [](const RunConfig& c) { return std::to_string(c.synth.speakers_per_dialogue); }}},
      {"synth.referents", H{"referents per dialogue", [](RunConfig& c, const std::string& k, const std::string& v) { c.synth.referents = number<std::size_t>(k, v); },
                            [](const RunConfig& c) { return std::to_string(c.synth.referents); }}},
      {"synth.gestures_per_speaker", H{"gestures per speaker",
                                       [](RunConfig& c, const std::string& k, const std::string& v) { c.synth.gestures_per_speaker = number<std::size_t>(k, v); },
                                       [](const RunConfig& c) { return std::to_string(c.synth.gestures_per_speaker); }}},
      {"synth.fps", H{"frame rate", [](RunConfig& c, const std::string& k, const std::string& v) { c.synth.fps = number<int>(k, v); },
                      [](const RunConfig& c) { return std::to_string(c.synth.fps); }}},
      {"synth.noise_scale", H{"master noise multiplier", [](RunConfig& c, const std::string& k, const std::string& v) { c.synth.noise_scale = number<double>(k, v); },
                              [](const RunConfig& c) { return fmt(c.synth.noise_scale); }}},
      {"synth.attribute_redraw", H{"probability of redrawing a form attribute per gesture",
                                   [](RunConfig& c, const std::string& k, const std::string& v) { c.synth.attribute_redraw = number<double>(k, v); },
                                   [](const RunConfig& c) { return fmt(c.synth.attribute_redraw); }}},
      {"synth.prototype_share", H{"probability a dialogue keeps the global referent prototype",
                                  [](RunConfig& c, const std::string& k, const std::string& v) { c.synth.prototype_share = number<double>(k, v); },
                                  [](const RunConfig& c) { return fmt(c.synth.prototype_share); }}},
      {"synth.keypoint_noise", H{"keypoint noise in pixels",
                                 [](RunConfig& c, const std::string& k, const std::string& v) { c.synth.keypoint_noise_px = number<double>(k, v); },
                                 [](const RunConfig& c) { return fmt(c.synth.keypoint_noise_px); }}},
      {"synth.gesture_nuisance", H{"per-gesture drift and amplitude noise",
                                   [](RunConfig& c, const std::string& k, const std::string& v) { c.synth.gesture_nuisance = number<double>(k, v); },
                                   [](const RunConfig& c) { return fmt(c.synth.gesture_nuisance); }}},
      {"synth.speaker_style", H{"speaker style scale", [](RunConfig& c, const std::string& k, const std::string& v) { c.synth.speaker_style = number<double>(k, v); },
                                [](const RunConfig& c) { return fmt(c.synth.speaker_style); }}},
      {"synth.dialogue_style", H{"dialogue style scale", [](RunConfig& c, const std::string& k, const std::string& v) { c.synth.dialogue_style = number<double>(k, v); },
                                 [](const RunConfig& c) { return fmt(c.synth.dialogue_style); }}},
      {"synth.speech_signal", H{"referent signal strength in speech features",
                                [](RunConfig& c, const std::string& k, const std::string& v) { c.synth.speech_signal = number<double>(k, v); },
                                [](const RunConfig& c) { return fmt(c.synth.speech_signal); }}},
      {"synth.speech_noise", H{"speech feature noise", [](RunConfig& c, const std::string& k, const std::string& v) { c.synth.speech_noise = number<double>(k, v); },
                               [](const RunConfig& c) { return fmt(c.synth.speech_noise); }}},

      {"probe.hidden", H{"per-gesture probe width", [](RunConfig& c, const std::string& k, const std::string& v) { c.probe.hidden = number<std::size_t>(k, v); },
                         [](const RunConfig& c) { return std::to_string(c.probe.hidden); }}},
      {"probe.epochs", H{"probe training epochs", [](RunConfig& c, const std::string& k, const std::string& v) { c.probe.epochs = number<std::size_t>(k, v); },
                         [](const RunConfig& c) { return std::to_string(c.probe.epochs); }}},
      {"probe.lr", H{"probe learning rate", [](RunConfig& c, const std::string& k, const std::string& v) { c.probe.learning_rate = number<double>(k, v); },
                     [](const RunConfig& c) { return fmt(c.probe.learning_rate); }}},
      {"probe.seeds", H{"probe runs per feature and representation",
                        [](RunConfig& c, const std::string& k, const std::string& v) { c.probe.seeds = number<std::size_t>(k, v); },
                        [](const RunConfig& c) { return std::to_string(c.probe.seeds); }}},
      {"probe.batch_size", H{"probe mini-batch size", [](RunConfig& c, const std::string& k, const std::string& v) { c.probe.batch_size = number<std::size_t>(k, v); },
                             [](const RunConfig& c) { return std::to_string(c.probe.batch_size); }}},
      {"probe.shared_weights", H{"share the per-gesture layer across both slots",
                                 [](RunConfig& c, const std::string& k, const std::string& v) { c.probe.shared_weights = boolean(k, v); },
                                 [](const RunConfig& c) { return fmt(c.probe.shared_weights); }}},
      {"probe.selection", H{"best (validation AUC) or final epoch",
                            [](RunConfig& c, const std::string& k, const std::string& v) {
                              if (v != "best" && v != "final") throw ConfigError(k + ": expected best or final");
                              c.probe.select_best_validation = v == "best";
                            },
                            [](const RunConfig& c) { return std::string(c.probe.select_best_validation ? "best" : "final"); }}},
      {"probe.standardize", H{"standardise probe inputs with training statistics",
                              [](RunConfig& c, const std::string& k, const std::string& v) { c.probe.standardize = boolean(k, v); },
                              [](const RunConfig& c) { return fmt(c.probe.standardize); }}},
      {"probe.split", H{"train,validation,test fractions",
                        [](RunConfig& c, const std::string& k, const std::string& v) {
                          const auto parts = list(v);
                          if (parts.size() != 3) throw ConfigError(k + ": expected three fractions");
                          for (std::size_t i = 0; i < 3; ++i) c.probe.fractions[i] = number<double>(k, parts[i]);
                        },
                        [](const RunConfig& c) {
                          return fmt(c.probe.fractions[0]) + "," + fmt(c.probe.fractions[1]) + "," + fmt(c.probe.fractions[2]);
                        }}},

      {"eval.layer", H{"projection or encoder", [](RunConfig& c, const std::string&, const std::string& v) { c.layer = parse_embedding_layer(v); },
                       [](const RunConfig& c) { return to_string(c.layer); }}},
      {"eval.max_pairs_per_set", H{"seeded cap per pair set (0 = all)",
                                   [](RunConfig& c, const std::string& k, const std::string& v) { c.pair_sets.max_pairs_per_set = number<std::size_t>(k, v); },
                                   [](const RunConfig& c) { return std::to_string(c.pair_sets.max_pairs_per_set); }}},
      {"eval.alpha", H{"significance level", [](RunConfig& c, const std::string& k, const std::string& v) {
                         c.alpha = number<double>(k, v);
                         c.probe.alpha = c.alpha;
                       },
                       [](const RunConfig& c) { return fmt(c.alpha); }}},
  };
  return table;
}

}  // namespace

std::string to_string(Profile p) { return p == Profile::Paper ? "paper" : "desk"; }

Profile parse_profile(const std::string& name) {
  if (name == "paper") return Profile::Paper;
  if (name == "desk") return Profile::Desk;
  throw ConfigError("unknown profile '" + name + "' (paper, desk)");
}

void RunConfig::propagate_seed(std::uint64_t s) {
  seed = s;
  train.seed = s;
  train.augment.seed = derive_seed(s, 7);
  synth.seed = s;
  probe.seed = derive_seed(s, 8);
  pair_sets.seed = derive_seed(s, 9);
}

RunConfig make_run_config(Profile profile) {
  RunConfig c;
  c.profile = profile;
  if (profile == Profile::Desk) {
    c.train.batch_size = 32;
    c.train.max_epochs = 30;
    c.train.windows_per_gesture = 1;
    c.train.model.gesture.widths = {16, 32, 32, 64};
    c.probe.seeds = 20;
  }
  return c;
}

const std::vector<KeyDoc>& documented_keys() {
  static const std::vector<KeyDoc> docs = [] {
    std::vector<KeyDoc> d;
    for (const auto& [k, h] : handlers()) d.push_back({k, h.description});
    return d;
  }();
  return docs;
}

void set_config_value(RunConfig& cfg, const std::string& key, const std::string& value) {
  for (const auto& [k, h] : handlers()) {
    if (k == key) {
      try {
        h.set(cfg, key, value);
      } catch (const ConfigError&) {
        throw;
      } catch (const std::exception& e) {
        throw ConfigError(key + ": " + e.what());
      }
      return;
    }
  }
  throw ConfigError("unknown config key '" + key + "'");
}

std::optional<Profile> profile_in_file(const std::filesystem::path& path) {
  for (const auto& [k, v] : textio::parse_key_values(textio::read_file(path), path.string())) {
    if (k == "run.profile") return parse_profile(v);
  }
  return std::nullopt;
}

RunConfig load_run_config(const std::optional<std::filesystem::path>& path, std::optional<Profile> profile_override) {
  std::optional<Profile> profile = profile_override;
  std::vector<std::pair<std::string, std::string>> entries;
  if (path) {
    entries = textio::parse_key_values(textio::read_file(*path), path->string());
    if (!profile) profile = profile_in_file(*path);
  }
  RunConfig cfg = make_run_config(profile.value_or(Profile::Paper));
  for (const auto& [k, v] : entries) {
    if (k == "run.profile") continue;
    try {
      set_config_value(cfg, k, v);
    } catch (const ConfigError& e) {
      throw ConfigError(path->string() + ": " + e.what());
    }
  }
  return cfg;
}

std::string render_run_config(const RunConfig& cfg) {
  std::string out;
  for (const auto& [k, h] : handlers()) out += k + " = " + h.get(cfg) + "\n";
  return out;
}

}  // namespace gesturerep
