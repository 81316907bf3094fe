#include "gesturerep/trainer.hpp"

#include "binary_io.hpp"
#include "gesturerep/errors.hpp"
#include "gesturerep/log.hpp"
#include "text_io.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

namespace gesturerep {

using diff::Array;

namespace {

constexpr char kCheckpointMagic[4] = {'G', 'C', 'K', 'P'};
constexpr std::uint32_t kCheckpointVersion = 1;

// Seed streams derived from cfg.seed.
constexpr std::uint64_t kStreamInit = 1;
constexpr std::uint64_t kStreamSplit = 2;
constexpr std::uint64_t kStreamValSelect = 3;
constexpr std::uint64_t kStreamValAugment = 4;
constexpr std::uint64_t kStreamEpoch = 1000;

template <typename T>
std::string join(const std::vector<T>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s += ',';
    if constexpr (std::is_floating_point_v<T>) {
      s += textio::format_number(v[i]);
    } else {
      s += std::to_string(v[i]);
    }
  }
  return s;
}

std::vector<SkeletonWindow> gather(const std::vector<SkeletonWindow>& src, std::span<const std::size_t> idx) {
  std::vector<SkeletonWindow> out;
  out.reserve(idx.size());
  for (auto i : idx) out.push_back(src[i]);
  return out;
}

Array embed_views(const ParameterStore& params, const ModelConfig& model, std::span<const SkeletonWindow> views) {
  const auto batch = windows_to_batch(views);
  return project(params, model.gesture_projection, encode_gesture(params, model.gesture, batch), kGestureProjection);
}

Array unimodal_term(const WindowBank& bank, std::span<const std::size_t> batch, const TrainConfig& cfg,
                    const ParameterStore& params, Rng& rng) {
  std::vector<SkeletonWindow> first, second;
  first.reserve(batch.size());
  second.reserve(batch.size());
  for (auto i : batch) {
    auto [a, b] = make_training_views(cfg.augment, bank.raw[i], rng);
    first.push_back(std::move(a));
    second.push_back(std::move(b));
  }
  first.insert(first.end(), std::make_move_iterator(second.begin()), std::make_move_iterator(second.end()));
  return unimodal_nt_xent(embed_views(params, cfg.model, first), LossConfig{cfg.temperature});
}

Array multimodal_term(const WindowBank& bank, std::span<const std::size_t> batch, const TrainConfig& cfg,
                      const ParameterStore& params) {
  const auto views = gather(bank.normalized, batch);
  const auto z_g = embed_views(params, cfg.model, views);
  std::vector<SpeechFeatureWindow> speech;
  speech.reserve(batch.size());
  for (auto i : batch) speech.push_back(bank.speech[i]);
  const auto z_s = project(params, cfg.model.speech_projection,
                           encode_speech(params, cfg.model.speech, speech_to_batch(speech)), kSpeechProjection);
  return multimodal_info_nce(z_g, z_s, LossConfig{cfg.temperature});
}

double l2_norm(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

// Mean loss over consecutive batches; a trailing batch of one is merged into
// its predecessor since a single instance has no negatives.
double evaluate(const WindowBank& bank, const std::vector<std::size_t>& windows, const TrainConfig& cfg,
                const ParameterStore& params, std::uint64_t seed) {
  if (windows.empty()) return 0.0;
  Rng rng(seed);
  double total = 0.0;
  std::size_t count = 0;
  std::size_t pos = 0;
  while (pos < windows.size()) {
    std::size_t end = std::min(windows.size(), pos + cfg.batch_size);
    if (windows.size() - end == 1) ++end;
    const std::span<const std::size_t> batch(windows.data() + pos, end - pos);
    if (batch.size() >= 2) {
      total += batch_loss(bank, batch, cfg, params, rng).item() * static_cast<double>(batch.size());
      count += batch.size();
    }
    pos = end;
  }
  return count ? total / static_cast<double>(count) : 0.0;
}

void write_model_config(std::ostream& os, const ModelConfig& m) {
  auto write_sizes = [&os](const std::vector<std::size_t>& v) {
    binio::write_u32(os, static_cast<std::uint32_t>(v.size()));
    for (auto x : v) binio::write_u64(os, x);
  };
  write_sizes(m.gesture.widths);
  write_sizes(m.gesture.strides);
  binio::write_u64(os, m.gesture.temporal_kernel);
  binio::write_u64(os, m.gesture.output_dim);
  binio::write_u64(os, m.gesture.min_frames);
  binio::write_u32(os, m.gesture.residual ? 1 : 0);
  binio::write_u64(os, m.speech.layers);
  binio::write_u64(os, m.speech.dims);
  binio::write_u64(os, m.speech.hidden);
  binio::write_u64(os, m.speech.output_dim);
  binio::write_u64(os, m.gesture_projection.input_dim);
  binio::write_u64(os, m.gesture_projection.output_dim);
  binio::write_u64(os, m.speech_projection.input_dim);
  binio::write_u64(os, m.speech_projection.output_dim);
}

ModelConfig read_model_config(std::istream& is) {
  auto read_sizes = [&is]() {
    const auto n = binio::read_u32(is);
    if (n > 64) throw FormatError("checkpoint: implausible block count");
    std::vector<std::size_t> v(n);
    for (auto& x : v) x = binio::read_u64(is);
    return v;
  };
  ModelConfig m;
  m.gesture.widths = read_sizes();
  m.gesture.strides = read_sizes();
  m.gesture.temporal_kernel = binio::read_u64(is);
  m.gesture.output_dim = binio::read_u64(is);
  m.gesture.min_frames = binio::read_u64(is);
  m.gesture.residual = binio::read_u32(is) != 0;
  m.speech.layers = binio::read_u64(is);
  m.speech.dims = binio::read_u64(is);
  m.speech.hidden = binio::read_u64(is);
  m.speech.output_dim = binio::read_u64(is);
  m.gesture_projection.input_dim = binio::read_u64(is);
  m.gesture_projection.output_dim = binio::read_u64(is);
  m.speech_projection.input_dim = binio::read_u64(is);
  m.speech_projection.output_dim = binio::read_u64(is);
  return m;
}

}  // namespace

std::string to_string(ObjectiveMode mode) {
  switch (mode) {
    case ObjectiveMode::Unimodal:
      return "unimodal";
    case ObjectiveMode::Multimodal:
      return "multimodal";
    case ObjectiveMode::Combined:
      return "combined";
  }
  return "?";
}

ObjectiveMode parse_objective_mode(const std::string& name) {
  if (name == "unimodal") return ObjectiveMode::Unimodal;
  if (name == "multimodal") return ObjectiveMode::Multimodal;
  if (name == "combined") return ObjectiveMode::Combined;
  throw ParameterError("unknown objective mode '" + name + "' (unimodal, multimodal, combined)");
}

void TrainConfig::validate() const {
  if (!(validation_fraction > 0.0 && validation_fraction < 1.0)) {
    throw ParameterError("validation fraction must lie strictly between 0 and 1");
  }
  if (batch_size < 2) throw ParameterError("batch size must be at least 2 for contrastive training");
  if (!(temperature > 0.0)) throw ParameterError("temperature must be positive");
  if (!(learning_rate >= 0.0)) throw ParameterError("learning rate must be non-negative");
  if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0)) throw ParameterError("Adam betas must lie in [0, 1)");
  if (!(adam_epsilon > 0.0)) throw ParameterError("Adam epsilon must be positive");
}

std::string describe(const TrainConfig& c) {
  std::ostringstream os;
  os << "mode=" << to_string(c.mode) << ";lr=" << textio::format_number(c.learning_rate)
     << ";batch=" << c.batch_size << ";epochs=" << c.max_epochs << ";tau=" << textio::format_number(c.temperature)
     << ";val=" << textio::format_number(c.validation_fraction) << ";seed=" << c.seed
     << ";betas=" << textio::format_number(c.beta1) << ',' << textio::format_number(c.beta2)
     << ";eps=" << textio::format_number(c.adam_epsilon) << ";wpg=" << c.windows_per_gesture;
  const auto& g = c.model.gesture;
  os << ";widths=" << join(g.widths) << ";strides=" << join(g.strides) << ";kernel=" << g.temporal_kernel
     << ";gdim=" << g.output_dim << ";residual=" << g.residual;
  const auto& s = c.model.speech;
  os << ";speech=" << s.layers << ',' << s.dims << ',' << s.hidden << ',' << s.output_dim;
  os << ";proj=" << c.model.gesture_projection.input_dim << ',' << c.model.gesture_projection.output_dim << ','
     << c.model.speech_projection.input_dim << ',' << c.model.speech_projection.output_dim;
  std::vector<std::string> kinds;
  for (auto k : c.augment.kinds) kinds.push_back(to_string(k));
  os << ";augment=";
  for (std::size_t i = 0; i < kinds.size(); ++i) os << (i ? "," : "") << kinds[i];
  os << ";p=" << textio::format_number(c.augment.probability) << ";pk=" << join(c.augment.per_kind_probability)
     << ";aseed=" << c.augment.seed;
  return os.str();
}

std::uint64_t config_hash(const TrainConfig& cfg) {
  const auto s = describe(cfg);
  binio::Fnv1a h;
  h.update(s.data(), s.size());
  return h.value();
}

Split split_dataset(std::size_t n, double train_fraction, std::uint64_t seed) {
  if (n < 2) throw diff::ContractError("split_dataset: need at least two windows");
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw ParameterError("train fraction must lie in (0, 1)");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  // Small slack so products like 10 * 0.9 floor to 9 despite rounding.
  auto n_train = static_cast<std::size_t>(std::floor(static_cast<double>(n) * train_fraction + 1e-9));
  n_train = std::clamp<std::size_t>(n_train, 1, n - 1);
  Split s;
  s.train.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
  s.val.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train), order.end());
  return s;
}

// ---- Adam ---------------------------------------------------------------------------------

Adam::Adam(double lr, double beta1, double beta2, double epsilon) : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(epsilon) {}

void Adam::step(ParameterStore& params) {
  const auto& entries = params.entries();
  if (m_.empty()) {
    m_.resize(entries.size());
    v_.resize(entries.size());
    for (std::size_t i = 0; i < entries.size(); ++i) {
      m_[i].assign(entries[i].second.size(), 0.0);
      v_[i].assign(entries[i].second.size(), 0.0);
    }
  }
  if (m_.size() != entries.size()) throw diff::ContractError("Adam: parameter set changed between steps");
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < entries.size(); ++i) {
    auto arr = entries[i].second;
    const auto g = arr.grad();
    if (g.empty()) continue;
    auto wv = arr.mutable_values();
    const auto n = static_cast<Eigen::Index>(wv.size());
    Eigen::Map<Eigen::ArrayXd> w(wv.data(), n), m(m_[i].data(), n), v(v_[i].data(), n);
    Eigen::Map<const Eigen::ArrayXd> gr(g.data(), n);
    m = beta1_ * m + (1.0 - beta1_) * gr;
    v = beta2_ * v + (1.0 - beta2_) * gr.square();
    w -= lr_ * (m / bc1) / ((v / bc2).sqrt() + eps_);
  }
}

// ---- steps --------------------------------------------------------------------------------

diff::Array batch_loss(const WindowBank& bank, std::span<const std::size_t> batch, const TrainConfig& cfg,
                       const ParameterStore& params, Rng& rng) {
  if (batch.empty()) throw diff::ContractError("batch_loss: empty batch");
  switch (cfg.mode) {
    case ObjectiveMode::Unimodal:
      return unimodal_term(bank, batch, cfg, params, rng);
    case ObjectiveMode::Multimodal:
      return multimodal_term(bank, batch, cfg, params);
    case ObjectiveMode::Combined: {
      auto uni = unimodal_term(bank, batch, cfg, params, rng);
      return combined_loss(uni, multimodal_term(bank, batch, cfg, params));
    }
  }
  throw diff::ContractError("batch_loss: unknown mode");
}

double train_step(const WindowBank& bank, std::span<const std::size_t> batch, const TrainConfig& cfg,
                  ParameterStore& params, Adam& optimizer, Rng& rng, std::size_t step_index) {
  if (batch.size() < 2) throw diff::ContractError("train_step: batch size must be at least 2");
  params.zero_grad();
  const auto loss = batch_loss(bank, batch, cfg, params, rng);
  const double value = loss.item();
  loss.backward();

  bool finite = std::isfinite(value);
  std::vector<std::pair<double, std::string>> norms;
  for (const auto& [name, arr] : params.entries()) {
    const double n = l2_norm(arr.grad());
    if (!std::isfinite(n)) finite = false;
    norms.emplace_back(n, name);
  }
  if (!finite) {
    std::sort(norms.begin(), norms.end(), [](const auto& a, const auto& b) {
      // NaN sorts first so it shows up in the diagnostic.
      if (std::isnan(a.first) != std::isnan(b.first)) return std::isnan(a.first);
      return a.first > b.first;
    });
    std::ostringstream msg;
    msg << "non-finite training state at step " << step_index << ": loss=" << value << "; grad norms:";
    for (std::size_t i = 0; i < std::min<std::size_t>(5, norms.size()); ++i) {
      msg << ' ' << norms[i].second << '=' << norms[i].first;
    }
    throw diff::NumericError(msg.str());
  }
  optimizer.step(params);
  return value;
}

ParameterStore initial_parameters(const TrainConfig& cfg) {
  Rng rng(derive_seed(cfg.seed, kStreamInit));
  return init_model(cfg.model, rng);
}

// ---- fit ----------------------------------------------------------------------------------

Checkpoint fit(const WindowBank& bank, const TrainConfig& cfg, const FitObserver& observer, const Checkpoint* resume) {
  cfg.validate();
  if (bank.size() == 0) throw diff::ContractError("fit: empty dataset");
  const auto hash = config_hash(cfg);
  if (resume) {
    if (auto w = config_mismatch(*resume, cfg)) warn(*w);
  }

  const auto split = split_dataset(bank.size(), 1.0 - cfg.validation_fraction, derive_seed(cfg.seed, kStreamSplit));

  // Training windows grouped by gesture for the per-epoch cap.
  std::map<std::size_t, std::vector<std::size_t>> train_by_gesture;
  for (auto i : split.train) train_by_gesture[bank.record_of[i]].push_back(i);
  for (auto& [rec, v] : train_by_gesture) std::sort(v.begin(), v.end());

  std::vector<std::size_t> val = split.val;
  std::sort(val.begin(), val.end());
  if (cfg.windows_per_gesture > 0) {
    std::map<std::size_t, std::vector<std::size_t>> by_gesture;
    for (auto i : val) by_gesture[bank.record_of[i]].push_back(i);
    Rng pick(derive_seed(cfg.seed, kStreamValSelect));
    val.clear();
    for (auto& [rec, v] : by_gesture) {
      std::shuffle(v.begin(), v.end(), pick);
      v.resize(std::min(v.size(), cfg.windows_per_gesture));
      val.insert(val.end(), v.begin(), v.end());
    }
  }
  const auto val_seed = derive_seed(cfg.seed, kStreamValAugment);

  Checkpoint best;
  best.model = cfg.model;
  best.config_hash = hash;
  best.metadata = describe(cfg);
  ParameterStore params = resume ? resume->params.clone() : initial_parameters(cfg);
  std::size_t start_epoch = resume ? resume->epoch : 0;
  if (resume) best.history = resume->history;

  double best_val = evaluate(bank, val, cfg, params, val_seed);
  best.params = params.clone();
  best.epoch = start_epoch;

  Adam optimizer(cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.adam_epsilon);
  std::size_t step = 0;
  std::vector<EpochMetrics> history = best.history;

  for (std::size_t epoch = start_epoch + 1; epoch <= cfg.max_epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    Rng rng(derive_seed(cfg.seed, kStreamEpoch + epoch));

    std::vector<std::size_t> order;
    if (cfg.windows_per_gesture > 0) {
      for (const auto& [rec, windows] : train_by_gesture) {
        auto v = windows;
        std::shuffle(v.begin(), v.end(), rng);
        v.resize(std::min(v.size(), cfg.windows_per_gesture));
        order.insert(order.end(), v.begin(), v.end());
      }
    } else {
      order = split.train;
      std::sort(order.begin(), order.end());
    }
    std::shuffle(order.begin(), order.end(), rng);

    // Incomplete trailing batches are dropped; a training set smaller than
    // one batch is used whole.
    std::size_t n_batches = order.size() / cfg.batch_size;
    const std::size_t bsz = n_batches == 0 ? order.size() : cfg.batch_size;
    if (n_batches == 0 && order.size() >= 2) n_batches = 1;

    double train_total = 0.0;
    for (std::size_t b = 0; b < n_batches; ++b) {
      const std::span<const std::size_t> batch(order.data() + b * bsz, bsz);
      const double loss = train_step(bank, batch, cfg, params, optimizer, rng, step);
      if (observer.on_step) observer.on_step(step, loss);
      train_total += loss;
      ++step;
    }

    EpochMetrics m;
    m.epoch = epoch;
    m.train_loss = n_batches ? train_total / static_cast<double>(n_batches) : 0.0;
    m.val_loss = evaluate(bank, val, cfg, params, val_seed);
    m.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    history.push_back(m);
    if (observer.metrics_log) {
      *observer.metrics_log << "{\"epoch\":" << m.epoch << ",\"train_loss\":" << textio::format_number(m.train_loss)
                            << ",\"val_loss\":" << textio::format_number(m.val_loss)
                            << ",\"wall_ms\":" << textio::format_number(std::round(m.wall_ms * 1000.0) / 1000.0)
                            << "}\n";
      observer.metrics_log->flush();
    }
    if (observer.on_epoch) observer.on_epoch(m);
    if (m.val_loss < best_val) {
      best_val = m.val_loss;
      best.params = params.clone();
      best.epoch = epoch;
    }
  }
  best.history = std::move(history);
  return best;
}

// ---- checkpoint files ---------------------------------------------------------------------

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  std::ostringstream os(std::ios::binary);
  os.write(kCheckpointMagic, 4);
  binio::write_u32(os, kCheckpointVersion);
  binio::write_u64(os, ckpt.epoch);
  binio::write_u64(os, ckpt.config_hash);
  binio::write_string(os, ckpt.metadata);
  write_model_config(os, ckpt.model);
  binio::write_u32(os, static_cast<std::uint32_t>(ckpt.history.size()));
  for (const auto& m : ckpt.history) {
    binio::write_u64(os, m.epoch);
    binio::write_f64(os, m.train_loss);
    binio::write_f64(os, m.val_loss);
    binio::write_f64(os, m.wall_ms);
  }
  write_parameters(os, ckpt.params);
  textio::write_file_atomic(path, os.str());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open checkpoint " + path.string());
  char magic[4];
  binio::read_exact(is, magic, 4);
  if (!std::equal(magic, magic + 4, kCheckpointMagic)) throw FormatError(path.string() + ": not a checkpoint file");
  const auto version = binio::read_u32(is);
  if (version != kCheckpointVersion) {
    throw FormatError(path.string() + ": unsupported checkpoint version " + std::to_string(version));
  }
  Checkpoint c;
  c.epoch = binio::read_u64(is);
  c.config_hash = binio::read_u64(is);
  c.metadata = binio::read_string(is);
  c.model = read_model_config(is);
  const auto n_hist = binio::read_u32(is);
  for (std::uint32_t i = 0; i < n_hist; ++i) {
    EpochMetrics m;
    m.epoch = binio::read_u64(is);
    m.train_loss = binio::read_f64(is);
    m.val_loss = binio::read_f64(is);
    m.wall_ms = binio::read_f64(is);
    c.history.push_back(m);
  }
  c.params = read_parameters(is);
  if (is.peek() != std::char_traits<char>::eof()) throw FormatError(path.string() + ": trailing bytes after checkpoint");
  return c;
}

std::optional<std::string> config_mismatch(const Checkpoint& ckpt, const TrainConfig& cfg) {
  const auto h = config_hash(cfg);
  if (h == ckpt.config_hash) return std::nullopt;
  std::ostringstream os;
  os << "checkpoint config hash " << std::hex << ckpt.config_hash << " differs from current config hash " << h
     << " (checkpoint: " << ckpt.metadata << ")";
  return os.str();
}

}  // namespace gesturerep
