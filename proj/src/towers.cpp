#include "gesturerep/towers.hpp"

#include "binary_io.hpp"
#include "gesturerep/errors.hpp"

#include <cmath>
#include <cstring>

namespace gesturerep {

using diff::Array;

// ---- ParameterStore ------------------------------------------------------------

Array& ParameterStore::add(const std::string& name, diff::Shape shape, std::vector<double> values) {
  if (contains(name)) throw std::invalid_argument("duplicate parameter " + name);
  entries_.emplace_back(name, Array::parameter(std::move(shape), std::move(values)));
  return entries_.back().second;
}

const Array& ParameterStore::get(const std::string& name) const {
  for (const auto& [n, a] : entries_)
    if (n == name) return a;
  throw std::out_of_range("unknown parameter " + name);
}

Array& ParameterStore::get(const std::string& name) {
  return const_cast<Array&>(static_cast<const ParameterStore&>(*this).get(name));
}

bool ParameterStore::contains(const std::string& name) const {
  for (const auto& e : entries_)
    if (e.first == name) return true;
  return false;
}

std::vector<Array> ParameterStore::arrays() const {
  std::vector<Array> out;
  for (const auto& e : entries_) out.push_back(e.second);
  return out;
}

std::size_t ParameterStore::parameter_count() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.second.size();
  return n;
}

void ParameterStore::zero_grad() {
  for (auto& e : entries_) e.second.zero_grad();
}

ParameterStore ParameterStore::clone() const {
  ParameterStore out;
  for (const auto& [name, a] : entries_) {
    out.add(name, a.shape(), std::vector<double>(a.values().begin(), a.values().end()));
  }
  return out;
}

std::uint64_t ParameterStore::fingerprint() const {
  binio::Fnv1a h;
  for (const auto& [name, a] : entries_) {
    h.update(name.data(), name.size());
    for (auto d : a.shape()) h.update_u64(d);
    for (double v : a.values()) {
      std::uint64_t bits = 0;
      std::memcpy(&bits, &v, 8);
      h.update_u64(bits);
    }
  }
  return h.value();
}

// ---- initialisation --------------------------------------------------------------

namespace {

std::vector<double> he_uniform(std::size_t count, std::size_t fan_in, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  std::uniform_real_distribution<double> u(-bound, bound);
  std::vector<double> v(count);
  for (auto& x : v) x = u(rng);
  return v;
}

std::string name(const std::string& prefix, const std::string& leaf) { return prefix + "." + leaf; }

std::string block_name(const std::string& prefix, std::size_t b, const std::string& leaf) {
  return prefix + ".block" + std::to_string(b) + "." + leaf;
}

void check_encoder_config(const GestureEncoderConfig& cfg) {
  if (cfg.widths.empty() || cfg.widths.size() != cfg.strides.size()) {
    throw std::invalid_argument("gesture encoder: widths and strides must be non-empty and equal length");
  }
  if (cfg.temporal_kernel == 0 || cfg.temporal_kernel % 2 == 0) {
    throw std::invalid_argument("gesture encoder: temporal kernel must be odd");
  }
  if (cfg.adjacency.size() != cfg.joints * cfg.joints) {
    throw std::invalid_argument("gesture encoder: adjacency must be joints x joints");
  }
}

}  // namespace

void init_gesture_encoder(ParameterStore& store, const GestureEncoderConfig& cfg, Rng& rng,
                          const std::string& prefix) {
  check_encoder_config(cfg);
  std::size_t cin = cfg.in_channels;
  for (std::size_t b = 0; b < cfg.widths.size(); ++b) {
    const std::size_t c = cfg.widths[b];
    store.add(block_name(prefix, b, "graph_weight"), {c, cin}, he_uniform(c * cin, cin, rng));
    store.add(block_name(prefix, b, "graph_bias"), {c}, std::vector<double>(c, 0.0));
    store.add(block_name(prefix, b, "temporal_weight"), {c, c, cfg.temporal_kernel},
              he_uniform(c * c * cfg.temporal_kernel, c * cfg.temporal_kernel, rng));
    store.add(block_name(prefix, b, "temporal_bias"), {c}, std::vector<double>(c, 0.0));
    cin = c;
  }
  if (cin != cfg.output_dim) {
    store.add(name(prefix, "out_weight"), {cin, cfg.output_dim}, he_uniform(cin * cfg.output_dim, cin, rng));
    store.add(name(prefix, "out_bias"), {cfg.output_dim}, std::vector<double>(cfg.output_dim, 0.0));
  }
}

void init_speech_head(ParameterStore& store, const SpeechHeadConfig& cfg, Rng& rng, const std::string& prefix) {
  store.add(name(prefix, "layer_logits"), {cfg.layers}, std::vector<double>(cfg.layers, 0.0));
  store.add(name(prefix, "conv1_weight"), {cfg.dims, cfg.hidden}, he_uniform(cfg.dims * cfg.hidden, cfg.dims, rng));
  store.add(name(prefix, "conv1_bias"), {cfg.hidden}, std::vector<double>(cfg.hidden, 0.0));
  store.add(name(prefix, "conv2_weight"), {cfg.hidden, cfg.output_dim},
            he_uniform(cfg.hidden * cfg.output_dim, cfg.hidden, rng));
  store.add(name(prefix, "conv2_bias"), {cfg.output_dim}, std::vector<double>(cfg.output_dim, 0.0));
}

void init_projection_head(ParameterStore& store, const ProjectionHeadConfig& cfg, Rng& rng,
                          const std::string& prefix) {
  const std::size_t d = cfg.input_dim;
  store.add(name(prefix, "fc1_weight"), {d, d}, he_uniform(d * d, d, rng));
  store.add(name(prefix, "fc1_bias"), {d}, std::vector<double>(d, 0.0));
  store.add(name(prefix, "fc2_weight"), {d, cfg.output_dim}, he_uniform(d * cfg.output_dim, d, rng));
  store.add(name(prefix, "fc2_bias"), {cfg.output_dim}, std::vector<double>(cfg.output_dim, 0.0));
}

ParameterStore init_model(const ModelConfig& cfg, Rng& rng) {
  ParameterStore store;
  init_gesture_encoder(store, cfg.gesture, rng);
  init_speech_head(store, cfg.speech, rng);
  init_projection_head(store, cfg.gesture_projection, rng, kGestureProjection);
  init_projection_head(store, cfg.speech_projection, rng, kSpeechProjection);
  return store;
}

// ---- batching ----------------------------------------------------------------------

Array windows_to_batch(std::span<const SkeletonWindow> windows) {
  if (windows.empty()) throw diff::ShapeError("windows_to_batch: empty batch");
  const std::size_t t = windows.front().frames;
  std::vector<double> data;
  data.reserve(windows.size() * kChannels * t * kJointCount);
  for (const auto& w : windows) {
    if (w.frames != t || w.data.size() != kChannels * t * kJointCount) {
      throw diff::ShapeError("windows_to_batch: windows differ in length");
    }
    data.insert(data.end(), w.data.begin(), w.data.end());
  }
  return Array::constant({windows.size(), kChannels, t, kJointCount}, std::move(data));
}

Array speech_to_batch(std::span<const SpeechFeatureWindow> windows) {
  if (windows.empty()) throw diff::ShapeError("speech_to_batch: empty batch");
  const auto& f = windows.front();
  std::vector<double> data;
  data.reserve(windows.size() * f.data.size());
  for (const auto& w : windows) {
    if (w.layers != f.layers || w.frames != f.frames || w.dims != f.dims) {
      throw diff::ShapeError("speech_to_batch: windows differ in shape");
    }
    data.insert(data.end(), w.data.begin(), w.data.end());
  }
  return Array::constant({windows.size(), f.layers, f.frames * f.dims}, std::move(data));
}

// ---- forward passes --------------------------------------------------------------------

Array encode_gesture(const ParameterStore& store, const GestureEncoderConfig& cfg, const Array& batch,
                     const std::string& prefix) {
  check_encoder_config(cfg);
  if (batch.rank() != 4 || batch.dim(1) != cfg.in_channels || batch.dim(3) != cfg.joints) {
    throw diff::ShapeError("encode_gesture: expected (N, " + std::to_string(cfg.in_channels) + ", T, " +
                           std::to_string(cfg.joints) + "), got " + diff::shape_str(batch.shape()));
  }
  if (batch.dim(2) < cfg.min_frames) {
    throw InputTooShortError("encode_gesture: " + std::to_string(batch.dim(2)) + " frames, need at least " +
                             std::to_string(cfg.min_frames));
  }
  const Array adjacency = Array::constant({cfg.joints, cfg.joints}, cfg.adjacency);
  Array x = batch;
  std::size_t cin = cfg.in_channels;
  for (std::size_t b = 0; b < cfg.widths.size(); ++b) {
    const std::size_t c = cfg.widths[b];
    Array g = diff::channel_map(diff::joint_mix(x, adjacency), store.get(block_name(prefix, b, "graph_weight")),
                                store.get(block_name(prefix, b, "graph_bias")));
    g = diff::relu(g);
    Array t = diff::temporal_conv(g, store.get(block_name(prefix, b, "temporal_weight")),
                                  store.get(block_name(prefix, b, "temporal_bias")), cfg.strides[b]);
    if (cfg.residual && cin == c && t.shape() == x.shape()) t = diff::add(t, x);
    x = diff::relu(t);
    cin = c;
  }
  const std::size_t n = x.dim(0);
  Array pooled = diff::mean_last(diff::reshape(x, {n, cin, x.dim(2) * x.dim(3)}));
  if (cin != cfg.output_dim) {
    pooled = diff::add_bias(diff::matmul(pooled, store.get(name(prefix, "out_weight"))),
                            store.get(name(prefix, "out_bias")));
  }
  return pooled;
}

Array encode_speech(const ParameterStore& store, const SpeechHeadConfig& cfg, const Array& batch,
                    const std::string& prefix) {
  if (batch.rank() != 3 || batch.dim(1) != cfg.layers || batch.dim(2) % cfg.dims != 0) {
    throw diff::ShapeError("encode_speech: expected (N, " + std::to_string(cfg.layers) + ", T*" +
                           std::to_string(cfg.dims) + "), got " + diff::shape_str(batch.shape()));
  }
  const std::size_t n = batch.dim(0);
  const std::size_t frames = batch.dim(2) / cfg.dims;
  const Array weights = diff::softmax(store.get(name(prefix, "layer_logits")));
  const Array mixed = diff::reshape(diff::mix_layers(batch, weights), {n * frames, cfg.dims});
  Array h = diff::relu(diff::add_bias(diff::matmul(mixed, store.get(name(prefix, "conv1_weight"))),
                                      store.get(name(prefix, "conv1_bias"))));
  h = diff::add_bias(diff::matmul(h, store.get(name(prefix, "conv2_weight"))), store.get(name(prefix, "conv2_bias")));
  // Mean over frames as a fixed pooling matrix (n, n * frames).
  std::vector<double> pool(n * n * frames, 0.0);
  for (std::size_t s = 0; s < n; ++s)
    for (std::size_t t = 0; t < frames; ++t) pool[s * n * frames + s * frames + t] = 1.0 / static_cast<double>(frames);
  return diff::matmul(Array::constant({n, n * frames}, std::move(pool)), h);
}

Array project(const ParameterStore& store, const ProjectionHeadConfig& cfg, const Array& embedding,
              const std::string& prefix) {
  if (embedding.rank() != 2 || embedding.dim(1) != cfg.input_dim) {
    throw diff::ShapeError("project: expected (N, " + std::to_string(cfg.input_dim) + "), got " +
                           diff::shape_str(embedding.shape()));
  }
  Array h = diff::relu(diff::add_bias(diff::matmul(embedding, store.get(name(prefix, "fc1_weight"))),
                                      store.get(name(prefix, "fc1_bias"))));
  return diff::add_bias(diff::matmul(h, store.get(name(prefix, "fc2_weight"))), store.get(name(prefix, "fc2_bias")));
}

// ---- serialisation -----------------------------------------------------------------------

void write_parameters(std::ostream& os, const ParameterStore& store) {
  binio::write_u32(os, static_cast<std::uint32_t>(store.entries().size()));
  for (const auto& [n, a] : store.entries()) {
    binio::write_string(os, n);
    binio::write_u32(os, static_cast<std::uint32_t>(a.rank()));
    for (auto d : a.shape()) binio::write_u32(os, static_cast<std::uint32_t>(d));
    for (double v : a.values()) binio::write_f64(os, v);
  }
}

ParameterStore read_parameters(std::istream& is) {
  ParameterStore store;
  const auto count = binio::read_u32(is);
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string n = binio::read_string(is);
    const auto rank = binio::read_u32(is);
    if (rank > 8) throw FormatError("parameter " + n + ": implausible rank");
    diff::Shape shape(rank);
    for (auto& d : shape) d = binio::read_u32(is);
    std::vector<double> values(diff::shape_numel(shape));
    for (auto& v : values) v = binio::read_f64(is);
    store.add(n, std::move(shape), std::move(values));
  }
  return store;
}

}  // namespace gesturerep
