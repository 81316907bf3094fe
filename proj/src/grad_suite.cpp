#include "gesturerep/grad_suite.hpp"

#include "gesturerep/objectives.hpp"

#include <cmath>
#include <functional>
#include <random>

namespace gesturerep {

namespace {

// Random batches where every sample carries its own offsets on top of the
// noise. With i.i.d. entries, pooling averages the samples into nearly
// parallel embeddings, and the resulting tiny gradients drown in rounding.
diff::Array random_windows(std::size_t n, std::size_t frames, Rng& rng) {
  std::normal_distribution<double> dist(0.0, 1.0);
  std::vector<double> v(n * kChannels * frames * kJointCount);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t c = 0; c < kChannels; ++c) {
      const double offset = 2.0 * dist(rng);
      std::vector<double> pattern(kJointCount);
      for (auto& p : pattern) p = offset + dist(rng);
      for (std::size_t t = 0; t < frames; ++t) {
        for (std::size_t j = 0; j < kJointCount; ++j) {
          v[((i * kChannels + c) * frames + t) * kJointCount + j] = pattern[j] + 0.3 * dist(rng);
        }
      }
    }
  }
  return diff::Array::constant({n, kChannels, frames, kJointCount}, std::move(v));
}

diff::Array random_speech(std::size_t n, std::size_t layers, std::size_t frames, std::size_t dims, Rng& rng) {
  std::normal_distribution<double> dist(0.0, 1.0);
  std::vector<double> v(n * layers * frames * dims);
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> offset(dims);
    for (auto& o : offset) o = 2.0 * dist(rng);
    for (std::size_t l = 0; l < layers; ++l) {
      for (std::size_t t = 0; t < frames; ++t) {
        for (std::size_t d = 0; d < dims; ++d) v[((i * layers + l) * frames + t) * dims + d] = offset[d] + 0.3 * dist(rng);
      }
    }
  }
  return diff::Array::constant({n, layers, frames * dims}, std::move(v));
}

}  // namespace

ModelConfig grad_suite_model() {
  ModelConfig m;
  m.gesture.widths = {4, 6};
  m.gesture.strides = {1, 2};
  m.gesture.temporal_kernel = 3;
  m.gesture.output_dim = 5;
  m.gesture.min_frames = 4;
  m.speech.layers = 3;
  m.speech.dims = 2;
  m.speech.hidden = 4;
  m.speech.output_dim = 3;
  m.gesture_projection = {5, 4};
  m.speech_projection = {3, 4};
  return m;
}

std::vector<GradSuiteEntry> run_grad_suite(const GradSuiteOptions& options) {
  const ModelConfig model = grad_suite_model();
  const LossConfig loss_cfg{options.temperature};
  const double required_margin = options.kink_margin_factor * options.epsilon;
  std::vector<GradSuiteEntry> out;

  for (std::size_t n : options.batch_sizes) {
    ParameterStore params;
    diff::Array views, gestures, speech;

    auto uni = [&] {
      auto z = project(params, model.gesture_projection, encode_gesture(params, model.gesture, views), kGestureProjection);
      return unimodal_nt_xent(z, loss_cfg);
    };
    auto mm = [&] {
      auto g = project(params, model.gesture_projection, encode_gesture(params, model.gesture, gestures), kGestureProjection);
      auto s = project(params, model.speech_projection, encode_speech(params, model.speech, speech), kSpeechProjection);
      return multimodal_info_nce(g, s, loss_cfg);
    };
    auto combined = [&] { return combined_loss(uni(), mm()); };

    const std::pair<const char*, std::function<diff::Array()>> losses[] = {
        {"unimodal", uni}, {"multimodal", mm}, {"combined", combined}};

    // Redraw the point until no relu input lies within reach of the
    // finite-difference step (the combined loss visits every relu) and no
    // gradient entry is nonzero yet below what a central difference in double
    // can resolve.
    std::size_t attempt = 0;
    double margin = 0.0;
    for (;; ++attempt) {
      if (attempt == options.max_attempts) {
        throw diff::NumericError("grad suite: no kink-free point for N=" + std::to_string(n) + " after " +
                                 std::to_string(attempt) + " draws");
      }
      Rng rng(derive_seed(derive_seed(options.seed, n), attempt));
      params = init_model(model, rng);
      // Nonzero layer logits and positive biases so every path carries
      // gradient; nearly dead channels give entries too small to difference.
      std::normal_distribution<double> jitter(0.0, 0.1);
      for (const auto& [name, a] : params.entries()) {
        const bool bias = name.ends_with("_bias");
        for (auto& x : diff::Array(a).mutable_values()) x += jitter(rng) + (bias ? options.bias_shift : 0.0);
      }
      views = random_windows(2 * n, options.frames, rng);
      gestures = random_windows(n, options.frames, rng);
      speech = random_speech(n, model.speech.layers, options.speech_frames, model.speech.dims, rng);

      {
        diff::ReluMarginProbe probe;
        combined();
        margin = probe.margin();
      }
      if (margin < required_margin) continue;
      bool resolvable = true;
      for (const auto& loss : losses) {
        params.zero_grad();
        loss.second().backward();
        for (const auto& a : params.arrays()) {
          for (double g : a.grad()) {
            if (g != 0.0 && std::abs(g) < options.resolvable_gradient) resolvable = false;
          }
        }
      }
      params.zero_grad();
      if (resolvable) break;
    }

    diff::GradCheckOptions gc;
    gc.epsilon = options.epsilon;
    gc.max_coords_per_leaf = options.max_coords_per_leaf;
    gc.seed = derive_seed(options.seed, 100 + n);

    std::size_t coords = 0;
    for (const auto& a : params.arrays()) {
      coords += options.max_coords_per_leaf ? std::min(a.size(), options.max_coords_per_leaf) : a.size();
    }
    for (const auto& [name, fn] : losses) {
      out.push_back({name, n, coords, diff::check_gradients(fn, params.arrays(), gc), margin, attempt + 1});
    }
  }
  return out;
}

}  // namespace gesturerep
