#pragma once

// Gesture encoder (graph + temporal convolution blocks), speech head over
// precomputed layer features, and the MLP projection heads.

#include "gesturerep/augment.hpp"
#include "gesturerep/diffcore.hpp"
#include "gesturerep/pose_data.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace gesturerep {

class InputTooShortError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Named parameter tensors in insertion order.
class ParameterStore {
 public:
  diff::Array& add(const std::string& name, diff::Shape shape, std::vector<double> values);
  const diff::Array& get(const std::string& name) const;
  diff::Array& get(const std::string& name);
  bool contains(const std::string& name) const;

  std::vector<diff::Array> arrays() const;
  const std::vector<std::pair<std::string, diff::Array>>& entries() const { return entries_; }
  std::size_t parameter_count() const;
  void zero_grad();
  // Deep copy with fresh leaves.
  ParameterStore clone() const;
  // FNV-1a over names, shapes and value bits.
  std::uint64_t fingerprint() const;

 private:
  std::vector<std::pair<std::string, diff::Array>> entries_;
};

struct GestureEncoderConfig {
  std::vector<std::size_t> widths{32, 64, 128, 256};
  std::vector<std::size_t> strides{1, 2, 1, 2};
  std::size_t temporal_kernel = 9;
  std::size_t output_dim = 256;
  std::size_t min_frames = 4;
  bool residual = true;
  std::vector<double> adjacency = make_skeleton_graph().normalized_adjacency;
  std::size_t joints = kJointCount;
  std::size_t in_channels = kChannels;
};

struct SpeechHeadConfig {
  std::size_t layers = 4;
  std::size_t dims = 16;
  std::size_t hidden = 256;
  std::size_t output_dim = 128;
};

struct ProjectionHeadConfig {
  std::size_t input_dim = 256;
  std::size_t output_dim = 128;
};

struct ModelConfig {
  GestureEncoderConfig gesture;
  SpeechHeadConfig speech;
  ProjectionHeadConfig gesture_projection{256, 128};
  ProjectionHeadConfig speech_projection{128, 128};
};

// He-style uniform fan-in initialisation, zero biases, zero layer logits.
void init_gesture_encoder(ParameterStore& store, const GestureEncoderConfig& cfg, Rng& rng,
                          const std::string& prefix = "gesture_encoder");
void init_speech_head(ParameterStore& store, const SpeechHeadConfig& cfg, Rng& rng,
                      const std::string& prefix = "speech_head");
void init_projection_head(ParameterStore& store, const ProjectionHeadConfig& cfg, Rng& rng,
                          const std::string& prefix);
ParameterStore init_model(const ModelConfig& cfg, Rng& rng);

// (N, 3, T, 27) constant batch from windows of equal length.
diff::Array windows_to_batch(std::span<const SkeletonWindow> windows);
// (N, L, T_s * D) constant batch.
diff::Array speech_to_batch(std::span<const SpeechFeatureWindow> windows);

// (N, 3, T, J) -> (N, output_dim)
diff::Array encode_gesture(const ParameterStore& store, const GestureEncoderConfig& cfg, const diff::Array& batch,
                           const std::string& prefix = "gesture_encoder");
// (N, L, T_s * D) -> (N, output_dim)
diff::Array encode_speech(const ParameterStore& store, const SpeechHeadConfig& cfg, const diff::Array& batch,
                          const std::string& prefix = "speech_head");
// (N, input_dim) -> (N, output_dim); linear -> ReLU -> linear.
diff::Array project(const ParameterStore& store, const ProjectionHeadConfig& cfg, const diff::Array& embedding,
                    const std::string& prefix);

inline constexpr const char* kGestureProjection = "gesture_projection";
inline constexpr const char* kSpeechProjection = "speech_projection";

// Parameter tensors only; the trainer's checkpoint wraps this with metadata.
void write_parameters(std::ostream& os, const ParameterStore& store);
ParameterStore read_parameters(std::istream& is);

}  // namespace gesturerep
