#pragma once

// Skeletal augmentations used to craft positive views.
//
// Geometric kinds act on the x/y channels only; the confidence channel is
// copied bit-for-bit. Unless stated otherwise transforms act about the
// coordinate origin, which is the frame-0 mid-shoulder point for normalized
// windows.

#include "gesturerep/pose_data.hpp"

#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <variant>
#include <vector>

namespace gesturerep {

using Rng = std::mt19937_64;

// Independent child seed for stream `stream` of `base` (splitmix64 mixing).
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream);

enum class AugmentationKind { Mirror, ShiftPoses, ScalePoses, RandomMove, Jitter, AxisScale, Rotation, Shear };

std::string to_string(AugmentationKind kind);
AugmentationKind parse_augmentation_kind(const std::string& name);

// Documented parameter ranges. Draws always fall inside these; explicit
// parameters outside them are rejected.
struct AugmentRanges {
  double shift_pixels = 30.0;              // ShiftPoses: U(-30, 30) per axis, input pixel units
  double scale_min = 0.5, scale_max = 1.5;  // ScalePoses
  double move_degrees = 10.0;              // RandomMove rotation U(-10, 10)
  double move_scale_min = 0.9, move_scale_max = 1.1;
  double move_translation = 0.2;           // RandomMove translation U(-0.2, 0.2)
  double jitter_sigma = 0.1;               // Jitter, normalized units
  double axis_scale_min = 0.7, axis_scale_max = 1.2;
  int rotation_max_degrees = 15;           // Rotation grid {-15, -13, ..., 15} plus 0
  int rotation_step_degrees = 2;
  double shear = 0.2;                      // Shear coefficients U(-0.2, 0.2)
};

struct MirrorParams {};
struct ShiftParams {
  double dx = 0.0, dy = 0.0;
};
struct ScaleParams {
  double factor = 1.0;
};
struct MoveKeyframe {
  double degrees = 0.0;
  double scale = 1.0;
  double tx = 0.0, ty = 0.0;
};
// Keyframes are spread evenly over the window (segments = keyframes - 1) and
// linearly interpolated per frame.
struct RandomMoveParams {
  std::vector<MoveKeyframe> keyframes{MoveKeyframe{}, MoveKeyframe{}};
};
struct JitterParams {
  double sigma = 0.1;
  std::uint64_t noise_seed = 0;
};
struct AxisScaleParams {
  double sx = 1.0, sy = 1.0;
};
struct RotationParams {
  int degrees = 0;
  std::size_t anchor_joint = kNose;
};
// [[1, sx], [sy, 1]]
struct ShearParams {
  double sx = 0.0, sy = 0.0;
};

using AugmentationParams = std::variant<MirrorParams, ShiftParams, ScaleParams, RandomMoveParams, JitterParams,
                                        AxisScaleParams, RotationParams, ShearParams>;

AugmentationKind kind_of(const AugmentationParams& params);
std::vector<int> rotation_grid(const AugmentRanges& ranges = {});

AugmentationParams draw_params(AugmentationKind kind, Rng& rng, const AugmentRanges& ranges = {});

// Throws ParameterError when params fall outside `ranges`.
SkeletonWindow apply_augmentation(const AugmentationParams& params, const SkeletonWindow& window,
                                  const AugmentRanges& ranges = {});

// Unchecked geometric helpers, also used by tests with arbitrary angles.
SkeletonWindow rotate_about(const SkeletonWindow& window, double degrees, double anchor_x, double anchor_y);
SkeletonWindow mirror(const SkeletonWindow& window);

struct AugmentationPipeline {
  // Default: the five kinds used for contrastive views.
  std::vector<AugmentationKind> kinds{AugmentationKind::Mirror, AugmentationKind::ScalePoses,
                                      AugmentationKind::RandomMove, AugmentationKind::Jitter,
                                      AugmentationKind::Shear};
  double probability = 0.5;
  // Optional per-kind override, index-aligned with `kinds`.
  std::vector<double> per_kind_probability;
  std::uint64_t seed = 0;
  AugmentRanges ranges;

  double probability_of(std::size_t kind_index) const;
};

// One stochastic pass: each kind applied in order with its probability.
SkeletonWindow augment_once(const AugmentationPipeline& pipeline, const SkeletonWindow& window, Rng& rng);

// Two independently drawn views of the same window.
std::pair<SkeletonWindow, SkeletonWindow> sample_pipeline(const AugmentationPipeline& pipeline,
                                                          const SkeletonWindow& window, Rng& rng);
std::pair<SkeletonWindow, SkeletonWindow> sample_pipeline(const AugmentationPipeline& pipeline,
                                                          const SkeletonWindow& window);

// Training-time view construction from a raw (pixel-space) window:
// ShiftPoses (if enabled) acts on raw pixels, then the window is normalized,
// then every other enabled kind acts in normalized units.
std::pair<SkeletonWindow, SkeletonWindow> make_training_views(const AugmentationPipeline& pipeline,
                                                              const SkeletonWindow& raw_window, Rng& rng);

}  // namespace gesturerep
