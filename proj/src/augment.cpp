#include "gesturerep/augment.hpp"

#include "gesturerep/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace gesturerep {

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
  std::uint64_t z = base + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

namespace {

template <typename F>
SkeletonWindow map_points(const SkeletonWindow& window, F&& f) {
  SkeletonWindow out = window;
  for (std::size_t t = 0; t < window.frames; ++t)
    for (std::size_t j = 0; j < kJointCount; ++j) {
      auto [x, y] = f(t, window.at(0, t, j), window.at(1, t, j));
      out.at(0, t, j) = x;
      out.at(1, t, j) = y;
    }
  return out;
}

void require(bool ok, const std::string& what) {
  if (!ok) throw ParameterError(what);
}

bool within(double v, double lo, double hi) { return v >= lo && v <= hi; }

double uniform(Rng& rng, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }

double radians(double degrees) { return degrees * std::numbers::pi / 180.0; }

void validate(const AugmentationParams& params, const AugmentRanges& r) {
  std::visit(
      [&r](const auto& p) {
        using P = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<P, ShiftParams>) {
          require(within(p.dx, -r.shift_pixels, r.shift_pixels) && within(p.dy, -r.shift_pixels, r.shift_pixels),
                  "ShiftPoses: shift outside +/-" + std::to_string(r.shift_pixels));
        } else if constexpr (std::is_same_v<P, ScaleParams>) {
          require(within(p.factor, r.scale_min, r.scale_max), "ScalePoses: factor outside range");
        } else if constexpr (std::is_same_v<P, RandomMoveParams>) {
          require(p.keyframes.size() == 2 || p.keyframes.size() == 3, "RandomMove: 1 or 2 segments required");
          for (const auto& k : p.keyframes) {
            require(within(k.degrees, -r.move_degrees, r.move_degrees), "RandomMove: rotation outside range");
            require(within(k.scale, r.move_scale_min, r.move_scale_max), "RandomMove: scale outside range");
            require(within(k.tx, -r.move_translation, r.move_translation) &&
                        within(k.ty, -r.move_translation, r.move_translation),
                    "RandomMove: translation outside range");
          }
        } else if constexpr (std::is_same_v<P, JitterParams>) {
          require(p.sigma >= 0.0 && p.sigma <= r.jitter_sigma, "Jitter: sigma outside range");
        } else if constexpr (std::is_same_v<P, AxisScaleParams>) {
          require(within(p.sx, r.axis_scale_min, r.axis_scale_max) && within(p.sy, r.axis_scale_min, r.axis_scale_max),
                  "AxisScale: factor outside range");
        } else if constexpr (std::is_same_v<P, RotationParams>) {
          const auto grid = rotation_grid(r);
          require(std::find(grid.begin(), grid.end(), p.degrees) != grid.end(), "Rotation: angle not on grid");
          require(p.anchor_joint < kJointCount, "Rotation: anchor joint out of range");
        } else if constexpr (std::is_same_v<P, ShearParams>) {
          require(within(p.sx, -r.shear, r.shear) && within(p.sy, -r.shear, r.shear),
                  "Shear: coefficient outside range");
        }
      },
      params);
}

}  // namespace

std::string to_string(AugmentationKind kind) {
  switch (kind) {
    case AugmentationKind::Mirror: return "mirror";
    case AugmentationKind::ShiftPoses: return "shift";
    case AugmentationKind::ScalePoses: return "scale";
    case AugmentationKind::RandomMove: return "random_move";
    case AugmentationKind::Jitter: return "jitter";
    case AugmentationKind::AxisScale: return "axis_scale";
    case AugmentationKind::Rotation: return "rotation";
    case AugmentationKind::Shear: return "shear";
  }
  return "?";
}

AugmentationKind parse_augmentation_kind(const std::string& name) {
  for (auto k : {AugmentationKind::Mirror, AugmentationKind::ShiftPoses, AugmentationKind::ScalePoses,
                 AugmentationKind::RandomMove, AugmentationKind::Jitter, AugmentationKind::AxisScale,
                 AugmentationKind::Rotation, AugmentationKind::Shear}) {
    if (to_string(k) == name) return k;
  }
  throw ParameterError("unknown augmentation kind '" + name + "'");
}

AugmentationKind kind_of(const AugmentationParams& params) {
  return static_cast<AugmentationKind>(params.index());
}

std::vector<int> rotation_grid(const AugmentRanges& ranges) {
  std::vector<int> grid;
  for (int d = -ranges.rotation_max_degrees; d <= ranges.rotation_max_degrees; d += ranges.rotation_step_degrees) {
    grid.push_back(d);
  }
  if (std::find(grid.begin(), grid.end(), 0) == grid.end()) {
    grid.insert(std::upper_bound(grid.begin(), grid.end(), 0), 0);
  }
  return grid;
}

AugmentationParams draw_params(AugmentationKind kind, Rng& rng, const AugmentRanges& r) {
  switch (kind) {
    case AugmentationKind::Mirror: return MirrorParams{};
    case AugmentationKind::ShiftPoses:
      return ShiftParams{uniform(rng, -r.shift_pixels, r.shift_pixels), uniform(rng, -r.shift_pixels, r.shift_pixels)};
    case AugmentationKind::ScalePoses: return ScaleParams{uniform(rng, r.scale_min, r.scale_max)};
    case AugmentationKind::RandomMove: {
      const int segments = std::uniform_int_distribution<int>(1, 2)(rng);
      RandomMoveParams p;
      p.keyframes.clear();
      for (int k = 0; k <= segments; ++k) {
        MoveKeyframe f;
        f.degrees = uniform(rng, -r.move_degrees, r.move_degrees);
        f.scale = uniform(rng, r.move_scale_min, r.move_scale_max);
        f.tx = uniform(rng, -r.move_translation, r.move_translation);
        f.ty = uniform(rng, -r.move_translation, r.move_translation);
        p.keyframes.push_back(f);
      }
      return p;
    }
    case AugmentationKind::Jitter: return JitterParams{r.jitter_sigma, rng()};
    case AugmentationKind::AxisScale:
      return AxisScaleParams{uniform(rng, r.axis_scale_min, r.axis_scale_max),
                             uniform(rng, r.axis_scale_min, r.axis_scale_max)};
    case AugmentationKind::Rotation: {
      const auto grid = rotation_grid(r);
      const auto i = std::uniform_int_distribution<std::size_t>(0, grid.size() - 1)(rng);
      return RotationParams{grid[i], kNose};
    }
    case AugmentationKind::Shear: return ShearParams{uniform(rng, -r.shear, r.shear), uniform(rng, -r.shear, r.shear)};
  }
  throw ParameterError("draw_params: unknown kind");
}

SkeletonWindow mirror(const SkeletonWindow& window) {
  std::vector<double> xs(kJointCount);
  for (std::size_t j = 0; j < kJointCount; ++j) xs[j] = window.at(0, 0, j);
  std::nth_element(xs.begin(), xs.begin() + kJointCount / 2, xs.end());
  const double axis = xs[kJointCount / 2];
  return map_points(window, [axis](std::size_t, double x, double y) { return std::pair{2.0 * axis - x, y}; });
}

SkeletonWindow rotate_about(const SkeletonWindow& window, double degrees, double ax, double ay) {
  const double c = std::cos(radians(degrees)), s = std::sin(radians(degrees));
  return map_points(window, [=](std::size_t, double x, double y) {
    const double dx = x - ax, dy = y - ay;
    return std::pair{ax + c * dx - s * dy, ay + s * dx + c * dy};
  });
}

SkeletonWindow apply_augmentation(const AugmentationParams& params, const SkeletonWindow& window,
                                  const AugmentRanges& ranges) {
  validate(params, ranges);
  return std::visit(
      [&window](const auto& p) -> SkeletonWindow {
        using P = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<P, MirrorParams>) {
          return mirror(window);
        } else if constexpr (std::is_same_v<P, ShiftParams>) {
          return map_points(window, [&p](std::size_t, double x, double y) { return std::pair{x + p.dx, y + p.dy}; });
        } else if constexpr (std::is_same_v<P, ScaleParams>) {
          return map_points(window,
                            [&p](std::size_t, double x, double y) { return std::pair{x * p.factor, y * p.factor}; });
        } else if constexpr (std::is_same_v<P, RandomMoveParams>) {
          const std::size_t segments = p.keyframes.size() - 1;
          const double span = window.frames > 1 ? static_cast<double>(window.frames - 1) : 1.0;
          return map_points(window, [&](std::size_t t, double x, double y) {
            const double pos = static_cast<double>(t) / span * static_cast<double>(segments);
            const std::size_t seg = std::min(static_cast<std::size_t>(pos), segments - 1);
            const double a = pos - static_cast<double>(seg);
            const auto& k0 = p.keyframes[seg];
            const auto& k1 = p.keyframes[seg + 1];
            const double deg = (1 - a) * k0.degrees + a * k1.degrees;
            const double sc = (1 - a) * k0.scale + a * k1.scale;
            const double tx = (1 - a) * k0.tx + a * k1.tx;
            const double ty = (1 - a) * k0.ty + a * k1.ty;
            const double c = std::cos(radians(deg)), s = std::sin(radians(deg));
            return std::pair{sc * (c * x - s * y) + tx, sc * (s * x + c * y) + ty};
          });
        } else if constexpr (std::is_same_v<P, JitterParams>) {
          Rng noise(p.noise_seed);
          std::normal_distribution<double> n(0.0, p.sigma);
          return map_points(window, [&](std::size_t, double x, double y) {
            const double nx = n(noise);
            const double ny = n(noise);
            return std::pair{x + nx, y + ny};
          });
        } else if constexpr (std::is_same_v<P, AxisScaleParams>) {
          return map_points(window, [&p](std::size_t, double x, double y) { return std::pair{x * p.sx, y * p.sy}; });
        } else if constexpr (std::is_same_v<P, RotationParams>) {
          return rotate_about(window, p.degrees, window.at(0, 0, p.anchor_joint), window.at(1, 0, p.anchor_joint));
        } else {
          return map_points(window,
                            [&p](std::size_t, double x, double y) { return std::pair{x + p.sx * y, p.sy * x + y}; });
        }
      },
      params);
}

double AugmentationPipeline::probability_of(std::size_t kind_index) const {
  if (!per_kind_probability.empty()) return per_kind_probability.at(kind_index);
  return probability;
}

namespace {

SkeletonWindow augment_filtered(const AugmentationPipeline& pipeline, const SkeletonWindow& window, Rng& rng,
                                bool shift_only) {
  SkeletonWindow out = window;
  for (std::size_t i = 0; i < pipeline.kinds.size(); ++i) {
    const auto kind = pipeline.kinds[i];
    if ((kind == AugmentationKind::ShiftPoses) != shift_only) continue;
    const bool apply = std::bernoulli_distribution(pipeline.probability_of(i))(rng);
    if (!apply) continue;
    out = apply_augmentation(draw_params(kind, rng, pipeline.ranges), out, pipeline.ranges);
  }
  return out;
}

}  // namespace

SkeletonWindow augment_once(const AugmentationPipeline& pipeline, const SkeletonWindow& window, Rng& rng) {
  SkeletonWindow out = window;
  for (std::size_t i = 0; i < pipeline.kinds.size(); ++i) {
    const auto kind = pipeline.kinds[i];
    if (!std::bernoulli_distribution(pipeline.probability_of(i))(rng)) continue;
    out = apply_augmentation(draw_params(kind, rng, pipeline.ranges), out, pipeline.ranges);
  }
  return out;
}

std::pair<SkeletonWindow, SkeletonWindow> sample_pipeline(const AugmentationPipeline& pipeline,
                                                          const SkeletonWindow& window, Rng& rng) {
  SkeletonWindow first = augment_once(pipeline, window, rng);
  SkeletonWindow second = augment_once(pipeline, window, rng);
  return {std::move(first), std::move(second)};
}

std::pair<SkeletonWindow, SkeletonWindow> sample_pipeline(const AugmentationPipeline& pipeline,
                                                          const SkeletonWindow& window) {
  Rng rng(pipeline.seed);
  return sample_pipeline(pipeline, window, rng);
}

std::pair<SkeletonWindow, SkeletonWindow> make_training_views(const AugmentationPipeline& pipeline,
                                                              const SkeletonWindow& raw_window, Rng& rng) {
  auto one = [&]() {
    SkeletonWindow w = augment_filtered(pipeline, raw_window, rng, true);
    return augment_filtered(pipeline, normalize_window(w), rng, false);
  };
  SkeletonWindow first = one();
  SkeletonWindow second = one();
  return {std::move(first), std::move(second)};
}

}  // namespace gesturerep
