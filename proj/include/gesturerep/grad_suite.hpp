#pragma once

// Finite-difference checks of every loss composed with both towers on a small
// model and random inputs.

#include "gesturerep/towers.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace gesturerep {

struct GradSuiteOptions {
  std::vector<std::size_t> batch_sizes{2, 3, 4};
  std::size_t frames = 8;
  std::size_t speech_frames = 4;
  double temperature = 0.1;
  // Central-difference step. Much smaller and rounding in the loss swamps
  // small gradient entries.
  double epsilon = 1e-5;
  // Points are redrawn until every relu input is at least this many steps
  // away from zero.
  double kink_margin_factor = 20.0;
  std::size_t max_attempts = 2000;
  double bias_shift = 0.5;
  // Nonzero analytic entries below this are beyond finite-difference
  // resolution in double; such points are redrawn too.
  double resolvable_gradient = 1e-6;
  // Coordinates sampled per parameter tensor (0 = all).
  std::size_t max_coords_per_leaf = 0;
  std::uint64_t seed = 0;
};

struct GradSuiteEntry {
  std::string loss;  // unimodal, multimodal or combined
  std::size_t batch_size = 0;
  std::size_t coordinates = 0;
  double max_relative_error = 0.0;
  // Smallest |relu input| at the evaluation point.
  double relu_margin = 0.0;
  std::size_t draws = 1;
};

// Small tower shapes used by the suite.
ModelConfig grad_suite_model();

std::vector<GradSuiteEntry> run_grad_suite(const GradSuiteOptions& options = {});

}  // namespace gesturerep
