#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "neuroalign/losses.hpp"

namespace testsupport {

struct GradCheckOptions {
  std::uint64_t seed = 7;
  std::size_t batch = 4;
  std::size_t target_dim = 32;
  std::size_t per_layer_dim = 128;
  double beta = 40.0;
  neuroalign::RankMode rank_mode = neuroalign::RankMode::pearson;
  std::size_t samples_per_tensor = 6;
  // Batch-norm outputs sit near ReLU kinks; larger steps cross kinks for a
  // visible fraction of early-layer entries. Double precision leaves ample
  // headroom for roundoff at this step.
  double step = 1e-7;
  double rel_tol = 1e-3;
  double abs_floor = 1e-5;
};

struct GradCheckEntry {
  std::string name;
  std::size_t index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  bool ok = false;
};

struct GradCheckResult {
  std::vector<GradCheckEntry> entries;
  std::size_t passed() const;
  double pass_fraction() const;
};

// Tiny backbone + head, total alignment loss with batch-statistics batch
// norm; compares analytic gradients with central differences on sampled
// entries of every trainable tensor.
GradCheckResult check_alignment_gradients(const GradCheckOptions& options);

}  // namespace testsupport
