#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "neuroalign/backbone.hpp"
#include "neuroalign/dimension_analysis.hpp"
#include "neuroalign/tensor.hpp"

namespace neuroalign {

// Smooth random scenes in [0, 1]: a few coloured Gaussian blobs over an
// oriented grating. Deterministic in seed; image i depends only on (seed, i).
Tensor synthetic_images(std::size_t n, std::size_t height, std::size_t width, std::uint64_t seed,
                        std::size_t first_index = 0);

// Flattened stage activations concatenated in V1, V2, V4, IT order.
RowMatrix concatenated_features(const Backbone& backbone, const Tensor& images, std::size_t batch_size = 64);

struct SyntheticFmriOptions {
  std::size_t n_train = 512;
  std::size_t n_test = 64;
  std::size_t n_voxels = 256;
  std::size_t n_subjects = 1;
  std::size_t repetitions = 1;
  // Signal variance / noise variance of the repetition-averaged response,
  // per voxel.
  double snr = 5.0;
  std::uint64_t seed = 0;
};

struct SyntheticSubject {
  RowMatrix readout;          // n_features x n_voxels, fixed random map
  Tensor train_trials;        // [n_train, reps, n_voxels]
  Tensor test_trials;         // [n_test, reps, n_voxels]
};

// The "brain" is a tiny backbone built from derive_seed(seed, {brain}) with
// batch-norm statistics calibrated on the training images. Each subject has
// its own readout and noise.
struct SyntheticFmri {
  Tensor train_images;
  Tensor test_images;
  std::vector<std::string> train_ids;
  std::vector<std::string> test_ids;
  Backbone brain;
  std::vector<SyntheticSubject> subjects;
};

SyntheticFmri make_synthetic_fmri(const SyntheticFmriOptions& options, const BackboneSpec& spec = BackboneSpec::tiny());

// Writes train/ and test/ datasets (manifest.json, images/, responses/) under
// dir. Test stimuli are assigned to families natural/shape/letter in
// proportion 5:4:1.
void write_synthetic_fmri(const std::filesystem::path& dir, const SyntheticFmri& data);

struct SyntheticEegOptions {
  std::size_t n_stimuli = 12;
  std::size_t n_subjects = 3;
  std::size_t repetitions = 20;
  std::size_t n_channels = 17;
  std::size_t n_timepoints = 20;
  double sample_rate_hz = 100.0;
  double window_start_ms = 0.0;
  // Amplitude of the stimulus-specific pattern relative to unit noise; the
  // pattern ramps up from onset_fraction of the window.
  double signal = 0.25;
  double onset_fraction = 0.25;
  std::uint64_t seed = 0;
};

// Writes an EEG dataset (manifest.json, images/, epochs/) under dir. The
// stimulus pattern at each timepoint is a fixed random projection of the
// brain network's IT features so that model and EEG geometry are related.
void write_synthetic_eeg(const std::filesystem::path& dir, const SyntheticEegOptions& options,
                         const BackboneSpec& spec = BackboneSpec::tiny());

// n_stimuli x n_dimensions random embedding with unit-variance columns.
DimensionEmbedding synthetic_embedding(const std::vector<std::string>& stimulus_ids, std::size_t n_dimensions,
                                       std::uint64_t seed);

}  // namespace neuroalign
