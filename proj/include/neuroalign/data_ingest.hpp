#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "neuroalign/tensor.hpp"

namespace neuroalign {

enum class Modality { fmri, eeg };

std::string to_string(Modality modality);
Modality parse_modality(const std::string& name);

struct StimulusEntry {
  std::string stimulus_id;
  std::filesystem::path image_path;  // absolute after loading
  std::optional<int> class_label;
  int repetition_count = 1;
  std::string family;  // optional grouping, e.g. natural / shape / letter
};

struct StimulusSet {
  std::vector<StimulusEntry> entries;

  std::size_t size() const noexcept { return entries.size(); }
  bool empty() const noexcept { return entries.empty(); }
  std::vector<std::string> ids() const;
  // Distinct families in first-appearance order; empty names are skipped.
  std::vector<std::string> families() const;
  StimulusSet subset(std::span<const std::size_t> indices) const;
  std::vector<std::size_t> indices_of_family(const std::string& family) const;
};

struct NeuralResponseMatrix {
  std::string subject_id;
  std::string roi = "all_visual";
  RowMatrix data;  // n_stimuli x n_features
  std::vector<std::string> stimulus_ids;
  Modality modality = Modality::fmri;

  // Throws ValidationError if rows and ids disagree or data is non-finite.
  void validate() const;
  NeuralResponseMatrix subset(std::span<const std::size_t> rows) const;
};

struct EEGEpochs {
  std::string subject_id;
  Tensor data;  // [n_stimuli, n_repetitions, n_channels, n_timepoints]
  double sample_rate_hz = 100.0;
  std::pair<double, double> window_ms{0.0, 200.0};
  std::vector<std::string> stimulus_ids;

  std::size_t n_stimuli() const { return data.dim(0); }
  std::size_t n_repetitions() const { return data.dim(1); }
  std::size_t n_channels() const { return data.dim(2); }
  std::size_t n_timepoints() const { return data.dim(3); }
  void validate() const;
};

struct SubjectEntry {
  std::string id;
  // fMRI: ROI name -> array path (relative to the manifest directory).
  std::map<std::string, std::filesystem::path> rois;
  // EEG
  std::size_t n_channels = 0;
  std::size_t n_timepoints = 0;
  double sample_rate_hz = 0.0;
  std::pair<double, double> window_ms{0.0, 0.0};
  std::filesystem::path epochs_path;
};

struct DatasetManifest {
  std::string name;
  Modality modality = Modality::fmri;
  std::vector<SubjectEntry> subjects;
  StimulusSet stimuli;
  std::filesystem::path base_dir;
};

// Parses and checks the manifest's own invariants (unique ids, repetition
// counts); does not touch array files.
DatasetManifest parse_manifest(const std::filesystem::path& manifest_path);
void write_manifest(const std::filesystem::path& manifest_path, const DatasetManifest& manifest);

struct Dataset {
  DatasetManifest manifest;
  StimulusSet stimuli;
  std::vector<NeuralResponseMatrix> fmri;  // one per (subject, ROI), subject-major
  std::vector<EEGEpochs> eeg;              // one per subject

  const NeuralResponseMatrix& response(const std::string& subject, const std::string& roi) const;
  const EEGEpochs& epochs(const std::string& subject) const;
  std::vector<std::string> subject_ids() const;
  std::vector<std::string> rois(const std::string& subject) const;
};

// fMRI ROI arrays may be [sum(repetition_count), F] (trial rows grouped by
// stimulus in manifest order), [n_stimuli, reps, F] with uniform repetition
// counts, or [n_stimuli, F] if already averaged. EEG arrays are
// [n_stimuli, reps, C, T]. fMRI trials are averaged on load; EEG epochs keep
// their repetitions for pseudo-trial averaging.
Dataset load_dataset(const std::filesystem::path& manifest_path);

// Mean over axis 1 of [n_stimuli, n_reps, ...]; throws "no repetitions" when
// n_reps is 0.
Tensor average_repetitions(const Tensor& trials);

// Per stimulus: seeded shuffle of the repetitions, then k_groups equal-size
// contiguous groups, each averaged. Remainder repetitions are dropped.
Tensor pseudo_trial_average(const Tensor& trials, std::size_t k_groups, std::uint64_t seed);

// Loads images as [N, 3, H, W] with values in [0, 1]. Supports raw arrays
// (.f32/.f64, shape [3, H, W]) and binary PPM (P6). Images of a different
// size are bilinearly resized to (height, width).
Tensor load_image(const std::filesystem::path& path, std::size_t height, std::size_t width);
Tensor load_images(const StimulusSet& stimuli, std::size_t height, std::size_t width);

}  // namespace neuroalign
