#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "neuroalign/backbone.hpp"
#include "neuroalign/eeg_decoding.hpp"
#include "neuroalign/synthetic.hpp"
#include "neuroalign/trainer.hpp"

namespace neuroalign::detail {

struct ModelRef {
  std::string name;
  std::string subject;  // empty: not tied to a subject
  std::filesystem::path checkpoint;
};

struct BackboneSection {
  Variant variant = Variant::tiny;
  std::optional<std::uint64_t> init_seed;  // defaults to the run seed
  std::optional<std::filesystem::path> checkpoint;
  bool calibrate_batchnorm = true;
  std::size_t calibration_batch = 64;
};

struct DataSection {
  std::optional<std::filesystem::path> train_manifest;
  std::optional<std::filesystem::path> test_manifest;
  std::optional<std::filesystem::path> eeg_manifest;
  std::optional<std::filesystem::path> embedding_csv;
  std::string roi = "all_visual";
};

struct TrainingSection {
  AlignmentConfig alignment;
  std::vector<double> beta_sweep;
  std::vector<std::string> subjects;
};

struct EvaluationSection {
  std::optional<std::filesystem::path> train_run;
  std::vector<ModelRef> models;
  bool include_baseline = true;
  std::optional<std::filesystem::path> baseline_checkpoint;
  std::string mode = "both";  // within, across, both
  std::vector<std::string> rois;
  std::size_t batch_size = 64;
};

struct EegSection {
  DecodingConfig decoding;
  double alpha = 0.05;
  bool cluster_correction = false;
  std::size_t n_permutations = 1000;
};

struct DimsSection {
  std::optional<std::filesystem::path> manifest;  // defaults to data.test_manifest
  std::string model;                               // defaults to the first non-baseline model
  std::string layer = "IT";
};

struct SynthSection {
  SyntheticFmriOptions fmri;
  SyntheticEegOptions eeg;
  std::size_t embedding_dimensions = 49;
};

struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<double> beta;
  std::optional<std::string> subject;
};

struct RunConfig {
  std::uint64_t seed = 0;
  BackboneSection backbone;
  DataSection data;
  TrainingSection training;
  EvaluationSection evaluation;
  EegSection eeg;
  DimsSection dims;
  SynthSection synth;
  Overrides overrides;
  std::filesystem::path base_dir;
  std::optional<std::filesystem::path> data_root;  // NEUROALIGN_DATA_ROOT
  std::string device = "cpu";                      // NEUROALIGN_DEVICE

  std::uint64_t init_seed() const { return backbone.init_seed.value_or(seed); }
  // Every field with defaults materialized, paths absolute.
  nlohmann::json resolved() const;
};

// Parses and validates; every ConfigError names the offending field.
RunConfig load_run_config(const std::optional<std::filesystem::path>& path, const Overrides& overrides);

}  // namespace neuroalign::detail
