#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "neuroalign/alignment_head.hpp"
#include "neuroalign/backbone.hpp"
#include "neuroalign/losses.hpp"
#include "neuroalign/optimizer.hpp"

namespace neuroalign {

enum class LabelSource { teacher, manifest };
std::string to_string(LabelSource source);
LabelSource parse_label_source(const std::string& name);

enum class BnStatsMode { update, frozen };
std::string to_string(BnStatsMode mode);
BnStatsMode parse_bn_stats_mode(const std::string& name);

struct AlignmentConfig {
  double beta = 40.0;
  double learning_rate = 2e-5;
  std::size_t epochs = 5;
  std::size_t batch_size = 16;
  std::uint64_t seed = 0;
  std::string optimizer = "adam";
  RankMode rank_mode = RankMode::pearson;
  double soft_rank_temperature = 0.1;
  std::size_t pca_k = 1024;
  std::size_t per_layer_dim = 128;
  bool zscore = true;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;
  // update: batch statistics in training, running stats updated.
  // frozen: running statistics in forward and backward, never updated.
  BnStatsMode bn_stats = BnStatsMode::update;
  // Any of "V1", "V2", "V4", "IT", "decoder"; their parameters get no updates.
  std::vector<std::string> frozen_stages;
  // teacher: argmax of a frozen copy of backbone_init. manifest: class_label
  // from the stimulus set, required for every stimulus.
  LabelSource label_source = LabelSource::teacher;

  // Throws ConfigError naming the offending field.
  void validate() const;
  nlohmann::json to_json() const;
  // Missing keys take defaults; unknown keys are rejected.
  static AlignmentConfig from_json(const nlohmann::json& j);
  GenerationOptions generation_options() const;
  AdamOptions adam_options() const;
};

struct TrainingData {
  Tensor images;        // [N, 3, H, W] in [0, 1]
  RowMatrix responses;  // N x pca_k, already preprocessed
  std::vector<std::string> stimulus_ids;
  std::vector<int> manifest_labels;  // empty unless label_source = manifest
};

struct StepRecord {
  std::size_t step = 0;   // 0-based, global
  std::size_t epoch = 0;  // 0-based
  std::size_t batch_size = 0;
  LossBreakdown losses;
  nlohmann::json to_json() const;
};

struct TrainingLog {
  std::vector<StepRecord> steps;
  std::vector<double> epoch_mean_generation;
  std::vector<double> epoch_mean_total;
  std::size_t best_epoch = 0;
};

struct TrainedModel {
  Backbone backbone;
  AlignmentHead head;
  AlignmentConfig config;
};

struct TrainResult {
  TrainedModel model;
  TrainingLog log;
  Backbone teacher;  // frozen snapshot of backbone_init
};

struct TrainOptions {
  // When set: training_log.jsonl plus checkpoints/{epoch_<e>,best,final}.
  std::optional<std::filesystem::path> output_dir;
  std::function<void(const StepRecord&)> on_step;
  std::size_t teacher_batch = 64;
};

// Steps per epoch: ceil(n / batch_size).
std::size_t steps_per_epoch(std::size_t n_samples, std::size_t batch_size);

// Throws InvalidArgument before any update when the data and config
// disagree (response width vs pca_k, row counts, image size, labels).
TrainResult train(const AlignmentConfig& config, const Backbone& backbone_init,
                  const TrainingData& data, const TrainOptions& options = {});

// One independent train() per (config, dataset) pair, all starting from
// backbone_init. Output directories, if given, are per model.
std::vector<TrainResult> train_individual_suite(
    const std::vector<AlignmentConfig>& configs, const Backbone& backbone_init,
    const std::vector<TrainingData>& datasets,
    const std::vector<std::optional<std::filesystem::path>>& output_dirs = {});

}  // namespace neuroalign
