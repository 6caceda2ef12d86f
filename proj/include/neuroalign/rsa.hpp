#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "neuroalign/backbone.hpp"
#include "neuroalign/data_ingest.hpp"
#include "neuroalign/stats.hpp"
#include "neuroalign/tensor.hpp"

namespace neuroalign {

enum class RdmMethod { one_minus_pearson, decoding_accuracy, abs_feature_diff };
std::string to_string(RdmMethod method);
RdmMethod parse_rdm_method(const std::string& name);

struct Rdm {
  RowMatrix matrix;  // n x n
  std::vector<std::string> stimulus_ids;
  RdmMethod method = RdmMethod::one_minus_pearson;

  std::size_t size() const { return static_cast<std::size_t>(matrix.rows()); }
  // Symmetric within tolerance, zero diagonal, finite, ids aligned.
  // Throws ValidationError describing the first violation.
  void validate(double symmetry_tolerance = 1e-6) const;
  // Strict upper triangle, row by row: (0,1), (0,2), ..., (n-2,n-1).
  std::vector<double> upper_triangle() const;
};

// 1 - Pearson between rows. Throws InvalidArgument naming the stimulus when a
// row has zero variance, and for fewer than 3 rows.
Rdm pattern_rdm(const RowMatrix& patterns, std::vector<std::string> stimulus_ids);
Rdm neural_rdm(const NeuralResponseMatrix& responses);

using LayerRdms = std::array<Rdm, kNumStages>;

// One RDM per stage on the flattened (C, H, W) activations.
LayerRdms activation_rdms(const LayerActivations& acts, const std::vector<std::string>& stimulus_ids);
LayerRdms model_rdms(const Backbone& backbone, const Tensor& images,
                     const std::vector<std::string>& stimulus_ids, std::size_t batch_size = 64);

// Spearman over the strict upper triangles. Throws InvalidArgument when the
// sizes or stimulus orderings differ.
double compare_rdms(const Rdm& a, const Rdm& b);

struct RoiSimilarity {
  std::array<double, kNumStages> layer_rho{};
  double best_rho = 0.0;
  std::size_t best_layer = 0;  // index into kStageNames
};

// Maximum over layers; ties go to the earlier layer.
RoiSimilarity best_layer(const std::array<double, kNumStages>& layer_rho);
RoiSimilarity roi_similarity(const LayerRdms& model, const Rdm& neural);

// (aligned - baseline) / baseline, or nullopt when baseline is 0.
std::optional<double> improvement_ratio(double aligned_rho, double baseline_rho);

struct TemporalOptions {
  double alpha = 0.05;
  // Cluster-mass sign-flip permutation test over contiguous timepoints
  // instead of uncorrected per-timepoint flags.
  bool cluster_correction = false;
  std::size_t n_permutations = 1000;
  std::uint64_t seed = 0;
};

struct TemporalComparison {
  std::size_t model_a = 0;
  std::size_t model_b = 0;
  // [layer][timepoint]
  std::array<std::vector<double>, kNumStages> t;
  // Per-timepoint p; under cluster correction, timepoints inside a cluster
  // carry the cluster's permutation p instead.
  std::array<std::vector<double>, kNumStages> p;
  std::array<std::vector<bool>, kNumStages> significant;
};

struct TemporalSimilarity {
  std::size_t n_models = 0;
  std::size_t n_subjects = 0;
  std::size_t n_timepoints = 0;
  // rho[model][subject][layer][timepoint]
  std::vector<std::vector<std::array<std::vector<double>, kNumStages>>> rho;
  bool significance_enabled = false;  // false with fewer than 3 subjects
  std::vector<TemporalComparison> comparisons;  // every model pair a < b
  // EEG RDMs with no variance (rho set to 0 for every model and layer).
  std::size_t n_constant_eeg_rdms = 0;

  double at(std::size_t model, std::size_t subject, std::size_t layer, std::size_t t) const {
    return rho[model][subject][layer][t];
  }
};

// models[m] holds one RDM per layer; eeg[s][t] is subject s's RDM at
// timepoint t. Per layer and timepoint, a two-sided paired t-test across
// subjects compares each model pair.
TemporalSimilarity temporal_similarity(const std::vector<LayerRdms>& models,
                                       const std::vector<std::vector<Rdm>>& eeg,
                                       const TemporalOptions& options = {});

}  // namespace neuroalign
