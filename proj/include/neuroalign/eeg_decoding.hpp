#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"

#include "neuroalign/data_ingest.hpp"
#include "neuroalign/rsa.hpp"

namespace neuroalign {

enum class Classifier { linear_discriminant, linear_svm };
std::string to_string(Classifier classifier);
Classifier parse_classifier(const std::string& name);

struct DecodingConfig {
  std::size_t k_pseudo_trials = 5;
  std::size_t n_folds = 5;
  Classifier classifier = Classifier::linear_discriminant;
  std::uint64_t seed = 0;
  double svm_c = 1.0;
  std::size_t svm_max_epochs = 200;

  // n_folds >= 2, k_pseudo_trials >= n_folds.
  void validate() const;
  nlohmann::json to_json() const;
  static DecodingConfig from_json(const nlohmann::json& j);
};

// Binary linear classifier trained on rows of class0 / class1; predict()
// returns 1 when the decision value is strictly positive.
struct LinearModel {
  Vector w;
  double b = 0.0;
  int predict(const Eigen::Ref<const Vector>& x) const { return w.dot(x) + b > 0.0 ? 1 : 0; }
};

// Shrinkage LDA; the pooled within-class covariance is shrunk toward a scaled
// identity with the Ledoit-Wolf intensity.
LinearModel fit_lda(const RowMatrix& class0, const RowMatrix& class1);
// L2-regularized hinge-loss SVM solved by dual coordinate descent on
// centered features; the bias is learned as the weight of a constant feature.
LinearModel fit_linear_svm(const RowMatrix& class0, const RowMatrix& class1, double c,
                           std::size_t max_epochs, std::uint64_t seed);

// Ledoit-Wolf shrinkage intensity in [0, 1] for centered rows X.
double ledoit_wolf_shrinkage(const RowMatrix& centered);

// Cross-validated accuracy of telling a (k x C) from b (k x C). Folds are
// stratified: both classes share one seeded assignment of pseudo-trial
// positions to folds. With LDA, identical inputs give exactly 0.5.
double pairwise_decode(const RowMatrix& a, const RowMatrix& b, const DecodingConfig& config,
                       std::uint64_t seed);

// pseudo_trials: [n_stimuli, k, C, T]. Returns T RDMs whose (i, j) entry is
// the pairwise accuracy at that timepoint, computed once per pair with seed
// derive_seed(config.seed, {i, j, t}) and mirrored.
std::vector<Rdm> build_eeg_rdms(const Tensor& pseudo_trials, const std::vector<std::string>& stimulus_ids,
                                const DecodingConfig& config);
// Pseudo-trial averages the epochs (k_pseudo_trials groups), then decodes.
std::vector<Rdm> build_eeg_rdms(const EEGEpochs& epochs, const DecodingConfig& config);

}  // namespace neuroalign
