#pragma once

#include <cstddef>
#include <filesystem>

#include "neuroalign/tensor.hpp"

namespace neuroalign {

struct PCAModel {
  Vector mean;                // n_features
  RowMatrix components;       // k x n_features, orthonormal rows
  Vector explained_variance;  // k, non-increasing; sample variance (n - 1)

  std::size_t k() const { return static_cast<std::size_t>(components.rows()); }
  std::size_t n_features() const { return static_cast<std::size_t>(components.cols()); }
};

// Top-k principal directions of mean-centered X via thin SVD. Each
// component's largest-magnitude entry is made positive. Throws
// InvalidArgument when k is out of range or X has rank below k.
PCAModel fit_pca(const RowMatrix& X, std::size_t k);

// (X - mean) * components^T
RowMatrix apply_pca(const PCAModel& model, const RowMatrix& X);
// projected * components + mean
RowMatrix reconstruct_pca(const PCAModel& model, const RowMatrix& projected);

// Per-feature z-scoring with training statistics. Constant features get
// scale 1 so they map to 0.
struct Standardizer {
  Vector mean;
  Vector scale;
};

Standardizer fit_standardizer(const RowMatrix& X);
RowMatrix apply_standardizer(const Standardizer& s, const RowMatrix& X);

// Optional z-scoring followed by PCA, fit on training responses only.
struct ResponsePreprocessor {
  bool zscore = true;
  Standardizer standardizer;
  PCAModel pca;

  static ResponsePreprocessor fit(const RowMatrix& train, std::size_t k, bool zscore);
  RowMatrix transform(const RowMatrix& X) const;

  void save(const std::filesystem::path& dir) const;
  static ResponsePreprocessor load(const std::filesystem::path& dir);
};

}  // namespace neuroalign
