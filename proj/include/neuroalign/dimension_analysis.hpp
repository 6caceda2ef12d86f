#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "neuroalign/rsa.hpp"

namespace neuroalign {

// Per-stimulus coordinates on named object dimensions (49 in the reference
// embedding; any count >= 1 is accepted).
struct DimensionEmbedding {
  RowMatrix values;  // n_stimuli x n_dimensions
  std::vector<std::string> dimension_names;
  std::vector<std::string> stimulus_ids;

  std::size_t n_dimensions() const { return dimension_names.size(); }
  // Finite values, unique names and ids, consistent sizes.
  void validate() const;
  // Rows reordered to match `ids`; throws ValidationError for a missing id.
  DimensionEmbedding aligned_to(const std::vector<std::string>& ids) const;
};

// CSV with header "stimulus_id,<name>,<name>,...".
DimensionEmbedding read_embedding_csv(const std::filesystem::path& path);
void write_embedding_csv(const std::filesystem::path& path, const DimensionEmbedding& embedding);

// Entry (i, j) = |e_i - e_j|.
Rdm feature_rdm(std::span<const double> column, std::vector<std::string> stimulus_ids);

struct PartialSpearmanResult {
  double rho = 0.0;
  std::optional<double> ridge_lambda;  // set when the control design was ill-conditioned
};

// Rank-transforms the upper triangles, regresses target and predictor on the
// controls (with intercept), and returns the Pearson correlation of the
// residuals; 0 when either residual vanishes. With no controls this is
// compare_rdms(target, predictor). A singular control design throws
// InvalidArgument listing the collinear controls by `control_names` (or
// index); a condition number above 1e8 switches to ridge regression.
PartialSpearmanResult partial_spearman(const Rdm& target, const Rdm& predictor, const std::vector<Rdm>& controls,
                                       const std::vector<std::string>& control_names = {});

struct DimensionProfile {
  std::vector<std::string> dimension_names;
  std::vector<double> partial_rho;
  std::vector<double> r2;
  std::vector<std::optional<double>> ridge_lambda;
};

// r2_d = partial_spearman(model, feature_rdm(d), all other feature RDMs)^2.
DimensionProfile dimension_profile(const Rdm& model_rdm, const DimensionEmbedding& embedding);

// aligned.r2 - baseline.r2 per dimension; names must match.
std::vector<double> profile_difference(const DimensionProfile& aligned, const DimensionProfile& baseline);

}  // namespace neuroalign
