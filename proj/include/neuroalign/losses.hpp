#pragma once

#include <cstddef>
#include <span>
#include <string>

#include "json.hpp"

#include "neuroalign/stats.hpp"
#include "neuroalign/tensor.hpp"

namespace neuroalign {

// How the correlation inside the contrastive terms is computed.
//   pearson:   differentiable; default for training
//   soft_rank: Pearson of temperature-controlled soft ranks (approximates Spearman)
//   spearman:  exact Spearman; no gradient, evaluation only
enum class RankMode { pearson, soft_rank, spearman };

std::string to_string(RankMode mode);
RankMode parse_rank_mode(const std::string& name);

struct GenerationOptions {
  RankMode rank_mode = RankMode::pearson;
  double soft_rank_temperature = 0.1;
  // With N = 1 the negative term is undefined; allow it to be dropped.
  bool allow_positive_only = false;
};

struct GenerationTerms {
  double mse = 0.0;
  double positive = 0.0;
  double negative = 0.0;
  double generation = 0.0;  // mse + positive - negative
  // Number of correlations evaluated for each term.
  std::size_t positive_pairs = 0;
  std::size_t negative_pairs = 0;
};

struct LossBreakdown {
  double total = 0.0;
  double classification = 0.0;
  double generation = 0.0;
  double mse_term = 0.0;
  double positive_term = 0.0;
  double negative_term = 0.0;
  double beta = 0.0;
  std::size_t positive_pairs = 0;
  std::size_t negative_pairs = 0;

  nlohmann::json to_json() const;
};

// Mean over the batch of -log softmax(logits)[label]. Writes dL/dlogits when
// requested. Throws InvalidArgument for labels outside [0, C).
double classification_loss(const RowMatrix& logits, std::span<const int> labels,
                           RowMatrix* d_logits = nullptr);

// mse = mean over rows of the per-element squared error;
// positive = mean_i [1 - rho(gen_i, real_i)];
// negative = mean over ordered i != j of [1 - rho(gen_i, real_j)].
GenerationTerms generation_loss(const RowMatrix& generated, const RowMatrix& real,
                                const GenerationOptions& options = {},
                                RowMatrix* d_generated = nullptr);

struct AlignmentGradients {
  RowMatrix d_logits;
  RowMatrix d_generated;
};

// total = classification + beta * generation. beta = 0 is the control objective.
LossBreakdown alignment_loss(const RowMatrix& logits, std::span<const int> labels,
                             const RowMatrix& generated, const RowMatrix& real, double beta,
                             const GenerationOptions& options = {},
                             AlignmentGradients* grads = nullptr);

// Soft rank of each entry: sum_j sigmoid((z_i - z_j) / temperature) with z the
// standardized input. Tends to the ordinary rank as temperature -> 0.
Eigen::VectorXd soft_rank(const Eigen::VectorXd& x, double temperature);

}  // namespace neuroalign
