#include "neuroalign/losses.hpp"

#include <cmath>
#include <vector>

#include "neuroalign/error.hpp"

namespace neuroalign {

using nlohmann::json;

std::string to_string(RankMode mode) {
  switch (mode) {
    case RankMode::pearson: return "pearson";
    case RankMode::soft_rank: return "soft";
    case RankMode::spearman: return "spearman";
  }
  return "pearson";
}

RankMode parse_rank_mode(const std::string& name) {
  if (name == "pearson") return RankMode::pearson;
  if (name == "soft" || name == "soft_rank") return RankMode::soft_rank;
  if (name == "spearman") return RankMode::spearman;
  throw InvalidArgument("unknown rank_mode '" + name + "' (expected pearson, soft or spearman)");
}

json LossBreakdown::to_json() const {
  return {{"total", total},
          {"classification", classification},
          {"generation", generation},
          {"mse_term", mse_term},
          {"positive_term", positive_term},
          {"negative_term", negative_term},
          {"beta", beta},
          {"positive_pairs", positive_pairs},
          {"negative_pairs", negative_pairs}};
}

double classification_loss(const RowMatrix& logits, std::span<const int> labels, RowMatrix* d_logits) {
  const Eigen::Index n = logits.rows();
  const Eigen::Index c = logits.cols();
  if (static_cast<std::size_t>(n) != labels.size()) {
    throw InvalidArgument("classification_loss: " + std::to_string(labels.size()) + " labels for " +
                          std::to_string(n) + " rows");
  }
  if (n == 0) throw InvalidArgument("classification_loss: empty batch");
  if (d_logits) d_logits->resize(n, c);
  double loss = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const int label = labels[static_cast<std::size_t>(i)];
    if (label < 0 || label >= c) {
      throw InvalidArgument("classification_loss: label " + std::to_string(label) +
                            " outside [0, " + std::to_string(c) + ")");
    }
    const double mx = logits.row(i).maxCoeff();
    const double lse = mx + std::log((logits.row(i).array() - mx).exp().sum());
    loss += lse - logits(i, label);
    if (d_logits) {
      d_logits->row(i) = (logits.row(i).array() - lse).exp();
      (*d_logits)(i, label) -= 1.0;
    }
  }
  if (d_logits) *d_logits /= static_cast<double>(n);
  return loss / static_cast<double>(n);
}

Eigen::VectorXd soft_rank(const Eigen::VectorXd& x, double temperature) {
  if (!(temperature > 0.0)) throw InvalidArgument("soft_rank: temperature must be positive");
  const Eigen::Index d = x.size();
  const double mu = x.mean();
  const double sd = std::sqrt((x.array() - mu).square().mean());
  if (!(sd > 0.0)) throw InvalidArgument("degenerate vector");
  const Eigen::VectorXd z = (x.array() - mu) / sd;
  Eigen::VectorXd r = Eigen::VectorXd::Zero(d);
  for (Eigen::Index i = 0; i < d; ++i) {
    double s = 0.0;
    for (Eigen::Index j = 0; j < d; ++j) s += 1.0 / (1.0 + std::exp(-(z(i) - z(j)) / temperature));
    r(i) = s;
  }
  return r;
}

namespace {

// Gradient of soft_rank(x) contracted with upstream g.
Eigen::VectorXd soft_rank_backward(const Eigen::VectorXd& x, double temperature,
                                   const Eigen::VectorXd& g) {
  const Eigen::Index d = x.size();
  const double mu = x.mean();
  const double sd = std::sqrt((x.array() - mu).square().mean());
  const Eigen::VectorXd z = (x.array() - mu) / sd;
  Eigen::VectorXd dz = Eigen::VectorXd::Zero(d);
  for (Eigen::Index k = 0; k < d; ++k) {
    double acc = 0.0;
    for (Eigen::Index j = 0; j < d; ++j) {
      const double s = 1.0 / (1.0 + std::exp(-(z(k) - z(j)) / temperature));
      acc += s * (1.0 - s) * (g(k) - g(j));
    }
    dz(k) = acc / temperature;
  }
  const double mean_dz = dz.mean();
  const double mean_dz_z = dz.cwiseProduct(z).mean();
  return ((dz.array() - mean_dz) - z.array() * mean_dz_z) / sd;
}

struct NormalizedRows {
  RowMatrix unit;          // centered rows scaled to unit norm
  Eigen::VectorXd norms;   // norm of each centered row
  RowMatrix transformed;   // rows after the rank transform
};

NormalizedRows normalize_rows(const RowMatrix& m, const GenerationOptions& options, const char* which) {
  NormalizedRows out;
  out.transformed.resize(m.rows(), m.cols());
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    const Eigen::VectorXd row = m.row(i).transpose();
    switch (options.rank_mode) {
      case RankMode::pearson:
        out.transformed.row(i) = row.transpose();
        break;
      case RankMode::soft_rank:
        out.transformed.row(i) = soft_rank(row, options.soft_rank_temperature).transpose();
        break;
      case RankMode::spearman: {
        const auto ranks = average_ranks(std::span<const double>(row.data(), static_cast<std::size_t>(row.size())));
        out.transformed.row(i) = Eigen::Map<const Eigen::RowVectorXd>(ranks.data(), row.size());
        break;
      }
    }
  }
  out.unit = out.transformed.colwise() - out.transformed.rowwise().mean();
  out.norms = out.unit.rowwise().norm();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    const auto span = std::span<const double>(out.transformed.row(i).data(),
                                              static_cast<std::size_t>(m.cols()));
    if (is_degenerate(span) || !(out.norms(i) > 0.0)) {
      throw InvalidArgument(std::string("degenerate vector: ") + which + " row " + std::to_string(i) +
                            " has zero variance");
    }
    out.unit.row(i) /= out.norms(i);
  }
  return out;
}

}  // namespace

GenerationTerms generation_loss(const RowMatrix& generated, const RowMatrix& real,
                                const GenerationOptions& options, RowMatrix* d_generated) {
  if (generated.rows() != real.rows() || generated.cols() != real.cols()) {
    throw InvalidArgument("generation_loss: generated is " + std::to_string(generated.rows()) + "x" +
                          std::to_string(generated.cols()) + " but real is " +
                          std::to_string(real.rows()) + "x" + std::to_string(real.cols()));
  }
  const Eigen::Index n = generated.rows();
  const Eigen::Index d = generated.cols();
  if (n < 1) throw InvalidArgument("generation_loss: empty batch");
  if (d < 3) throw InvalidArgument("generation_loss: correlation needs at least 3 features");
  const bool with_negative = n >= 2;
  if (!with_negative && !options.allow_positive_only) {
    throw InvalidArgument("generation_loss: negative term needs at least 2 rows");
  }
  if (d_generated && options.rank_mode == RankMode::spearman) {
    throw InvalidArgument("generation_loss: exact Spearman has no usable gradient; use pearson or soft");
  }

  GenerationTerms terms;
  const RowMatrix diff = generated - real;
  terms.mse = diff.squaredNorm() / static_cast<double>(n * d);

  const NormalizedRows g = normalize_rows(generated, options, "generated");
  const NormalizedRows r = normalize_rows(real, options, "real");

  const double w_pos = 1.0 / static_cast<double>(n);
  const double w_neg = with_negative ? 1.0 / static_cast<double>(n * (n - 1)) : 0.0;

  RowMatrix d_transformed;
  if (d_generated) d_transformed = RowMatrix::Zero(n, d);

  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      if (i != j && !with_negative) continue;
      const double rho = g.unit.row(i).dot(r.unit.row(j));
      double weight;
      if (i == j) {
        terms.positive += w_pos * (1.0 - rho);
        ++terms.positive_pairs;
        weight = -w_pos;  // d(1 - rho) = -d rho
      } else {
        terms.negative += w_neg * (1.0 - rho);
        ++terms.negative_pairs;
        weight = w_neg;  // generation subtracts the negative term
      }
      if (d_generated) {
        // d rho / d u_i = (b_j - rho * a_i) / |u_i - mean|
        d_transformed.row(i) += weight * (r.unit.row(j) - rho * g.unit.row(i)) / g.norms(i);
      }
    }
  }
  terms.generation = terms.mse + terms.positive - terms.negative;

  if (d_generated) {
    *d_generated = diff * (2.0 / static_cast<double>(n * d));
    if (options.rank_mode == RankMode::soft_rank) {
      for (Eigen::Index i = 0; i < n; ++i) {
        d_generated->row(i) +=
            soft_rank_backward(generated.row(i).transpose(), options.soft_rank_temperature,
                               d_transformed.row(i).transpose())
                .transpose();
      }
    } else {
      *d_generated += d_transformed;
    }
  }
  return terms;
}

LossBreakdown alignment_loss(const RowMatrix& logits, std::span<const int> labels,
                             const RowMatrix& generated, const RowMatrix& real, double beta,
                             const GenerationOptions& options, AlignmentGradients* grads) {
  if (!(beta >= 0.0)) throw InvalidArgument("alignment_loss: beta must be >= 0");
  LossBreakdown out;
  out.beta = beta;
  out.classification = classification_loss(logits, labels, grads ? &grads->d_logits : nullptr);
  const GenerationTerms g =
      generation_loss(generated, real, options, grads ? &grads->d_generated : nullptr);
  out.generation = g.generation;
  out.mse_term = g.mse;
  out.positive_term = g.positive;
  out.negative_term = g.negative;
  out.positive_pairs = g.positive_pairs;
  out.negative_pairs = g.negative_pairs;
  out.total = out.classification + beta * out.generation;
  if (grads) grads->d_generated *= beta;
  return out;
}

}  // namespace neuroalign
