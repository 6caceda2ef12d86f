#include "neuroalign/preprocessing.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include <Eigen/SVD>

#include "json.hpp"

#include "neuroalign/array_io.hpp"
#include "neuroalign/error.hpp"

namespace neuroalign {

namespace fs = std::filesystem;

PCAModel fit_pca(const RowMatrix& X, std::size_t k) {
  const auto n = static_cast<std::size_t>(X.rows());
  const auto p = static_cast<std::size_t>(X.cols());
  if (k < 1 || k > std::min(n, p)) {
    throw InvalidArgument("fit_pca: k = " + std::to_string(k) + " outside [1, " +
                          std::to_string(std::min(n, p)) + "]");
  }
  if (!X.allFinite()) throw InvalidArgument("fit_pca: X contains non-finite values");

  PCAModel model;
  model.mean = X.colwise().mean().transpose();
  const Eigen::MatrixXd centered = X.rowwise() - model.mean.transpose();

  Eigen::BDCSVD<Eigen::MatrixXd> svd(centered, Eigen::ComputeThinV);
  const Vector& s = svd.singularValues();
  const double smax = s.size() ? s(0) : 0.0;
  const double scale = std::max(smax, X.cwiseAbs().maxCoeff());
  const double tol = static_cast<double>(std::max(n, p)) * std::numeric_limits<double>::epsilon() *
                     std::max(scale, 1e-300) * 10.0;
  std::size_t rank = 0;
  for (Eigen::Index i = 0; i < s.size(); ++i) {
    if (s(i) > tol) ++rank;
  }
  if (rank < k) {
    throw InvalidArgument("fit_pca: X has rank " + std::to_string(rank) +
                          " after centering; achievable k is at most " + std::to_string(rank));
  }

  const auto kk = static_cast<Eigen::Index>(k);
  model.components = svd.matrixV().leftCols(kk).transpose();
  for (Eigen::Index r = 0; r < kk; ++r) {
    Eigen::Index arg = 0;
    double best = -1.0;
    for (Eigen::Index c = 0; c < model.components.cols(); ++c) {
      const double a = std::abs(model.components(r, c));
      if (a > best) {
        best = a;
        arg = c;
      }
    }
    if (model.components(r, arg) < 0) model.components.row(r) *= -1.0;
  }
  model.explained_variance = s.head(kk).array().square() / static_cast<double>(n - 1);
  return model;
}

RowMatrix apply_pca(const PCAModel& model, const RowMatrix& X) {
  if (static_cast<std::size_t>(X.cols()) != model.n_features()) {
    throw InvalidArgument("apply_pca: X has " + std::to_string(X.cols()) +
                          " columns but the model was fit on " +
                          std::to_string(model.n_features()));
  }
  return (X.rowwise() - model.mean.transpose()) * model.components.transpose();
}

RowMatrix reconstruct_pca(const PCAModel& model, const RowMatrix& projected) {
  if (static_cast<std::size_t>(projected.cols()) != model.k()) {
    throw InvalidArgument("reconstruct_pca: projected width does not match k");
  }
  return (projected * model.components).rowwise() + model.mean.transpose();
}

Standardizer fit_standardizer(const RowMatrix& X) {
  Standardizer s;
  s.mean = X.colwise().mean().transpose();
  s.scale = Vector::Ones(X.cols());
  if (X.rows() < 2) return s;
  for (Eigen::Index c = 0; c < X.cols(); ++c) {
    const double var =
        (X.col(c).array() - s.mean(c)).square().sum() / static_cast<double>(X.rows() - 1);
    if (var > 0.0) s.scale(c) = std::sqrt(var);
  }
  return s;
}

RowMatrix apply_standardizer(const Standardizer& s, const RowMatrix& X) {
  if (X.cols() != s.mean.size()) throw InvalidArgument("apply_standardizer: column mismatch");
  RowMatrix out = X.rowwise() - s.mean.transpose();
  out.array().rowwise() /= s.scale.transpose().array();
  return out;
}

ResponsePreprocessor ResponsePreprocessor::fit(const RowMatrix& train, std::size_t k, bool zscore) {
  ResponsePreprocessor pre;
  pre.zscore = zscore;
  if (zscore) {
    pre.standardizer = fit_standardizer(train);
    pre.pca = fit_pca(apply_standardizer(pre.standardizer, train), k);
  } else {
    pre.pca = fit_pca(train, k);
  }
  return pre;
}

RowMatrix ResponsePreprocessor::transform(const RowMatrix& X) const {
  return zscore ? apply_pca(pca, apply_standardizer(standardizer, X)) : apply_pca(pca, X);
}

namespace {

Tensor vector_tensor(const Vector& v) {
  Tensor t({static_cast<std::size_t>(v.size())});
  for (Eigen::Index i = 0; i < v.size(); ++i) t[static_cast<std::size_t>(i)] = v(i);
  return t;
}

Vector tensor_vector(const Tensor& t) {
  Vector v(static_cast<Eigen::Index>(t.size()));
  for (std::size_t i = 0; i < t.size(); ++i) v(static_cast<Eigen::Index>(i)) = t[i];
  return v;
}

}  // namespace

void ResponsePreprocessor::save(const fs::path& dir) const {
  fs::create_directories(dir);
  write_array(dir / "pca_mean.f64", vector_tensor(pca.mean), Dtype::float64);
  write_array(dir / "pca_components.f64", Tensor::from_matrix(pca.components), Dtype::float64);
  write_array(dir / "pca_explained_variance.f64", vector_tensor(pca.explained_variance),
              Dtype::float64);
  if (zscore) {
    write_array(dir / "zscore_mean.f64", vector_tensor(standardizer.mean), Dtype::float64);
    write_array(dir / "zscore_scale.f64", vector_tensor(standardizer.scale), Dtype::float64);
  }
  nlohmann::json meta = {{"zscore", zscore}, {"k", pca.k()}, {"n_features", pca.n_features()}};
  std::ofstream(dir / "preprocessor.json") << meta.dump(2) << "\n";
}

ResponsePreprocessor ResponsePreprocessor::load(const fs::path& dir) {
  std::ifstream in(dir / "preprocessor.json");
  if (!in) throw IngestionError("missing preprocessor metadata in " + dir.string());
  const auto meta = nlohmann::json::parse(in);
  ResponsePreprocessor pre;
  pre.zscore = meta.at("zscore").get<bool>();
  pre.pca.mean = tensor_vector(read_array(dir / "pca_mean.f64"));
  pre.pca.components = read_array(dir / "pca_components.f64").as_matrix();
  pre.pca.explained_variance = tensor_vector(read_array(dir / "pca_explained_variance.f64"));
  if (pre.zscore) {
    pre.standardizer.mean = tensor_vector(read_array(dir / "zscore_mean.f64"));
    pre.standardizer.scale = tensor_vector(read_array(dir / "zscore_scale.f64"));
  }
  return pre;
}

}  // namespace neuroalign
