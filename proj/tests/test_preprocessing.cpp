#include "doctest.h"

#include <cmath>
#include <random>

#include "neuroalign/error.hpp"
#include "neuroalign/preprocessing.hpp"
#include "support/oracles.hpp"
#include "support/tempdir.hpp"

using namespace neuroalign;
using testsupport::Mat;

namespace {

RowMatrix to_eigen(const Mat& m) {
  RowMatrix out(static_cast<Eigen::Index>(m.size()), static_cast<Eigen::Index>(m[0].size()));
  for (std::size_t i = 0; i < m.size(); ++i)
    for (std::size_t j = 0; j < m[0].size(); ++j) out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = m[i][j];
  return out;
}

Mat to_mat(const RowMatrix& m) {
  Mat out(static_cast<std::size_t>(m.rows()), std::vector<double>(static_cast<std::size_t>(m.cols())));
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) out[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] = m(i, j);
  return out;
}

}  // namespace

TEST_CASE("points along (3, 4)/5 give first component (0.6, 0.8)") {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> normal(0.0, 1.0);
  RowMatrix x(40, 2);
  for (Eigen::Index i = 0; i < 40; ++i) {
    const double t = 5.0 * normal(rng), e = 0.05 * normal(rng);
    x(i, 0) = 0.6 * t - 0.8 * e + 2.0;
    x(i, 1) = 0.8 * t + 0.6 * e - 1.0;
  }
  const PCAModel m = fit_pca(x, 1);
  CHECK(m.components(0, 0) == doctest::Approx(0.6).epsilon(1e-3));
  CHECK(m.components(0, 1) == doctest::Approx(0.8).epsilon(1e-3));
  x = -x;  // sign convention does not depend on the data's orientation
  const PCAModel n = fit_pca(x, 1);
  CHECK(n.components(0, 0) > 0.0);
  CHECK(n.components(0, 1) > 0.0);
}

TEST_CASE("identical rows cannot be fit") {
  RowMatrix x = RowMatrix::Ones(6, 4);
  CHECK_THROWS_AS(fit_pca(x, 1), InvalidArgument);
}

TEST_CASE("k out of range is rejected") {
  std::mt19937_64 rng(2);
  const RowMatrix x = to_eigen(testsupport::random_matrix(10, 5, rng));
  CHECK_THROWS_AS(fit_pca(x, 0), InvalidArgument);
  CHECK_THROWS_AS(fit_pca(x, 6), InvalidArgument);
}

TEST_CASE("projecting the mean gives zeros") {
  std::mt19937_64 rng(3);
  const RowMatrix x = to_eigen(testsupport::random_matrix(12, 5, rng));
  const PCAModel m = fit_pca(x, 3);
  RowMatrix means = m.mean.transpose().replicate(4, 1);
  CHECK(apply_pca(m, means).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("complete basis reconstructs the data") {
  std::mt19937_64 rng(4);
  const RowMatrix x = to_eigen(testsupport::random_matrix(15, 6, rng));
  const PCAModel m = fit_pca(x, 6);
  CHECK((reconstruct_pca(m, apply_pca(m, x)) - x).cwiseAbs().maxCoeff() < 1e-4);
}

TEST_CASE("random 20 x 6, k = 3 matches the loop projection and power-iteration directions") {
  std::mt19937_64 rng(5);
  const Mat raw = testsupport::random_matrix(20, 6, rng);
  const RowMatrix x = to_eigen(raw);
  const PCAModel m = fit_pca(x, 3);

  const Mat comps = to_mat(m.components);
  const std::vector<double> mean(m.mean.data(), m.mean.data() + m.mean.size());
  const Mat expected = testsupport::oracle_project(raw, mean, comps);
  const RowMatrix got = apply_pca(m, x);
  for (std::size_t i = 0; i < 20; ++i)
    for (std::size_t c = 0; c < 3; ++c) CHECK(std::abs(got(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) - expected[i][c]) < 1e-6);

  const Mat eig = testsupport::oracle_top_eigenvectors(raw, 3);
  for (std::size_t c = 0; c < 3; ++c) {
    double dot = 0.0;
    for (std::size_t f = 0; f < 6; ++f) dot += eig[c][f] * comps[c][f];
    CHECK(std::abs(dot) == doctest::Approx(1.0).epsilon(1e-6));
  }
}

TEST_CASE("components are orthonormal and variances non-increasing") {
  std::mt19937_64 rng(6);
  const RowMatrix x = to_eigen(testsupport::random_matrix(30, 10, rng));
  const PCAModel m = fit_pca(x, 7);
  const RowMatrix gram = m.components * m.components.transpose();
  CHECK((gram - RowMatrix::Identity(7, 7)).cwiseAbs().maxCoeff() < 1e-5);
  for (Eigen::Index k = 1; k < 7; ++k) CHECK(m.explained_variance(k) <= m.explained_variance(k - 1));

  const RowMatrix proj = apply_pca(m, x);
  for (Eigen::Index k = 0; k < 7; ++k) {
    const double var = proj.col(k).squaredNorm() / 29.0;  // projected columns have mean 0
    CHECK(var == doctest::Approx(m.explained_variance(k)).epsilon(1e-4));
  }
}

TEST_CASE("reconstruction error does not increase with k") {
  std::mt19937_64 rng(7);
  const RowMatrix x = to_eigen(testsupport::random_matrix(25, 8, rng));
  double prev = INFINITY;
  for (std::size_t k = 1; k <= 8; ++k) {
    const PCAModel m = fit_pca(x, k);
    const double err = (reconstruct_pca(m, apply_pca(m, x)) - x).squaredNorm();
    CHECK(err <= prev + 1e-9);
    prev = err;
  }
}

TEST_CASE("standardizer maps constant features to zero") {
  RowMatrix x(4, 2);
  x << 1, 5, 2, 5, 3, 5, 4, 5;
  const Standardizer s = fit_standardizer(x);
  const RowMatrix z = apply_standardizer(s, x);
  CHECK(z.col(1).cwiseAbs().maxCoeff() == 0.0);
  CHECK(z.col(0).mean() == doctest::Approx(0.0).scale(1.0));
}

TEST_CASE("preprocessor saves and loads identically") {
  testsupport::TempDir tmp;
  std::mt19937_64 rng(8);
  const RowMatrix train = to_eigen(testsupport::random_matrix(20, 9, rng));
  const RowMatrix test = to_eigen(testsupport::random_matrix(5, 9, rng));
  const auto p = ResponsePreprocessor::fit(train, 4, true);
  p.save(tmp / "pre");
  const auto q = ResponsePreprocessor::load(tmp / "pre");
  CHECK(q.zscore);
  CHECK(q.transform(test) == p.transform(test));
}
