#include "doctest.h"

#include <cmath>
#include <random>
#include <vector>

#include "neuroalign/error.hpp"
#include "neuroalign/losses.hpp"
#include "neuroalign/stats.hpp"
#include "support/oracles.hpp"

using namespace neuroalign;
using testsupport::oracle_pearson;

namespace {

RowMatrix random_rows(std::size_t n, std::size_t d, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  RowMatrix m(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = normal(rng);
  return m;
}

std::vector<double> row(const RowMatrix& m, Eigen::Index i) {
  return {m.row(i).data(), m.row(i).data() + m.cols()};
}

}  // namespace

TEST_CASE("cross-entropy of uniform logits over 4 classes is ln 4") {
  RowMatrix logits = RowMatrix::Zero(3, 4);
  const std::vector<int> labels{0, 2, 3};
  CHECK(classification_loss(logits, labels) == doctest::Approx(std::log(4.0)).epsilon(1e-12));
}

TEST_CASE("cross-entropy of [1, 2, 3] with label 0") {
  RowMatrix logits(1, 3);
  logits << 1, 2, 3;
  const std::vector<int> labels{0};
  const double by_hand = -std::log(std::exp(1.0) / (std::exp(1.0) + std::exp(2.0) + std::exp(3.0)));
  CHECK(classification_loss(logits, labels) == doctest::Approx(by_hand).epsilon(1e-12));
  CHECK(classification_loss(logits, labels) == doctest::Approx(2.4076).epsilon(1e-4));
}

TEST_CASE("cross-entropy tends to 0 as the true-class logit gap grows") {
  RowMatrix logits(1, 3);
  logits << 0, 200, 0;
  const std::vector<int> labels{1};
  CHECK(classification_loss(logits, labels) < 1e-60);
}

TEST_CASE("cross-entropy rejects labels out of range") {
  RowMatrix logits = RowMatrix::Zero(1, 3);
  const std::vector<int> bad{3};
  CHECK_THROWS_AS(classification_loss(logits, bad), InvalidArgument);
}

TEST_CASE("correlation examples") {
  const std::vector<double> a{1, 2, 3}, rev{3, 2, 1};
  for (auto m : {CorrelationMethod::pearson, CorrelationMethod::spearman}) {
    CHECK(correlation(a, a, m) == doctest::Approx(1.0));
    CHECK(correlation(a, rev, m) == doctest::Approx(-1.0));
  }
  const std::vector<double> x{1, 2, 3, 4}, y{1, 3, 2, 4};
  CHECK(spearman(x, y) == doctest::Approx(0.8).epsilon(1e-12));
}

TEST_CASE("correlation with a positive affine transform is 1") {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> x(17), y(17);
  for (std::size_t i = 0; i < x.size(); ++i) {
    x[i] = normal(rng);
    y[i] = 2.5 * x[i] - 7.0;
  }
  CHECK(pearson(x, y) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(spearman(x, y) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("average ranks split ties") {
  const std::vector<double> x{10, 20, 20, 5};
  const auto r = average_ranks(x);
  CHECK(r == std::vector<double>{2, 3.5, 3.5, 1});
}

TEST_CASE("generation loss terms on a hand-enumerated N=2, D=4 batch") {
  RowMatrix gen(2, 4), real(2, 4);
  gen << 1, 2, 0, -1,  //
      0.5, -1, 2, 3;
  real << 2, 1, 0, 0,  //
      1, -2, 1, 4;
  const GenerationTerms t = generation_loss(gen, real);

  double mse = 0.0;
  for (int i = 0; i < 2; ++i)
    for (int d = 0; d < 4; ++d) mse += (gen(i, d) - real(i, d)) * (gen(i, d) - real(i, d)) / 8.0;
  const double pos = ((1 - oracle_pearson(row(gen, 0), row(real, 0))) + (1 - oracle_pearson(row(gen, 1), row(real, 1)))) / 2;
  const double neg = ((1 - oracle_pearson(row(gen, 0), row(real, 1))) + (1 - oracle_pearson(row(gen, 1), row(real, 0)))) / 2;

  CHECK(t.mse == doctest::Approx(mse).epsilon(1e-12));
  CHECK(t.positive == doctest::Approx(pos).epsilon(1e-12));
  CHECK(t.negative == doctest::Approx(neg).epsilon(1e-12));
  CHECK(t.generation == doctest::Approx(mse + pos - neg).epsilon(1e-12));
  CHECK(t.positive_pairs == 2);
  CHECK(t.negative_pairs == 2);
}

TEST_CASE("perfect generation of mutually uncorrelated rows") {
  RowMatrix real(3, 4);
  real << 1, -1, 1, -1,  //
      1, 1, -1, -1,      //
      1, -1, -1, 1;
  const GenerationTerms t = generation_loss(real, real);
  CHECK(t.mse == 0.0);
  CHECK(t.positive == doctest::Approx(0.0).scale(1.0));
  CHECK(t.negative == doctest::Approx(1.0));
  CHECK(t.generation == doctest::Approx(-t.negative));
  CHECK(t.generation <= 0.0);
}

TEST_CASE("batch of 16 evaluates 16 positive and 240 ordered negative pairs") {
  const RowMatrix gen = random_rows(16, 32, 1), real = random_rows(16, 32, 2);
  const GenerationTerms t = generation_loss(gen, real);
  CHECK(t.positive_pairs == 16);
  CHECK(t.negative_pairs == 240);
  CHECK(t.positive_pairs + t.negative_pairs == 256);
}

TEST_CASE("mse is a per-element mean") {
  const RowMatrix real = random_rows(5, 9, 4);
  const double eps = 0.3;
  const RowMatrix gen = real.array() + eps;
  CHECK(generation_loss(gen, real).mse == doctest::Approx(eps * eps).epsilon(1e-6));
}

TEST_CASE("generation loss is invariant to a shared row permutation") {
  const RowMatrix gen = random_rows(6, 10, 5), real = random_rows(6, 10, 6);
  const std::vector<int> perm{3, 0, 5, 1, 4, 2};
  RowMatrix pg(6, 10), pr(6, 10);
  for (int i = 0; i < 6; ++i) {
    pg.row(i) = gen.row(perm[static_cast<std::size_t>(i)]);
    pr.row(i) = real.row(perm[static_cast<std::size_t>(i)]);
  }
  const auto a = generation_loss(gen, real), b = generation_loss(pg, pr);
  CHECK(a.generation == doctest::Approx(b.generation).epsilon(1e-12));
}

TEST_CASE("single-row batch needs the positive-only option") {
  const RowMatrix gen = random_rows(1, 8, 7), real = random_rows(1, 8, 8);
  CHECK_THROWS_AS(generation_loss(gen, real), InvalidArgument);
  GenerationOptions o;
  o.allow_positive_only = true;
  const auto t = generation_loss(gen, real, o);
  CHECK(t.negative_pairs == 0);
  CHECK(t.negative == 0.0);
}

TEST_CASE("alignment loss composition") {
  RowMatrix logits = random_rows(4, 10, 9);
  const std::vector<int> labels{1, 7, 3, 3};
  const RowMatrix gen = random_rows(4, 12, 10), real = random_rows(4, 12, 11);

  const auto zero = alignment_loss(logits, labels, gen, real, 0.0);
  CHECK(zero.total == zero.classification);
  CHECK(zero.generation != 0.0);

  const auto b40 = alignment_loss(logits, labels, gen, real, 40.0);
  CHECK(b40.total == doctest::Approx(b40.classification + 40.0 * b40.generation).epsilon(1e-6));
  CHECK(b40.generation == doctest::Approx(b40.mse_term + b40.positive_term - b40.negative_term).epsilon(1e-6));

  const auto b80 = alignment_loss(logits, labels, gen, real, 80.0);
  CHECK(b80.total - b80.classification == doctest::Approx(2.0 * (b40.total - b40.classification)).epsilon(1e-12));
}

TEST_CASE("spearman rank mode matches exact spearman") {
  const RowMatrix gen = random_rows(3, 15, 12), real = random_rows(3, 15, 13);
  GenerationOptions o;
  o.rank_mode = RankMode::spearman;
  const auto t = generation_loss(gen, real, o);
  double pos = 0.0;
  for (int i = 0; i < 3; ++i) pos += (1.0 - testsupport::oracle_spearman(row(gen, i), row(real, i))) / 3.0;
  CHECK(t.positive == doctest::Approx(pos).epsilon(1e-12));
}

TEST_CASE("soft ranks approach ordinary ranks as temperature falls") {
  Eigen::VectorXd x(6);
  x << 0.3, -1.2, 2.0, 0.9, -0.1, 1.4;
  const Eigen::VectorXd r = soft_rank(x, 1e-4);
  const auto exact = testsupport::oracle_ranks({x.data(), x.data() + x.size()});
  const double offset = r(0) - exact[0];
  for (Eigen::Index i = 0; i < x.size(); ++i) CHECK(r(i) - exact[static_cast<std::size_t>(i)] == doctest::Approx(offset).epsilon(1e-9));
}
