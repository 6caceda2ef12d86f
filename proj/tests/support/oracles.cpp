#include "support/oracles.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace testsupport {

double oracle_mean(const std::vector<double>& x) {
  double s = 0.0;
  for (double v : x) s += v;
  return s / static_cast<double>(x.size());
}

double oracle_pearson(const std::vector<double>& x, const std::vector<double>& y) {
  const double mx = oracle_mean(x), my = oracle_mean(y);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  return sxy / std::sqrt(sxx * syy);
}

std::vector<double> oracle_ranks(const std::vector<double>& x) {
  std::vector<double> r(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    double less = 0.0, equal = 0.0;
    for (double v : x) {
      if (v < x[i]) less += 1.0;
      if (v == x[i]) equal += 1.0;
    }
    r[i] = 1.0 + less + (equal - 1.0) / 2.0;
  }
  return r;
}

double oracle_spearman(const std::vector<double>& x, const std::vector<double>& y) {
  return oracle_pearson(oracle_ranks(x), oracle_ranks(y));
}

double oracle_partial_spearman_1(const std::vector<double>& x, const std::vector<double>& y,
                                 const std::vector<double>& z) {
  const double rxy = oracle_spearman(x, y);
  const double rxz = oracle_spearman(x, z);
  const double ryz = oracle_spearman(y, z);
  return (rxy - rxz * ryz) / std::sqrt((1.0 - rxz * rxz) * (1.0 - ryz * ryz));
}

Mat oracle_pattern_rdm(const Mat& rows) {
  const std::size_t n = rows.size();
  Mat d(n, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if (i != j) d[i][j] = 1.0 - oracle_pearson(rows[i], rows[j]);
  return d;
}

Mat oracle_feature_rdm(const std::vector<double>& v) {
  const std::size_t n = v.size();
  Mat d(n, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) d[i][j] = std::fabs(v[i] - v[j]);
  return d;
}

std::vector<double> oracle_upper(const Mat& m) {
  std::vector<double> out;
  for (std::size_t i = 0; i < m.size(); ++i)
    for (std::size_t j = i + 1; j < m.size(); ++j) out.push_back(m[i][j]);
  return out;
}

Mat oracle_project(const Mat& x, const std::vector<double>& mean, const Mat& components) {
  Mat out(x.size(), std::vector<double>(components.size(), 0.0));
  for (std::size_t i = 0; i < x.size(); ++i)
    for (std::size_t c = 0; c < components.size(); ++c)
      for (std::size_t f = 0; f < mean.size(); ++f) out[i][c] += (x[i][f] - mean[f]) * components[c][f];
  return out;
}

Mat oracle_covariance(const Mat& x) {
  const std::size_t n = x.size(), p = x[0].size();
  std::vector<double> mu(p, 0.0);
  for (const auto& row : x)
    for (std::size_t f = 0; f < p; ++f) mu[f] += row[f] / static_cast<double>(n);
  Mat cov(p, std::vector<double>(p, 0.0));
  for (const auto& row : x)
    for (std::size_t a = 0; a < p; ++a)
      for (std::size_t b = 0; b < p; ++b) cov[a][b] += (row[a] - mu[a]) * (row[b] - mu[b]) / static_cast<double>(n - 1);
  return cov;
}

Mat oracle_top_eigenvectors(const Mat& x, std::size_t k, std::size_t iterations) {
  const std::size_t p = x[0].size();
  Mat cov = oracle_covariance(x);
  Mat out;
  for (std::size_t c = 0; c < k; ++c) {
    std::vector<double> v(p);
    for (std::size_t f = 0; f < p; ++f) v[f] = 1.0 + 0.1 * static_cast<double>(f) + 0.01 * static_cast<double>(c);
    double lambda = 0.0;
    for (std::size_t it = 0; it < iterations; ++it) {
      std::vector<double> w(p, 0.0);
      for (std::size_t a = 0; a < p; ++a)
        for (std::size_t b = 0; b < p; ++b) w[a] += cov[a][b] * v[b];
      double norm = 0.0;
      for (double e : w) norm += e * e;
      norm = std::sqrt(norm);
      for (std::size_t a = 0; a < p; ++a) v[a] = w[a] / norm;
      lambda = norm;
    }
    out.push_back(v);
    for (std::size_t a = 0; a < p; ++a)
      for (std::size_t b = 0; b < p; ++b) cov[a][b] -= lambda * v[a] * v[b];
  }
  return out;
}

namespace {

// Gauss-Jordan with partial pivoting; a is consumed.
std::vector<double> solve(Mat a, std::vector<double> b) {
  const std::size_t n = b.size();
  for (std::size_t c = 0; c < n; ++c) {
    std::size_t piv = c;
    for (std::size_t r = c + 1; r < n; ++r)
      if (std::fabs(a[r][c]) > std::fabs(a[piv][c])) piv = r;
    std::swap(a[c], a[piv]);
    std::swap(b[c], b[piv]);
    for (std::size_t r = 0; r < n; ++r) {
      if (r == c) continue;
      const double f = a[r][c] / a[c][c];
      for (std::size_t j = c; j < n; ++j) a[r][j] -= f * a[c][j];
      b[r] -= f * b[c];
    }
  }
  for (std::size_t c = 0; c < n; ++c) b[c] /= a[c][c];
  return b;
}

double frob2(const Mat& m) {
  double s = 0.0;
  for (const auto& row : m)
    for (double v : row) s += v * v;
  return s;
}

}  // namespace

double oracle_lda_accuracy(const Mat& a, const Mat& b, std::size_t n_folds, std::uint64_t seed) {
  const std::size_t k = a.size(), p = a[0].size();
  std::vector<std::size_t> positions(k);
  std::iota(positions.begin(), positions.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  std::shuffle(positions.begin(), positions.end(), rng);
  std::vector<std::size_t> fold_of(k);
  for (std::size_t r = 0; r < k; ++r) fold_of[positions[r]] = r % n_folds;

  double correct = 0.0, total = 0.0;
  for (std::size_t f = 0; f < n_folds; ++f) {
    Mat tr0, tr1;
    for (std::size_t r = 0; r < k; ++r)
      if (fold_of[r] != f) {
        tr0.push_back(a[r]);
        tr1.push_back(b[r]);
      }
    std::vector<double> m0(p, 0.0), m1(p, 0.0);
    for (std::size_t r = 0; r < tr0.size(); ++r)
      for (std::size_t j = 0; j < p; ++j) {
        m0[j] += tr0[r][j] / static_cast<double>(tr0.size());
        m1[j] += tr1[r][j] / static_cast<double>(tr1.size());
      }
    Mat x;
    for (const auto& row : tr0) {
      x.push_back(row);
      for (std::size_t j = 0; j < p; ++j) x.back()[j] -= m0[j];
    }
    for (const auto& row : tr1) {
      x.push_back(row);
      for (std::size_t j = 0; j < p; ++j) x.back()[j] -= m1[j];
    }
    const double n = static_cast<double>(x.size());
    Mat s(p, std::vector<double>(p, 0.0));
    for (const auto& row : x)
      for (std::size_t i = 0; i < p; ++i)
        for (std::size_t j = 0; j < p; ++j) s[i][j] += row[i] * row[j] / n;
    double mu = 0.0;
    for (std::size_t i = 0; i < p; ++i) mu += s[i][i] / static_cast<double>(p);
    // Ledoit-Wolf intensity toward mu * I.
    Mat dev = s;
    for (std::size_t i = 0; i < p; ++i) dev[i][i] -= mu;
    const double d2 = frob2(dev);
    double shrink = 1.0;
    if (d2 > 0.0) {
      double b2 = 0.0;
      for (const auto& row : x) {
        Mat outer(p, std::vector<double>(p));
        for (std::size_t i = 0; i < p; ++i)
          for (std::size_t j = 0; j < p; ++j) outer[i][j] = row[i] * row[j] - s[i][j];
        b2 += frob2(outer);
      }
      b2 /= n * n;
      shrink = std::min(b2, d2) / d2;
    }
    Mat cov(p, std::vector<double>(p, 0.0));
    for (std::size_t i = 0; i < p; ++i)
      for (std::size_t j = 0; j < p; ++j) cov[i][j] = (1.0 - shrink) * s[i][j] + (i == j ? shrink * mu : 0.0);
    if (!(mu > 0.0))
      for (std::size_t i = 0; i < p; ++i)
        for (std::size_t j = 0; j < p; ++j) cov[i][j] = i == j ? 1.0 : 0.0;
    std::vector<double> diff(p);
    for (std::size_t j = 0; j < p; ++j) diff[j] = m1[j] - m0[j];
    const std::vector<double> w = solve(cov, diff);
    double bias = 0.0;
    for (std::size_t j = 0; j < p; ++j) bias -= w[j] * 0.5 * (m0[j] + m1[j]);
    auto predict = [&](const std::vector<double>& v) {
      double z = bias;
      for (std::size_t j = 0; j < p; ++j) z += w[j] * v[j];
      return z > 0.0 ? 1 : 0;
    };
    for (std::size_t r = 0; r < k; ++r) {
      if (fold_of[r] != f) continue;
      correct += predict(a[r]) == 0 ? 1.0 : 0.0;
      correct += predict(b[r]) == 1 ? 1.0 : 0.0;
      total += 2.0;
    }
  }
  return correct / total;
}

Mat random_matrix(std::size_t rows, std::size_t cols, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Mat m(rows, std::vector<double>(cols));
  for (auto& row : m)
    for (auto& v : row) v = normal(rng);
  return m;
}

}  // namespace testsupport
