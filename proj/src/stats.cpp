#include "neuroalign/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <boost/math/distributions/students_t.hpp>

#include "neuroalign/error.hpp"

namespace neuroalign {

CorrelationMethod parse_correlation_method(const std::string& name) {
  if (name == "pearson") return CorrelationMethod::pearson;
  if (name == "spearman") return CorrelationMethod::spearman;
  throw InvalidArgument("unknown correlation method '" + name + "'");
}

std::string to_string(CorrelationMethod method) {
  return method == CorrelationMethod::pearson ? "pearson" : "spearman";
}

std::vector<double> average_ranks(std::span<const double> values) {
  const std::size_t n = values.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i + 1;
    while (j < n && values[order[j]] == values[order[i]]) ++j;
    // positions i..j-1 hold ranks i+1..j
    const double rank = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t k = i; k < j; ++k) ranks[order[k]] = rank;
    i = j;
  }
  return ranks;
}

double mean(std::span<const double> values) {
  if (values.empty()) return 0.0;
  return std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
}

bool is_degenerate(std::span<const double> values) {
  if (values.size() < 2) return true;
  const double m = mean(values);
  double ss = 0.0;
  double scale = 0.0;
  for (double v : values) {
    ss += (v - m) * (v - m);
    scale = std::max(scale, std::abs(v));
  }
  const double tol = 16.0 * std::numeric_limits<double>::epsilon() * scale;
  return ss <= static_cast<double>(values.size()) * tol * tol;
}

double pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw InvalidArgument("correlation: length mismatch");
  if (x.size() < 3) throw InvalidArgument("correlation: need at least 3 elements");
  if (is_degenerate(x) || is_degenerate(y)) throw InvalidArgument("degenerate vector");
  const double mx = mean(x);
  const double my = mean(y);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx;
    const double dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  const double r = sxy / std::sqrt(sxx * syy);
  return std::clamp(r, -1.0, 1.0);
}

double spearman(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw InvalidArgument("correlation: length mismatch");
  const auto rx = average_ranks(x);
  const auto ry = average_ranks(y);
  return pearson(rx, ry);
}

double correlation(std::span<const double> x, std::span<const double> y, CorrelationMethod method) {
  return method == CorrelationMethod::pearson ? pearson(x, y) : spearman(x, y);
}

double sample_std(std::span<const double> values) {
  if (values.size() < 2) return 0.0;
  const double m = mean(values);
  double ss = 0.0;
  for (double v : values) ss += (v - m) * (v - m);
  return std::sqrt(ss / static_cast<double>(values.size() - 1));
}

double standard_error(std::span<const double> values) {
  if (values.size() < 2) return 0.0;
  return sample_std(values) / std::sqrt(static_cast<double>(values.size()));
}

TTestResult paired_t_test(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw InvalidArgument("paired_t_test: length mismatch");
  if (a.size() < 2) throw InvalidArgument("paired_t_test: need at least 2 pairs");
  std::vector<double> diff(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) diff[i] = a[i] - b[i];
  TTestResult result;
  result.df = diff.size() - 1;
  const double m = mean(diff);
  const double se = standard_error(diff);
  if (se == 0.0) {
    result.t = m == 0.0 ? 0.0 : std::copysign(std::numeric_limits<double>::infinity(), m);
    result.p = m == 0.0 ? 1.0 : 0.0;
    return result;
  }
  result.t = m / se;
  boost::math::students_t dist(static_cast<double>(result.df));
  result.p = 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(result.t)));
  return result;
}

}  // namespace neuroalign
