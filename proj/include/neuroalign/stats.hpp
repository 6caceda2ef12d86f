#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace neuroalign {

enum class CorrelationMethod { pearson, spearman };

CorrelationMethod parse_correlation_method(const std::string& name);
std::string to_string(CorrelationMethod method);

// 1-based ranks; tied values share the mean of the ranks they span.
std::vector<double> average_ranks(std::span<const double> values);

// Throws InvalidArgument("degenerate vector") when either input has zero
// variance, and on length mismatch or fewer than 3 elements.
double pearson(std::span<const double> x, std::span<const double> y);
double spearman(std::span<const double> x, std::span<const double> y);
double correlation(std::span<const double> x, std::span<const double> y, CorrelationMethod method);

// True when the centered sum of squares is zero up to rounding of the data.
bool is_degenerate(std::span<const double> values);

double mean(std::span<const double> values);
// Sample standard deviation (n - 1 denominator).
double sample_std(std::span<const double> values);
double standard_error(std::span<const double> values);

struct TTestResult {
  double t = 0.0;
  double p = 1.0;
  std::size_t df = 0;
};

// Two-sided paired t-test of a against b. Identical inputs give t = 0, p = 1;
// a constant non-zero difference gives p = 0.
TTestResult paired_t_test(std::span<const double> a, std::span<const double> b);

}  // namespace neuroalign
