#pragma once

#include <span>

namespace dmlshift::stats {

double normal_cdf(double x);

// Inverse of the standard normal CDF for p in (0, 1). Rational initial
// approximation followed by one Halley step; absolute error below 1e-12
// across (1e-300, 1 - 1e-16).
double normal_quantile(double p);

struct AndersonDarling {
  double statistic = 0.0;           // A^2
  double adjusted_statistic = 0.0;  // A^2 (1 + 0.75/n + 2.25/n^2)
  double p_value = 0.0;
};

// Composite normality test (mean and variance estimated from the sample).
// Needs at least 8 observations.
AndersonDarling anderson_darling_normal(std::span<const double> sample);

// Kolmogorov-Smirnov distance between the empirical CDF and N(0, 1).
double ks_statistic_standard_normal(std::span<const double> sample);

double mean(std::span<const double> values);
// Unbiased (n - 1) sample variance.
double sample_variance(std::span<const double> values);

}  // namespace dmlshift::stats
