#pragma once

#include <functional>
#include <span>
#include <vector>

namespace gridcal::stats {

double mean(std::span<const double> xs);
// Population (1/n) standard deviation.
double population_std(std::span<const double> xs);
// Sample (1/(n-1)) standard deviation; 0 for fewer than two values.
double sample_std(std::span<const double> xs);
// Linear-interpolation quantile of unsorted data, q in [0, 1].
double quantile(std::vector<double> xs, double q);

// Upper tail P(Z > z) of the standard normal.
double normal_survival(double z);

double beta_cdf(double x, double a, double b);
double beta_pdf(double x, double a, double b);

struct KsResult {
  double statistic = 0.0;
  double p_value = 1.0;
  bool rejected(double significance) const { return p_value < significance; }
};

/// One-sample Kolmogorov-Smirnov test against a continuous CDF. The p-value
/// uses the asymptotic Kolmogorov law with Stephens' small-sample correction.
KsResult ks_test(std::span<const double> samples, const std::function<double(double)>& cdf);

/// Two-sample Kolmogorov-Smirnov test.
KsResult ks_test_two_sample(std::span<const double> a, std::span<const double> b);

// P(K > lambda) for the Kolmogorov distribution.
double kolmogorov_survival(double lambda);

} // namespace gridcal::stats
