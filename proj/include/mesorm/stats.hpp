#pragma once

#include <complex>
#include <functional>
#include <span>
#include <vector>

namespace mesorm {

/// Sample moments with their large-sample standard errors.
struct Moments {
  std::size_t count = 0;
  double mean = 0.0;
  double variance = 0.0;  // unbiased
  double skewness = 0.0;
  double excess_kurtosis = 0.0;
  double se_mean = 0.0;
  double se_variance = 0.0;
  double se_skewness = 0.0;
  double se_kurtosis = 0.0;
};

/// Two-pass moments, summed in index order.
Moments sample_moments(std::span<const double> x);
/// Unbiased variance from a single pass of sums (cross-check only).
double naive_variance(std::span<const double> x);

double normal_cdf(double x, double mean = 0.0, double sd = 1.0);
double normal_pdf(double x, double mean = 0.0, double sd = 1.0);
double normal_quantile(double p);

/// P(K > lambda) for the Kolmogorov distribution.
double kolmogorov_survival(double lambda);

struct KsResult {
  double statistic = 0.0;
  double p_value = 1.0;
};

/// One-sample KS test against a fully specified continuous CDF.
KsResult ks_test(std::span<const double> x, const std::function<double(double)>& cdf);

/// (1/T) sum exp(i lambda (x_k - mean)).
std::complex<double> empirical_characteristic(std::span<const double> x, double lambda,
                                              double center);

}  // namespace mesorm
