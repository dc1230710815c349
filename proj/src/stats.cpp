#include "mesorm/stats.hpp"

#include "mesorm/errors.hpp"

#include <boost/math/distributions/normal.hpp>

#include <algorithm>
#include <cmath>

namespace mesorm {

Moments sample_moments(std::span<const double> x) {
  Moments m;
  m.count = x.size();
  if (x.empty()) return m;
  const double n = static_cast<double>(x.size());
  double sum = 0.0;
  for (double v : x) sum += v;
  m.mean = sum / n;
  double c2 = 0.0, c3 = 0.0, c4 = 0.0;
  for (double v : x) {
    const double d = v - m.mean;
    const double d2 = d * d;
    c2 += d2;
    c3 += d2 * d;
    c4 += d2 * d2;
  }
  if (x.size() > 1) m.variance = c2 / (n - 1.0);
  const double m2 = c2 / n;
  if (m2 > 0.0) {
    m.skewness = (c3 / n) / std::pow(m2, 1.5);
    m.excess_kurtosis = (c4 / n) / (m2 * m2) - 3.0;
  }
  m.se_mean = std::sqrt(m.variance / n);
  m.se_variance = x.size() > 1 ? m.variance * std::sqrt(2.0 / (n - 1.0)) : 0.0;
  m.se_skewness = std::sqrt(6.0 / n);
  m.se_kurtosis = std::sqrt(24.0 / n);
  return m;
}

double naive_variance(std::span<const double> x) {
  if (x.size() < 2) return 0.0;
  const double n = static_cast<double>(x.size());
  double s = 0.0, s2 = 0.0;
  for (double v : x) {
    s += v;
    s2 += v * v;
  }
  return (s2 - s * s / n) / (n - 1.0);
}

double normal_cdf(double x, double mean, double sd) {
  return boost::math::cdf(boost::math::normal(mean, sd), x);
}

double normal_pdf(double x, double mean, double sd) {
  return boost::math::pdf(boost::math::normal(mean, sd), x);
}

double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) throw UsageError("normal quantile needs p in (0, 1)");
  return boost::math::quantile(boost::math::normal(), p);
}

double kolmogorov_survival(double lambda) {
  if (lambda <= 0.0) return 1.0;
  if (lambda < 0.2) return 1.0;
  double sum = 0.0;
  for (int k = 1; k <= 100; ++k) {
    const double term = std::exp(-2.0 * k * k * lambda * lambda);
    sum += (k % 2 == 1 ? term : -term);
    if (term < 1e-16) break;
  }
  return std::clamp(2.0 * sum, 0.0, 1.0);
}

KsResult ks_test(std::span<const double> x, const std::function<double(double)>& cdf) {
  KsResult r;
  if (x.empty()) return r;
  std::vector<double> sorted(x.begin(), x.end());
  std::sort(sorted.begin(), sorted.end());
  const double n = static_cast<double>(sorted.size());
  double d = 0.0;
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    const double f = cdf(sorted[i]);
    d = std::max({d, (i + 1.0) / n - f, f - i / n});
  }
  const double root = std::sqrt(n);
  r.statistic = d;
  r.p_value = kolmogorov_survival((root + 0.12 + 0.11 / root) * d);
  return r;
}

std::complex<double> empirical_characteristic(std::span<const double> x, double lambda,
                                              double center) {
  std::complex<double> sum = 0.0;
  for (double v : x) sum += std::polar(1.0, lambda * (v - center));
  return x.empty() ? sum : sum / static_cast<double>(x.size());
}

}  // namespace mesorm
