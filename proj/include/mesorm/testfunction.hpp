#pragma once

#include <complex>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

namespace mesorm {

enum class TestShape { bump, cosine_window, cubic_spline_hat, zero, custom };

std::string_view to_string(TestShape shape);
TestShape parse_test_shape(std::string_view text);

struct ProfileValue {
  double g = 0.0;
  double dg = 0.0;
  double d2g = 0.0;
};

/// Compactly supported C^2 profile g on [-R, R]; presets are normalized so
/// that g(0) = amplitude.
class TestProfile {
 public:
  TestProfile() = default;
  static TestProfile preset(TestShape shape, double radius = 1.0, double amplitude = 1.0);
  static TestProfile custom(std::function<ProfileValue(double)> fn, double radius,
                            std::vector<double> breakpoints = {}, std::string name = "custom");

  TestShape shape() const { return shape_; }
  double radius() const { return radius_; }
  double amplitude() const { return amplitude_; }
  std::string name() const;

  ProfileValue eval(double x) const;
  double operator()(double x) const { return eval(x).g; }
  /// Points in [-R, R] where g'' may jump (always includes +-R).
  std::vector<double> breakpoints() const;
  double sup_norm() const;
  bool is_zero() const { return shape_ == TestShape::zero || amplitude_ == 0.0; }

  /// g(x / s): same shape on [-sR, sR].
  TestProfile dilated(double s) const;
  TestProfile scaled(double factor) const;

 private:
  TestShape shape_ = TestShape::bump;
  double radius_ = 1.0;
  double amplitude_ = 1.0;
  double dilation_ = 1.0;
  std::function<ProfileValue(double)> custom_;
  std::vector<double> custom_breaks_;
  std::string custom_name_;
};

/// f(x) = g((x - E0) / eta0).
struct ScaledTestFunction {
  TestProfile g;
  double e0 = 0.0;
  double eta0 = 0.01;

  double f(double x) const { return g((x - e0) / eta0); }
  double df(double x) const { return g.eval((x - e0) / eta0).dg / eta0; }
  double d2f(double x) const { return g.eval((x - e0) / eta0).d2g / (eta0 * eta0); }
  double support_lo() const { return e0 - g.radius() * eta0; }
  double support_hi() const { return e0 + g.radius() * eta0; }
  std::vector<double> breakpoints() const;
  void validate() const;
};

/// Degree-7 smoothstep cutoff: 1 on |y| <= 1, 0 on |y| >= 2.
double smooth_cutoff(double y);
double smooth_cutoff_derivative(double y);

/// Almost-analytic extension (f(x) + i y f'(x)) chi(y).
std::complex<double> hs_extension(const ScaledTestFunction& tf, double x, double y);

}  // namespace mesorm
