#include "mesorm/testfunction.hpp"

#include "mesorm/errors.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>

namespace mesorm {

std::string_view to_string(TestShape shape) {
  switch (shape) {
    case TestShape::bump: return "bump";
    case TestShape::cosine_window: return "cosine_window";
    case TestShape::cubic_spline_hat: return "cubic_spline_hat";
    case TestShape::zero: return "zero";
    case TestShape::custom: return "custom";
  }
  return "?";
}

TestShape parse_test_shape(std::string_view text) {
  if (text == "bump") return TestShape::bump;
  if (text == "cosine_window" || text == "cosine") return TestShape::cosine_window;
  if (text == "cubic_spline_hat" || text == "spline") return TestShape::cubic_spline_hat;
  if (text == "zero") return TestShape::zero;
  throw UsageError(fmt::format("unknown test function shape '{}'", text));
}

namespace {

// Profiles on the unit support [-1, 1] with value 1 at the origin.
ProfileValue unit_bump(double u) {
  if (std::abs(u) >= 1.0) return {};
  const double q = 1.0 / (1.0 - u * u);
  const double g = std::exp(1.0 - q);
  const double dq = 2.0 * u * q * q;
  const double d2q = 2.0 * q * q + 8.0 * u * u * q * q * q;
  return {g, -g * dq, g * (dq * dq - d2q)};
}

ProfileValue unit_cosine(double u) {
  if (std::abs(u) >= 1.0) return {};
  const double c = std::cos(M_PI * u);
  const double s = std::sin(M_PI * u);
  return {0.5 * (1.0 + c), -0.5 * M_PI * s, -0.5 * M_PI * M_PI * c};
}

// Cubic B-spline on [-2, 2] evaluated at t = 2u, divided by its peak 2/3.
ProfileValue unit_spline(double u) {
  const double t = 2.0 * u;
  const double a = std::abs(t);
  const double sign = t < 0.0 ? -1.0 : 1.0;
  double b = 0.0;
  double db = 0.0;
  double d2b = 0.0;
  if (a < 1.0) {
    b = 2.0 / 3.0 - a * a + 0.5 * a * a * a;
    db = sign * (-2.0 * a + 1.5 * a * a);
    d2b = -2.0 + 3.0 * a;
  } else if (a < 2.0) {
    const double r = 2.0 - a;
    b = r * r * r / 6.0;
    db = -sign * 0.5 * r * r;
    d2b = r;
  }
  return {1.5 * b, 1.5 * 2.0 * db, 1.5 * 4.0 * d2b};
}

}  // namespace

TestProfile TestProfile::preset(TestShape shape, double radius, double amplitude) {
  if (shape == TestShape::custom) throw UsageError("use TestProfile::custom for custom profiles");
  if (!(radius > 0.0) || !std::isfinite(radius))
    throw UsageError(fmt::format("test function radius must be positive, got {}", radius));
  if (!std::isfinite(amplitude)) throw UsageError("test function amplitude must be finite");
  TestProfile p;
  p.shape_ = shape;
  p.radius_ = radius;
  p.amplitude_ = amplitude;
  return p;
}

TestProfile TestProfile::custom(std::function<ProfileValue(double)> fn, double radius,
                                std::vector<double> breakpoints, std::string name) {
  if (!fn) throw UsageError("custom profile needs a callable");
  if (!(radius > 0.0)) throw UsageError("custom profile radius must be positive");
  TestProfile p;
  p.shape_ = TestShape::custom;
  p.radius_ = radius;
  p.custom_ = std::move(fn);
  p.custom_breaks_ = std::move(breakpoints);
  p.custom_name_ = std::move(name);
  return p;
}

std::string TestProfile::name() const {
  if (shape_ == TestShape::custom) return custom_name_;
  return std::string(to_string(shape_));
}

ProfileValue TestProfile::eval(double x) const {
  if (shape_ == TestShape::zero) return {};
  if (shape_ == TestShape::custom) {
    if (std::abs(x) >= radius_) return {};
    auto v = custom_(x / dilation_);
    return {amplitude_ * v.g, amplitude_ * v.dg / dilation_,
            amplitude_ * v.d2g / (dilation_ * dilation_)};
  }
  const double u = x / radius_;
  ProfileValue v;
  switch (shape_) {
    case TestShape::bump: v = unit_bump(u); break;
    case TestShape::cosine_window: v = unit_cosine(u); break;
    case TestShape::cubic_spline_hat: v = unit_spline(u); break;
    default: break;
  }
  return {amplitude_ * v.g, amplitude_ * v.dg / radius_, amplitude_ * v.d2g / (radius_ * radius_)};
}

std::vector<double> TestProfile::breakpoints() const {
  std::vector<double> b{-radius_, radius_};
  if (shape_ == TestShape::cubic_spline_hat) {
    b.insert(b.end(), {-0.5 * radius_, 0.0, 0.5 * radius_});
  } else if (shape_ == TestShape::custom) {
    for (double c : custom_breaks_) b.push_back(c * dilation_);
  }
  std::sort(b.begin(), b.end());
  return b;
}

double TestProfile::sup_norm() const {
  if (is_zero()) return 0.0;
  if (shape_ != TestShape::custom) return std::abs(amplitude_);
  double best = 0.0;
  for (int i = 0; i <= 4000; ++i) best = std::max(best, std::abs(eval(-radius_ + 2.0 * radius_ * i / 4000).g));
  return best;
}

TestProfile TestProfile::dilated(double s) const {
  if (!(s > 0.0)) throw UsageError("dilation factor must be positive");
  TestProfile p = *this;
  p.radius_ *= s;
  if (shape_ == TestShape::custom) p.dilation_ *= s;
  return p;
}

TestProfile TestProfile::scaled(double factor) const {
  TestProfile p = *this;
  p.amplitude_ *= factor;
  return p;
}

std::vector<double> ScaledTestFunction::breakpoints() const {
  auto b = g.breakpoints();
  for (double& x : b) x = e0 + eta0 * x;
  return b;
}

void ScaledTestFunction::validate() const {
  if (!(eta0 > 0.0) || !std::isfinite(eta0))
    throw UsageError(fmt::format("eta0 must be positive, got {}", eta0));
  if (!std::isfinite(e0)) throw UsageError("E0 must be finite");
}

double smooth_cutoff(double y) {
  const double a = std::abs(y);
  if (a <= 1.0) return 1.0;
  if (a >= 2.0) return 0.0;
  const double t = a - 1.0;
  const double t4 = t * t * t * t;
  return 1.0 - t4 * (35.0 - 84.0 * t + 70.0 * t * t - 20.0 * t * t * t);
}

double smooth_cutoff_derivative(double y) {
  const double a = std::abs(y);
  if (a <= 1.0 || a >= 2.0) return 0.0;
  const double t = a - 1.0;
  const double t3 = t * t * t;
  const double ds = 140.0 * t3 * (1.0 - t) * (1.0 - t) * (1.0 - t);
  return y < 0.0 ? ds : -ds;
}

std::complex<double> hs_extension(const ScaledTestFunction& tf, double x, double y) {
  const double chi = smooth_cutoff(y);
  if (chi == 0.0) return 0.0;
  const auto v = tf.g.eval((x - tf.e0) / tf.eta0);
  return {v.g * chi, y * v.dg / tf.eta0 * chi};
}

}  // namespace mesorm
