#include "mesorm/errors.hpp"
#include "mesorm/testfunction.hpp"

#include <doctest.h>

#include <cmath>

using namespace mesorm;

namespace {

const TestShape kPresets[] = {TestShape::bump, TestShape::cosine_window, TestShape::cubic_spline_hat};

}  // namespace

TEST_CASE("presets are normalized C^2 profiles") {
  for (TestShape shape : kPresets) {
    CAPTURE(to_string(shape));
    const auto g = TestProfile::preset(shape, 1.5, 2.0);
    CHECK(g(0.0) == doctest::Approx(2.0));
    CHECK(g.sup_norm() == doctest::Approx(2.0));
    for (double x : {-1.5, 1.5}) {
      const auto v = g.eval(x);
      CHECK(std::abs(v.g) <= 1e-14);
      CHECK(std::abs(v.dg) <= 1e-12);
    }
    CHECK(g(1.6) == 0.0);
    CHECK(g(-3.0) == 0.0);
    const double h = 1e-5;
    for (double x : {-1.1, -0.37, 0.2, 0.9, 1.3}) {
      const auto v = g.eval(x);
      CHECK(v.dg == doctest::Approx((g(x + h) - g(x - h)) / (2 * h)).epsilon(1e-6).scale(1.0));
      CHECK(v.d2g ==
            doctest::Approx((g.eval(x + h).dg - g.eval(x - h).dg) / (2 * h)).epsilon(1e-5).scale(1.0));
    }
    const auto br = g.breakpoints();
    CHECK(br.front() == -1.5);
    CHECK(br.back() == 1.5);
  }
}

TEST_CASE("dilation and scaling") {
  const auto g = TestProfile::preset(TestShape::bump);
  const auto d = g.dilated(2.0);
  CHECK(d.radius() == doctest::Approx(2.0));
  CHECK(d(1.0) == doctest::Approx(g(0.5)));
  CHECK(d.eval(1.0).dg == doctest::Approx(0.5 * g.eval(0.5).dg));
  const auto s = g.scaled(3.0);
  CHECK(s(0.3) == doctest::Approx(3.0 * g(0.3)));
  CHECK(TestProfile::preset(TestShape::zero).is_zero());
  CHECK(TestProfile::preset(TestShape::bump, 1.0, 0.0).is_zero());
  CHECK(TestProfile::preset(TestShape::zero)(0.0) == 0.0);
}

TEST_CASE("shape names round trip") {
  for (TestShape shape : kPresets) CHECK(parse_test_shape(to_string(shape)) == shape);
  CHECK_THROWS_AS(parse_test_shape("gaussian"), UsageError);
}

TEST_CASE("custom profile") {
  const auto g = TestProfile::custom(
      [](double x) {
        const double u = 1 - x * x;
        return u <= 0 ? ProfileValue{} : ProfileValue{u * u * u, -6 * x * u * u, -6 * u * u + 24 * x * x * u};
      },
      1.0, {}, "poly");
  CHECK(g.name() == "poly");
  CHECK(g(0.5) == doctest::Approx(0.421875));
  CHECK(g.shape() == TestShape::custom);
}

TEST_CASE("scaled test function") {
  ScaledTestFunction tf{TestProfile::preset(TestShape::bump), 0.3, 0.01};
  CHECK(tf.f(0.3) == doctest::Approx(1.0));
  CHECK(tf.f(0.3 + 0.02) == 0.0);
  CHECK(tf.support_lo() == doctest::Approx(0.29));
  CHECK(tf.support_hi() == doctest::Approx(0.31));
  CHECK(tf.df(0.305) == doctest::Approx(tf.g.eval(0.5).dg / 0.01));
  tf.eta0 = 0.0;
  CHECK_THROWS(tf.validate());
}

TEST_CASE("smooth cutoff") {
  CHECK(smooth_cutoff(0.0) == 1.0);
  CHECK(smooth_cutoff(1.0) == 1.0);
  CHECK(smooth_cutoff(-0.7) == 1.0);
  CHECK(smooth_cutoff(2.0) == 0.0);
  CHECK(smooth_cutoff(-5.0) == 0.0);
  CHECK(smooth_cutoff(1.5) == doctest::Approx(0.5));
  double prev = 1.0;
  for (double y = 1.0; y <= 2.0; y += 0.01) {
    CHECK(smooth_cutoff(y) <= prev + 1e-15);
    prev = smooth_cutoff(y);
  }
  const double h = 1e-6;
  for (double y : {1.2, 1.5, 1.8, -1.4})
    CHECK(smooth_cutoff_derivative(y) ==
          doctest::Approx((smooth_cutoff(y + h) - smooth_cutoff(y - h)) / (2 * h)).epsilon(1e-6));
}

TEST_CASE("almost-analytic extension") {
  const ScaledTestFunction tf{TestProfile::preset(TestShape::cosine_window), 1.0, 0.1};
  for (double x : {0.93, 1.0, 1.04}) CHECK(hs_extension(tf, x, 0.0) == std::complex<double>(tf.f(x), 0));
  CHECK(hs_extension(tf, 1.0, 2.0) == std::complex<double>(0, 0));
  CHECK(hs_extension(tf, 1.0, -3.0) == std::complex<double>(0, 0));
  CHECK(hs_extension(tf, 1.5, 0.5) == std::complex<double>(0, 0));
  const auto v = hs_extension(tf, 1.03, 0.2);
  CHECK(v.real() == doctest::Approx(tf.f(1.03)));
  CHECK(v.imag() == doctest::Approx(0.2 * tf.df(1.03)));
}
