#include "mesorm/cltengine.hpp"
#include "mesorm/errors.hpp"

#include <doctest.h>

#include <cmath>

using namespace mesorm;

namespace {

AtomicMeasure two_point() {
  return build_atomic_measure(std::vector<std::pair<double, double>>{{-0.5, 1}, {0.5, 1}});
}

KernelContext wigner_ctx(AtomicMeasure mu, int beta = 1) {
  return KernelContext::make(FreeConvolutionModel::additive(std::move(mu)),
                             make_moment_profile(beta, EntryLaw::gaussian, 2.0 / beta));
}

const TestShape kPresets[] = {TestShape::bump, TestShape::cosine_window, TestShape::cubic_spline_hat};

}  // namespace

TEST_CASE("contour spec") {
  const auto spec = ContourSpec::for_scale(0.01, 1000);
  CHECK(spec.outer_height == doctest::Approx(1e-5));
  CHECK(spec.inner_height() == 0.5 * spec.outer_height);
  CHECK(std::pow(1000.0, -spec.tau) == doctest::Approx(1e-3));
  ContourSpec bad;
  bad.outer_height = 1.5;
  CHECK_THROWS(bad.validate());
  bad.outer_height = -1.0;
  CHECK_THROWS(bad.validate());
}

TEST_CASE("Helffer-Sjostrand reconstruction") {
  const ScaledTestFunction tf{TestProfile::preset(TestShape::bump), 0.2, 0.05};
  CHECK(hs_reconstruct(tf, 0.2) == doctest::Approx(1.0).epsilon(1e-4));
  CHECK(std::abs(hs_reconstruct(tf, 0.2 + 4 * 0.05)) <= 1e-6);
  CHECK(hs_reconstruct(tf, 0.23) == doctest::Approx(tf.f(0.23)).epsilon(1e-4));
  ScaledTestFunction scaled = tf;
  scaled.g = tf.g.scaled(2.5);
  const double a = hs_reconstruct(tf, 0.21), b = hs_reconstruct(scaled, 0.21);
  CHECK(std::abs(b - 2.5 * a) <= 1e-8 * std::abs(b));
}

TEST_CASE("bulk variance approaches the limit with the right beta scaling") {
  const auto g = TestProfile::preset(TestShape::bump);
  const ScaledTestFunction tf{g, 0.0, 0.01};
  const auto spec = ContourSpec::for_scale(0.01);
  const auto c1 = wigner_ctx(two_point(), 1);
  const auto c2 = wigner_ctx(two_point(), 2);
  const auto r1 = finite_variance(c1, tf, spec);
  const double v2 = finite_variance_Vf(c2, tf, spec);
  const double lim = limit_bulk_variance(g, 1);
  CHECK(std::abs(r1.value / lim - 1.0) <= 0.1);
  CHECK(r1.imag_residual <= 1e-6);
  CHECK(std::abs(v2 / r1.value - 0.5) <= 0.05 * 0.5);

  ContourSpec half = spec;
  half.outer_height *= 0.5;
  CHECK(std::abs(finite_variance_Vf(c1, tf, half) / r1.value - 1.0) <= 0.02);
  const double b = finite_bias(c1, tf, spec);
  const double bh = finite_bias(c1, tf, half);
  CHECK(std::abs(b) <= 0.05 * g.sup_norm());
  CHECK(std::abs(bh - b) <= 0.02 * std::max(std::abs(b), 1e-3 * g.sup_norm()));
}

TEST_CASE("bulk variance convergence ladder") {
  const auto g = TestProfile::preset(TestShape::cosine_window);
  const auto ctx = wigner_ctx(two_point(), 1);
  const double lim = limit_bulk_variance(g, 1);
  std::vector<double> errors;
  for (double eta : {0.1, 0.03, 0.01}) {
    const ScaledTestFunction tf{g, 0.0, eta};
    const auto r = finite_variance(ctx, tf, ContourSpec::for_scale(eta));
    CHECK(r.value >= -1e-8);
    CHECK(r.imag_residual <= 1e-6);
    errors.push_back(std::abs(r.value - lim));
  }
  CHECK(errors.back() < errors.front());
  CHECK(errors.back() <= 0.1 * lim);
}

TEST_CASE("edge bias") {
  const auto g = TestProfile::preset(TestShape::bump);
  const auto goe = wigner_ctx(point_mass(0.0), 1);
  const double eta = std::pow(1e6, -0.4);
  const ScaledTestFunction tf{g, goe.model.upper_edge(), eta};
  const auto r = finite_bias_detail(goe, tf, ContourSpec::for_scale(eta));
  CHECK(std::abs(r.value / limit_edge_mean(g, 1) - 1.0) <= 0.15);

  const auto gue = wigner_ctx(point_mass(0.0), 2);
  CHECK(std::abs(finite_bias(gue, tf, ContourSpec::for_scale(eta))) <= 1e-8);

  const auto sample = KernelContext::make(
      FreeConvolutionModel::multiplicative(
          build_atomic_measure(std::vector<std::pair<double, double>>{{1, 1}, {4, 1}}), 0.5),
      make_moment_profile(1, EntryLaw::gaussian, 2.0));
  const ScaledTestFunction ts{g, sample.model.upper_edge(), 1e-3};
  CHECK(std::abs(finite_bias(sample, ts, ContourSpec::for_scale(1e-3)) /
                     limit_edge_mean(g, 1, true) -
                 1.0) <= 0.02);
}

TEST_CASE("bulk limit dual forms") {
  for (TestShape shape : kPresets)
    for (int beta : {1, 2}) {
      CAPTURE(to_string(shape));
      const auto forms = limit_bulk_variance_forms(TestProfile::preset(shape), beta);
      CHECK(std::abs(forms.fourier / forms.double_integral - 1.0) <= 1e-3);
      const auto edge = limit_edge_variance_forms(TestProfile::preset(shape), beta, EdgeSide::right);
      CHECK(std::abs(edge.fourier / edge.double_integral - 1.0) <= 1e-3);
    }
  const auto g = TestProfile::preset(TestShape::bump);
  CHECK(limit_bulk_variance(TestProfile::preset(TestShape::zero), 1) == 0.0);
  CHECK(limit_bulk_variance(g.dilated(3.0), 1) == doctest::Approx(limit_bulk_variance(g, 1)).epsilon(1e-3));
  CHECK(limit_bulk_variance(g, 2) == doctest::Approx(0.5 * limit_bulk_variance(g, 1)).epsilon(1e-12));
}

TEST_CASE("bulk limit against an independent Fourier oracle") {
  // Unitary transform of the bump by direct quadrature, then (1/pi) int |xi| |g^|^2.
  const auto g = TestProfile::preset(TestShape::cubic_spline_hat);
  const int nx = 4000;
  auto ghat2 = [&](double xi) {
    double re = 0.0;
    const double h = 2.0 / nx;
    for (int k = 0; k <= nx; ++k) {
      const double x = -1.0 + k * h;
      const double w = (k == 0 || k == nx) ? 0.5 : 1.0;
      re += w * g(x) * std::cos(xi * x);
    }
    re *= h / std::sqrt(2 * M_PI);
    return re * re;
  };
  double sum = 0.0;
  const double dxi = 0.01;
  for (double xi = dxi / 2; xi < 400.0; xi += dxi) sum += xi * ghat2(xi) * dxi;
  const double oracle = 2.0 * sum / M_PI;
  CHECK(limit_bulk_variance(g, 1) == doctest::Approx(oracle).epsilon(2e-3));
}

TEST_CASE("edge limits") {
  const auto g = TestProfile::preset(TestShape::bump);
  const double v1 = limit_edge_variance(g, 1, EdgeSide::right);
  CHECK(v1 > 0.0);
  CHECK(limit_edge_variance(g, 2, EdgeSide::right) == doctest::Approx(0.5 * v1).epsilon(1e-12));
  CHECK(limit_edge_variance(g, 1, EdgeSide::left) == doctest::Approx(v1).epsilon(1e-3));

  const auto outside = TestProfile::custom(
      [](double x) {
        const double u = 1 - 4 * (x - 1) * (x - 1);
        return u <= 0 ? ProfileValue{} : ProfileValue{u * u * u, -24 * (x - 1) * u * u, 0.0};
      },
      2.0, {0.5, 1.5});
  CHECK(limit_edge_variance(outside, 1, EdgeSide::right) == 0.0);

  CHECK(limit_edge_mean(g, 2) == 0.0);
  CHECK(limit_edge_mean(g, 1) == doctest::Approx(0.25));
  CHECK(limit_edge_mean(g, 1, true) == doctest::Approx(0.25));
  CHECK(limit_edge_mean(g.scaled(2.0), 1) == doctest::Approx(0.5));
}

TEST_CASE("prediction record") {
  const auto ctx = wigner_ctx(two_point(), 1);
  const ScaledTestFunction tf{TestProfile::preset(TestShape::bump), 0.0, 0.05};
  const auto rec = predict(ctx, tf, Location::bulk, ContourSpec::for_scale(0.05, 1000));
  CHECK(rec.model == "deformed_wigner");
  CHECK(rec.location == "bulk");
  CHECK(rec.mean_limit == 0.0);
  CHECK(rec.v_limit == doctest::Approx(limit_bulk_variance(tf.g, 1)));
  CHECK(rec.v_finite > 0.0);
  nlohmann::json j = rec;
  const auto back = j.get<PredictionRecord>();
  CHECK(back.v_finite == rec.v_finite);
  CHECK(back.bias_finite == rec.bias_finite);
  CHECK(back.tau == rec.tau);
  CHECK(nlohmann::json(back) == j);

  const auto lean = predict(ctx, tf, Location::bulk, ContourSpec::for_scale(0.05), false);
  CHECK_FALSE(lean.finite_computed);
  CHECK(nlohmann::json(lean)["V_finite"].is_null());

  CHECK(parse_location("edge") == Location::edge_right);
  CHECK(parse_location("edge_left") == Location::edge_left);
  CHECK_THROWS_AS(parse_location("middle"), UsageError);
}

TEST_CASE("sample covariance bulk limit is the real Wigner bulk limit") {
  const auto g = TestProfile::preset(TestShape::bump);
  const auto ctx = KernelContext::make(FreeConvolutionModel::multiplicative(point_mass(1.0), 0.25),
                                       make_moment_profile(1, EntryLaw::gaussian, 2.0));
  const ScaledTestFunction tf{g, 1.0, 0.01};
  const auto rec = predict(ctx, tf, Location::bulk, ContourSpec::for_scale(0.01));
  CHECK(rec.v_limit == doctest::Approx(limit_bulk_variance(g, 1)).epsilon(1e-12));
  CHECK(std::abs(rec.v_finite / rec.v_limit - 1.0) <= 0.1);
}
