#include "mesorm/kernels.hpp"

#include <doctest.h>

#include <cmath>
#include <random>

using namespace mesorm;

namespace {

KernelContext wigner_ctx(AtomicMeasure mu, int beta = 1, double m2 = 2.0, double w4 = 3.0) {
  KernelContext ctx{FreeConvolutionModel::additive(std::move(mu)), beta, m2, w4};
  return ctx;
}

KernelContext sample_ctx(AtomicMeasure sigma, double gamma, double w4 = 3.0) {
  KernelContext ctx{FreeConvolutionModel::multiplicative(std::move(sigma), gamma), 1, 2.0, w4};
  return ctx;
}

double rel(cplx a, cplx b) { return std::abs(a - b) / std::max(std::abs(b), 1e-300); }

AtomicMeasure random_measure(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> loc(-0.4, 0.4), w(0.2, 1.0);
  std::vector<std::pair<double, double>> pts;
  for (int k = 0; k < 4; ++k) pts.emplace_back(loc(rng), w(rng));
  return build_atomic_measure(pts);
}

}  // namespace

TEST_CASE("context validation") {
  auto ctx = wigner_ctx(point_mass(0.0));
  CHECK_NOTHROW(ctx.validate());
  CHECK(ctx.diag_coeff() == 0.0);
  CHECK(ctx.fourth_coeff() == 0.0);
  ctx.beta = 3;
  CHECK_THROWS(ctx.validate());
  const auto made = KernelContext::make(FreeConvolutionModel::additive(point_mass(0.0)),
                                        make_moment_profile(2, EntryLaw::gaussian, 1.0));
  CHECK(made.beta == 2);
  CHECK(made.w4 == 2.0);
}

TEST_CASE("two-point function on the semicircle") {
  const auto ctx = wigner_ctx(point_mass(0.0));
  const cplx z1(0, 1), z2(0, 2);
  CHECK(std::abs(eval_I(ctx, z1, z2) - cplx(-0.25600, 0)) < 1e-5);
  const auto p1 = spectral_point(ctx.model, z1), p2 = spectral_point(ctx.model, z2);
  CHECK(std::abs(eval_I(ctx, p1, p2) - eval_I_identity(p1, p2)) <= 1e-10);
  CHECK(std::abs(eval_I(ctx, z2, z2) - eval_Is(ctx, z2)) <= 1e-14);
  CHECK(std::abs(eval_I(ctx, std::conj(z1), std::conj(z2)) - std::conj(eval_I(ctx, z1, z2))) <=
        1e-14);
  CHECK(std::abs(eval_Is(ctx, z2) - cplx(-0.17157, 0)) < 1e-5);
  const auto p = spectral_point(ctx.model, z2);
  CHECK(std::abs(eval_Is(ctx, p) - eval_Is_identity(p)) <= 1e-10);
}

TEST_CASE("I_s decays and stays bounded") {
  const auto ctx = wigner_ctx(build_atomic_measure(std::vector<std::pair<double, double>>{
      {-0.5, 1}, {0.5, 1}}));
  const cplx far = eval_Is(ctx, cplx(1e3, 0));
  CHECK(std::abs(far) * 1e6 == doctest::Approx(1.0).epsilon(0.01));
  for (double e = -3; e <= 3; e += 0.1)
    for (double eta : {1e-3, 1e-2, 0.5}) CHECK(std::abs(eval_Is(ctx, cplx(e, eta))) <= 1.0 + 1e-12);
  const double L = ctx.model.upper_edge();
  for (double eta : {1e-2, 1e-4}) {
    const double r = std::abs(1.0 - eval_Is(ctx, cplx(L, eta))) / std::sqrt(eta);
    CHECK(r >= 1.0 / 20);
    CHECK(r <= 20.0);
  }
}

TEST_CASE("identity form of I on random measures") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> re(-3, 3), im(0.01, 1.5);
  std::bernoulli_distribution flip(0.5);
  for (int m = 0; m < 5; ++m) {
    const auto ctx = wigner_ctx(random_measure(rng));
    int checked = 0;
    while (checked < 100) {
      const cplx z1(re(rng), flip(rng) ? im(rng) : -im(rng));
      const cplx z2(re(rng), flip(rng) ? im(rng) : -im(rng));
      if (std::abs(z1 - z2) <= 1e-3) continue;
      const auto p1 = spectral_point(ctx.model, z1), p2 = spectral_point(ctx.model, z2);
      const cplx direct = eval_I(ctx, p1, p2);
      CHECK(std::abs(direct - eval_I_identity(p1, p2)) <= 1e-10);
      CHECK(std::abs(direct) <= 1.0 + 1e-9);
      ++checked;
    }
  }
}

TEST_CASE("I derivatives match finite differences") {
  const auto ctx = wigner_ctx(point_mass(0.0));
  const double h = 1e-5;
  for (auto [z1, z2] : {std::pair{cplx(0, 1), cplx(0, 2)}, std::pair{cplx(0.5, 0.4), cplx(-0.3, -0.6)}}) {
    const auto d = eval_I_derivatives(ctx, z1, z2);
    const cplx fd1 = (eval_I(ctx, z1 + h, z2) - eval_I(ctx, z1 - h, z2)) / (2 * h);
    const cplx fd2 = (eval_I(ctx, z1, z2 + h) - eval_I(ctx, z1, z2 - h)) / (2 * h);
    const cplx fd12 = (eval_I(ctx, z1 + h, z2 + h) - eval_I(ctx, z1 + h, z2 - h) -
                       eval_I(ctx, z1 - h, z2 + h) + eval_I(ctx, z1 - h, z2 - h)) /
                      (4 * h * h);
    CHECK(rel(d.d1, fd1) <= 1e-6);
    CHECK(rel(d.d2, fd2) <= 1e-6);
    CHECK(rel(d.d12, fd12) <= 1e-5);

    const auto swapped = eval_I_derivatives(ctx, z2, z1);
    CHECK(std::abs(swapped.d12 - d.d12) <= 1e-12 * std::abs(d.d12));
    CHECK(std::abs(swapped.d1 - d.d2) <= 1e-12 * std::abs(d.d2));

    const auto p1 = spectral_point(ctx.model, z1), p2 = spectral_point(ctx.model, z2);
    const cplx alt = ((z1 - z2) * p1.dv - p1.v + p2.v) /
                     ((z1 + p1.v - z2 - p2.v) * (z1 + p1.v - z2 - p2.v));
    CHECK(std::abs(d.d1 - alt) <= 1e-9);

    const cplx direct = 1.0 / (1.0 - eval_I(ctx, p1, p2));
    CHECK(std::abs(inverse_one_minus_I(p1, p2) - direct) <= 1e-9 * std::abs(direct));
  }
}

TEST_CASE("I_s prime matches finite differences") {
  const auto ctx = wigner_ctx(point_mass(0.0));
  const cplx z(2, 0.1);
  const double h = 1e-5;
  const cplx fd = (eval_Is(ctx, z + h) - eval_Is(ctx, z - h)) / (2 * h);
  CHECK(rel(eval_Is_prime(ctx, spectral_point(ctx.model, z)), fd) <= 1e-6);
}

TEST_CASE("additive kernel") {
  const auto ctx = wigner_ctx(point_mass(0.0));
  const cplx z1(1, 0.1), z2(1, -0.05);
  const auto p1 = spectral_point(ctx.model, z1), p2 = spectral_point(ctx.model, z2);
  const double h = 1e-5;
  auto inner = [&](cplx a) {
    const auto pa = spectral_point(ctx.model, a);
    return inverse_one_minus_I(pa, p2) * eval_I_derivatives(ctx, pa, p2).d2;
  };
  const cplx oracle = 2.0 * (inner(z1 + h) - inner(z1 - h)) / (2 * h);
  CHECK(rel(eval_K_additive(ctx, z1, z2), oracle) <= 1e-6);
  CHECK(std::abs(eval_K_additive(ctx, std::conj(z1), std::conj(z2)) -
                 std::conj(eval_K_additive(ctx, z1, z2))) <= 1e-10);

  for (int beta : {1, 2}) {
    const auto c = wigner_ctx(point_mass(0.0), beta, 2.0 / beta, 1.0 + 2.0 / beta);
    const cplx a(0, 1e-3), b(0, -0.5e-3);
    const cplx k = eval_K_additive(c, a, b);
    const cplx lead = -(2.0 / beta) / ((a - b) * (a - b));
    CHECK(std::abs(k / lead - 1.0) <= 0.1);
  }
}

TEST_CASE("additive bias density") {
  const auto gue = wigner_ctx(point_mass(0.0), 2, 1.0, 2.0);
  for (cplx z : {cplx(0.3, 0.1), cplx(2.0, 0.01), cplx(-1, -0.2)}) CHECK(eval_b_additive(gue, z) == cplx(0, 0));

  const auto goe = wigner_ctx(point_mass(0.0));
  const double L = goe.model.upper_edge();
  const double b2 = std::abs(eval_b_additive(goe, cplx(L, 1e-2)));
  const double b3 = std::abs(eval_b_additive(goe, cplx(L, 1e-3)));
  CHECK(b3 / b2 >= 3.0);
  CHECK(b3 / b2 <= 30.0);

  const auto mixed = wigner_ctx(point_mass(0.0), 1, 1.5, 4.0);
  const auto p = spectral_point(mixed.model, cplx(0.2, 0.3));
  const cplx is = eval_Is(mixed, p), isp = eval_Is_prime(mixed, p);
  const cplx expect = (2.0 - 1.0) / (1.0 - is) * isp + (1.5 - 2.0) * isp + (4.0 - 3.0) * is * isp;
  CHECK(std::abs(eval_b_additive(mixed, p) - expect) <= 1e-12);
}

TEST_CASE("sample covariance kernel against the quadratic oracle") {
  const auto ctx = sample_ctx(point_mass(1.0), 1.0);
  const double gamma = 1.0;
  auto root = [gamma](cplx z) {
    const cplx a = gamma * z, b = z - 1.0 + gamma;
    const cplx d = std::sqrt(b * b - 4.0 * a);
    const cplx r1 = (-b + d) / (2.0 * a), r2 = (-b - d) / (2.0 * a);
    return z.imag() > 0 ? (r1.imag() > 0 ? r1 : r2) : (r1.imag() < 0 ? r1 : r2);
  };
  auto deriv = [gamma](cplx z, cplx m) {
    return -(m + gamma * m * m) / (z - 1.0 + gamma + 2.0 * gamma * z * m);
  };
  const cplx z1(1, 0.1), z2(1, -0.1);
  const cplx m1 = root(z1), m2 = root(z2);
  const cplx d1 = deriv(z1, m1), d2 = deriv(z2, m2);
  const cplx oracle = 2.0 * (d1 * d2 / ((m1 - m2) * (m1 - m2)) - 1.0 / ((z1 - z2) * (z1 - z2)));
  CHECK(rel(eval_K_sample(ctx, z1, z2), oracle) <= 1e-8);
  CHECK(std::abs(eval_K_sample(ctx, std::conj(z1), std::conj(z2)) -
                 std::conj(eval_K_sample(ctx, z1, z2))) <= 1e-10);

  const cplx a(1, 0.1);
  const auto pa = spectral_point(ctx.model, a);
  const double bound = 10 * std::norm(pa.d2v / pa.dv);
  for (double sep : {1e-3, 1e-4}) CHECK(std::abs(eval_K_sample(ctx, a, a + sep)) < bound);
}

TEST_CASE("sample covariance bias density") {
  const auto ctx = sample_ctx(point_mass(1.0), 0.25);
  const auto p = spectral_point(ctx.model, cplx(1, 0.1));
  CHECK(rel(eval_b_sample_reduced(p), eval_b_sample_direct(ctx, p)) <= 1e-8);
  CHECK(rel(eval_b_sample(ctx, p), eval_b_sample_direct(ctx, p)) <= 1e-12);
  CHECK(std::abs(eval_b_sample(ctx, cplx(100, 0))) <= 1e-3);

  const double E = ctx.model.upper_edge();
  const double b2 = std::abs(eval_b_sample(ctx, cplx(E, 1e-2)));
  const double b3 = std::abs(eval_b_sample(ctx, cplx(E, 1e-3)));
  CHECK(b3 / b2 >= 3.0);
  CHECK(b3 / b2 <= 30.0);

  const auto heavy = sample_ctx(point_mass(1.0), 0.25, 5.0);
  const auto q = spectral_point(heavy.model, cplx(1, 0.1));
  const cplx k4_term = 2.0 * q.v * q.dv;
  const cplx sum = eval_b_sample_direct(heavy, q) * q.v / (q.dv * q.dv);
  CHECK(rel(eval_b_sample(heavy, q), eval_b_sample_direct(heavy, q) + k4_term * sum) <= 1e-12);
}

TEST_CASE("dispatch follows the model kind") {
  const auto w = wigner_ctx(point_mass(0.0));
  const auto s = sample_ctx(point_mass(1.0), 0.5);
  const auto pw = spectral_point(w.model, cplx(0.1, 0.2));
  const auto ps = spectral_point(s.model, cplx(1.1, 0.2));
  CHECK(eval_b(w, pw) == eval_b_additive(w, pw));
  CHECK(eval_b(s, ps) == kSampleBiasWeight * eval_b_sample(s, ps));
  const auto pw2 = spectral_point(w.model, cplx(0.3, -0.1));
  CHECK(eval_K(w, pw, pw2) == eval_K_additive(w, pw, pw2));
}
