#include "mesorm/errors.hpp"
#include "mesorm/linstat.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <random>

using namespace mesorm;

namespace {

EnsembleSpec goe(std::size_t n, std::uint64_t seed) {
  EnsembleSpec spec;
  spec.n = n;
  spec.deformation = point_mass(0.0);
  spec.seed = seed;
  return spec;
}

}  // namespace

TEST_CASE("eigenvalues of small closed forms") {
  RealMatrix flip(2, 2);
  flip << 0, 1, 1, 0;
  const auto s = eigenvalues(flip);
  REQUIRE(s.size() == 2);
  CHECK(s.eigenvalues[0] == doctest::Approx(-1.0));
  CHECK(s.eigenvalues[1] == doctest::Approx(1.0));

  RealMatrix d = RealMatrix::Zero(4, 4);
  d.diagonal() << 3.0, -1.0, 2.5, 0.0;
  const auto sd = eigenvalues(d);
  CHECK(sd.eigenvalues == std::vector<double>{-1.0, 0.0, 2.5, 3.0});

  ComplexMatrix h(2, 2);
  h << cplx(1, 0), cplx(0, 1), cplx(0, -1), cplx(1, 0);
  const auto sh = eigenvalues(h);
  CHECK(sh.eigenvalues[0] == doctest::Approx(0.0).scale(1.0));
  CHECK(sh.eigenvalues[1] == doctest::Approx(2.0));
}

TEST_CASE("GOE spectrum: edge, ordering, trace") {
  const auto spec = goe(500, 17);
  const auto h = std::get<RealMatrix>(sample_matrix(spec));
  const auto s = sample_spectrum(spec);
  CHECK(s.size() == 500);
  CHECK(std::is_sorted(s.eigenvalues.begin(), s.eigenvalues.end()));
  CHECK(std::abs(s.eigenvalues.back() - 2.0) <= 0.15);
  double sum = 0.0;
  for (double x : s.eigenvalues) sum += x;
  CHECK(std::abs(sum - h.trace()) <= 1e-8 * 500);
  CHECK(s.spec_hash == spec_hash(spec));
  CHECK(eigenpair_residual(h, s.eigenvalues[250]) <= 1e-8 * h.norm());
}

TEST_CASE("sample covariance spectra") {
  EnsembleSpec spec;
  spec.kind = EnsembleKind::sample_covariance;
  spec.n = 400;
  spec.m = 200;
  spec.deformation = build_atomic_measure(std::vector<std::pair<double, double>>{{1, 1}, {4, 1}});
  spec.seed = 3;
  const auto s = sample_spectrum(spec);
  CHECK(s.size() == 200);
  CHECK(s.eigenvalues.front() >= -1e-10);

  // Nonzero spectra of Y Y* and Y* Y coincide.
  std::mt19937_64 rng(5);
  std::normal_distribution<double> nd;
  RealMatrix y(5, 3);
  for (int i = 0; i < 5; ++i)
    for (int j = 0; j < 3; ++j) y(i, j) = nd(rng);
  const RealMatrix big = y * y.transpose(), small = y.transpose() * y;
  const auto sb = eigenvalues(big), ss = eigenvalues(small);
  for (int k = 0; k < 3; ++k) CHECK(std::abs(sb.eigenvalues[2 + k] - ss.eigenvalues[k]) <= 1e-8);
  CHECK(std::abs(sb.eigenvalues[0]) <= 1e-8);
  CHECK(std::abs(sb.eigenvalues[1]) <= 1e-8);
}

TEST_CASE("spec fingerprint and hash") {
  const auto a = goe(100, 1), b = goe(100, 2);
  CHECK(spec_hash(a) != spec_hash(b));
  CHECK(spec_hash(a) == spec_hash(goe(100, 1)));
  CHECK(spec_fingerprint(a)["seed"] == 1);
  CHECK(fnv1a("") == 0xcbf29ce484222325ULL);
  CHECK(fnv1a("a") == 0xaf63dc4c8601ec8cULL);
}

TEST_CASE("linear statistic") {
  const auto g = TestProfile::preset(TestShape::bump);
  const ScaledTestFunction tf{g, 0.5, 0.1};
  std::vector<double> eig{-1.0, 0.45, 0.5, 0.58, 2.0};
  const double value = linear_statistic(std::span<const double>(eig), tf);
  CHECK(value == doctest::Approx(tf.f(0.45) + 1.0 + tf.f(0.58)));
  std::vector<double> perm{0.58, 2.0, 0.5, -1.0, 0.45};
  CHECK(linear_statistic(std::span<const double>(perm), tf) == doctest::Approx(value).epsilon(1e-15));

  ScaledTestFunction zero{TestProfile::preset(TestShape::zero), 0.5, 0.1};
  CHECK(linear_statistic(std::span<const double>(eig), zero) == 0.0);
  ScaledTestFunction far{g, 10.0, 0.1};
  CHECK(linear_statistic(std::span<const double>(eig), far) == 0.0);
  std::vector<double> one{0.5};
  CHECK(linear_statistic(std::span<const double>(one), tf) == 1.0);

  const ScaledTestFunction other{TestProfile::preset(TestShape::cosine_window), 0.5, 0.1};
  const auto sum_g = TestProfile::custom(
      [&](double x) {
        const auto a = g.eval(x), b = other.g.eval(x);
        return ProfileValue{a.g + b.g, a.dg + b.dg, a.d2g + b.d2g};
      },
      1.0);
  const ScaledTestFunction both{sum_g, 0.5, 0.1};
  CHECK(linear_statistic(std::span<const double>(eig), both) ==
        doctest::Approx(value + linear_statistic(std::span<const double>(eig), other)));
}

TEST_CASE("centering integral") {
  const auto model = FreeConvolutionModel::additive(point_mass(0.0));
  const auto g = TestProfile::preset(TestShape::bump);
  const std::size_t n = 1000;

  const ScaledTestFunction tf{g, 0.0, 0.05};
  const int k = 20000;
  double oracle = 0.0;
  for (int i = 0; i <= k; ++i) {
    const double x = -0.05 + 0.1 * i / k;
    const double w = (i == 0 || i == k) ? 1.0 : (i % 2 ? 4.0 : 2.0);
    oracle += w * tf.f(x) * std::sqrt(4 - x * x) / (2 * M_PI);
  }
  oracle *= 0.1 / k / 3 * n;
  const double c = centering_integral(model, tf, n);
  CHECK(std::abs(c / oracle - 1.0) <= 1e-5);
  CHECK(c > 0.0);
  CHECK(c <= n * g.sup_norm() * 0.1 * (1 / M_PI));

  const ScaledTestFunction outside{g, 3.0, 0.05};
  CHECK(centering_integral(model, outside, n) == 0.0);

  const ScaledTestFunction edge{g, 2.0, 0.05};
  double edge_oracle = 0.0;
  for (int i = 0; i <= k; ++i) {
    const double t = std::sqrt(0.05) * i / k;  // x = 2 - t^2
    const double w = (i == 0 || i == k) ? 1.0 : (i % 2 ? 4.0 : 2.0);
    const double x = 2 - t * t;
    edge_oracle += w * edge.f(x) * std::sqrt(4 - x * x) / (2 * M_PI) * 2 * t;
  }
  edge_oracle *= std::sqrt(0.05) / k / 3 * n;
  CHECK(centering_integral(model, edge, n) == doctest::Approx(edge_oracle).epsilon(1e-6));

  // gamma > 1 adds the atom at zero.
  const auto wide = FreeConvolutionModel::multiplicative(point_mass(1.0), 2.0);
  const ScaledTestFunction at_zero{g, 0.0, 0.05};
  CHECK(centering_integral(wide, at_zero, 200) == doctest::Approx(100.0).epsilon(1e-9));
}

TEST_CASE("local law residual") {
  const auto model = FreeConvolutionModel::additive(point_mass(0.0));
  const auto grid = bulk_grid(model, 20, 0.1);
  REQUIRE(grid.size() == 20);
  for (const auto& z : grid) {
    CHECK(z.real() > model.lower_edge());
    CHECK(z.real() < model.upper_edge());
  }

  SpectrumSample classical;
  classical.eigenvalues = classical_locations(model, 1000);
  CHECK(classical.size() == 1000);
  CHECK(std::is_sorted(classical.eigenvalues.begin(), classical.eigenvalues.end()));
  CHECK(local_law_residual(classical, model, grid) <= 5.0);

  int within = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto s = sample_spectrum(goe(1000, 1000 + seed));
    if (local_law_residual(s, model, grid) <= std::pow(1000.0, 0.15)) ++within;
  }
  CHECK(within >= 19);

  std::vector<double> eig{-1.0, 0.2, 1.3};
  const cplx z(0.4, 0.3);
  CHECK(empirical_stieltjes(eig, std::conj(z)) == std::conj(empirical_stieltjes(eig, z)));
}

TEST_CASE("classical locations follow the quantiles") {
  const auto model = FreeConvolutionModel::multiplicative(point_mass(1.0), 0.25);
  const auto x = classical_locations(model, 400);
  CHECK(x.front() > model.lower_edge() - 1e-9);
  CHECK(x.back() < model.upper_edge() + 1e-9);
  // The median of the Marchenko-Pastur law lies below its mean (= 1).
  CHECK(x[199] < 1.0);
}

TEST_CASE("spectrum export round trip") {
  const auto s = sample_spectrum(goe(50, 9));
  const auto dir = std::filesystem::temp_directory_path() / "mesorm_linstat_test";
  std::filesystem::create_directories(dir);
  export_spectrum_csv(s, dir / "s.csv");
  export_spectrum_binary(s, dir / "s.bin");
  const auto a = import_spectrum(dir / "s.csv");
  const auto b = import_spectrum(dir / "s.bin");
  CHECK(a.spec_hash == s.spec_hash);
  CHECK(b.spec_hash == s.spec_hash);
  CHECK(a.eigenvalues == s.eigenvalues);
  CHECK(b.eigenvalues == s.eigenvalues);
  CHECK_THROWS(import_spectrum(dir / "missing.bin"));
  std::filesystem::remove_all(dir);
}
