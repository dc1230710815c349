#include "mesorm/config.hpp"
#include "mesorm/errors.hpp"

#include <doctest.h>

#include <cmath>
#include <fstream>

using namespace mesorm;
namespace fs = std::filesystem;

namespace {

std::string message_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const UsageError& e) {
    return e.what();
  }
  return {};
}

}  // namespace

TEST_CASE("defaults resolve to a valid experiment") {
  const auto run = resolve(ConfigValues());
  const auto& e = run.experiment;
  CHECK(e.ensemble.kind == EnsembleKind::deformed_wigner);
  CHECK(e.ensemble.n == 1000);
  CHECK(e.ensemble.profile.m2 == 2.0);
  CHECK(e.eta0 == doctest::Approx(std::pow(1000.0, -0.5)));
  CHECK(run.output_dir == "runs");
  CHECK(run.formats == 7);
  CHECK_NOTHROW(e.validate());
}

TEST_CASE("parse an ini file") {
  const std::string text =
      "# sample covariance edge run\n"
      "[ensemble]\n"
      "kind = sample_covariance\n"
      "n = 400\n"
      "gamma = 0.5\n"
      "deformation = 1:1, 4:1\n"
      "[test_function]\n"
      "shape = cosine_window\n"
      "eta0 = 0.3\n"
      "[experiment]\n"
      "location = edge_right\n"
      "trials = 120\n"
      "seed = 9\n"
      "lambdas = 0.5, 1\n"
      "[output]\n"
      "format = json,svg\n";
  const auto v = ConfigValues::parse(text);
  const auto run = resolve(v);
  const auto& e = run.experiment;
  CHECK(e.ensemble.kind == EnsembleKind::sample_covariance);
  CHECK(e.ensemble.m == 200);
  CHECK(e.ensemble.deformation.size() == 2);
  CHECK(e.ensemble.deformation.atoms()[1].weight == doctest::Approx(0.5));
  CHECK(e.profile.shape() == TestShape::cosine_window);
  CHECK(e.eta0 == 0.3);
  CHECK(e.location == Location::edge_right);
  CHECK(e.trials == 120);
  CHECK(e.base_seed == 9);
  CHECK(e.lambdas == std::vector<double>{0.5, 1.0});
  CHECK(run.formats == 5);

  const auto again = ConfigValues::parse(v.to_ini());
  CHECK(again.to_ini() == v.to_ini());
}

TEST_CASE("unknown sections and keys name the offender") {
  CHECK(message_of([] { ConfigValues::parse("[ensemble]\nsize = 3\n"); }).find("ensemble.size") !=
        std::string::npos);
  CHECK(message_of([] { ConfigValues::parse("[plots]\nx = 1\n"); }).find("plots") != std::string::npos);
  CHECK(message_of([] { ConfigValues::parse("n = 3\n"); }).find("section") != std::string::npos);
  ConfigValues v;
  CHECK(message_of([&] { v.apply_override("ensemble.nn=3"); }).find("ensemble.nn") != std::string::npos);
  CHECK(message_of([&] { v.apply_override("ensemble.n"); }).find("section.key=value") !=
        std::string::npos);
}

TEST_CASE("overrides and typed errors") {
  ConfigValues v;
  v.apply_override("ensemble.n=300");
  v.apply_override("test_function.eta0_exponent = 0.4");
  auto run = resolve(v);
  CHECK(run.experiment.ensemble.n == 300);
  CHECK(run.experiment.eta0 == doctest::Approx(std::pow(300.0, -0.4)));

  v.set("experiment.trials", "ten");
  CHECK(message_of([&] { resolve(v); }).find("experiment.trials") != std::string::npos);
  v.set("experiment.trials", "10");
  CHECK(message_of([&] { resolve(v); }).find("experiment.trials") != std::string::npos);
  v.set("experiment.trials", "100");
  v.set("ensemble.beta", "3");
  CHECK(message_of([&] { resolve(v); }).find("ensemble.beta") != std::string::npos);
  v.set("ensemble.beta", "2");
  run = resolve(v);
  CHECK(run.experiment.ensemble.profile.m2 == 1.0);
  CHECK(run.experiment.ensemble.profile.w4 == 2.0);
  v.set("experiment.finite_prediction", "maybe");
  CHECK(message_of([&] { resolve(v); }).find("experiment.finite_prediction") != std::string::npos);
}

TEST_CASE("gamma and m must agree") {
  ConfigValues v;
  v.set("ensemble.kind", "sample_covariance");
  v.set("ensemble.deformation", "1:1");
  v.set("ensemble.n", "100");
  CHECK_THROWS_AS(resolve(v), UsageError);
  v.set("ensemble.gamma", "0.333");
  CHECK_THROWS_AS(resolve(v), UsageError);
  v.set("ensemble.gamma", "0.25");
  CHECK(resolve(v).experiment.ensemble.m == 25);
  v.set("ensemble.m", "30");
  CHECK_THROWS_AS(resolve(v), UsageError);
}

TEST_CASE("deformation from a file relative to the config") {
  const auto dir = fs::temp_directory_path() / "mesorm_config_test";
  fs::create_directories(dir);
  {
    std::ofstream(dir / "mu.txt") << "-0.5 1\n0.5 1\n";
    std::ofstream(dir / "run.ini") << "[ensemble]\nn = 100\ndeformation_file = mu.txt\n";
  }
  const auto run = resolve(ConfigValues::load(dir / "run.ini"));
  CHECK(run.experiment.ensemble.deformation.size() == 2);
  CHECK(run.snapshot.find("deformation_file") != std::string::npos);
  CHECK_THROWS_AS(ConfigValues::load(dir / "missing.ini"), UsageError);
  fs::remove_all(dir);
}

TEST_CASE("atom lists") {
  const auto mu = parse_atoms("1:2, 3:1, 2:1");
  REQUIRE(mu.size() == 3);
  CHECK(mu.atoms()[0].weight == doctest::Approx(0.5));
  CHECK(mu.atoms()[2].location == 3.0);
  CHECK_THROWS_AS(parse_atoms("1-2"), UsageError);
  CHECK_THROWS_AS(parse_atoms(""), UsageError);
}
