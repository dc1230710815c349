#include "mesorm/config.hpp"

#include "mesorm/errors.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <fmt/format.h>

#include <cmath>
#include <fstream>
#include <sstream>

namespace mesorm {

namespace {

std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

double to_double(const ConfigValues& v, const std::string& key) {
  const auto& text = v.get(key);
  try {
    std::size_t used = 0;
    const double x = std::stod(text, &used);
    if (used == text.size() && std::isfinite(x)) return x;
  } catch (const std::exception&) {
  }
  throw UsageError(fmt::format("{}: '{}' is not a number", key, text));
}

long long to_integer(const ConfigValues& v, const std::string& key) {
  const auto& text = v.get(key);
  try {
    std::size_t used = 0;
    const long long x = std::stoll(text, &used);
    if (used == text.size()) return x;
  } catch (const std::exception&) {
  }
  throw UsageError(fmt::format("{}: '{}' is not an integer", key, text));
}

bool to_bool(const ConfigValues& v, const std::string& key) {
  const auto& text = v.get(key);
  if (text == "true" || text == "1" || text == "yes" || text == "on") return true;
  if (text == "false" || text == "0" || text == "no" || text == "off") return false;
  throw UsageError(fmt::format("{}: '{}' is not a boolean", key, text));
}

template <class F>
auto with_key(const std::string& key, F&& f) {
  try {
    return f();
  } catch (const UsageError& e) {
    const std::string what = e.what();
    if (what.rfind(key, 0) == 0) throw;
    throw UsageError(fmt::format("{}: {}", key, what));
  }
}

}  // namespace

const std::vector<std::pair<std::string, std::string>>& ConfigValues::schema() {
  static const std::vector<std::pair<std::string, std::string>> keys{
      {"ensemble.kind", "deformed_wigner"},
      {"ensemble.n", "1000"},
      {"ensemble.m", ""},
      {"ensemble.gamma", ""},
      {"ensemble.beta", "1"},
      {"ensemble.law", "gaussian"},
      {"ensemble.m2", ""},
      {"ensemble.w4", ""},
      {"ensemble.deformation", "0:1"},
      {"ensemble.deformation_file", ""},
      {"test_function.shape", "bump"},
      {"test_function.radius", "1"},
      {"test_function.amplitude", "1"},
      {"test_function.eta0", ""},
      {"test_function.eta0_exponent", "0.5"},
      {"experiment.location", "bulk"},
      {"experiment.e0", "0"},
      {"experiment.trials", "400"},
      {"experiment.seed", "1"},
      {"experiment.workers", "0"},
      {"experiment.alpha", "0.01"},
      {"experiment.variance_tolerance", "0.2"},
      {"experiment.finite_prediction", "true"},
      {"experiment.contour_relative_height", "1e-3"},
      {"experiment.lambdas", "0.25, 0.5, 1, 2"},
      {"output.dir", "runs"},
      {"output.format", "all"},
  };
  return keys;
}

ConfigValues::ConfigValues() {
  for (const auto& [k, v] : schema()) values_[k] = v;
}

ConfigValues ConfigValues::parse(const std::string& ini_text, const std::string& origin) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  std::istringstream in(ini_text);
  try {
    pt::ini_parser::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw UsageError(fmt::format("{}:{}: {}", origin, e.line(), e.message()));
  }
  ConfigValues cfg;
  for (const auto& [section, body] : tree) {
    const bool known = section == "ensemble" || section == "test_function" ||
                       section == "experiment" || section == "output";
    if (!known && body.empty())
      throw UsageError(fmt::format("{}: key '{}' must live inside a [section]", origin, section));
    if (!known) throw UsageError(fmt::format("{}: unknown config section [{}]", origin, section));
    for (const auto& [key, value] : body) {
      const std::string full = section + "." + key;
      if (!cfg.values_.count(full))
        throw UsageError(fmt::format("{}: unknown config key '{}'", origin, full));
      cfg.values_[full] = trim(value.data());
    }
  }
  return cfg;
}

ConfigValues ConfigValues::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw UsageError(fmt::format("cannot read config file {}", path.string()));
  std::stringstream buf;
  buf << in.rdbuf();
  auto cfg = parse(buf.str(), path.string());
  const auto& file = cfg.get("ensemble.deformation_file");
  if (!file.empty() && std::filesystem::path(file).is_relative())
    cfg.set("ensemble.deformation_file", (path.parent_path() / file).string());
  return cfg;
}

void ConfigValues::apply_override(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos)
    throw UsageError(fmt::format("override '{}' is not of the form section.key=value", assignment));
  set(trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

void ConfigValues::set(const std::string& key, const std::string& value) {
  auto it = values_.find(key);
  if (it == values_.end()) throw UsageError(fmt::format("unknown config key '{}'", key));
  it->second = value;
}

const std::string& ConfigValues::get(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw UsageError(fmt::format("unknown config key '{}'", key));
  return it->second;
}

std::string ConfigValues::to_ini() const {
  std::string out;
  std::string current;
  for (const auto& [key, def] : schema()) {
    const auto dot = key.find('.');
    const auto section = key.substr(0, dot);
    if (section != current) {
      out += fmt::format("{}[{}]\n", out.empty() ? "" : "\n", section);
      current = section;
    }
    out += fmt::format("{} = {}\n", key.substr(dot + 1), get(key));
  }
  return out;
}

AtomicMeasure parse_atoms(const std::string& text) {
  std::vector<std::pair<double, double>> pts;
  std::stringstream ss(text);
  std::string item;
  auto number = [](const std::string& s) {
    std::size_t used = 0;
    const double x = std::stod(s, &used);
    if (!trim(s.substr(used)).empty()) throw std::invalid_argument(s);
    return x;
  };
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) continue;
    const auto colon = item.find(':');
    try {
      if (colon == std::string::npos) {
        pts.emplace_back(number(item), 1.0);
      } else {
        pts.emplace_back(number(item.substr(0, colon)), number(item.substr(colon + 1)));
      }
    } catch (const std::logic_error&) {
      throw UsageError(fmt::format("bad atom '{}' (expected location:weight)", item));
    }
  }
  return build_atomic_measure(pts, text);
}

RunConfig resolve(const ConfigValues& v) {
  RunConfig rc;
  auto& e = rc.experiment;
  auto& ens = e.ensemble;

  ens.kind = with_key("ensemble.kind", [&] { return parse_ensemble_kind(v.get("ensemble.kind")); });
  const auto n = to_integer(v, "ensemble.n");
  if (n < 2) throw UsageError("ensemble.n: must be at least 2");
  ens.n = static_cast<std::size_t>(n);
  if (ens.kind == EnsembleKind::sample_covariance) {
    if (v.has_value("ensemble.m")) {
      const auto m = to_integer(v, "ensemble.m");
      if (m < 1) throw UsageError("ensemble.m: must be positive");
      ens.m = static_cast<std::size_t>(m);
      if (v.has_value("ensemble.gamma") &&
          std::abs(to_double(v, "ensemble.gamma") - static_cast<double>(ens.m) / ens.n) > 1e-12)
        throw UsageError("ensemble.gamma: disagrees with ensemble.m / ensemble.n");
    } else if (v.has_value("ensemble.gamma")) {
      const double g = to_double(v, "ensemble.gamma");
      const double m = g * static_cast<double>(ens.n);
      if (!(g > 0.0) || std::abs(m - std::round(m)) > 1e-9)
        throw UsageError(fmt::format("ensemble.gamma: gamma * n = {} is not a positive integer", m));
      ens.m = static_cast<std::size_t>(std::llround(m));
    } else {
      throw UsageError("ensemble.m: sample covariance needs ensemble.m or ensemble.gamma");
    }
  } else if (v.has_value("ensemble.m") || v.has_value("ensemble.gamma")) {
    throw UsageError("ensemble.m: only meaningful for kind = sample_covariance");
  }

  const auto beta = to_integer(v, "ensemble.beta");
  if (beta != 1 && beta != 2) throw UsageError("ensemble.beta: must be 1 or 2");
  const auto law = with_key("ensemble.law", [&] { return parse_entry_law(v.get("ensemble.law")); });
  const double m2 = v.has_value("ensemble.m2") ? to_double(v, "ensemble.m2") : 2.0 / beta;
  std::optional<double> w4;
  if (v.has_value("ensemble.w4")) w4 = to_double(v, "ensemble.w4");
  ens.profile = with_key("ensemble.w4", [&] {
    return make_moment_profile(static_cast<int>(beta), law, m2, w4);
  });

  if (v.has_value("ensemble.deformation_file")) {
    ens.deformation = with_key("ensemble.deformation_file", [&] {
      return AtomicMeasure::load(v.get("ensemble.deformation_file"));
    });
  } else {
    ens.deformation =
        with_key("ensemble.deformation", [&] { return parse_atoms(v.get("ensemble.deformation")); });
  }

  const auto shape =
      with_key("test_function.shape", [&] { return parse_test_shape(v.get("test_function.shape")); });
  if (shape == TestShape::custom)
    throw UsageError("test_function.shape: custom profiles are only available from code");
  const double radius = to_double(v, "test_function.radius");
  if (!(radius > 0.0)) throw UsageError("test_function.radius: must be positive");
  e.profile = TestProfile::preset(shape, radius, to_double(v, "test_function.amplitude"));
  if (v.has_value("test_function.eta0")) {
    e.eta0 = to_double(v, "test_function.eta0");
  } else {
    e.eta0 = std::pow(static_cast<double>(ens.n), -to_double(v, "test_function.eta0_exponent"));
  }
  if (!(e.eta0 > 0.0)) throw UsageError("test_function.eta0: must be positive");

  e.location = with_key("experiment.location",
                        [&] { return parse_location(v.get("experiment.location")); });
  e.e0 = to_double(v, "experiment.e0");
  const auto trials = to_integer(v, "experiment.trials");
  if (trials < 30) throw UsageError("experiment.trials: must be at least 30");
  e.trials = static_cast<std::size_t>(trials);
  const auto seed = to_integer(v, "experiment.seed");
  if (seed < 0) throw UsageError("experiment.seed: must be nonnegative");
  e.base_seed = static_cast<std::uint64_t>(seed);
  ens.seed = e.base_seed;
  const auto workers = to_integer(v, "experiment.workers");
  if (workers < 0) throw UsageError("experiment.workers: must be nonnegative");
  e.workers = workers == 0 ? default_workers() : static_cast<int>(workers);
  e.alpha = to_double(v, "experiment.alpha");
  if (!(e.alpha > 0.0 && e.alpha < 1.0)) throw UsageError("experiment.alpha: must lie in (0, 1)");
  e.variance_tolerance = to_double(v, "experiment.variance_tolerance");
  if (!(e.variance_tolerance > 0.0))
    throw UsageError("experiment.variance_tolerance: must be positive");
  e.predict_finite = to_bool(v, "experiment.finite_prediction");
  e.contour_relative_height = to_double(v, "experiment.contour_relative_height");
  if (!(e.contour_relative_height > 0.0 && e.contour_relative_height < 1.0))
    throw UsageError("experiment.contour_relative_height: must lie in (0, 1)");
  e.lambdas.clear();
  {
    std::stringstream ss(v.get("experiment.lambdas"));
    std::string item;
    while (std::getline(ss, item, ',')) {
      item = trim(item);
      if (item.empty()) continue;
      try {
        e.lambdas.push_back(std::stod(item));
      } catch (const std::exception&) {
        throw UsageError(fmt::format("experiment.lambdas: '{}' is not a number", item));
      }
    }
  }

  rc.output_dir = v.get("output.dir");
  rc.formats = with_key("output.format", [&] { return parse_formats(v.get("output.format")); });
  rc.snapshot = v.to_ini();
  return rc;
}

}  // namespace mesorm
