#include "mesorm/harness.hpp"

#include "mesorm/errors.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <thread>

extern "C" void openblas_set_num_threads(int);

namespace mesorm {

namespace {

std::string hex16(std::uint64_t h) { return fmt::format("{:016x}", h); }

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw UsageError(fmt::format("cannot write {}", path.string()));
  out << text;
  if (!out) throw UsageError(fmt::format("write failed for {}", path.string()));
}

struct Frame {
  double x0, x1, y0, y1;
  static constexpr double width = 640, height = 420, left = 60, right = 20, top = 30, bottom = 50;
  double px(double x) const { return left + (x - x0) / (x1 - x0) * (width - left - right); }
  double py(double y) const { return height - bottom - (y - y0) / (y1 - y0) * (height - top - bottom); }
};

std::string svg_open(const std::string& title) {
  return fmt::format(
      "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
      "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{}\" height=\"{}\" viewBox=\"0 0 {} {}\">\n"
      "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
      "<text x=\"{}\" y=\"20\" font-family=\"sans-serif\" font-size=\"14\" "
      "text-anchor=\"middle\">{}</text>\n",
      Frame::width, Frame::height, Frame::width, Frame::height, Frame::width / 2, title);
}

std::string svg_axes(const Frame& f, const std::string& xlabel, const std::string& ylabel) {
  std::string s = fmt::format(
      "<g stroke=\"black\" stroke-width=\"1\">"
      "<line x1=\"{0:.2f}\" y1=\"{1:.2f}\" x2=\"{2:.2f}\" y2=\"{1:.2f}\"/>"
      "<line x1=\"{0:.2f}\" y1=\"{1:.2f}\" x2=\"{0:.2f}\" y2=\"{3:.2f}\"/></g>\n",
      Frame::left, Frame::height - Frame::bottom, Frame::width - Frame::right, Frame::top);
  for (int k = 0; k <= 4; ++k) {
    const double xv = f.x0 + k * (f.x1 - f.x0) / 4;
    const double yv = f.y0 + k * (f.y1 - f.y0) / 4;
    s += fmt::format(
        "<text x=\"{:.2f}\" y=\"{:.2f}\" font-family=\"sans-serif\" font-size=\"10\" "
        "text-anchor=\"middle\">{:.3g}</text>\n",
        f.px(xv), Frame::height - Frame::bottom + 14, xv);
    s += fmt::format(
        "<text x=\"{:.2f}\" y=\"{:.2f}\" font-family=\"sans-serif\" font-size=\"10\" "
        "text-anchor=\"end\">{:.3g}</text>\n",
        Frame::left - 4, f.py(yv) + 3, yv);
  }
  s += fmt::format(
      "<text x=\"{:.2f}\" y=\"{:.2f}\" font-family=\"sans-serif\" font-size=\"12\" "
      "text-anchor=\"middle\">{}</text>\n",
      (Frame::left + Frame::width - Frame::right) / 2, Frame::height - 10, xlabel);
  s += fmt::format(
      "<text x=\"14\" y=\"{:.2f}\" font-family=\"sans-serif\" font-size=\"12\" "
      "text-anchor=\"middle\" transform=\"rotate(-90 14 {:.2f})\">{}</text>\n",
      Frame::height / 2, Frame::height / 2, ylabel);
  return s;
}

std::string polyline(const std::vector<std::pair<double, double>>& pts, const char* color) {
  std::string s = fmt::format("<polyline fill=\"none\" stroke=\"{}\" stroke-width=\"1.5\" points=\"", color);
  for (const auto& [x, y] : pts) s += fmt::format("{:.2f},{:.2f} ", x, y);
  s += "\"/>\n";
  return s;
}

nlohmann::json verdict_json(const Verdict& v) {
  return {{"pass", v.pass}, {"ks_used", v.ks_used}, {"reasons", v.reasons}, {"notes", v.notes}};
}

Verdict verdict_from_json(const nlohmann::json& j) {
  Verdict v;
  j.at("pass").get_to(v.pass);
  j.at("ks_used").get_to(v.ks_used);
  j.at("reasons").get_to(v.reasons);
  j.at("notes").get_to(v.notes);
  return v;
}

}  // namespace

void ExperimentConfig::validate() const {
  ensemble.validate();
  if (trials < 30) throw UsageError(fmt::format("trials = {} is below the minimum of 30", trials));
  if (!(eta0 > 0.0) || !std::isfinite(eta0)) throw UsageError("eta0 must be positive");
  if (!(alpha > 0.0 && alpha < 1.0)) throw UsageError("alpha must lie in (0, 1)");
  if (!(variance_tolerance > 0.0)) throw UsageError("variance_tolerance must be positive");
  if (!(contour_relative_height > 0.0 && contour_relative_height < 1.0))
    throw UsageError("contour_relative_height must lie in (0, 1)");
  if (workers < 1) throw UsageError("workers must be at least 1");
  solver.validate();
  ScaledTestFunction{profile, e0, eta0}.validate();
}

nlohmann::json ExperimentConfig::to_json() const {
  auto ens = spec_fingerprint(ensemble);
  ens.erase("seed");
  return {{"ensemble", ens},
          {"trials", trials},
          {"test_function",
           {{"shape", profile.name()},
            {"radius", profile.radius()},
            {"amplitude", profile.amplitude()},
            {"eta0", eta0}}},
          {"location", to_string(location)},
          {"e0", e0},
          {"predict_finite", predict_finite},
          {"contour_relative_height", contour_relative_height},
          {"base_seed", base_seed},
          {"alpha", alpha},
          {"variance_tolerance", variance_tolerance},
          {"lambdas", lambdas}};
}

std::string ExperimentConfig::hash() const { return hex16(fnv1a(to_json().dump())); }

FreeConvolutionModel build_model(const EnsembleSpec& spec, const StieltjesSolverConfig& cfg) {
  if (spec.kind == EnsembleKind::sample_covariance)
    return FreeConvolutionModel::multiplicative(spec.deformation, spec.gamma(), cfg);
  return FreeConvolutionModel::additive(spec.deformation, cfg);
}

SpectrumCache::SpectrumCache(std::filesystem::path directory) : dir_(std::move(directory)) {
  if (!dir_.empty()) std::filesystem::create_directories(dir_);
}

std::shared_ptr<const SpectrumSample> SpectrumCache::get(const EnsembleSpec& spec) {
  const std::uint64_t key = spec_hash(spec);
  {
    std::lock_guard lock(mutex_);
    if (auto it = map_.find(key); it != map_.end()) {
      ++hits_;
      return it->second;
    }
  }
  std::shared_ptr<const SpectrumSample> sample;
  const auto file = dir_.empty() ? std::filesystem::path{} : dir_ / (hex16(key) + ".spec");
  if (!file.empty() && std::filesystem::exists(file)) {
    auto loaded = import_spectrum(file);
    if (loaded.spec_hash == key && loaded.size() == spec.dimension())
      sample = std::make_shared<const SpectrumSample>(std::move(loaded));
  }
  if (!sample) {
    sample = std::make_shared<const SpectrumSample>(sample_spectrum(spec));
    if (!file.empty()) export_spectrum_binary(*sample, file);
  }
  std::lock_guard lock(mutex_);
  ++misses_;
  return map_.emplace(key, sample).first->second;
}

std::size_t SpectrumCache::size() const {
  std::lock_guard lock(mutex_);
  return map_.size();
}

int default_workers() {
  if (const char* env = std::getenv("MESORM_WORKERS")) {
    try {
      const int w = std::stoi(env);
      if (w >= 1) return w;
    } catch (const std::exception&) {
    }
    throw UsageError(fmt::format("MESORM_WORKERS='{}' is not a positive integer", env));
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

void parallel_for(std::size_t n, int workers, const std::function<void(std::size_t)>& fn) {
  const auto count = static_cast<std::size_t>(std::max(1, workers));
  if (count == 1 || n < 2) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  openblas_set_num_threads(1);
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < std::min(count, n); ++w)
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) fn(i);
    });
  for (auto& t : pool) t.join();
}

void summarize(ExperimentReport& r, double mean_theory, double variance_theory) {
  r.mean_theory = mean_theory;
  r.variance_theory = variance_theory;
  r.moments = sample_moments(r.statistics);
  r.degenerate = !r.statistics.empty() &&
                 std::all_of(r.statistics.begin(), r.statistics.end(),
                             [&](double v) { return v == r.statistics.front(); });
  r.ks.reset();
  if (r.statistics.size() >= 100 && variance_theory > 0.0 && !r.degenerate) {
    const double sd = std::sqrt(variance_theory);
    r.ks = ks_test(r.statistics, [&](double x) { return normal_cdf(x, mean_theory, sd); });
  }
  r.characteristic.clear();
  const std::vector<double> lambdas =
      r.config.contains("lambdas") ? r.config.at("lambdas").get<std::vector<double>>()
                                   : std::vector<double>{0.25, 0.5, 1.0, 2.0};
  for (double l : lambdas)
    r.characteristic.push_back({l, empirical_characteristic(r.statistics, l, r.moments.mean),
                                std::exp(-0.5 * l * l * variance_theory)});
  r.verdict = normality_verdict(r, r.alpha, r.variance_tolerance);
}

ExperimentReport run_experiment(const ExperimentConfig& cfg, SpectrumCache* cache) {
  const auto start = std::chrono::steady_clock::now();
  cfg.validate();
  const auto model = build_model(cfg.ensemble, cfg.solver);
  const auto ctx = KernelContext::make(model, cfg.ensemble.profile);

  ExperimentReport r;
  r.config = cfg.to_json();
  r.config_hash = cfg.hash();
  r.trials = cfg.trials;
  r.alpha = cfg.alpha;
  r.variance_tolerance = cfg.variance_tolerance;
  r.workers_used = cfg.workers;

  switch (cfg.location) {
    case Location::bulk: r.e0 = cfg.e0; break;
    case Location::edge_right: r.e0 = model.upper_edge(); break;
    case Location::edge_left:
      if (model.hard_edge()) throw ModelError("left edge is a hard edge (gamma = 1)");
      r.e0 = model.lower_edge();
      break;
  }
  const ScaledTestFunction tf{cfg.profile, r.e0, cfg.eta0};
  const std::size_t n = cfg.ensemble.dimension();
  const double dn = static_cast<double>(n);
  const double kappa0 = model.kappa(r.e0);

  if (cfg.eta0 * std::sqrt(cfg.eta0 + kappa0) < 1.0 / dn)
    r.warnings.push_back(fmt::format(
        "eta0 sqrt(eta0 + kappa0) = {:.3g} is below 1/N = {:.3g}; outside the mesoscopic regime",
        cfg.eta0 * std::sqrt(cfg.eta0 + kappa0), 1.0 / dn));
  if (cfg.location != Location::bulk && (cfg.eta0 < std::pow(dn, -2.0 / 3.0) || cfg.eta0 >= 1.0))
    r.warnings.push_back(fmt::format("edge run with eta0 = {:.3g} outside [N^-2/3, 1) = [{:.3g}, 1)",
                                     cfg.eta0, std::pow(dn, -2.0 / 3.0)));
  if (cfg.location == Location::bulk && kappa0 < cfg.profile.radius() * cfg.eta0)
    r.warnings.push_back("bulk run whose test function support reaches a spectral edge");
  if (cfg.trials < 100) r.warnings.push_back("fewer than 100 trials: KS test skipped");

  if (!cfg.profile.is_zero()) {
    const auto spec = ContourSpec::for_scale(cfg.eta0, n, cfg.contour_relative_height);
    r.prediction = predict(ctx, tf, cfg.location, spec, cfg.predict_finite);
    r.centering = centering_integral(model, tf, n);
  } else {
    r.prediction.model = std::string(to_string(cfg.ensemble.kind));
    r.prediction.beta = ctx.beta;
    r.prediction.m2 = ctx.m2;
    r.prediction.w4 = ctx.w4;
    r.prediction.gamma = ctx.gamma();
    r.prediction.location = std::string(to_string(cfg.location));
    r.prediction.e0 = r.e0;
    r.prediction.eta0 = cfg.eta0;
    r.prediction.kappa0 = kappa0;
    r.prediction.finite_computed = cfg.predict_finite;
  }

  std::vector<double> values(cfg.trials, 0.0);
  std::vector<std::string> errors(cfg.trials);
  std::vector<char> ok(cfg.trials, 0);
  parallel_for(cfg.trials, cfg.workers, [&](std::size_t k) {
    const auto spec = cfg.ensemble.with_seed(cfg.base_seed + k);
    try {
      const auto sample = cache ? cache->get(spec)
                                : std::make_shared<const SpectrumSample>(sample_spectrum(spec));
      values[k] = linear_statistic(*sample, tf) - r.centering;
      ok[k] = 1;
    } catch (const std::exception& e) {
      errors[k] = e.what();
    }
  });
  for (std::size_t k = 0; k < cfg.trials; ++k) {
    if (ok[k]) {
      r.seeds.push_back(cfg.base_seed + k);
      r.statistics.push_back(values[k]);
    } else {
      r.failures.push_back({k, cfg.base_seed + k, errors[k]});
    }
  }
  if (r.failures.size() * 20 > cfg.trials)
    throw NumericalError(fmt::format("{} of {} trials failed; first: {}", r.failures.size(),
                                     cfg.trials, r.failures.front().message));
  if (!r.failures.empty())
    r.warnings.push_back(fmt::format("{} trials failed and were excluded", r.failures.size()));

  summarize(r, r.prediction.mean_limit, r.prediction.v_limit);
  r.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return r;
}

ExperimentReport edge_experiment(const ExperimentConfig& cfg, SpectrumCache* cache) {
  if (cfg.location == Location::bulk)
    throw UsageError("edge_experiment needs location edge_right or edge_left");
  return run_experiment(cfg, cache);
}

Verdict normality_verdict(const ExperimentReport& r, double alpha) {
  return normality_verdict(r, alpha, r.variance_tolerance);
}

Verdict normality_verdict(const ExperimentReport& r, double alpha, double variance_tolerance) {
  Verdict v;
  const auto& m = r.moments;
  const double t = static_cast<double>(m.count);
  if (m.count < 2) {
    v.reasons.push_back("fewer than two trials");
    return v;
  }
  if (r.degenerate) {
    v.reasons.push_back("degenerate: all trials identical");
    return v;
  }
  if (m.count >= 100 && r.variance_theory > 0.0) {
    v.ks_used = true;
    const double sd = std::sqrt(r.variance_theory);
    const auto ks = r.ks ? *r.ks : ks_test(r.statistics, [&](double x) {
      return normal_cdf(x, r.mean_theory, sd);
    });
    if (ks.p_value < alpha)
      v.reasons.push_back(fmt::format("KS p-value {:.4g} < alpha {:.4g}", ks.p_value, alpha));
  } else {
    v.notes.push_back("KS skipped: fewer than 100 trials; moment checks only");
  }
  const double skew_bound = 4.0 * std::sqrt(6.0 / t);
  if (std::abs(m.skewness) > skew_bound)
    v.reasons.push_back(fmt::format("|skewness| {:.4g} > {:.4g}", std::abs(m.skewness), skew_bound));
  const double kurt_bound = 4.0 * std::sqrt(24.0 / t);
  if (std::abs(m.excess_kurtosis) > kurt_bound)
    v.reasons.push_back(
        fmt::format("|excess kurtosis| {:.4g} > {:.4g}", std::abs(m.excess_kurtosis), kurt_bound));
  if (r.variance_theory > 0.0) {
    const double rel = std::abs(m.variance / r.variance_theory - 1.0);
    if (rel > variance_tolerance)
      v.reasons.push_back(fmt::format("variance {:.4g} differs from theory {:.4g} by {:.1f}% > {:.1f}%",
                                      m.variance, r.variance_theory, 100 * rel,
                                      100 * variance_tolerance));
  } else {
    v.notes.push_back("no positive theoretical variance; variance check skipped");
  }
  const double z = normal_quantile(1.0 - alpha / 2.0);
  if (m.se_mean > 0.0 && std::abs(m.mean - r.mean_theory) > z * m.se_mean)
    v.reasons.push_back(fmt::format("mean {:.4g} is {:.2f} SE from theory {:.4g} (limit {:.3f})",
                                    m.mean, std::abs(m.mean - r.mean_theory) / m.se_mean,
                                    r.mean_theory, z));
  v.pass = v.reasons.empty();
  return v;
}

void to_json(nlohmann::json& j, const ExperimentReport& r) {
  nlohmann::json failures = nlohmann::json::array();
  for (const auto& f : r.failures)
    failures.push_back({{"trial", f.trial}, {"seed", f.seed}, {"message", f.message}});
  nlohmann::json chf = nlohmann::json::array();
  for (const auto& c : r.characteristic)
    chf.push_back({{"lambda", c.lambda},
                   {"re", c.empirical.real()},
                   {"im", c.empirical.imag()},
                   {"model", c.model}});
  const auto& m = r.moments;
  j = nlohmann::json{
      {"config", r.config},
      {"config_hash", r.config_hash},
      {"trials", r.trials},
      {"seeds", r.seeds},
      {"statistics", r.statistics},
      {"failures", failures},
      {"E0", r.e0},
      {"centering", r.centering},
      {"moments",
       {{"count", m.count},
        {"mean", m.mean},
        {"variance", m.variance},
        {"skewness", m.skewness},
        {"excess_kurtosis", m.excess_kurtosis},
        {"se_mean", m.se_mean},
        {"se_variance", m.se_variance},
        {"se_skewness", m.se_skewness},
        {"se_kurtosis", m.se_kurtosis}}},
      {"prediction", r.prediction},
      {"mean_theory", r.mean_theory},
      {"variance_theory", r.variance_theory},
      {"ks", r.ks ? nlohmann::json{{"statistic", r.ks->statistic}, {"p_value", r.ks->p_value}}
                  : nlohmann::json(nullptr)},
      {"characteristic", chf},
      {"degenerate", r.degenerate},
      {"alpha", r.alpha},
      {"variance_tolerance", r.variance_tolerance},
      {"warnings", r.warnings},
      {"verdict", verdict_json(r.verdict)}};
}

void from_json(const nlohmann::json& j, ExperimentReport& r) {
  r = ExperimentReport{};
  r.config = j.at("config");
  j.at("config_hash").get_to(r.config_hash);
  j.at("trials").get_to(r.trials);
  j.at("seeds").get_to(r.seeds);
  j.at("statistics").get_to(r.statistics);
  for (const auto& f : j.at("failures"))
    r.failures.push_back({f.at("trial").get<std::size_t>(), f.at("seed").get<std::uint64_t>(),
                          f.at("message").get<std::string>()});
  j.at("E0").get_to(r.e0);
  j.at("centering").get_to(r.centering);
  const auto& m = j.at("moments");
  m.at("count").get_to(r.moments.count);
  m.at("mean").get_to(r.moments.mean);
  m.at("variance").get_to(r.moments.variance);
  m.at("skewness").get_to(r.moments.skewness);
  m.at("excess_kurtosis").get_to(r.moments.excess_kurtosis);
  m.at("se_mean").get_to(r.moments.se_mean);
  m.at("se_variance").get_to(r.moments.se_variance);
  m.at("se_skewness").get_to(r.moments.se_skewness);
  m.at("se_kurtosis").get_to(r.moments.se_kurtosis);
  j.at("prediction").get_to(r.prediction);
  j.at("mean_theory").get_to(r.mean_theory);
  j.at("variance_theory").get_to(r.variance_theory);
  if (!j.at("ks").is_null())
    r.ks = KsResult{j.at("ks").at("statistic").get<double>(), j.at("ks").at("p_value").get<double>()};
  for (const auto& c : j.at("characteristic"))
    r.characteristic.push_back({c.at("lambda").get<double>(),
                                {c.at("re").get<double>(), c.at("im").get<double>()},
                                c.at("model").get<double>()});
  j.at("degenerate").get_to(r.degenerate);
  j.at("alpha").get_to(r.alpha);
  j.at("variance_tolerance").get_to(r.variance_tolerance);
  j.at("warnings").get_to(r.warnings);
  r.verdict = verdict_from_json(j.at("verdict"));
}

void export_json(const ExperimentReport& r, const std::filesystem::path& path) {
  write_text(path, nlohmann::json(r).dump(2) + "\n");
}

ExperimentReport import_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw UsageError(fmt::format("cannot read {}", path.string()));
  try {
    return nlohmann::json::parse(in).get<ExperimentReport>();
  } catch (const nlohmann::json::exception& e) {
    throw UsageError(fmt::format("{}: malformed report: {}", path.string(), e.what()));
  }
}

void export_csv(const ExperimentReport& r, const std::filesystem::path& path) {
  std::string text = "trial,seed,status,statistic\n";
  std::size_t ok = 0;
  std::size_t bad = 0;
  for (std::size_t k = 0; k < r.trials; ++k) {
    if (bad < r.failures.size() && r.failures[bad].trial == k) {
      text += fmt::format("{},{},failed,\n", k, r.failures[bad].seed);
      ++bad;
    } else if (ok < r.statistics.size()) {
      text += fmt::format("{},{},ok,{}\n", k, r.seeds[ok], r.statistics[ok]);
      ++ok;
    }
  }
  write_text(path, text);
}

void export_histogram_svg(const ExperimentReport& r, const std::filesystem::path& path) {
  const auto& x = r.statistics;
  const double sd = std::sqrt(std::max(r.variance_theory, 0.0));
  double lo = x.empty() ? -1.0 : *std::min_element(x.begin(), x.end());
  double hi = x.empty() ? 1.0 : *std::max_element(x.begin(), x.end());
  if (sd > 0.0) {
    lo = std::min(lo, r.mean_theory - 4 * sd);
    hi = std::max(hi, r.mean_theory + 4 * sd);
  }
  if (!(hi > lo)) {
    lo -= 1.0;
    hi += 1.0;
  }
  const int bins = std::clamp(static_cast<int>(std::sqrt(static_cast<double>(x.size()))), 10, 60);
  const double w = (hi - lo) / bins;
  std::vector<double> dens(bins, 0.0);
  for (double v : x) dens[std::min(bins - 1, static_cast<int>((v - lo) / w))] += 1.0;
  for (auto& d : dens) d /= std::max<std::size_t>(1, x.size()) * w;
  double top = *std::max_element(dens.begin(), dens.end());
  if (sd > 0.0) top = std::max(top, normal_pdf(r.mean_theory, r.mean_theory, sd));
  if (!(top > 0.0)) top = 1.0;
  const Frame f{lo, hi, 0.0, 1.1 * top};

  std::string s = svg_open("Centered linear statistic");
  s += svg_axes(f, "statistic", "density");
  s += "<g fill=\"#9ecae1\" stroke=\"#3182bd\" stroke-width=\"0.5\">\n";
  for (int b = 0; b < bins; ++b)
    s += fmt::format("<rect x=\"{:.2f}\" y=\"{:.2f}\" width=\"{:.2f}\" height=\"{:.2f}\"/>\n",
                     f.px(lo + b * w), f.py(dens[b]), f.px(lo + (b + 1) * w) - f.px(lo + b * w),
                     f.py(0.0) - f.py(dens[b]));
  s += "</g>\n";
  if (sd > 0.0) {
    std::vector<std::pair<double, double>> pts;
    for (int k = 0; k <= 200; ++k) {
      const double xv = lo + (hi - lo) * k / 200.0;
      pts.emplace_back(f.px(xv), f.py(normal_pdf(xv, r.mean_theory, sd)));
    }
    s += polyline(pts, "#d62728");
  }
  s += "</svg>\n";
  write_text(path, s);
}

void export_qq_svg(const ExperimentReport& r, const std::filesystem::path& path) {
  std::vector<double> x = r.statistics;
  std::sort(x.begin(), x.end());
  const double sd = r.variance_theory > 0.0 ? std::sqrt(r.variance_theory)
                                            : std::max(std::sqrt(r.moments.variance), 1e-300);
  const double n = static_cast<double>(x.size());
  std::vector<std::pair<double, double>> qq;
  for (std::size_t i = 0; i < x.size(); ++i)
    qq.emplace_back(normal_quantile((i + 0.5) / n), (x[i] - r.mean_theory) / sd);
  double lim = 3.0;
  for (const auto& [a, b] : qq) lim = std::max({lim, std::abs(a), std::abs(b)});
  if (!std::isfinite(lim)) lim = 3.0;
  const Frame f{-lim, lim, -lim, lim};
  std::string s = svg_open("Normal Q-Q plot");
  s += svg_axes(f, "normal quantile", "standardized statistic");
  s += fmt::format("<line x1=\"{:.2f}\" y1=\"{:.2f}\" x2=\"{:.2f}\" y2=\"{:.2f}\" stroke=\"#d62728\"/>\n",
                   f.px(-lim), f.py(-lim), f.px(lim), f.py(lim));
  s += "<g fill=\"#3182bd\">\n";
  for (const auto& [a, b] : qq)
    if (std::isfinite(b)) s += fmt::format("<circle cx=\"{:.2f}\" cy=\"{:.2f}\" r=\"2\"/>\n", f.px(a), f.py(b));
  s += "</g>\n</svg>\n";
  write_text(path, s);
}

int parse_formats(std::string_view text) {
  int mask = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto end = std::min(text.find(',', pos), text.size());
    std::string_view item = text.substr(pos, end - pos);
    while (!item.empty() && item.front() == ' ') item.remove_prefix(1);
    while (!item.empty() && item.back() == ' ') item.remove_suffix(1);
    if (item == "json") mask |= static_cast<int>(ExportFormat::json);
    else if (item == "csv") mask |= static_cast<int>(ExportFormat::csv);
    else if (item == "svg") mask |= static_cast<int>(ExportFormat::svg);
    else if (item == "all") mask |= static_cast<int>(ExportFormat::all);
    else if (!item.empty()) throw UsageError(fmt::format("unknown format '{}' (json, csv, svg, all)", item));
    pos = end + 1;
  }
  if (mask == 0) throw UsageError("no export format selected");
  return mask;
}

void export_report(const ExperimentReport& r, const std::filesystem::path& dir, int formats) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw UsageError(fmt::format("cannot create {}: {}", dir.string(), ec.message()));
  if (formats & static_cast<int>(ExportFormat::json)) export_json(r, dir / "report.json");
  if (formats & static_cast<int>(ExportFormat::csv)) export_csv(r, dir / "trials.csv");
  if (formats & static_cast<int>(ExportFormat::svg)) {
    export_histogram_svg(r, dir / "hist.svg");
    export_qq_svg(r, dir / "qq.svg");
  }
}

std::filesystem::path write_run_directory(const ExperimentReport& r,
                                          const std::filesystem::path& root, int formats,
                                          const std::string& config_snapshot) {
  const std::time_t now = std::time(nullptr);
  std::tm utc{};
  gmtime_r(&now, &utc);
  char stamp[32];
  std::strftime(stamp, sizeof stamp, "%Y%m%dT%H%M%SZ", &utc);
  auto dir = root / fmt::format("{}-{}", stamp, r.config_hash.substr(0, 12));
  for (int k = 1; std::filesystem::exists(dir); ++k)
    dir = root / fmt::format("{}-{}-{}", stamp, r.config_hash.substr(0, 12), k);
  export_report(r, dir, formats);
  write_text(dir / "config.snapshot", config_snapshot);
  write_text(dir / "timing.json",
             nlohmann::json{{"wall_seconds", r.wall_seconds}, {"workers", r.workers_used}}.dump(2) +
                 "\n");
  return dir;
}

}  // namespace mesorm
