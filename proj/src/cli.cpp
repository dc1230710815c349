#include "mesorm/cli.hpp"

#include "mesorm/cltengine.hpp"
#include "mesorm/config.hpp"
#include "mesorm/errors.hpp"
#include "mesorm/harness.hpp"
#include "mesorm/linstat.hpp"
#include "mesorm/stats.hpp"

#include <CLI11.hpp>
#include <fmt/format.h>

#include <chrono>
#include <fstream>
#include <iostream>
#include <optional>
#include <random>

namespace mesorm {

namespace {

struct CommonOptions {
  std::string config;
  std::vector<std::string> sets;
  std::optional<long long> seed;
  std::optional<int> workers;
  std::string out;
  std::string format;
  bool verbose = false;
};

void add_common(CLI::App* sub, CommonOptions& o) {
  sub->add_option("-c,--config", o.config, "INI config file");
  sub->add_option("--set", o.sets, "Override, section.key=value (repeatable)");
  sub->add_option("--seed", o.seed, "Base seed (experiment.seed)");
  sub->add_option("--workers", o.workers, "Worker threads (experiment.workers)");
  sub->add_option("--out", o.out, "Output directory (output.dir)");
  sub->add_option("--format", o.format, "Export subset: json,csv,svg or all (output.format)");
  sub->add_flag("-v,--verbose", o.verbose, "Verbose output");
}

ConfigValues load_values(const CommonOptions& o) {
  ConfigValues v = o.config.empty() ? ConfigValues{} : ConfigValues::load(o.config);
  for (const auto& s : o.sets) v.apply_override(s);
  if (o.seed) v.set("experiment.seed", std::to_string(*o.seed));
  if (o.workers) v.set("experiment.workers", std::to_string(*o.workers));
  if (!o.out.empty()) v.set("output.dir", o.out);
  if (!o.format.empty()) v.set("output.format", o.format);
  return v;
}

void ensure_dir(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw UsageError(fmt::format("cannot create {}: {}", dir.string(), ec.message()));
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out || !(out << text)) throw UsageError(fmt::format("cannot write {}", path.string()));
}

nlohmann::json edges_json(const FreeConvolutionModel& model) {
  const auto& e = model.edges();
  return {{"lower", {{"location", e.lower.location}, {"root", e.lower.root}, {"c", e.lower.c}}},
          {"upper", {{"location", e.upper.location}, {"root", e.upper.root}, {"c", e.upper.c}}},
          {"hard_edge", e.hard_edge}};
}

void check_model_regular(const EnsembleSpec& spec) {
  const auto reg = check_regularity(spec.deformation, spec.kind,
                                    spec.kind == EnsembleKind::sample_covariance
                                        ? std::optional<double>(spec.gamma())
                                        : std::nullopt);
  if (!reg.ok && !reg.hard_edge)
    throw ModelError(fmt::format("regularity condition violated: infimum {:.6g} at {:.6g}, margin {:.3g}",
                                 reg.infimum, reg.argmin, reg.margin));
}

std::string density_svg(const std::vector<std::pair<double, double>>& curve, double lower,
                        double upper) {
  double top = 0.0;
  for (const auto& p : curve) top = std::max(top, p.second);
  if (!(top > 0.0)) top = 1.0;
  top *= 1.1;
  const double x0 = curve.front().first, x1 = curve.back().first;
  const double w = 640, h = 420, l = 60, r = 20, t = 30, b = 50;
  auto px = [&](double x) { return l + (x - x0) / (x1 - x0) * (w - l - r); };
  auto py = [&](double y) { return h - b - y / top * (h - t - b); };
  std::string s = fmt::format(
      "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
      "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{0}\" height=\"{1}\" viewBox=\"0 0 {0} {1}\">\n"
      "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
      "<text x=\"{2}\" y=\"20\" font-family=\"sans-serif\" font-size=\"14\" text-anchor=\"middle\">"
      "Limiting spectral density</text>\n",
      w, h, w / 2);
  s += fmt::format(
      "<g stroke=\"black\"><line x1=\"{0}\" y1=\"{1}\" x2=\"{2}\" y2=\"{1}\"/>"
      "<line x1=\"{0}\" y1=\"{1}\" x2=\"{0}\" y2=\"{3}\"/></g>\n",
      l, h - b, w - r, t);
  for (int k = 0; k <= 4; ++k) {
    const double xv = x0 + k * (x1 - x0) / 4, yv = k * top / 4;
    s += fmt::format(
        "<text x=\"{:.2f}\" y=\"{:.2f}\" font-family=\"sans-serif\" font-size=\"10\" "
        "text-anchor=\"middle\">{:.3g}</text>\n",
        px(xv), h - b + 14, xv);
    s += fmt::format(
        "<text x=\"{:.2f}\" y=\"{:.2f}\" font-family=\"sans-serif\" font-size=\"10\" "
        "text-anchor=\"end\">{:.3g}</text>\n",
        l - 4, py(yv) + 3, yv);
  }
  for (double e : {lower, upper})
    s += fmt::format(
        "<line x1=\"{0:.2f}\" y1=\"{1:.2f}\" x2=\"{0:.2f}\" y2=\"{2:.2f}\" stroke=\"#888\" "
        "stroke-dasharray=\"4 3\"/>\n",
        px(e), py(0.0), t);
  s += "<polyline fill=\"none\" stroke=\"#3182bd\" stroke-width=\"1.5\" points=\"";
  for (const auto& [x, y] : curve) s += fmt::format("{:.2f},{:.2f} ", px(x), py(y));
  s += "\"/>\n</svg>\n";
  return s;
}

int cmd_density(const CommonOptions& o, std::ostream& out) {
  const auto rc = resolve(load_values(o));
  const auto& spec = rc.experiment.ensemble;
  check_model_regular(spec);
  const auto model = build_model(spec, rc.experiment.solver);
  const double lo = model.lower_edge() - 0.5;
  const double hi = model.upper_edge() + 0.5;
  constexpr int kPoints = 2000;
  std::vector<std::pair<double, double>> curve;
  std::string csv = "x,density\n";
  for (int k = 0; k < kPoints; ++k) {
    const double x = lo + (hi - lo) * k / (kPoints - 1);
    double rho = 0.0;
    try {
      rho = model.density(x);
    } catch (const NumericalError& e) {
      throw NumericalError(fmt::format("density solve failed at z = {} + {}i: {}", x,
                                       model.config().eta_min, e.what()));
    }
    curve.emplace_back(x, rho);
    csv += fmt::format("{},{}\n", x, rho);
  }
  ensure_dir(rc.output_dir);
  write_file(rc.output_dir / "density.csv", csv);
  write_file(rc.output_dir / "density.svg", density_svg(curve, model.lower_edge(), model.upper_edge()));
  double peak_x = 0.0, peak = -1.0;
  for (const auto& [x, y] : curve)
    if (y > peak) peak = y, peak_x = x;
  out << fmt::format("edges [{:.10g}, {:.10g}], peak density {:.6g} at {:.6g}\n",
                     model.lower_edge(), model.upper_edge(), peak, peak_x);
  out << fmt::format("wrote {} and {}\n", (rc.output_dir / "density.csv").string(),
                     (rc.output_dir / "density.svg").string());
  return kExitOk;
}

int cmd_edges(const CommonOptions& o, std::ostream& out) {
  const auto rc = resolve(load_values(o));
  check_model_regular(rc.experiment.ensemble);
  const auto model = build_model(rc.experiment.ensemble, rc.experiment.solver);
  const auto j = edges_json(model);
  out << j.dump(2) << "\n";
  if (!o.out.empty()) {
    ensure_dir(rc.output_dir);
    write_file(rc.output_dir / "edges.json", j.dump(2) + "\n");
  }
  return kExitOk;
}

int cmd_predict(const CommonOptions& o, std::ostream& out) {
  const auto rc = resolve(load_values(o));
  const auto& e = rc.experiment;
  check_model_regular(e.ensemble);
  const auto model = build_model(e.ensemble, e.solver);
  const auto ctx = KernelContext::make(model, e.ensemble.profile);
  double e0 = e.e0;
  if (e.location == Location::edge_right) e0 = model.upper_edge();
  if (e.location == Location::edge_left) e0 = model.lower_edge();
  const ScaledTestFunction tf{e.profile, e0, e.eta0};
  const auto spec = ContourSpec::for_scale(e.eta0, e.ensemble.dimension(), e.contour_relative_height);
  const auto p = predict(ctx, tf, e.location, spec, e.predict_finite);
  const nlohmann::json j = p;
  out << j.dump(2) << "\n";
  if (!o.out.empty()) {
    ensure_dir(rc.output_dir);
    write_file(rc.output_dir / "predict.json", j.dump(2) + "\n");
  }
  return kExitOk;
}

void print_summary(const ExperimentReport& r, std::ostream& out) {
  const auto& m = r.moments;
  out << fmt::format("trials {} ({} failed), E0 {:.8g}, centering {:.8g}\n", r.trials,
                     r.failures.size(), r.e0, r.centering);
  out << fmt::format("mean {:.6g} +- {:.3g} (theory {:.6g})\n", m.mean, m.se_mean, r.mean_theory);
  out << fmt::format("variance {:.6g} +- {:.3g} (limit {:.6g}", m.variance, m.se_variance,
                     r.variance_theory);
  if (r.prediction.finite_computed) out << fmt::format(", finite {:.6g}", r.prediction.v_finite);
  out << ")\n";
  out << fmt::format("skewness {:.4g}, excess kurtosis {:.4g}\n", m.skewness, m.excess_kurtosis);
  if (r.ks) out << fmt::format("KS D {:.4g}, p {:.4g}\n", r.ks->statistic, r.ks->p_value);
  for (const auto& w : r.warnings) out << "warning: " << w << "\n";
  out << "verdict: " << (r.verdict.pass ? "pass" : "fail") << "\n";
  for (const auto& s : r.verdict.reasons) out << "  - " << s << "\n";
  for (const auto& s : r.verdict.notes) out << "  * " << s << "\n";
}

int cmd_simulate(const CommonOptions& o, std::ostream& out) {
  const auto rc = resolve(load_values(o));
  check_model_regular(rc.experiment.ensemble);
  const auto report = rc.experiment.location == Location::bulk ? run_experiment(rc.experiment)
                                                               : edge_experiment(rc.experiment);
  const auto dir = write_run_directory(report, rc.output_dir, rc.formats, rc.snapshot);
  print_summary(report, out);
  if (o.verbose)
    out << fmt::format("wall time {:.2f} s on {} workers\n", report.wall_seconds, report.workers_used);
  out << "run directory: " << dir.string() << "\n";
  return kExitOk;
}

int cmd_report(const CommonOptions& o, const std::string& target, std::ostream& out) {
  std::filesystem::path path = target;
  if (std::filesystem::is_directory(path)) path /= "report.json";
  const auto report = import_json(path);
  print_summary(report, out);
  if (!o.out.empty() || !o.format.empty()) {
    const auto dir = o.out.empty() ? path.parent_path() : std::filesystem::path(o.out);
    export_report(report, dir, parse_formats(o.format.empty() ? "all" : o.format));
    out << "exported to " << dir.string() << "\n";
  }
  return kExitOk;
}

int cmd_selftest(const std::vector<std::string>& corrupt, bool verbose, std::ostream& out) {
  const auto results = run_selftest(corrupt);
  bool all = true;
  out << fmt::format("{:<28} {:<6} {:>12} {:>12}{}\n", "check", "status", "error", "tolerance",
                     verbose ? fmt::format(" {:>10}", "seconds") : "");
  for (const auto& r : results) {
    all = all && r.pass;
    out << fmt::format("{:<28} {:<6} {:>12.3e} {:>12.3e}{}\n", r.name, r.pass ? "PASS" : "FAIL",
                       r.error, r.tolerance, verbose ? fmt::format(" {:>10.3f}", r.seconds) : "");
    if (!r.message.empty()) out << "    " << r.message << "\n";
  }
  std::size_t failed = 0;
  for (const auto& r : results) failed += !r.pass;
  out << fmt::format("{} of {} checks passed\n", results.size() - failed, results.size());
  if (!all) {
    out << "failed:";
    for (const auto& r : results)
      if (!r.pass) out << " " << r.name;
    out << "\n";
  }
  return all ? kExitOk : kExitNumerical;
}

cplx semicircle_m(cplx z) { return 0.5 * (-z + std::sqrt(z - 2.0) * std::sqrt(z + 2.0)); }

}  // namespace

int exit_code_for_current_exception() {
  try {
    throw;
  } catch (const UsageError&) {
    return kExitUsage;
  } catch (const ModelError&) {
    return kExitModel;
  } catch (const NumericalError&) {
    return kExitNumerical;
  } catch (const CLI::Error&) {
    return kExitUsage;
  } catch (...) {
    return kExitNumerical;
  }
}

std::vector<SelfCheck> selftest_checks() {
  std::vector<SelfCheck> checks;
  checks.push_back({"semicircle_stieltjes", 1e-10, [] {
                      const auto model = FreeConvolutionModel::additive(point_mass(0.0));
                      std::mt19937_64 rng(7);
                      std::uniform_real_distribution<double> ux(-3.0, 3.0), uy(0.01, 2.0);
                      double err = 0.0;
                      for (int k = 0; k < 20; ++k) {
                        const cplx z{ux(rng), uy(rng)};
                        err = std::max(err, std::abs(model.solve(z) - semicircle_m(z)));
                      }
                      return err;
                    }});
  checks.push_back({"semicircle_edges", 1e-10, [] {
                      const auto model = FreeConvolutionModel::additive(point_mass(0.0));
                      return std::max(std::abs(model.lower_edge() + 2.0),
                                      std::abs(model.upper_edge() - 2.0));
                    }});
  checks.push_back({"marchenko_pastur_edges", 1e-9, [] {
                      const auto model = FreeConvolutionModel::multiplicative(point_mass(1.0), 0.25);
                      return std::max(std::abs(model.lower_edge() - 0.25),
                                      std::abs(model.upper_edge() - 2.25));
                    }});
  checks.push_back({"density_mass", 1e-4, [] {
                      const auto model = FreeConvolutionModel::additive(point_mass(0.0));
                      const double mass = density_integral(
                          model, [](double) { return 1.0; }, -2.0, 2.0, {}, 1e-8);
                      return std::abs(mass - 1.0);
                    }});
  checks.push_back({"subordination_identity", 1e-10, [] {
                      const std::pair<double, double> atoms[] = {{-0.5, 0.5}, {0.5, 0.5}};
                      const auto model = FreeConvolutionModel::additive(build_atomic_measure(atoms));
                      const auto ctx = KernelContext::make(model, MomentProfile{});
                      std::mt19937_64 rng(11);
                      std::uniform_real_distribution<double> ux(-2.5, 2.5), uy(0.05, 1.0);
                      double err = 0.0;
                      for (int k = 0; k < 20; ++k) {
                        const auto p1 = spectral_point(model, {ux(rng), uy(rng)});
                        const auto p2 = spectral_point(model, {ux(rng), -uy(rng)});
                        const cplx direct = eval_I(ctx, p1, p2);
                        err = std::max(err, std::abs(direct - eval_I_identity(p1, p2)) /
                                                std::max(1.0, std::abs(direct)));
                      }
                      return err;
                    }});
  checks.push_back({"variance_dual_forms", 1e-3, [] {
                      double err = 0.0;
                      for (int beta : {1, 2}) {
                        const auto g = TestProfile::preset(TestShape::bump);
                        const auto d = limit_bulk_variance_forms(g, beta);
                        err = std::max(err, std::abs(d.double_integral / d.fourier - 1.0));
                        const auto e = limit_edge_variance_forms(g, beta, EdgeSide::right);
                        err = std::max(err, std::abs(e.double_integral / e.fourier - 1.0));
                      }
                      return err;
                    }});
  checks.push_back({"almost_analytic_extension", 1e-4, [] {
                      const ScaledTestFunction tf{TestProfile::preset(TestShape::bump), 0.0, 0.1};
                      return std::abs(hs_reconstruct(tf, 0.0) - 1.0);
                    }});
  checks.push_back({"finite_variance_bulk", 0.1, [] {
                      const std::pair<double, double> atoms[] = {{-0.5, 0.5}, {0.5, 0.5}};
                      const auto model = FreeConvolutionModel::additive(build_atomic_measure(atoms));
                      const auto ctx = KernelContext::make(model, MomentProfile{});
                      const ScaledTestFunction tf{TestProfile::preset(TestShape::bump), 0.0, 0.1};
                      const auto spec = ContourSpec::for_scale(0.1);
                      const double vf = finite_variance_Vf(ctx, tf, spec);
                      return std::abs(vf / limit_bulk_variance(tf.g, 1) - 1.0);
                    }});
  checks.push_back({"eigenvalue_trace", 1e-8, [] {
                      EnsembleSpec spec;
                      spec.n = 200;
                      spec.deformation = point_mass(0.0);
                      spec.seed = 3;
                      const auto h = std::get<RealMatrix>(sample_matrix(spec));
                      const auto s = eigenvalues(h);
                      double sum = 0.0;
                      for (double x : s.eigenvalues) sum += x;
                      return std::abs(sum - h.trace()) / 200.0;
                    }});
  checks.push_back({"centering_semicircle", 1e-5, [] {
                      const auto model = FreeConvolutionModel::additive(point_mass(0.0));
                      const ScaledTestFunction tf{TestProfile::preset(TestShape::bump), 0.0, 0.5};
                      const double c = centering_integral(model, tf, 1);
                      const double ref = density_integral(
                          model, [&](double x) { return tf.f(x); }, -0.5, 0.5, {}, 1e-10);
                      // closed-form semicircle density as the oracle
                      double oracle = 0.0;
                      const auto rule = uniform_rule(-0.5, 0.5, 64);
                      for (std::size_t k = 0; k < rule.size(); ++k)
                        oracle += rule.w[k] * tf.f(rule.x[k]) *
                                  std::sqrt(4.0 - rule.x[k] * rule.x[k]) / (2.0 * M_PI);
                      return std::max(std::abs(c - oracle), std::abs(ref - oracle)) / oracle;
                    }});
  checks.push_back({"variance_two_pass", 1e-12, [] {
                      std::mt19937_64 rng(5);
                      std::normal_distribution<double> normal(3.0, 2.0);
                      std::vector<double> x(1000);
                      for (auto& v : x) v = normal(rng);
                      const double a = sample_moments(x).variance;
                      return std::abs(a - naive_variance(x)) / a;
                    }});
  checks.push_back({"kolmogorov_quantile", 1e-3, [] {
                      return std::abs(kolmogorov_survival(1.3581) - 0.05);
                    }});
  checks.push_back({"report_roundtrip", 0.0, [] {
                      ExperimentConfig cfg;
                      cfg.ensemble.n = 60;
                      cfg.ensemble.deformation = point_mass(0.0);
                      cfg.trials = 30;
                      cfg.eta0 = 0.3;
                      cfg.predict_finite = false;
                      const auto r = run_experiment(cfg);
                      const auto back = nlohmann::json(r).dump();
                      const auto again =
                          nlohmann::json(nlohmann::json::parse(back).get<ExperimentReport>()).dump();
                      return back == again ? 0.0 : 1.0;
                    }});
  checks.push_back({"worker_determinism", 0.0, [] {
                      ExperimentConfig cfg;
                      cfg.ensemble.n = 60;
                      cfg.ensemble.deformation = point_mass(0.0);
                      cfg.trials = 30;
                      cfg.eta0 = 0.3;
                      cfg.predict_finite = false;
                      cfg.workers = 1;
                      const auto a = nlohmann::json(run_experiment(cfg)).dump();
                      cfg.workers = 3;
                      const auto b = nlohmann::json(run_experiment(cfg)).dump();
                      return a == b ? 0.0 : 1.0;
                    }});
  return checks;
}

std::vector<SelfCheckResult> run_selftest(const std::vector<std::string>& corrupt) {
  auto checks = selftest_checks();
  for (const auto& name : corrupt) {
    bool found = false;
    for (auto& c : checks)
      if (c.name == name) {
        c.tolerance = -1.0;
        found = true;
      }
    if (!found) throw UsageError(fmt::format("unknown selftest check '{}'", name));
  }
  std::vector<SelfCheckResult> results;
  for (const auto& c : checks) {
    SelfCheckResult r;
    r.name = c.name;
    r.tolerance = c.tolerance;
    const auto start = std::chrono::steady_clock::now();
    try {
      r.error = c.measure();
      r.pass = r.error <= c.tolerance;
    } catch (const std::exception& e) {
      r.pass = false;
      r.error = std::numeric_limits<double>::infinity();
      r.message = e.what();
    }
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    results.push_back(std::move(r));
  }
  return results;
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"mesorm: mesoscopic linear eigenvalue statistics of deformed random matrices"};
  app.require_subcommand(1);
  CommonOptions o;

  auto* density = app.add_subcommand("density", "Limiting spectral density curve (CSV + SVG)");
  add_common(density, o);
  auto* edges = app.add_subcommand("edges", "Support edges of the limiting law");
  add_common(edges, o);
  auto* pred = app.add_subcommand("predict", "Deterministic variance and mean predictions");
  add_common(pred, o);
  auto* sim = app.add_subcommand("simulate", "Monte Carlo experiment into a run directory");
  add_common(sim, o);
  auto* self = app.add_subcommand("selftest", "Desk-scale invariant checks");
  add_common(self, o);
  std::vector<std::string> corrupt;
  self->add_option("--corrupt", corrupt, "Replace the tolerance of a named check (negative test)");
  auto* rep = app.add_subcommand("report", "Summarize or re-export an existing run");
  add_common(rep, o);
  std::string target;
  rep->add_option("run", target, "Run directory or report.json")->required();

  std::vector<std::string> argv(args.rbegin(), args.rend());
  try {
    app.parse(argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (density->parsed()) return cmd_density(o, out);
    if (edges->parsed()) return cmd_edges(o, out);
    if (pred->parsed()) return cmd_predict(o, out);
    if (sim->parsed()) return cmd_simulate(o, out);
    if (self->parsed()) return cmd_selftest(corrupt, o.verbose, out);
    if (rep->parsed()) return cmd_report(o, target, out);
  } catch (const std::exception& e) {
    const int code = exit_code_for_current_exception();
    const char* kind = code == kExitUsage ? "usage error" : code == kExitModel ? "model error" : "numerical error";
    err << "mesorm: " << kind << ": " << e.what() << "\n";
    return code;
  }
  return kExitUsage;
}

int run_cli(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run_cli(args, std::cout, std::cerr);
}

}  // namespace mesorm
