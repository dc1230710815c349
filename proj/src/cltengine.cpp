#include "mesorm/cltengine.hpp"

#include "mesorm/errors.hpp"

#include <fftw3.h>
#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <memory>
#include <mutex>

namespace mesorm {

namespace {

constexpr double kPi = M_PI;

double rel_gap(double a, double b) {
  const double scale = std::max(std::abs(a), std::abs(b));
  return scale == 0.0 ? 0.0 : std::abs(a - b) / scale;
}

// Solutions along an ascending grid at fixed height, warm-started node to node.
void solve_along(const FreeConvolutionModel& model, const std::vector<double>& xs, double height,
                 cplx start, std::vector<SpectralPoint>& out) {
  out.resize(xs.size());
  cplx guess = start;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const cplx z{xs[i], height};
    const cplx v = model.solve_from(z, guess);
    out[i] = spectral_point(model, z, v);
    guess = v;
  }
}

SpectralPoint conj_point(const SpectralPoint& p) {
  return {std::conj(p.z), std::conj(p.v), std::conj(p.dv), std::conj(p.d2v)};
}

double default_max_panel(const ScaledTestFunction& tf, const ContourSpec& spec) {
  if (spec.max_panel > 0.0) return spec.max_panel;
  return std::min(tf.g.radius() * tf.eta0 / 4.0, 1.0 / 64.0);
}

std::vector<Singularity> contour_points(const KernelContext& ctx, const ScaledTestFunction& tf,
                                        double floor) {
  std::vector<Singularity> pts;
  pts.push_back({ctx.model.lower_edge(), floor});
  pts.push_back({ctx.model.upper_edge(), floor});
  for (double b : tf.breakpoints()) pts.push_back({b, 0.0});
  pts.push_back({tf.e0, tf.eta0});
  return pts;
}

struct VarianceSums {
  cplx same;      // upper outer, upper inner
  cplx opposite;  // upper outer, lower inner
  std::size_t evaluations = 0;
};

VarianceSums variance_sums(const KernelContext& ctx, const ScaledTestFunction& tf,
                           const ContourSpec& spec, double rho, int refine) {
  const double h1 = spec.outer_height;
  const double h2 = spec.inner_height();
  const double a = tf.support_lo();
  const double b = tf.support_hi();
  GradingOptions opts;
  opts.rho = rho;
  opts.max_width = default_max_panel(tf, spec);
  opts.refine = refine;

  const auto outer_pts = contour_points(ctx, tf, h1);
  const QuadratureRule outer = graded_rule(a, b, outer_pts, opts);
  std::vector<SpectralPoint> p1;
  solve_along(ctx.model, outer.x, h1, ctx.model.solve({a, h1}), p1);

  auto inner_pts = contour_points(ctx, tf, h2);
  inner_pts.push_back({0.0, h1 - h2});
  const cplx inner_start = ctx.model.solve({a, h2});

  VarianceSums sums;
  QuadratureRule inner;
  std::vector<SpectralPoint> p2;
  for (std::size_t i = 0; i < outer.size(); ++i) {
    const double x1 = outer.x[i];
    const cplx f1 = hs_extension(tf, x1, h1);
    if (f1 == 0.0) continue;
    inner_pts.back().location = x1;
    graded_rule(a, b, inner_pts, opts, inner);
    solve_along(ctx.model, inner.x, h2, inner_start, p2);
    cplx same = 0.0;
    cplx opposite = 0.0;
    for (std::size_t j = 0; j < inner.size(); ++j) {
      const cplx f2 = hs_extension(tf, inner.x[j], h2);
      if (f2 == 0.0) continue;
      const cplx k_same = eval_K(ctx, p1[i], p2[j]);
      const cplx k_opp = eval_K(ctx, p1[i], conj_point(p2[j]));
      same += inner.w[j] * f2 * k_same;
      opposite += inner.w[j] * std::conj(f2) * k_opp;
      sums.evaluations += 2;
    }
    sums.same += outer.w[i] * f1 * same;
    sums.opposite += outer.w[i] * f1 * opposite;
  }
  return sums;
}

double variance_from(const VarianceSums& s) {
  // Upper lines run left to right, lower lines right to left; the lower-lower
  // and lower-upper terms are complex conjugates of the two computed ones.
  return -(2.0 / (4.0 * kPi * kPi)) * (s.same - s.opposite).real();
}

cplx bias_sum(const KernelContext& ctx, const ScaledTestFunction& tf, const ContourSpec& spec,
              double rho, int refine, std::size_t& evaluations) {
  const double h = spec.outer_height;
  GradingOptions opts;
  opts.rho = rho;
  opts.max_width = default_max_panel(tf, spec);
  opts.refine = refine;
  const QuadratureRule rule =
      graded_rule(tf.support_lo(), tf.support_hi(), contour_points(ctx, tf, h), opts);
  std::vector<SpectralPoint> pts;
  solve_along(ctx.model, rule.x, h, ctx.model.solve({tf.support_lo(), h}), pts);
  cplx sum = 0.0;
  for (std::size_t i = 0; i < rule.size(); ++i) {
    const cplx f = hs_extension(tf, rule.x[i], h);
    if (f == 0.0) continue;
    sum += rule.w[i] * f * eval_b(ctx, pts[i]);
    ++evaluations;
  }
  return sum;
}

}  // namespace

void ContourSpec::validate() const {
  if (!(outer_height > 0.0) || outer_height >= 1.0)
    throw UsageError(fmt::format("contour height must lie in (0, 1), got {}", outer_height));
  if (!(rho > 0.0 && rho <= 1.0)) throw UsageError(fmt::format("grading ratio must lie in (0, 1], got {}", rho));
  if (!(richardson_tol > 0.0)) throw UsageError("richardson tolerance must be positive");
}

ContourSpec ContourSpec::for_scale(double eta0, std::size_t n, double relative_height) {
  ContourSpec spec;
  spec.outer_height = relative_height * eta0;
  spec.tau = n > 1 ? std::log(1.0 / relative_height) / std::log(static_cast<double>(n)) : 0.0;
  return spec;
}

double hs_reconstruct(const ScaledTestFunction& tf, double lambda, const GradingOptions& quad) {
  tf.validate();
  if (tf.g.is_zero()) return 0.0;
  const double a = tf.support_lo();
  const double b = tf.support_hi();
  std::vector<Singularity> ypts{{0.0, 1e-9 * tf.eta0}, {-1.0, 0.0}, {1.0, 0.0}};
  GradingOptions yopts = quad;
  yopts.max_width = std::min(quad.max_width, 0.125);
  yopts.refine = std::max(quad.refine, 1);
  const QuadratureRule yr = graded_rule(-2.0, 2.0, ypts, yopts);

  std::vector<Singularity> xpts{{lambda, 0.0}};
  for (double bp : tf.breakpoints()) xpts.push_back({bp, 0.0});
  GradingOptions xopts = quad;
  xopts.max_width = std::min(quad.max_width, tf.g.radius() * tf.eta0 / 4.0);
  xopts.refine = std::max(quad.refine, 1);
  QuadratureRule xr;
  cplx total = 0.0;
  for (std::size_t k = 0; k < yr.size(); ++k) {
    const double y = yr.x[k];
    const double chi = smooth_cutoff(y);
    const double dchi = smooth_cutoff_derivative(y);
    xpts.front().floor = std::abs(y);
    graded_rule(a, b, xpts, xopts, xr);
    cplx row = 0.0;
    for (std::size_t i = 0; i < xr.size(); ++i) {
      const double x = xr.x[i];
      const auto v = tf.g.eval((x - tf.e0) / tf.eta0);
      const double f = v.g;
      const double df = v.dg / tf.eta0;
      const double d2f = v.d2g / (tf.eta0 * tf.eta0);
      const cplx dbar = cplx(0.0, 0.5) * (y * d2f * chi + cplx(f, y * df) * dchi);
      row += xr.w[i] * dbar / cplx(lambda - x, -y);
    }
    total += yr.w[k] * row;
  }
  return total.real() / kPi;
}

ContourResult finite_variance(const KernelContext& ctx, const ScaledTestFunction& tf,
                              const ContourSpec& spec) {
  ctx.validate();
  tf.validate();
  spec.validate();
  ContourResult res;
  if (tf.g.is_zero()) return res;
  double rho = spec.rho;
  for (int attempt = 0; attempt < 3; ++attempt) {
    const auto coarse = variance_sums(ctx, tf, spec, rho, 0);
    res.value = variance_from(coarse);
    res.evaluations += coarse.evaluations;
    if (!spec.richardson) return res;
    const auto fine = variance_sums(ctx, tf, spec, rho, 1);
    const double refined = variance_from(fine);
    res.evaluations += fine.evaluations;
    res.richardson_delta = rel_gap(refined, res.value);
    res.value = refined;
    if (res.richardson_delta <= spec.richardson_tol) return res;
    rho *= 0.5;
  }
  throw NumericalError(fmt::format(
      "variance contour quadrature did not converge: panel doubling changes V by {:.3g} (tol {:.1g})",
      res.richardson_delta, spec.richardson_tol));
}

double finite_variance_Vf(const KernelContext& ctx, const ScaledTestFunction& tf,
                          const ContourSpec& spec) {
  return finite_variance(ctx, tf, spec).value;
}

ContourResult finite_bias_detail(const KernelContext& ctx, const ScaledTestFunction& tf,
                                 const ContourSpec& spec) {
  ctx.validate();
  tf.validate();
  spec.validate();
  ContourResult res;
  if (tf.g.is_zero()) return res;
  double rho = spec.rho;
  const double scale = std::max(tf.g.sup_norm(), 1e-300);
  for (int attempt = 0; attempt < 3; ++attempt) {
    // Upper line left to right, lower line right to left: the two halves
    // combine into Im of the upper integral.
    res.value = bias_sum(ctx, tf, spec, rho, 0, res.evaluations).imag() / (2.0 * kPi);
    if (!spec.richardson) return res;
    const double refined = bias_sum(ctx, tf, spec, rho, 1, res.evaluations).imag() / (2.0 * kPi);
    // Bias may vanish identically; measure the change against ||g||.
    res.richardson_delta = std::abs(refined - res.value) / std::max(std::abs(refined), 1e-3 * scale);
    res.value = refined;
    if (res.richardson_delta <= spec.richardson_tol) return res;
    rho *= 0.5;
  }
  throw NumericalError(fmt::format(
      "bias contour quadrature did not converge: panel doubling changes the bias by {:.3g}",
      res.richardson_delta));
}

double finite_bias(const KernelContext& ctx, const ScaledTestFunction& tf, const ContourSpec& spec) {
  return finite_bias_detail(ctx, tf, spec).value;
}

std::string_view to_string(EdgeSide side) { return side == EdgeSide::left ? "left" : "right"; }

DualForm difference_quotient_energy(const std::function<double(double)>& h,
                                    const std::function<double(double)>& dh, double half_width,
                                    std::vector<double> breaks) {
  DualForm out;
  const double s = half_width;
  // Tensor Gauss-Legendre on [-S, S]^2 with cuts at the kinks of h''.
  std::vector<Singularity> cuts;
  for (double b : breaks)
    if (b > -s && b < s) cuts.push_back({b, 0.0});
  GradingOptions opts;
  opts.max_width = 2.0 * s / 48.0;
  const QuadratureRule rule = graded_rule(-s, s, cuts, opts);
  const std::size_t n = rule.size();
  std::vector<double> hv(n);
  std::vector<double> dhv(n);
  for (std::size_t i = 0; i < n; ++i) {
    hv[i] = h(rule.x[i]);
    dhv[i] = dh(rule.x[i]);
  }
  double inner = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double row = 0.0;
    for (std::size_t j = 0; j < i; ++j) {
      const double q = (hv[i] - hv[j]) / (rule.x[i] - rule.x[j]);
      row += rule.w[j] * q * q;
    }
    inner += rule.w[i] * (2.0 * row + rule.w[i] * dhv[i] * dhv[i]);
  }
  double tail = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double x = rule.x[i];
    tail += rule.w[i] * hv[i] * hv[i] * (1.0 / (s - x) + 1.0 / (s + x));
  }
  out.double_integral = inner + 2.0 * tail;

  // 2 pi int |xi| |h^|^2 with the unitary transform, by a zero-padded FFT.
  constexpr int kGrid = 1 << 18;
  const double box = 128.0 * s;
  const double dx = box / kGrid;
  auto* in = static_cast<double*>(fftw_malloc(sizeof(double) * kGrid));
  auto* spec = static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * (kGrid / 2 + 1)));
  static std::mutex plan_mutex;  // planner calls are not thread safe
  fftw_plan plan;
  {
    std::lock_guard lock(plan_mutex);
    plan = fftw_plan_dft_r2c_1d(kGrid, in, spec, FFTW_ESTIMATE);
  }
  for (int j = 0; j < kGrid; ++j) {
    const double x = -0.5 * box + j * dx;
    in[j] = std::abs(x) < s ? h(x) : 0.0;
  }
  fftw_execute(plan);
  const double dxi = 2.0 * kPi / box;
  const double norm = dx * dx / (2.0 * kPi);
  double trap = 0.0;
  for (int k = 1; k <= kGrid / 2; ++k) {
    const double mag2 = (spec[k][0] * spec[k][0] + spec[k][1] * spec[k][1]) * norm;
    trap += k * dxi * mag2;
  }
  trap *= dxi;
  const double h0 = (spec[0][0] * spec[0][0] + spec[0][1] * spec[0][1]) * norm;
  // Euler-Maclaurin: the one-sided trapezoid misses (dxi^2/12) * d/dxi (xi |h^|^2) at 0.
  const double half_line = trap + dxi * dxi / 12.0 * h0;
  out.fourier = 2.0 * kPi * 2.0 * half_line;
  {
    std::lock_guard lock(plan_mutex);
    fftw_destroy_plan(plan);
  }
  fftw_free(in);
  fftw_free(spec);
  return out;
}

namespace {

DualForm checked(DualForm d, const char* what) {
  const double scale = std::max(std::abs(d.fourier), std::abs(d.double_integral));
  if (scale > 1e-14 && std::abs(d.fourier - d.double_integral) > 1e-3 * scale)
    throw NumericalError(fmt::format("{}: Fourier form {:.10g} and double integral {:.10g} disagree",
                                     what, d.fourier, d.double_integral));
  return d;
}

void check_beta(int beta) {
  if (beta != 1 && beta != 2) throw UsageError(fmt::format("beta must be 1 or 2, got {}", beta));
}

}  // namespace

DualForm limit_bulk_variance_forms(const TestProfile& g, int beta) {
  check_beta(beta);
  if (g.is_zero()) return {};
  auto d = difference_quotient_energy([&](double x) { return g.eval(x).g; },
                                      [&](double x) { return g.eval(x).dg; }, g.radius(),
                                      g.breakpoints());
  const double c = 1.0 / (2.0 * beta * kPi * kPi);
  return {c * d.double_integral, c * d.fourier};
}

double limit_bulk_variance(const TestProfile& g, int beta) {
  return checked(limit_bulk_variance_forms(g, beta), "bulk variance").fourier;
}

DualForm limit_edge_variance_forms(const TestProfile& g, int beta, EdgeSide side) {
  check_beta(beta);
  if (g.is_zero()) return {};
  const double sign = side == EdgeSide::right ? -1.0 : 1.0;
  std::vector<double> breaks;
  for (double b : g.breakpoints()) {
    if (sign * b > 0.0) {
      const double r = std::sqrt(sign * b);
      breaks.push_back(-r);
      breaks.push_back(r);
    }
  }
  breaks.push_back(0.0);
  auto h = [&](double x) { return g.eval(sign * x * x).g; };
  auto dh = [&](double x) { return 2.0 * sign * x * g.eval(sign * x * x).dg; };
  auto d = difference_quotient_energy(h, dh, std::sqrt(g.radius()), breaks);
  const double c = 1.0 / (4.0 * beta * kPi * kPi);
  return {c * d.double_integral, c * d.fourier};
}

double limit_edge_variance(const TestProfile& g, int beta, EdgeSide side) {
  return checked(limit_edge_variance_forms(g, beta, side), "edge variance").fourier;
}

double limit_edge_mean(const TestProfile& g, int beta, bool sample_covariance) {
  check_beta(beta);
  const double g0 = g(0.0);
  if (sample_covariance) return g0 / 4.0;
  return (2.0 / beta - 1.0) * g0 / 4.0;
}

std::string_view to_string(Location loc) {
  switch (loc) {
    case Location::bulk: return "bulk";
    case Location::edge_right: return "edge_right";
    case Location::edge_left: return "edge_left";
  }
  return "?";
}

Location parse_location(std::string_view text) {
  if (text == "bulk") return Location::bulk;
  if (text == "edge_right" || text == "edge") return Location::edge_right;
  if (text == "edge_left") return Location::edge_left;
  throw UsageError(fmt::format("unknown location '{}' (bulk, edge_right, edge_left)", text));
}

PredictionRecord predict(const KernelContext& ctx, const ScaledTestFunction& tf, Location loc,
                         const ContourSpec& spec, bool with_finite) {
  ctx.validate();
  tf.validate();
  const bool sample = ctx.model.kind() == ModelKind::multiplicative;
  if (sample && loc == Location::edge_left && ctx.model.hard_edge())
    throw ModelError("no mesoscopic prediction at the hard edge (gamma = 1)");
  PredictionRecord p;
  p.model = sample ? "sample_covariance" : "deformed_wigner";
  p.beta = ctx.beta;
  p.m2 = ctx.m2;
  p.w4 = ctx.w4;
  p.gamma = ctx.gamma();
  p.location = std::string(to_string(loc));
  p.e0 = tf.e0;
  p.eta0 = tf.eta0;
  p.kappa0 = ctx.model.kappa(tf.e0);
  p.outer_height = spec.outer_height;
  p.tau = spec.tau;
  if (loc == Location::bulk) {
    p.v_limit = limit_bulk_variance(tf.g, ctx.beta);
    p.mean_limit = 0.0;
  } else {
    const auto side = loc == Location::edge_right ? EdgeSide::right : EdgeSide::left;
    p.v_limit = limit_edge_variance(tf.g, ctx.beta, side);
    p.mean_limit = limit_edge_mean(tf.g, ctx.beta, sample);
  }
  p.bias_limit = p.mean_limit;
  p.finite_computed = with_finite;
  if (with_finite) {
    p.v_finite = finite_variance_Vf(ctx, tf, spec);
    p.bias_finite = finite_bias(ctx, tf, spec);
  }
  return p;
}

void to_json(nlohmann::json& j, const PredictionRecord& p) {
  j = nlohmann::json{{"model", p.model},
                     {"ctx", {{"beta", p.beta}, {"m2", p.m2}, {"W4", p.w4}, {"gamma", p.gamma}}},
                     {"location", p.location},
                     {"E0", p.e0},
                     {"eta0", p.eta0},
                     {"kappa0", p.kappa0},
                     {"outer_height", p.outer_height},
                     {"tau", p.tau},
                     {"V_limit", p.v_limit},
                     {"bias_limit", p.bias_limit},
                     {"mean_limit", p.mean_limit}};
  if (p.finite_computed) {
    j["V_finite"] = p.v_finite;
    j["bias_finite"] = p.bias_finite;
  } else {
    j["V_finite"] = nullptr;
    j["bias_finite"] = nullptr;
  }
}

void from_json(const nlohmann::json& j, PredictionRecord& p) {
  j.at("model").get_to(p.model);
  const auto& c = j.at("ctx");
  c.at("beta").get_to(p.beta);
  c.at("m2").get_to(p.m2);
  c.at("W4").get_to(p.w4);
  c.at("gamma").get_to(p.gamma);
  j.at("location").get_to(p.location);
  j.at("E0").get_to(p.e0);
  j.at("eta0").get_to(p.eta0);
  j.at("kappa0").get_to(p.kappa0);
  j.at("outer_height").get_to(p.outer_height);
  j.at("tau").get_to(p.tau);
  j.at("V_limit").get_to(p.v_limit);
  j.at("bias_limit").get_to(p.bias_limit);
  j.at("mean_limit").get_to(p.mean_limit);
  p.finite_computed = !j.at("V_finite").is_null();
  if (p.finite_computed) {
    j.at("V_finite").get_to(p.v_finite);
    j.at("bias_finite").get_to(p.bias_finite);
  }
}

}  // namespace mesorm
