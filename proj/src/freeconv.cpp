#include "mesorm/freeconv.hpp"

#include "mesorm/errors.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <functional>
#include <mutex>
#include <shared_mutex>
#include <unordered_map>

namespace mesorm {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::string show(cplx z) { return fmt::format("{:.6g}{:+.6g}i", z.real(), z.imag()); }

// Root of a monotone function on [lo, hi] by bisection; f(lo) and f(hi) must differ in sign.
double bisect_root(const std::function<double(double)>& f, double lo, double hi) {
  double flo = f(lo);
  for (int it = 0; it < 400; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    const double fm = f(mid);
    if ((fm < 0.0) == (flo < 0.0)) {
      lo = mid;
      flo = fm;
    } else {
      hi = mid;
    }
    if (hi - lo <= 1e-15 * std::max(1.0, std::abs(mid))) break;
  }
  return 0.5 * (lo + hi);
}

// Additive map F(zeta) = zeta - sum w / (a - zeta) and its derivatives.
double f_add(const AtomicMeasure& mu, double zeta) {
  double s = 0.0;
  for (const auto& a : mu.atoms()) s += a.weight / (a.location - zeta);
  return zeta - s;
}
double s2_add(const AtomicMeasure& mu, double zeta) {
  double s = 0.0;
  for (const auto& a : mu.atoms()) {
    const double d = a.location - zeta;
    s += a.weight / (d * d);
  }
  return s;
}
double s3_add(const AtomicMeasure& mu, double zeta) {
  double s = 0.0;
  for (const auto& a : mu.atoms()) {
    const double d = a.location - zeta;
    s += a.weight / (d * d * d);
  }
  return s;
}

// Multiplicative map F(xi) = 1/xi + gamma sum w t / (1 - t xi) and H(xi).
double f_mul(const AtomicMeasure& mu, double gamma, double xi) {
  double s = 0.0;
  for (const auto& a : mu.atoms()) s += a.weight * a.location / (1.0 - a.location * xi);
  return 1.0 / xi + gamma * s;
}
double h_mul(const AtomicMeasure& mu, double xi) {
  double s = 0.0;
  for (const auto& a : mu.atoms()) {
    const double r = a.location * xi / (1.0 - a.location * xi);
    s += a.weight * r * r;
  }
  return s;
}
double f2_mul(const AtomicMeasure& mu, double gamma, double xi) {
  double s = 0.0;
  for (const auto& a : mu.atoms()) {
    const double d = 1.0 - a.location * xi;
    s += a.weight * a.location * a.location / (d * d * d);
  }
  return 2.0 * gamma * s / xi;
}

}  // namespace

void StieltjesSolverConfig::validate() const {
  if (!(tol > 0.0)) throw UsageError(fmt::format("solver tol must be positive, got {}", tol));
  if (!(damping > 0.0 && damping <= 1.0))
    throw UsageError(fmt::format("solver damping must lie in (0, 1], got {}", damping));
  if (max_iter <= 0) throw UsageError("solver max_iter must be positive");
  if (continuation_steps <= 0) throw UsageError("solver continuation_steps must be positive");
  if (!(eta_min > 0.0)) throw UsageError("solver eta_min must be positive");
}

EdgeSet edges_additive(const AtomicMeasure& mu) {
  const auto reg = check_regularity(mu, EnsembleKind::deformed_wigner);
  if (!reg.ok)
    throw ModelError(fmt::format(
        "deformation '{}' violates the regularity condition: infimum {:.6g} at x = {:.6g}, margin "
        "{:.3g}",
        mu.label(), reg.infimum, reg.argmin, reg.margin));
  const double amax = mu.max_location();
  const double amin = mu.min_location();
  auto fprime = [&](double zeta) { return 1.0 - s2_add(mu, zeta); };
  EdgeSet e;
  const double zp = bisect_root(fprime, amax + 1e-9, amax + 50.0);
  const double zm = bisect_root(fprime, amin - 50.0, amin - 1e-9);
  e.upper = {f_add(mu, zp), zp, 1.0 / std::sqrt(-s3_add(mu, zp))};
  e.lower = {f_add(mu, zm), zm, 1.0 / std::sqrt(s3_add(mu, zm))};
  return e;
}

EdgeSet edges_multiplicative(const AtomicMeasure& sigma, double gamma) {
  if (!(gamma > 0.0) || !std::isfinite(gamma))
    throw UsageError(fmt::format("gamma must be positive, got {}", gamma));
  const auto reg = check_regularity(sigma, EnsembleKind::sample_covariance, gamma);
  if (!reg.ok)
    throw ModelError(fmt::format(
        "population measure '{}' violates the regularity condition at gamma = {}: infimum "
        "{:.6g} at x = {:.6g}, margin {:.3g}",
        sigma.label(), gamma, reg.infimum, reg.argmin, reg.margin));
  const double target = 1.0 / gamma;
  auto g = [&](double xi) { return h_mul(sigma, xi) - target; };
  EdgeSet e;
  const double pole_hi = 1.0 / sigma.max_location();
  const double xp = bisect_root(g, 0.0, pole_hi * (1.0 - 1e-15));
  e.upper = {f_mul(sigma, gamma, xp), xp, std::sqrt(2.0 / f2_mul(sigma, gamma, xp))};
  if (std::abs(gamma - 1.0) < 1e-12) {
    e.hard_edge = true;
    e.lower = {0.0, kInf, 0.0};
    return e;
  }
  double xm = 0.0;
  if (gamma < 1.0) {
    const double pole_lo = 1.0 / sigma.min_location();
    double hi = 2.0 * pole_lo;
    while (g(hi) > 0.0) hi *= 2.0;
    xm = bisect_root(g, pole_lo * (1.0 + 1e-15), hi);
  } else {
    double lo = -pole_hi;
    while (g(lo) < 0.0) lo *= 2.0;
    xm = bisect_root(g, lo, 0.0);
  }
  e.lower = {f_mul(sigma, gamma, xm), xm, std::sqrt(2.0 / std::abs(f2_mul(sigma, gamma, xm)))};
  return e;
}

struct FreeConvolutionModel::Cache {
  struct KeyHash {
    std::size_t operator()(const std::pair<std::uint64_t, std::uint64_t>& k) const {
      return std::hash<std::uint64_t>()(k.first * 0x9E3779B97F4A7C15ull ^ k.second);
    }
  };
  mutable std::shared_mutex mutex;
  std::unordered_map<std::pair<std::uint64_t, std::uint64_t>, cplx, KeyHash> map;
  bool enabled = true;
  static constexpr std::size_t kCapacity = 1u << 20;
};

FreeConvolutionModel FreeConvolutionModel::additive(AtomicMeasure mu, StieltjesSolverConfig cfg) {
  cfg.validate();
  FreeConvolutionModel model;
  model.kind_ = ModelKind::additive;
  model.edges_ = edges_additive(mu);
  model.measure_ = std::move(mu);
  model.cfg_ = cfg;
  model.cache_ = std::make_shared<Cache>();
  return model;
}

FreeConvolutionModel FreeConvolutionModel::multiplicative(AtomicMeasure sigma, double gamma,
                                                          StieltjesSolverConfig cfg) {
  cfg.validate();
  if (sigma.min_location() <= 0.0)
    throw ModelError("population covariance must have strictly positive eigenvalues");
  FreeConvolutionModel model;
  model.kind_ = ModelKind::multiplicative;
  model.edges_ = edges_multiplicative(sigma, gamma);
  model.measure_ = std::move(sigma);
  model.gamma_ = gamma;
  model.cfg_ = cfg;
  model.cache_ = std::make_shared<Cache>();
  return model;
}

double FreeConvolutionModel::kappa(double energy) const {
  const double lo = lower_edge();
  const double hi = upper_edge();
  if (energy >= lo && energy <= hi) return std::min(energy - lo, hi - energy);
  return energy < lo ? lo - energy : energy - hi;
}

double FreeConvolutionModel::residual(cplx z, cplx v) const {
  if (kind_ == ModelKind::additive) {
    cplx s = 0.0;
    for (const auto& a : measure_.atoms()) s += a.weight / (a.location - z - v);
    return std::abs(v - s);
  }
  cplx s = 0.0;
  for (const auto& a : measure_.atoms()) s += a.weight / (1.0 + a.location * v);
  return std::abs(gamma_ - 1.0 - z * v - gamma_ * s);
}

bool FreeConvolutionModel::admissible(cplx z, cplx v) const {
  if (!std::isfinite(v.real()) || !std::isfinite(v.imag())) return false;
  if (!(v.imag() > 0.0)) return false;
  if (kind_ == ModelKind::multiplicative && (z * v).imag() < -1e-13 * std::abs(z * v)) return false;
  return true;
}

cplx FreeConvolutionModel::newton(cplx z, cplx v, bool& ok) const {
  ok = false;
  // Function and derivative of the scalar equation in the primary unknown.
  auto eval = [&](cplx x, cplx& fx, cplx& dfx) {
    cplx s1 = 0.0;
    cplx s2 = 0.0;
    if (kind_ == ModelKind::additive) {
      for (const auto& a : measure_.atoms()) {
        const cplx g = 1.0 / (a.location - z - x);
        s1 += a.weight * g;
        s2 += a.weight * g * g;
      }
      fx = x - s1;
      dfx = 1.0 - s2;
    } else {
      for (const auto& a : measure_.atoms()) {
        const cplx g = 1.0 / (1.0 + a.location * x);
        s1 += a.weight * g;
        s2 += a.weight * a.location * g * g;
      }
      fx = gamma_ - 1.0 - z * x - gamma_ * s1;
      dfx = -z + gamma_ * s2;
    }
  };
  cplx f;
  cplx df;
  eval(v, f, df);
  for (int it = 0; it < 100; ++it) {
    if (!std::isfinite(std::abs(f))) return v;
    if (std::abs(f) <= 1e-2 * cfg_.tol) break;
    if (std::abs(df) == 0.0) return v;
    const cplx step = f / df;
    double t = 1.0;
    cplx next = v - step;
    cplx fn;
    cplx dfn;
    eval(next, fn, dfn);
    int halvings = 0;
    while (!(std::abs(fn) < std::abs(f)) && halvings < 40) {
      t *= 0.5;
      next = v - t * step;
      eval(next, fn, dfn);
      ++halvings;
    }
    if (halvings == 40) break;
    const double moved = t * std::abs(step);
    v = next;
    f = fn;
    df = dfn;
    if (moved <= 1e-16 * (1.0 + std::abs(v))) break;
  }
  ok = std::abs(f) <= cfg_.tol && admissible(z, v);
  return v;
}

cplx FreeConvolutionModel::picard(cplx z, cplx v, bool& ok) const {
  auto phi = [&](cplx x) {
    cplx s = 0.0;
    if (kind_ == ModelKind::additive) {
      for (const auto& a : measure_.atoms()) s += a.weight / (a.location - z - x);
      return s;
    }
    for (const auto& a : measure_.atoms()) s += a.weight * a.location / (1.0 + a.location * x);
    return -1.0 / (z - gamma_ * s);
  };
  double d = cfg_.damping;
  double res = residual(z, v);
  for (int it = 0; it < cfg_.max_iter && res > cfg_.tol; ++it) {
    const cplx next = (1.0 - d) * v + d * phi(v);
    const double r = residual(z, next);
    if (r > res && d > 1e-6) {
      d *= 0.5;
      continue;
    }
    v = next;
    res = r;
  }
  ok = res <= cfg_.tol && admissible(z, v);
  return v;
}

cplx FreeConvolutionModel::continuation(cplx z) const {
  const double energy = z.real();
  const double target = z.imag();
  double scale = 0.0;
  cplx v;
  const double top_floor = 10.0 + 2.0 * std::abs(energy);
  double eta = 0.0;
  if (kind_ == ModelKind::additive) {
    scale = 2.0 * (1.0 + measure_.max_abs_location());
    eta = std::max(target, top_floor + scale);
    const cplx zt{energy, eta};
    v = 0.0;
    for (const auto& a : measure_.atoms()) v += a.weight / (a.location - zt);
  } else {
    scale = 2.0 * upper_edge();
    eta = std::max(target, top_floor + scale);
    v = -1.0 / cplx{energy, eta};
  }
  bool ok = false;
  v = newton({energy, eta}, v, ok);
  if (!ok) v = picard({energy, eta}, v, ok);
  if (!ok) throw NumericalError(fmt::format("solver failed at continuation start z = {}", show({energy, eta})));

  const double ratio = std::pow(10.0, -1.0 / cfg_.continuation_steps);
  std::function<bool(double, double, cplx&, int)> advance = [&](double from, double to, cplx& x,
                                                                int depth) {
    bool good = false;
    cplx trial = newton({energy, to}, x, good);
    if (good) {
      x = trial;
      return true;
    }
    if (depth < 12) {
      const double mid = std::sqrt(from * to);
      cplx y = x;
      if (advance(from, mid, y, depth + 1) && advance(mid, to, y, depth + 1)) {
        x = y;
        return true;
      }
      return false;
    }
    trial = picard({energy, to}, x, good);
    if (good) x = trial;
    return good;
  };
  while (eta > target) {
    const double next = std::max(eta * ratio, target);
    if (!advance(eta, next, v, 0))
      throw NumericalError(fmt::format("continuation failed to converge at z = {}", show({energy, next})));
    eta = next;
  }
  return v;
}

cplx FreeConvolutionModel::solve_real(double x) const {
  if (kind_ == ModelKind::additive) {
    const auto& up = edges_.upper;
    const auto& lo = edges_.lower;
    double zeta = 0.0;
    if (x > up.location) {
      zeta = bisect_root([&](double s) { return f_add(measure_, s) - x; }, up.root, std::max(x, up.root));
    } else if (x < lo.location) {
      zeta = bisect_root([&](double s) { return f_add(measure_, s) - x; }, std::min(x, lo.root), lo.root);
    } else {
      throw NumericalError(fmt::format("real z = {} lies on the support [{}, {}]", x, lo.location, up.location));
    }
    return {zeta - x, 0.0};
  }
  auto h = [&](double xi) { return f_mul(measure_, gamma_, xi) - x; };  // decreasing on each branch
  double a = 0.0;
  double b = 0.0;
  if (x > upper_edge()) {
    b = edges_.upper.root;
    a = b;
    while (h(a) <= 0.0) a *= 0.5;
  } else if (x < 0.0 && gamma_ <= 1.0) {
    a = -1.0;
    while (h(a) <= 0.0) a *= 2.0;
    b = -1.0;
    while (h(b) >= 0.0) b *= 0.5;
  } else if (gamma_ < 1.0 && x > 0.0 && x < lower_edge()) {
    a = edges_.lower.root;
    b = 2.0 * a;
    while (h(b) >= 0.0) b *= 2.0;
  } else if (gamma_ > 1.0 && x < lower_edge() && x != 0.0) {
    a = edges_.lower.root;
    b = 0.5 * a;
    while (h(b) >= 0.0) b *= 0.5;
  } else {
    throw NumericalError(fmt::format("real z = {} lies on the support or at the origin", x));
  }
  const double xi = bisect_root(h, a, b);
  return {-xi, 0.0};
}

cplx FreeConvolutionModel::solve(cplx z) const {
  if (z.imag() == 0.0) return solve_real(z.real());
  if (z.imag() < 0.0) return std::conj(solve(std::conj(z)));
  if (kind_ == ModelKind::multiplicative && std::abs(z) < 1e-10)
    throw NumericalError(fmt::format("z = {} too close to the origin", show(z)));
  const std::pair key{std::bit_cast<std::uint64_t>(z.real()), std::bit_cast<std::uint64_t>(z.imag())};
  if (cache_->enabled) {
    std::shared_lock lock(cache_->mutex);
    if (auto it = cache_->map.find(key); it != cache_->map.end()) return it->second;
  }
  const cplx v = continuation(z);
  if (cache_->enabled) {
    std::unique_lock lock(cache_->mutex);
    if (cache_->map.size() >= Cache::kCapacity) cache_->map.clear();
    cache_->map.emplace(key, v);
  }
  return v;
}

cplx FreeConvolutionModel::solve_from(cplx z, cplx guess) const {
  if (z.imag() == 0.0) return solve(z);
  if (z.imag() < 0.0) return std::conj(solve_from(std::conj(z), std::conj(guess)));
  bool ok = false;
  const cplx v = newton(z, guess, ok);
  return ok ? v : solve(z);
}

cplx FreeConvolutionModel::stieltjes(cplx z) const {
  const cplx v = solve(z);
  if (kind_ == ModelKind::additive) return v;
  return (v - (gamma_ - 1.0) / z) / gamma_;
}

double FreeConvolutionModel::density(double energy) const {
  constexpr double kEdgeTol = 1e-10;
  if (energy <= lower_edge() + kEdgeTol || energy >= upper_edge() - kEdgeTol) return 0.0;
  if (kind_ == ModelKind::multiplicative && energy <= 0.0) return 0.0;
  const cplx m = stieltjes({energy, cfg_.eta_min});
  return std::max(0.0, m.imag() / M_PI);
}

void FreeConvolutionModel::set_cache_enabled(bool enabled) const {
  std::unique_lock lock(cache_->mutex);
  cache_->enabled = enabled;
  if (!enabled) cache_->map.clear();
}

std::size_t FreeConvolutionModel::cache_size() const {
  std::shared_lock lock(cache_->mutex);
  return cache_->map.size();
}

cplx solve_m_additive(const AtomicMeasure& mu, cplx z, const StieltjesSolverConfig& cfg) {
  if (z.imag() == 0.0) throw UsageError("solve_m_additive needs Im z != 0");
  return FreeConvolutionModel::additive(mu, cfg).solve(z);
}

MultiplicativeSolution solve_m_multiplicative(const AtomicMeasure& sigma, double gamma, cplx z,
                                              const StieltjesSolverConfig& cfg) {
  if (z.imag() == 0.0) throw UsageError("solve_m_multiplicative needs Im z != 0");
  const auto model = FreeConvolutionModel::multiplicative(sigma, gamma, cfg);
  const cplx fm = model.solve(z);
  return {(fm - (gamma - 1.0) / z) / gamma, fm};
}

double density_at(const FreeConvolutionModel& model, double energy) { return model.density(energy); }

AdditiveDerivatives m_derivatives_additive(const AtomicMeasure& mu, cplx z, cplx m) {
  cplx s2 = 0.0;
  cplx s3 = 0.0;
  for (const auto& a : mu.atoms()) {
    const cplx g = 1.0 / (a.location - z - m);
    s2 += a.weight * g * g;
    s3 += a.weight * g * g * g;
  }
  const cplx denom = 1.0 - s2;
  if (std::abs(denom) < 1e-14)
    throw NumericalError(fmt::format("1 - S2 vanishes at z = {} (spectral edge)", show(z)));
  const cplx dm = s2 / denom;
  const cplx shift = 1.0 + dm;
  return {m, dm, 2.0 * s3 * shift * shift * shift};
}

AdditiveDerivatives m_derivatives_additive(const FreeConvolutionModel& model, cplx z) {
  if (model.kind() != ModelKind::additive) throw UsageError("model is not additive");
  return m_derivatives_additive(model.base_measure(), z, model.solve(z));
}

MultiplicativeDerivatives m_derivative_multiplicative(const AtomicMeasure& sigma, double gamma,
                                                      cplx z, cplx fm) {
  cplx s2 = 0.0;
  cplx s3 = 0.0;
  for (const auto& a : sigma.atoms()) {
    const cplx g = 1.0 / (1.0 + a.location * fm);
    s2 += a.weight * gamma * a.location * g * g;
    s3 += a.weight * gamma * a.location * a.location * g * g * g;
  }
  const cplx denom = z - s2;
  if (std::abs(denom) < 1e-14 * std::max(1.0, std::abs(z)))
    throw NumericalError(fmt::format("derivative denominator vanishes at z = {} (spectral edge)", show(z)));
  const cplx d1 = -fm / denom;
  const cplx d2 = 2.0 * d1 * d1 / fm + 2.0 * s3 * d1 * d1 * d1 / fm;
  return {fm, d1, d2};
}

MultiplicativeDerivatives m_derivative_multiplicative(const FreeConvolutionModel& model, cplx z) {
  if (model.kind() != ModelKind::multiplicative) throw UsageError("model is not multiplicative");
  return m_derivative_multiplicative(model.base_measure(), model.gamma(), z, model.solve(z));
}

}  // namespace mesorm
