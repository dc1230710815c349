#include "mesorm/spectra.hpp"

#include "mesorm/errors.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

namespace mesorm {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

}  // namespace

AtomicMeasure build_atomic_measure(std::span<const std::pair<double, double>> points,
                                   std::string label) {
  if (points.empty()) throw UsageError("atomic measure needs at least one atom");
  std::vector<Atom> atoms;
  atoms.reserve(points.size());
  double total = 0.0;
  for (const auto& [x, w] : points) {
    if (!std::isfinite(x)) throw UsageError(fmt::format("non-finite atom location {}", x));
    if (!(w > 0.0) || !std::isfinite(w))
      throw UsageError(fmt::format("atom at {} has nonpositive weight {}", x, w));
    atoms.push_back({x, w});
    total += w;
  }
  std::sort(atoms.begin(), atoms.end(),
            [](const Atom& a, const Atom& b) { return a.location < b.location; });
  std::vector<Atom> merged;
  for (const auto& a : atoms) {
    if (!merged.empty() && merged.back().location == a.location) {
      merged.back().weight += a.weight;
    } else {
      merged.push_back(a);
    }
  }
  for (auto& a : merged) a.weight /= total;

  AtomicMeasure mu;
  mu.atoms_ = std::move(merged);
  mu.label_ = std::move(label);
  return mu;
}

AtomicMeasure point_mass(double location) {
  const std::pair<double, double> p{location, 1.0};
  return build_atomic_measure(std::span(&p, 1), fmt::format("delta({})", location));
}

double AtomicMeasure::max_abs_location() const {
  return std::max(std::abs(min_location()), std::abs(max_location()));
}

AtomicMeasure AtomicMeasure::scaled(double factor) const {
  std::vector<std::pair<double, double>> pts;
  for (const auto& a : atoms_) pts.emplace_back(a.location * factor, a.weight);
  return build_atomic_measure(pts, label_);
}

bool AtomicMeasure::realizable(std::size_t n) const {
  for (const auto& a : atoms_) {
    const double count = a.weight * static_cast<double>(n);
    if (std::abs(count - std::round(count)) > 1e-9 * std::max(1.0, count)) return false;
    if (std::round(count) < 1.0) return false;
  }
  return true;
}

std::vector<double> AtomicMeasure::realize(std::size_t n) const {
  if (!realizable(n))
    throw ModelError(fmt::format(
        "measure '{}' is not realizable as an exact diagonal of length {}", label_, n));
  std::vector<double> diag;
  diag.reserve(n);
  for (const auto& a : atoms_) {
    const auto count = static_cast<std::size_t>(std::llround(a.weight * static_cast<double>(n)));
    diag.insert(diag.end(), count, a.location);
  }
  if (diag.size() != n)
    throw ModelError(fmt::format("realized diagonal has length {} instead of {}", diag.size(), n));
  return diag;
}

AtomicMeasure AtomicMeasure::parse(std::string_view text, std::string label) {
  std::vector<std::pair<double, double>> pts;
  std::istringstream in{std::string(text)};
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream ls(line);
    double x = 0.0;
    double w = 0.0;
    if (!(ls >> x)) continue;
    if (!(ls >> w)) throw UsageError(fmt::format("line {}: expected 'location weight'", lineno));
    std::string rest;
    if (ls >> rest) throw UsageError(fmt::format("line {}: trailing token '{}'", lineno, rest));
    pts.emplace_back(x, w);
  }
  return build_atomic_measure(pts, std::move(label));
}

AtomicMeasure AtomicMeasure::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw UsageError(fmt::format("cannot open measure file '{}'", path.string()));
  std::stringstream buf;
  buf << in.rdbuf();
  return parse(buf.str(), path.filename().string());
}

std::string AtomicMeasure::to_text() const {
  std::string out = "# location weight\n";
  for (const auto& a : atoms_) out += fmt::format("{:.17g} {:.17g}\n", a.location, a.weight);
  return out;
}

std::string_view to_string(EnsembleKind kind) {
  return kind == EnsembleKind::deformed_wigner ? "deformed_wigner" : "sample_covariance";
}

std::string_view to_string(EntryLaw law) {
  switch (law) {
    case EntryLaw::gaussian: return "gaussian";
    case EntryLaw::rademacher: return "rademacher";
    case EntryLaw::uniform: return "uniform";
    case EntryLaw::three_point: return "three_point";
  }
  return "?";
}

EnsembleKind parse_ensemble_kind(std::string_view text) {
  if (text == "deformed_wigner") return EnsembleKind::deformed_wigner;
  if (text == "sample_covariance") return EnsembleKind::sample_covariance;
  throw UsageError(fmt::format("unknown ensemble kind '{}'", text));
}

EntryLaw parse_entry_law(std::string_view text) {
  if (text == "gaussian") return EntryLaw::gaussian;
  if (text == "rademacher") return EntryLaw::rademacher;
  if (text == "uniform") return EntryLaw::uniform;
  if (text == "three_point" || text == "mixture") return EntryLaw::three_point;
  throw UsageError(fmt::format("unknown entry law '{}'", text));
}

namespace {

// Fourth moment of a standardized real entry.
double real_kurtosis(EntryLaw law) {
  switch (law) {
    case EntryLaw::gaussian: return 3.0;
    case EntryLaw::rademacher: return 1.0;
    case EntryLaw::uniform: return 1.8;
    case EntryLaw::three_point: return 1.0;  // tunable
  }
  return 3.0;
}

// Complex entries have independent real and imaginary parts of variance 1/2,
// so E|h|^4 = (kurtosis + 1) / 2.
double w4_from_kurtosis(int beta, double kurt) { return beta == 1 ? kurt : 0.5 * (kurt + 1.0); }
double kurtosis_from_w4(int beta, double w4) { return beta == 1 ? w4 : 2.0 * w4 - 1.0; }

}  // namespace

double natural_w4(int beta, EntryLaw law) { return w4_from_kurtosis(beta, real_kurtosis(law)); }

std::pair<double, double> three_point_range(int beta) {
  return {w4_from_kurtosis(beta, 1.0), w4_from_kurtosis(beta, 9.0)};
}

MomentProfile make_moment_profile(int beta, EntryLaw law, double m2, std::optional<double> w4) {
  if (beta != 1 && beta != 2) throw UsageError(fmt::format("beta must be 1 or 2, got {}", beta));
  if (!(m2 >= 0.0) || !std::isfinite(m2)) throw UsageError(fmt::format("m2 must be >= 0, got {}", m2));
  MomentProfile p{beta, m2, 0.0, law};
  if (law == EntryLaw::three_point) {
    if (!w4) throw UsageError("three_point entry law needs an explicit W4");
    const auto [lo, hi] = three_point_range(beta);
    if (*w4 < lo - 1e-12 || *w4 > hi + 1e-12)
      throw ModelError(fmt::format(
          "unrealizable entry law: three_point reaches W4 in [{}, {}] for beta={}, requested {}",
          lo, hi, beta, *w4));
    p.w4 = *w4;
  } else {
    p.w4 = natural_w4(beta, law);
    if (w4 && std::abs(*w4 - p.w4) > 1e-12)
      throw ModelError(fmt::format("unrealizable entry law: {} has W4 = {} for beta={}, requested {}",
                                   to_string(law), p.w4, beta, *w4));
  }
  return p;
}

double EnsembleSpec::gamma() const {
  return kind == EnsembleKind::sample_covariance ? static_cast<double>(m) / static_cast<double>(n)
                                                 : 0.0;
}

std::size_t EnsembleSpec::dimension() const {
  return kind == EnsembleKind::sample_covariance ? m : n;
}

EnsembleSpec EnsembleSpec::with_seed(std::uint64_t s) const {
  EnsembleSpec copy = *this;
  copy.seed = s;
  return copy;
}

void EnsembleSpec::validate() const {
  if (n == 0) throw UsageError("ensemble size N must be positive");
  if (deformation.size() == 0) throw UsageError("ensemble has no deformation measure");
  // Re-validates the profile (throws on inconsistency).
  const auto checked =
      make_moment_profile(profile.beta, profile.law, profile.m2,
                          profile.law == EntryLaw::three_point ? std::optional(profile.w4)
                                                               : std::optional<double>());
  if (std::abs(checked.w4 - profile.w4) > 1e-12)
    throw ModelError(fmt::format("profile W4 = {} inconsistent with entry law {} (W4 = {})",
                                 profile.w4, to_string(profile.law), checked.w4));
  if (kind == EnsembleKind::sample_covariance) {
    if (m == 0) throw UsageError("sample covariance needs M > 0");
    if (profile.beta != 1) throw UsageError("sample covariance ensembles are real (beta = 1)");
    if (deformation.min_location() <= 0.0)
      throw ModelError("population covariance must have strictly positive eigenvalues");
  }
  if (!deformation.realizable(dimension()))
    throw ModelError(fmt::format("deformation '{}' is not realizable at size {}",
                                 deformation.label(), dimension()));
}

RegularityReport check_regularity(const AtomicMeasure& mu, EnsembleKind kind,
                                  std::optional<double> gamma) {
  RegularityReport rep;
  const auto& atoms = mu.atoms();
  if (kind == EnsembleKind::deformed_wigner) {
    rep.infimum = kInf;
    rep.argmin = atoms.front().location;
    auto value = [&](double x) {
      double s = 0.0;
      for (const auto& a : atoms) s += a.weight / ((a.location - x) * (a.location - x));
      return s;
    };
    auto slope = [&](double x) {
      double s = 0.0;
      for (const auto& a : atoms) {
        const double d = a.location - x;
        s += 2.0 * a.weight / (d * d * d);
      }
      return s;
    };
    // Strictly convex between consecutive atoms: bisect the increasing slope.
    for (std::size_t k = 0; k + 1 < atoms.size(); ++k) {
      double lo = atoms[k].location;
      double hi = atoms[k + 1].location;
      const double width = hi - lo;
      lo += 1e-12 * width;
      hi -= 1e-12 * width;
      for (int it = 0; it < 200 && hi - lo > 1e-15 * std::max(1.0, std::abs(hi)); ++it) {
        const double mid = 0.5 * (lo + hi);
        (slope(mid) < 0.0 ? lo : hi) = mid;
      }
      const double x = 0.5 * (lo + hi);
      const double v = value(x);
      if (v < rep.infimum) {
        rep.infimum = v;
        rep.argmin = x;
      }
    }
    rep.margin = rep.infimum - 1.0;
  } else {
    if (!gamma || !(*gamma > 0.0)) throw UsageError("sample covariance regularity needs gamma > 0");
    if (mu.min_location() <= 0.0) throw ModelError("population covariance must be positive");
    rep.hard_edge = std::abs(*gamma - 1.0) < 1e-12;
    auto value = [&](double x) {
      double s = 0.0;
      for (const auto& a : atoms) {
        const double r = a.location * x / (1.0 - a.location * x);
        s += a.weight * r * r;
      }
      return s;
    };
    // Poles at 1/sigma_i; scan each gap on a grid, then golden-section refine.
    std::vector<double> poles;
    for (auto it = atoms.rbegin(); it != atoms.rend(); ++it) poles.push_back(1.0 / it->location);
    rep.infimum = kInf;
    rep.argmin = poles.front();
    for (std::size_t k = 0; k + 1 < poles.size(); ++k) {
      const double lo = poles[k];
      const double hi = poles[k + 1];
      constexpr int kGrid = 4000;
      int best = 1;
      double best_v = kInf;
      for (int i = 1; i < kGrid; ++i) {
        const double v = value(lo + (hi - lo) * i / kGrid);
        if (v < best_v) {
          best_v = v;
          best = i;
        }
      }
      double a = lo + (hi - lo) * (best - 1) / kGrid;
      double b = lo + (hi - lo) * (best + 1) / kGrid;
      const double phi = 0.5 * (std::sqrt(5.0) - 1.0);
      for (int it = 0; it < 100; ++it) {
        const double c = b - phi * (b - a);
        const double d = a + phi * (b - a);
        (value(c) < value(d) ? b : a) = (value(c) < value(d) ? d : c);
      }
      const double x = 0.5 * (a + b);
      const double v = std::min(value(x), best_v);
      if (v < rep.infimum) {
        rep.infimum = v;
        rep.argmin = x;
      }
    }
    rep.margin = rep.infimum - 1.0 / *gamma;
  }
  rep.ok = rep.margin > 1e-9;
  return rep;
}

namespace {

// Standardized (mean 0, variance 1) draw from the entry law.
class EntrySampler {
 public:
  EntrySampler(const MomentProfile& p) : law_(p.law) {
    if (law_ == EntryLaw::three_point) {
      const double kurt = kurtosis_from_w4(p.beta, p.w4);
      prob_ = 1.0 / kurt;
      level_ = std::sqrt(kurt);
    }
  }

  double operator()(std::mt19937_64& rng) {
    switch (law_) {
      case EntryLaw::gaussian: return normal_(rng);
      case EntryLaw::rademacher: return (rng() >> 63) ? 1.0 : -1.0;
      case EntryLaw::uniform: return uniform_(rng);
      case EntryLaw::three_point: {
        const double u = unit_(rng);
        if (u >= prob_) return 0.0;
        return u < 0.5 * prob_ ? level_ : -level_;
      }
    }
    return 0.0;
  }

 private:
  EntryLaw law_;
  double prob_ = 1.0;
  double level_ = 1.0;
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::uniform_real_distribution<double> uniform_{-std::sqrt(3.0), std::sqrt(3.0)};
  std::uniform_real_distribution<double> unit_{0.0, 1.0};
};

}  // namespace

SelfAdjointMatrix sample_matrix(const EnsembleSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  EntrySampler draw(spec.profile);
  const auto n = static_cast<Eigen::Index>(spec.n);

  if (spec.kind == EnsembleKind::sample_covariance) {
    const auto m = static_cast<Eigen::Index>(spec.m);
    const auto sigma = spec.deformation.realize(spec.m);
    const double scale = 1.0 / std::sqrt(static_cast<double>(spec.n));
    RealMatrix y(m, n);
    for (Eigen::Index i = 0; i < m; ++i) {
      const double root = std::sqrt(sigma[static_cast<std::size_t>(i)]) * scale;
      for (Eigen::Index j = 0; j < n; ++j) y(i, j) = root * draw(rng);
    }
    RealMatrix h(m, m);
    h.setZero();
    h.selfadjointView<Eigen::Lower>().rankUpdate(y);
    h.triangularView<Eigen::StrictlyUpper>() = h.transpose();
    return h;
  }

  const auto diag = spec.deformation.realize(spec.n);
  const double off = 1.0 / std::sqrt(static_cast<double>(spec.n));
  const double on = std::sqrt(spec.profile.m2) * off;
  if (spec.profile.beta == 1) {
    RealMatrix h(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
      h(i, i) = on * draw(rng) + diag[static_cast<std::size_t>(i)];
      for (Eigen::Index j = i + 1; j < n; ++j) {
        const double v = off * draw(rng);
        h(i, j) = v;
        h(j, i) = v;
      }
    }
    return h;
  }
  const double half = off / std::sqrt(2.0);
  ComplexMatrix h(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    h(i, i) = {on * draw(rng) + diag[static_cast<std::size_t>(i)], 0.0};
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const double re = half * draw(rng);
      const double im = half * draw(rng);
      h(i, j) = {re, im};
      h(j, i) = {re, -im};
    }
  }
  return h;
}

}  // namespace mesorm
