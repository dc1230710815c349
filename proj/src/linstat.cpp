#include "mesorm/linstat.hpp"

#include "mesorm/errors.hpp"
#include "mesorm/quadrature.hpp"

#include <lapacke.h>

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <random>
#include <sstream>

namespace mesorm {

namespace {

constexpr char kMagic[8] = {'M', 'E', 'S', 'O', 'S', 'P', 'E', 'C'};

void check_invariants(const std::vector<double>& w, double trace, double frobenius2,
                      double scale) {
  const double n = static_cast<double>(w.size());
  double sum = 0.0;
  double sum2 = 0.0;
  for (double x : w) {
    sum += x;
    sum2 += x * x;
  }
  const double s = std::max(1.0, scale);
  if (std::abs(sum - trace) > 1e-8 * n * s)
    throw NumericalError(fmt::format("eigenvalue sum {} differs from trace {}", sum, trace));
  if (std::abs(sum2 - frobenius2) > 1e-8 * n * s * s)
    throw NumericalError(
        fmt::format("eigenvalue square sum {} differs from Frobenius norm {}", sum2, frobenius2));
}

// Integrates phi over [0, 1] with a graded Gauss-Legendre rule, checking one
// panel doubling against `tol`.
double integrate_unit(const std::function<double(double)>& phi, std::span<const double> cuts,
                      double tol, const char* what) {
  std::vector<Singularity> pts;
  for (double c : cuts)
    if (c > 0.0 && c < 1.0) pts.push_back({c, 0.0});
  GradingOptions opts;
  opts.max_width = 0.125;
  double previous = 0.0;
  for (int attempt = 0; attempt < 6; ++attempt) {
    double sums[2] = {0.0, 0.0};
    for (int refine = 0; refine < 2; ++refine) {
      opts.refine = refine;
      const auto rule = graded_rule(0.0, 1.0, pts, opts);
      for (std::size_t k = 0; k < rule.size(); ++k) sums[refine] += rule.w[k] * phi(rule.x[k]);
    }
    previous = sums[1];
    if (std::abs(sums[1] - sums[0]) <= tol) return sums[1];
    opts.max_width *= 0.25;
  }
  throw NumericalError(fmt::format("{} quadrature did not converge (last value {})", what, previous));
}

}  // namespace

nlohmann::json spec_fingerprint(const EnsembleSpec& spec) {
  nlohmann::json atoms = nlohmann::json::array();
  for (const auto& a : spec.deformation.atoms()) atoms.push_back({a.location, a.weight});
  return {{"kind", to_string(spec.kind)},
          {"n", spec.n},
          {"m", spec.m},
          {"beta", spec.profile.beta},
          {"m2", spec.profile.m2},
          {"w4", spec.profile.w4},
          {"law", to_string(spec.profile.law)},
          {"deformation", atoms},
          {"seed", spec.seed}};
}

std::uint64_t fnv1a(std::string_view bytes) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

std::uint64_t spec_hash(const EnsembleSpec& spec) { return fnv1a(spec_fingerprint(spec).dump()); }

SpectrumSample eigenvalues(const RealMatrix& matrix, std::uint64_t hash) {
  const auto n = matrix.rows();
  if (n != matrix.cols()) throw UsageError("eigenvalues: matrix is not square");
  RealMatrix a = matrix;
  SpectrumSample s;
  s.spec_hash = hash;
  s.eigenvalues.resize(static_cast<std::size_t>(n));
  if (n == 0) return s;
  const lapack_int info = LAPACKE_dsyevd(LAPACK_COL_MAJOR, 'N', 'L', static_cast<lapack_int>(n),
                                         a.data(), static_cast<lapack_int>(n), s.eigenvalues.data());
  if (info != 0) throw NumericalError(fmt::format("dsyevd failed with info = {}", info));
  check_invariants(s.eigenvalues, matrix.trace(), matrix.squaredNorm(),
                   matrix.cwiseAbs().maxCoeff() * std::sqrt(static_cast<double>(n)));
  return s;
}

SpectrumSample eigenvalues(const ComplexMatrix& matrix, std::uint64_t hash) {
  const auto n = matrix.rows();
  if (n != matrix.cols()) throw UsageError("eigenvalues: matrix is not square");
  ComplexMatrix a = matrix;
  SpectrumSample s;
  s.spec_hash = hash;
  s.eigenvalues.resize(static_cast<std::size_t>(n));
  if (n == 0) return s;
  const lapack_int info = LAPACKE_zheevd(LAPACK_COL_MAJOR, 'N', 'L', static_cast<lapack_int>(n),
                                         reinterpret_cast<lapack_complex_double*>(a.data()),
                                         static_cast<lapack_int>(n), s.eigenvalues.data());
  if (info != 0) throw NumericalError(fmt::format("zheevd failed with info = {}", info));
  check_invariants(s.eigenvalues, matrix.trace().real(), matrix.squaredNorm(),
                   matrix.cwiseAbs().maxCoeff() * std::sqrt(static_cast<double>(n)));
  return s;
}

SpectrumSample eigenvalues(const SelfAdjointMatrix& matrix, std::uint64_t hash) {
  return std::visit([hash](const auto& m) { return eigenvalues(m, hash); }, matrix);
}

SpectrumSample sample_spectrum(const EnsembleSpec& spec) {
  auto s = eigenvalues(sample_matrix(spec), spec_hash(spec));
  if (spec.kind == EnsembleKind::sample_covariance && !s.eigenvalues.empty() &&
      s.eigenvalues.front() < -1e-10)
    throw NumericalError(
        fmt::format("negative eigenvalue {} for a covariance matrix", s.eigenvalues.front()));
  return s;
}

double eigenpair_residual(const RealMatrix& matrix, double lambda) {
  const auto n = matrix.rows();
  const double scale = std::max(1.0, matrix.cwiseAbs().maxCoeff());
  RealMatrix shifted = matrix;
  shifted.diagonal().array() -= lambda + 1e-10 * scale;
  Eigen::PartialPivLU<RealMatrix> lu(shifted);
  std::mt19937_64 rng(0x5eed);
  std::normal_distribution<double> normal;
  Eigen::VectorXd v(n);
  for (Eigen::Index i = 0; i < n; ++i) v(i) = normal(rng);
  v.normalize();
  for (int it = 0; it < 3; ++it) {
    v = lu.solve(v);
    v.normalize();
  }
  return (matrix * v - lambda * v).norm();
}

double linear_statistic(std::span<const double> eigenvalues, const ScaledTestFunction& tf) {
  const double lo = tf.support_lo();
  const double hi = tf.support_hi();
  double sum = 0.0;
  for (double x : eigenvalues)
    if (x >= lo && x <= hi) sum += tf.f(x);
  return sum;
}

double linear_statistic(const SpectrumSample& s, const ScaledTestFunction& tf) {
  return linear_statistic(std::span<const double>(s.eigenvalues), tf);
}

double density_integral(const FreeConvolutionModel& model, const std::function<double(double)>& f,
                        double a, double b, std::span<const double> cuts, double tol) {
  if (!(b > a)) return 0.0;
  const double lower = model.lower_edge();
  const double upper = model.upper_edge();
  const double width = upper - lower;
  const bool at_lower = std::abs(a - lower) <= 1e-12 * std::max(1.0, width);
  const bool at_upper = std::abs(b - upper) <= 1e-12 * std::max(1.0, width);

  if (at_lower && at_upper) {
    const double mid = 0.5 * (a + b);
    return density_integral(model, f, a, mid, cuts, 0.5 * tol) +
           density_integral(model, f, mid, b, cuts, 0.5 * tol);
  }
  const double len = b - a;
  std::vector<double> ucuts;
  std::function<double(double)> phi;
  if (at_lower) {
    for (double c : cuts)
      if (c > a && c < b) ucuts.push_back(std::sqrt((c - a) / len));
    phi = [&](double u) {
      const double x = a + len * u * u;
      return f(x) * model.density(x) * 2.0 * len * u;
    };
  } else if (at_upper) {
    for (double c : cuts)
      if (c > a && c < b) ucuts.push_back(std::sqrt((b - c) / len));
    phi = [&](double u) {
      const double x = b - len * u * u;
      return f(x) * model.density(x) * 2.0 * len * u;
    };
  } else {
    for (double c : cuts)
      if (c > a && c < b) ucuts.push_back((c - a) / len);
    phi = [&](double u) {
      const double x = a + len * u;
      return f(x) * model.density(x) * len;
    };
  }
  return integrate_unit(phi, ucuts, tol, "density");
}

double centering_integral(const FreeConvolutionModel& model, const ScaledTestFunction& tf,
                          std::size_t n) {
  tf.validate();
  const double dn = static_cast<double>(n);
  double atom = 0.0;
  if (model.kind() == ModelKind::multiplicative && model.gamma() > 1.0)
    atom = dn * (1.0 - 1.0 / model.gamma()) * tf.f(0.0);
  if (tf.g.is_zero()) return 0.0;
  const double a = std::max(model.lower_edge(), tf.support_lo());
  const double b = std::min(model.upper_edge(), tf.support_hi());
  if (!(b > a)) return atom;
  const auto cuts = tf.breakpoints();
  const double tol = 1e-4 * tf.eta0 * tf.g.sup_norm();
  const auto f = [&tf](double x) { return tf.f(x); };
  return dn * density_integral(model, f, a, b, cuts, tol) + atom;
}

cplx empirical_stieltjes(std::span<const double> eigenvalues, cplx z) {
  cplx sum = 0.0;
  for (double x : eigenvalues) sum += 1.0 / (x - z);
  return sum / static_cast<double>(eigenvalues.size());
}

double local_law_residual(const SpectrumSample& s, const FreeConvolutionModel& model,
                          std::span<const cplx> grid) {
  const double n = static_cast<double>(s.size());
  double worst = 0.0;
  for (const cplx z : grid) {
    if (!(z.imag() > 0.0)) throw UsageError("local law grid must lie in the upper half plane");
    const cplx mn = empirical_stieltjes(s.eigenvalues, z);
    worst = std::max(worst, std::abs(mn - model.stieltjes(z)) * n * z.imag());
  }
  return worst;
}

std::vector<cplx> bulk_grid(const FreeConvolutionModel& model, int points, double eta) {
  if (points < 1) throw UsageError("bulk grid needs at least one point");
  const double lo = model.lower_edge();
  const double hi = model.upper_edge();
  std::vector<cplx> grid;
  for (int k = 0; k < points; ++k) {
    const double t = (k + 1.0) / (points + 1.0);
    grid.emplace_back(lo + t * (hi - lo), eta);
  }
  return grid;
}

std::vector<double> classical_locations(const FreeConvolutionModel& model, std::size_t n) {
  // Cumulative distribution on x = c - h cos(theta), where rho dx is smooth.
  constexpr int kGrid = 4096;
  const double c = 0.5 * (model.lower_edge() + model.upper_edge());
  const double h = 0.5 * (model.upper_edge() - model.lower_edge());
  std::vector<double> theta(kGrid + 1), cdf(kGrid + 1, 0.0), integrand(kGrid + 1, 0.0);
  for (int k = 0; k <= kGrid; ++k) {
    theta[k] = M_PI * k / kGrid;
    integrand[k] = model.density(c - h * std::cos(theta[k])) * h * std::sin(theta[k]);
  }
  for (int k = 1; k <= kGrid; ++k)
    cdf[k] = cdf[k - 1] + 0.5 * (integrand[k] + integrand[k - 1]) * (M_PI / kGrid);
  const double mass = cdf.back();
  const double atom =
      model.kind() == ModelKind::multiplicative && model.gamma() > 1.0 ? 1.0 - 1.0 / model.gamma()
                                                                        : 0.0;
  std::vector<double> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double q = (static_cast<double>(i) + 0.5) / static_cast<double>(n);
    if (q < atom) {
      out.push_back(0.0);
      continue;
    }
    const double target = (q - atom) / (1.0 - atom) * mass;
    const auto it = std::lower_bound(cdf.begin(), cdf.end(), target);
    const auto k = std::clamp<std::ptrdiff_t>(it - cdf.begin(), 1, kGrid);
    const double span = cdf[k] - cdf[k - 1];
    const double t = span > 0.0 ? (target - cdf[k - 1]) / span : 0.0;
    const double th = theta[k - 1] + t * (theta[k] - theta[k - 1]);
    out.push_back(c - h * std::cos(th));
  }
  return out;
}

void export_spectrum_csv(const SpectrumSample& s, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw UsageError(fmt::format("cannot write {}", path.string()));
  out << fmt::format("# spec_hash={:016x}\n", s.spec_hash);
  for (double x : s.eigenvalues) out << fmt::format("{}\n", x);
  if (!out) throw UsageError(fmt::format("write failed for {}", path.string()));
}

void export_spectrum_binary(const SpectrumSample& s, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw UsageError(fmt::format("cannot write {}", path.string()));
  const std::uint64_t count = s.eigenvalues.size();
  out.write(kMagic, sizeof kMagic);
  out.write(reinterpret_cast<const char*>(&s.spec_hash), sizeof s.spec_hash);
  out.write(reinterpret_cast<const char*>(&count), sizeof count);
  out.write(reinterpret_cast<const char*>(s.eigenvalues.data()),
            static_cast<std::streamsize>(count * sizeof(double)));
  if (!out) throw UsageError(fmt::format("write failed for {}", path.string()));
}

SpectrumSample import_spectrum(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UsageError(fmt::format("cannot read {}", path.string()));
  char head[sizeof kMagic] = {};
  in.read(head, sizeof head);
  SpectrumSample s;
  if (in.gcount() == sizeof head && std::memcmp(head, kMagic, sizeof head) == 0) {
    std::uint64_t count = 0;
    in.read(reinterpret_cast<char*>(&s.spec_hash), sizeof s.spec_hash);
    in.read(reinterpret_cast<char*>(&count), sizeof count);
    s.eigenvalues.resize(count);
    in.read(reinterpret_cast<char*>(s.eigenvalues.data()),
            static_cast<std::streamsize>(count * sizeof(double)));
    if (!in) throw UsageError(fmt::format("truncated spectrum file {}", path.string()));
    return s;
  }
  in.clear();
  in.seekg(0);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (line[0] == '#') {
      const auto pos = line.find("spec_hash=");
      if (pos != std::string::npos)
        s.spec_hash = std::stoull(line.substr(pos + 10), nullptr, 16);
      continue;
    }
    try {
      s.eigenvalues.push_back(std::stod(line));
    } catch (const std::exception&) {
      throw UsageError(fmt::format("{}: bad eigenvalue line '{}'", path.string(), line));
    }
  }
  if (!std::is_sorted(s.eigenvalues.begin(), s.eigenvalues.end()))
    throw UsageError(fmt::format("{}: eigenvalues are not sorted", path.string()));
  return s;
}

}  // namespace mesorm
