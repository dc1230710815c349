#pragma once

#include "mesorm/spectra.hpp"

#include <complex>
#include <memory>
#include <optional>

namespace mesorm {

using cplx = std::complex<double>;

struct StieltjesSolverConfig {
  int max_iter = 100000;        // Picard fallback budget
  double tol = 1e-12;           // fixed-point residual
  double damping = 1.0;         // initial Picard damping
  int continuation_steps = 4;   // ladder rungs per decade of eta
  double eta_min = 1e-9;        // height used for densities on the real axis

  void validate() const;
};

enum class ModelKind { additive, multiplicative };

struct EdgePoint {
  double location = 0.0;  // L or E
  double root = 0.0;      // zeta (additive) or xi (multiplicative)
  double c = 0.0;         // square-root expansion coefficient
};

struct EdgeSet {
  EdgePoint lower;
  EdgePoint upper;
  bool hard_edge = false;
};

/// Edges of mu_A boxplus semicircle from F(zeta) = zeta - int 1/(a - zeta) dmu.
EdgeSet edges_additive(const AtomicMeasure& mu);
/// Edges of the deformed Marchenko-Pastur law; F(xi) = 1/xi + gamma int t/(1 - t xi) dmu.
EdgeSet edges_multiplicative(const AtomicMeasure& sigma, double gamma);

/// Solved spectral model. Copies share the memo cache.
class FreeConvolutionModel {
 public:
  static FreeConvolutionModel additive(AtomicMeasure mu, StieltjesSolverConfig cfg = {});
  static FreeConvolutionModel multiplicative(AtomicMeasure sigma, double gamma,
                                             StieltjesSolverConfig cfg = {});

  ModelKind kind() const { return kind_; }
  const AtomicMeasure& base_measure() const { return measure_; }
  double gamma() const { return gamma_; }
  const StieltjesSolverConfig& config() const { return cfg_; }
  const EdgeSet& edges() const { return edges_; }
  double lower_edge() const { return edges_.lower.location; }
  double upper_edge() const { return edges_.upper.location; }
  bool hard_edge() const { return edges_.hard_edge; }
  /// Distance to the nearest edge (0 inside numerical tolerance).
  double kappa(double energy) const;

  /// Primary unknown of the self-consistent equation: m_fc (additive) or the
  /// companion transform frak m (multiplicative). Memoized.
  cplx solve(cplx z) const;
  /// Newton from a nearby value, falling back to `solve` when that fails.
  cplx solve_from(cplx z, cplx guess) const;
  /// Stieltjes transform of the limiting spectral law (m_fc, or m of Y Y*).
  cplx stieltjes(cplx z) const;
  /// |Phi(v) - v| for the defining map at z.
  double residual(cplx z, cplx value) const;
  /// Density of the limiting law at real E.
  double density(double energy) const;

  void set_cache_enabled(bool enabled) const;
  std::size_t cache_size() const;

 private:
  struct Cache;
  FreeConvolutionModel() = default;

  cplx newton(cplx z, cplx guess, bool& ok) const;
  cplx picard(cplx z, cplx guess, bool& ok) const;
  cplx continuation(cplx z) const;
  cplx solve_real(double x) const;
  bool admissible(cplx z, cplx v) const;

  ModelKind kind_ = ModelKind::additive;
  AtomicMeasure measure_;
  double gamma_ = 0.0;
  StieltjesSolverConfig cfg_;
  EdgeSet edges_;
  std::shared_ptr<Cache> cache_;
};

cplx solve_m_additive(const AtomicMeasure& mu, cplx z, const StieltjesSolverConfig& cfg = {});

struct MultiplicativeSolution {
  cplx m;
  cplx frak_m;
};
MultiplicativeSolution solve_m_multiplicative(const AtomicMeasure& sigma, double gamma, cplx z,
                                              const StieltjesSolverConfig& cfg = {});

double density_at(const FreeConvolutionModel& model, double energy);

struct AdditiveDerivatives {
  cplx m;
  cplx dm;
  cplx d2m;
};
/// Closed-form m', m'' from differentiating the Pastur equation.
AdditiveDerivatives m_derivatives_additive(const FreeConvolutionModel& model, cplx z);
AdditiveDerivatives m_derivatives_additive(const AtomicMeasure& mu, cplx z, cplx m);

struct MultiplicativeDerivatives {
  cplx fm;
  cplx dfm;
  cplx d2fm;
};
MultiplicativeDerivatives m_derivative_multiplicative(const FreeConvolutionModel& model, cplx z);
MultiplicativeDerivatives m_derivative_multiplicative(const AtomicMeasure& sigma, double gamma,
                                                      cplx z, cplx fm);

}  // namespace mesorm
