#pragma once

#include "mesorm/kernels.hpp"
#include "mesorm/quadrature.hpp"
#include "mesorm/testfunction.hpp"

#include <json.hpp>

#include <string>

namespace mesorm {

/// Two-level contour geometry: the outer line sits at +-outer_height, the
/// inner one at exactly half of it.
struct ContourSpec {
  double outer_height = 1e-5;
  double tau = 0.0;          // implied N^-tau = outer_height / eta0 (informational)
  double rho = 0.5;          // panel grading ratio
  double max_panel = 0.0;    // 0: min(R eta0 / 4, 1/64)
  bool richardson = true;    // panel-doubling check
  double richardson_tol = 1e-4;

  double inner_height() const { return 0.5 * outer_height; }
  void validate() const;

  /// Default heights: outer = 1e-3 eta0, tau recorded for dimension n.
  static ContourSpec for_scale(double eta0, std::size_t n = 0, double relative_height = 1e-3);
};

/// Linear functional check of the almost-analytic machinery:
/// (1/pi) int dbar f~(z) / (lambda - z) d^2z, which must reproduce f(lambda).
double hs_reconstruct(const ScaledTestFunction& tf, double lambda, const GradingOptions& quad = {});

struct ContourResult {
  double value = 0.0;
  double imag_residual = 0.0;  // |Im| / max(|Re|, tiny)
  double richardson_delta = 0.0;
  std::size_t evaluations = 0;
};

/// V(f) = -(1/4 pi^2) oint oint f~(z1) f~(z2) K(z1, z2) dz1 dz2 over the two contours.
ContourResult finite_variance(const KernelContext& ctx, const ScaledTestFunction& tf,
                              const ContourSpec& spec);
double finite_variance_Vf(const KernelContext& ctx, const ScaledTestFunction& tf,
                          const ContourSpec& spec);

/// (1/4 pi i) oint f~(z) b(z) dz over the outer contour.
ContourResult finite_bias_detail(const KernelContext& ctx, const ScaledTestFunction& tf,
                                 const ContourSpec& spec);
double finite_bias(const KernelContext& ctx, const ScaledTestFunction& tf, const ContourSpec& spec);

enum class EdgeSide { left, right };
std::string_view to_string(EdgeSide side);

/// Both forms of a mesoscopic variance functional of a profile h on R.
struct DualForm {
  double double_integral = 0.0;  // int int ((h(x)-h(y))/(x-y))^2
  double fourier = 0.0;          // 2 pi int |xi| |h^(xi)|^2 (unitary transform)
};

/// Evaluates both forms of the difference-quotient energy of h; `half_width`
/// bounds the support of h and `breaks` lists kinks of h''.
DualForm difference_quotient_energy(const std::function<double(double)>& h,
                                    const std::function<double(double)>& dh, double half_width,
                                    std::vector<double> breaks);

/// (1/beta pi) int |xi| |g^|^2 dxi, cross-checked against
/// (1/2 beta pi^2) int int ((g(x)-g(y))/(x-y))^2 to 1e-3.
double limit_bulk_variance(const TestProfile& g, int beta);
/// Same functional applied to h(x) = g(-x^2) (right) or g(x^2) (left), with
/// prefactors 1/(2 beta pi) and 1/(4 beta pi^2).
double limit_edge_variance(const TestProfile& g, int beta, EdgeSide side);
/// Both forms for diagnostics (prefactors applied).
DualForm limit_bulk_variance_forms(const TestProfile& g, int beta);
DualForm limit_edge_variance_forms(const TestProfile& g, int beta, EdgeSide side);
/// (2/beta - 1) g(0)/4 for Wigner, g(0)/4 for sample covariance.
double limit_edge_mean(const TestProfile& g, int beta, bool sample_covariance = false);

enum class Location { bulk, edge_right, edge_left };
std::string_view to_string(Location loc);
Location parse_location(std::string_view text);

struct PredictionRecord {
  std::string model;
  int beta = 1;
  double m2 = 0.0;
  double w4 = 0.0;
  double gamma = 0.0;
  std::string location;
  double e0 = 0.0;
  double eta0 = 0.0;
  double kappa0 = 0.0;
  double outer_height = 0.0;
  double tau = 0.0;
  double v_finite = 0.0;
  double v_limit = 0.0;
  double bias_finite = 0.0;
  double bias_limit = 0.0;
  double mean_limit = 0.0;
  bool finite_computed = true;
};

/// Full deterministic prediction for a test function placed at `loc`.
PredictionRecord predict(const KernelContext& ctx, const ScaledTestFunction& tf, Location loc,
                         const ContourSpec& spec, bool with_finite = true);

void to_json(nlohmann::json& j, const PredictionRecord& p);
void from_json(const nlohmann::json& j, PredictionRecord& p);

}  // namespace mesorm
