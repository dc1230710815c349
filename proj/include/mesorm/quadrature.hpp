#pragma once

#include <span>
#include <vector>

namespace mesorm {

/// Nodes and weights of a composite quadrature rule.
struct QuadratureRule {
  std::vector<double> x;
  std::vector<double> w;

  std::size_t size() const { return x.size(); }
  void clear() {
    x.clear();
    w.clear();
  }
};

/// A point the rule must resolve: panels near `location` shrink to a
/// fraction of sqrt(dist^2 + floor^2). A nonpositive floor only cuts.
struct Singularity {
  double location;
  double floor;
};

struct GradingOptions {
  double rho = 0.5;           // panel width / distance ratio
  double max_width = 1.0;     // absolute cap on panel width
  int max_depth = 60;         // bisection depth guard
  int refine = 0;             // extra uniform bisections per final panel
};

/// 16-point Gauss-Legendre on [a, b], appended to `rule`.
void append_gauss_legendre(double a, double b, QuadratureRule& rule);

/// Composite 16-point Gauss-Legendre on [a, b] with panels graded toward the
/// given singular points. `rule` is cleared first.
void graded_rule(double a, double b, std::span<const Singularity> points,
                 const GradingOptions& opts, QuadratureRule& rule);

QuadratureRule graded_rule(double a, double b, std::span<const Singularity> points,
                           const GradingOptions& opts);

/// Uniform composite rule with `panels` equal panels.
QuadratureRule uniform_rule(double a, double b, int panels);

}  // namespace mesorm
