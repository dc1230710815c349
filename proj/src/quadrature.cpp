#include "mesorm/quadrature.hpp"

#include <boost/math/quadrature/gauss.hpp>

#include <algorithm>
#include <cmath>
#include <limits>

namespace mesorm {

namespace {

using Gauss16 = boost::math::quadrature::gauss<double, 16>;

void bisect(double a, double b, std::span<const Singularity> points, const GradingOptions& opts,
            int depth, QuadratureRule& rule) {
  const double width = b - a;
  double limit = opts.max_width;
  for (const auto& p : points) {
    if (p.floor <= 0.0) continue;
    const double dist = p.location < a ? a - p.location : (p.location > b ? p.location - b : 0.0);
    limit = std::min(limit, opts.rho * std::hypot(dist, p.floor));
  }
  if (width > limit && depth < opts.max_depth) {
    const double mid = 0.5 * (a + b);
    bisect(a, mid, points, opts, depth + 1, rule);
    bisect(mid, b, points, opts, depth + 1, rule);
    return;
  }
  const int parts = 1 << std::max(0, opts.refine);
  const double step = width / parts;
  for (int k = 0; k < parts; ++k) append_gauss_legendre(a + k * step, a + (k + 1) * step, rule);
}

}  // namespace

void append_gauss_legendre(double a, double b, QuadratureRule& rule) {
  const auto& abscissa = Gauss16::abscissa();
  const auto& weights = Gauss16::weights();
  const double half = 0.5 * (b - a);
  const double mid = 0.5 * (a + b);
  for (std::size_t i = abscissa.size(); i-- > 0;) {
    rule.x.push_back(mid - half * abscissa[i]);
    rule.w.push_back(half * weights[i]);
  }
  for (std::size_t i = 0; i < abscissa.size(); ++i) {
    if (abscissa[i] == 0.0) continue;
    rule.x.push_back(mid + half * abscissa[i]);
    rule.w.push_back(half * weights[i]);
  }
}

void graded_rule(double a, double b, std::span<const Singularity> points,
                 const GradingOptions& opts, QuadratureRule& rule) {
  rule.clear();
  if (!(b > a)) return;
  // Split at interior singular points so each one sits on a panel boundary.
  std::vector<double> cuts{a};
  for (const auto& p : points)
    if (p.location > a && p.location < b) cuts.push_back(p.location);
  cuts.push_back(b);
  std::sort(cuts.begin(), cuts.end());
  cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());
  for (std::size_t k = 0; k + 1 < cuts.size(); ++k)
    bisect(cuts[k], cuts[k + 1], points, opts, 0, rule);
}

QuadratureRule graded_rule(double a, double b, std::span<const Singularity> points,
                           const GradingOptions& opts) {
  QuadratureRule rule;
  graded_rule(a, b, points, opts, rule);
  return rule;
}

QuadratureRule uniform_rule(double a, double b, int panels) {
  QuadratureRule rule;
  const double step = (b - a) / panels;
  for (int k = 0; k < panels; ++k) append_gauss_legendre(a + k * step, a + (k + 1) * step, rule);
  return rule;
}

}  // namespace mesorm
