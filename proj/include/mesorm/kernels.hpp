#pragma once

#include "mesorm/freeconv.hpp"

namespace mesorm {

/// Model plus the moment constants entering the variance kernel and bias.
struct KernelContext {
  FreeConvolutionModel model;
  int beta = 1;
  double m2 = 2.0;
  double w4 = 3.0;

  static KernelContext make(FreeConvolutionModel model, const MomentProfile& profile);

  double k4() const { return w4 - 3.0; }
  double gamma() const { return model.gamma(); }
  /// Coefficients m2 - 2/beta and W4 - 1 - 2/beta of the additive kernel.
  double diag_coeff() const { return m2 - 2.0 / beta; }
  double fourth_coeff() const { return w4 - 1.0 - 2.0 / beta; }
  void validate() const;
};

/// Solution of the self-consistent equation at z with its first two
/// z-derivatives. For additive models `v` is m_fc, otherwise frak m.
struct SpectralPoint {
  cplx z;
  cplx v;
  cplx dv;
  cplx d2v;
};

SpectralPoint spectral_point(const FreeConvolutionModel& model, cplx z);
SpectralPoint spectral_point(const FreeConvolutionModel& model, cplx z, cplx v);

struct IDerivatives {
  cplx d1;
  cplx d2;
  cplx d12;
};

// Additive two-point functions.
cplx eval_I(const KernelContext& ctx, cplx z1, cplx z2);
cplx eval_I(const KernelContext& ctx, const SpectralPoint& p1, const SpectralPoint& p2);
/// (m1 - m2) / (z1 + m1 - z2 - m2).
cplx eval_I_identity(const SpectralPoint& p1, const SpectralPoint& p2);
cplx eval_Is(const KernelContext& ctx, cplx z);
cplx eval_Is(const KernelContext& ctx, const SpectralPoint& p);
/// m' / (1 + m').
cplx eval_Is_identity(const SpectralPoint& p);
/// dI_s/dz = 2 (1 + m') sum w g^3.
cplx eval_Is_prime(const KernelContext& ctx, const SpectralPoint& p);
IDerivatives eval_I_derivatives(const KernelContext& ctx, cplx z1, cplx z2);
IDerivatives eval_I_derivatives(const KernelContext& ctx, const SpectralPoint& p1,
                                const SpectralPoint& p2);
/// 1 / (1 - I) through 1 + (m1 - m2) / (z1 - z2).
cplx inverse_one_minus_I(const SpectralPoint& p1, const SpectralPoint& p2);

cplx eval_K_additive(const KernelContext& ctx, cplx z1, cplx z2);
cplx eval_K_additive(const KernelContext& ctx, const SpectralPoint& p1, const SpectralPoint& p2);
cplx eval_b_additive(const KernelContext& ctx, cplx z);
cplx eval_b_additive(const KernelContext& ctx, const SpectralPoint& p);

// Sample covariance.
cplx eval_K_sample(const KernelContext& ctx, cplx z1, cplx z2);
cplx eval_K_sample(const KernelContext& ctx, const SpectralPoint& p1, const SpectralPoint& p2);
cplx eval_b_sample(const KernelContext& ctx, cplx z);
cplx eval_b_sample(const KernelContext& ctx, const SpectralPoint& p);
/// First bias term written as frak m''/(2 frak m') - frak m'/frak m.
cplx eval_b_sample_reduced(const SpectralPoint& p);
/// (frak m'^2 / frak m) * sum gamma w s^2 / (1 + frak m s)^3, the direct form of the same term.
cplx eval_b_sample_direct(const KernelContext& ctx, const SpectralPoint& p);

/// Weight applied to eval_b_sample when the bias is assembled. With weight 2
/// the edge bias tends to g(0)/4, the Wigner value at beta = 1.
inline constexpr double kSampleBiasWeight = 2.0;

/// Dispatch on the model kind; sample covariance carries kSampleBiasWeight.
cplx eval_K(const KernelContext& ctx, const SpectralPoint& p1, const SpectralPoint& p2);
cplx eval_b(const KernelContext& ctx, const SpectralPoint& p);

}  // namespace mesorm
