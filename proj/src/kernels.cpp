#include "mesorm/kernels.hpp"

#include "mesorm/errors.hpp"

#include <fmt/format.h>

#include <cmath>

namespace mesorm {

namespace {

void require_kind(const KernelContext& ctx, ModelKind kind) {
  if (ctx.model.kind() != kind)
    throw UsageError(kind == ModelKind::additive ? "operation needs an additive (Wigner) model"
                                                 : "operation needs a multiplicative (sample covariance) model");
}

void guard_separation(cplx z1, cplx z2) {
  if (std::abs(z1 - z2) < 1e-12)
    throw NumericalError(fmt::format("kernel pole: |z1 - z2| = {:.3g} below 1e-12", std::abs(z1 - z2)));
}

}  // namespace

KernelContext KernelContext::make(FreeConvolutionModel model, const MomentProfile& profile) {
  KernelContext ctx{std::move(model), profile.beta, profile.m2, profile.w4};
  ctx.validate();
  return ctx;
}

void KernelContext::validate() const {
  if (beta != 1 && beta != 2) throw UsageError(fmt::format("beta must be 1 or 2, got {}", beta));
  if (!(w4 >= 1.0 - 1e-12)) throw ModelError(fmt::format("W4 = {} violates W4 >= 1", w4));
  if (model.kind() == ModelKind::multiplicative && beta != 1)
    throw UsageError("sample covariance kernels are defined for real entries (beta = 1)");
}

SpectralPoint spectral_point(const FreeConvolutionModel& model, cplx z) {
  return spectral_point(model, z, model.solve(z));
}

SpectralPoint spectral_point(const FreeConvolutionModel& model, cplx z, cplx v) {
  if (model.kind() == ModelKind::additive) {
    const auto d = m_derivatives_additive(model.base_measure(), z, v);
    return {z, v, d.dm, d.d2m};
  }
  const auto d = m_derivative_multiplicative(model.base_measure(), model.gamma(), z, v);
  return {z, v, d.dfm, d.d2fm};
}

cplx eval_I(const KernelContext& ctx, const SpectralPoint& p1, const SpectralPoint& p2) {
  cplx s = 0.0;
  for (const auto& a : ctx.model.base_measure().atoms())
    s += a.weight / ((a.location - p1.z - p1.v) * (a.location - p2.z - p2.v));
  return s;
}

cplx eval_I(const KernelContext& ctx, cplx z1, cplx z2) {
  require_kind(ctx, ModelKind::additive);
  return eval_I(ctx, spectral_point(ctx.model, z1), spectral_point(ctx.model, z2));
}

cplx eval_I_identity(const SpectralPoint& p1, const SpectralPoint& p2) {
  return (p1.v - p2.v) / (p1.z + p1.v - p2.z - p2.v);
}

cplx eval_Is(const KernelContext& ctx, const SpectralPoint& p) {
  cplx s = 0.0;
  for (const auto& a : ctx.model.base_measure().atoms()) {
    const cplx g = 1.0 / (a.location - p.z - p.v);
    s += a.weight * g * g;
  }
  return s;
}

cplx eval_Is(const KernelContext& ctx, cplx z) {
  require_kind(ctx, ModelKind::additive);
  return eval_Is(ctx, spectral_point(ctx.model, z));
}

cplx eval_Is_identity(const SpectralPoint& p) { return p.dv / (1.0 + p.dv); }

cplx eval_Is_prime(const KernelContext& ctx, const SpectralPoint& p) {
  cplx s = 0.0;
  for (const auto& a : ctx.model.base_measure().atoms()) {
    const cplx g = 1.0 / (a.location - p.z - p.v);
    s += a.weight * g * g * g;
  }
  return 2.0 * (1.0 + p.dv) * s;
}

IDerivatives eval_I_derivatives(const KernelContext& ctx, const SpectralPoint& p1,
                                const SpectralPoint& p2) {
  cplx s21 = 0.0;
  cplx s12 = 0.0;
  cplx s22 = 0.0;
  for (const auto& a : ctx.model.base_measure().atoms()) {
    const cplx g1 = 1.0 / (a.location - p1.z - p1.v);
    const cplx g2 = 1.0 / (a.location - p2.z - p2.v);
    s21 += a.weight * g1 * g1 * g2;
    s12 += a.weight * g1 * g2 * g2;
    s22 += a.weight * g1 * g1 * g2 * g2;
  }
  const cplx e1 = 1.0 + p1.dv;
  const cplx e2 = 1.0 + p2.dv;
  return {e1 * s21, e2 * s12, e1 * e2 * s22};
}

IDerivatives eval_I_derivatives(const KernelContext& ctx, cplx z1, cplx z2) {
  require_kind(ctx, ModelKind::additive);
  return eval_I_derivatives(ctx, spectral_point(ctx.model, z1), spectral_point(ctx.model, z2));
}

cplx inverse_one_minus_I(const SpectralPoint& p1, const SpectralPoint& p2) {
  guard_separation(p1.z, p2.z);
  return 1.0 + (p1.v - p2.v) / (p1.z - p2.z);
}

cplx eval_K_additive(const KernelContext& ctx, const SpectralPoint& p1, const SpectralPoint& p2) {
  const cplx inv = inverse_one_minus_I(p1, p2);
  const cplx i12 = eval_I(ctx, p1, p2);
  const auto d = eval_I_derivatives(ctx, p1, p2);
  const cplx cross = d.d1 * d.d2;
  const cplx first = ctx.diag_coeff() * d.d12;
  const cplx second = ctx.fourth_coeff() * (i12 * d.d12 + cross);
  const cplx third = (2.0 / ctx.beta) * (d.d12 * inv + cross * inv * inv);
  return first + second + third;
}

cplx eval_K_additive(const KernelContext& ctx, cplx z1, cplx z2) {
  require_kind(ctx, ModelKind::additive);
  guard_separation(z1, z2);
  return eval_K_additive(ctx, spectral_point(ctx.model, z1), spectral_point(ctx.model, z2));
}

cplx eval_b_additive(const KernelContext& ctx, const SpectralPoint& p) {
  const cplx is = eval_Is(ctx, p);
  const cplx isp = eval_Is_prime(ctx, p);
  // 1/(1 - I_s) = 1 + m' from the coincidence limit of the subordination identity.
  const cplx inv = 1.0 + p.dv;
  return (2.0 / ctx.beta - 1.0) * inv * isp + ctx.diag_coeff() * isp +
         ctx.fourth_coeff() * is * isp;
}

cplx eval_b_additive(const KernelContext& ctx, cplx z) {
  require_kind(ctx, ModelKind::additive);
  return eval_b_additive(ctx, spectral_point(ctx.model, z));
}

cplx eval_K_sample(const KernelContext& ctx, const SpectralPoint& p1, const SpectralPoint& p2) {
  guard_separation(p1.z, p2.z);
  const cplx diff = p1.v - p2.v;
  if (std::abs(diff) < 1e-300)
    throw NumericalError("frak m coincides at distinct points (solver branch error)");
  const cplx dz = p1.z - p2.z;
  cplx s = 0.0;
  for (const auto& a : ctx.model.base_measure().atoms()) {
    const cplx u1 = 1.0 + p1.v * a.location;
    const cplx u2 = 1.0 + p2.v * a.location;
    s += a.weight * a.location * a.location / (u1 * u1 * u2 * u2);
  }
  return 2.0 * (p1.dv * p2.dv / (diff * diff) - 1.0 / (dz * dz)) +
         ctx.k4() * ctx.gamma() * p1.dv * p2.dv * s;
}

cplx eval_K_sample(const KernelContext& ctx, cplx z1, cplx z2) {
  require_kind(ctx, ModelKind::multiplicative);
  guard_separation(z1, z2);
  return eval_K_sample(ctx, spectral_point(ctx.model, z1), spectral_point(ctx.model, z2));
}

namespace {

cplx sample_cubic_sum(const KernelContext& ctx, const SpectralPoint& p) {
  cplx s = 0.0;
  for (const auto& a : ctx.model.base_measure().atoms()) {
    const cplx u = 1.0 + p.v * a.location;
    s += a.weight * ctx.gamma() * a.location * a.location / (u * u * u);
  }
  return s;
}

}  // namespace

cplx eval_b_sample(const KernelContext& ctx, const SpectralPoint& p) {
  return (p.dv * p.dv / p.v + ctx.k4() * p.v * p.dv) * sample_cubic_sum(ctx, p);
}

cplx eval_b_sample(const KernelContext& ctx, cplx z) {
  require_kind(ctx, ModelKind::multiplicative);
  return eval_b_sample(ctx, spectral_point(ctx.model, z));
}

cplx eval_b_sample_reduced(const SpectralPoint& p) { return p.d2v / (2.0 * p.dv) - p.dv / p.v; }

cplx eval_b_sample_direct(const KernelContext& ctx, const SpectralPoint& p) {
  return p.dv * p.dv / p.v * sample_cubic_sum(ctx, p);
}

cplx eval_K(const KernelContext& ctx, const SpectralPoint& p1, const SpectralPoint& p2) {
  return ctx.model.kind() == ModelKind::additive ? eval_K_additive(ctx, p1, p2)
                                                 : eval_K_sample(ctx, p1, p2);
}

cplx eval_b(const KernelContext& ctx, const SpectralPoint& p) {
  return ctx.model.kind() == ModelKind::additive ? eval_b_additive(ctx, p)
                                                 : kSampleBiasWeight * eval_b_sample(ctx, p);
}

}  // namespace mesorm
