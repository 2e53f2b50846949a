"""Large-n predictions for ln D_n(t), gamma_n and b^2_{n-1} in the double scaling s = 4n ln phi(t)."""
from __future__ import annotations

from dataclasses import dataclass

import mpmath
from mpmath import mpf

from .highprec import DomainError, PrecisionContext, log_barnes_g
from .piii import PIIIParams, SigmaTrajectory, q_from_sigma, sigma_integral
from .weight import FourierLogH, WeightSpec, fourier_log_h, phi, scaling_s, solve_t, szego_constants

PART_NAMES = ("Vk_sum", "barnes_part", "log2_part", "alpha_logt_part", "nlogphi_sq_part", "sigma_integral_part")


@dataclass(frozen=True)
class ScalingPoint:
    n: int
    t: mpf
    s: mpf

    @classmethod
    def from_t(cls, n: int, t) -> "ScalingPoint":
        t = mpf(t)
        return cls(n, t, scaling_s(n, t))

    @classmethod
    def from_s(cls, n: int, s) -> "ScalingPoint":
        s = mpf(s)
        return cls(n, solve_t(n, s), s)


@dataclass(frozen=True)
class Thm1Prediction:
    ln_Dn_pred: mpf
    parts: dict

    @staticmethod
    def assemble(parts: dict) -> "Thm1Prediction":
        total = mpf(0)
        for name in PART_NAMES:
            total += parts[name]
        return Thm1Prediction(total, dict(parts))


def _barnes_part(mu, ctx: PrecisionContext) -> mpf:
    if mu + 1 <= 0:
        raise DomainError("alpha+beta+1 must be positive (Barnes G pole)")
    return 2 * (log_barnes_g(mpf(1) / 2, ctx) - log_barnes_g(mu + 1, ctx))


def _log2_part(mu, n: int) -> mpf:
    ln2 = mpmath.log(2)
    return (mu * mu - mpf(1) / 4) * mpmath.log(mpf(n) / 4) - (n * n + 2 * n * mu + 1) * ln2 \
        + (n + mu + mpf(1) / 2) * mpmath.log(2 * mpmath.pi)


def ln_Dn_at_1(alpha_plus_beta, V: FourierLogH, n: int, ctx: PrecisionContext) -> mpf:
    """ln D_n for the weight (1-x^2)^{alpha+beta} h(x) to o(1), with the Barnes G constant."""
    with ctx.work():
        mu = mpf(alpha_plus_beta)
        if mu <= -1:
            raise DomainError("alpha+beta must exceed -1")
        vpart = (n + mu) * V[0] - mu * V.log_h_at_1() + V.k_weighted_sum() / 2
        return vpart + _log2_part(mu, n) + _barnes_part(mu, ctx)


def ln_Dn_prediction(spec: WeightSpec, point: ScalingPoint, traj: SigmaTrajectory, ctx: PrecisionContext,
                     V: FourierLogH | None = None) -> Thm1Prediction:
    """Every displayed term of the expansion of ln D_n(t), returned with its breakdown.

    ln h(t) continues the Chebyshev series of h beyond x = 1; a ContinuationError
    means t left the region where that series converges.
    """
    with ctx.work():
        V = V or fourier_log_h(spec, None, ctx)
        al, be, mu, n = spec.alpha, spec.beta, spec.mu, point.n
        ln_ht = mpmath.log(spec.h.continue_to(point.t))
        lph = mpmath.acosh(point.t)
        parts = {
            "Vk_sum": (n + mu) * V[0] - al * ln_ht - be * V.log_h_at_1() + V.k_weighted_sum() / 2,
            "barnes_part": _barnes_part(mu, ctx),
            "log2_part": _log2_part(mu, n),
            "alpha_logt_part": -(al * al / 2) * mpmath.log(point.t),
            "nlogphi_sq_part": (n * lph) ** 2 / 2,
            "sigma_integral_part": -4 * sigma_integral(traj, point.s, ctx) if point.s > 0 else mpf(0),
        }
        return Thm1Prediction.assemble(parts)


def leading_coeff_prediction(spec: WeightSpec, point: ScalingPoint, traj: SigmaTrajectory,
                             ctx: PrecisionContext, V: FourierLogH | None = None) -> mpf:
    """gamma_n / 2^n ~ (1 + 2 sqrt(2) (alpha/2 + q/s) sqrt(t-1)) / (sqrt(pi) D_t(inf)).

    The t-independent O(n^-2) correction c_n is unknown and taken as 0.
    """
    with ctx.work():
        V = V or fourier_log_h(spec, 0, ctx)
        D = szego_constants(spec, ctx, V, check=False).D_t_infty
        q, _ = q_from_sigma(traj, point.s)
        corr = 2 * mpmath.sqrt(2) * (spec.alpha / 2 + q / point.s) * mpmath.sqrt(point.t - 1)
        return (1 + corr) / (mpmath.sqrt(mpmath.pi) * D)


def recurrence_prediction(spec: WeightSpec, point: ScalingPoint, traj: SigmaTrajectory) -> mpf:
    """b^2_{n-1} ~ 1/4 - 8 (q/s)'(s) (t-1)."""
    with mpmath.workprec(traj.bits):
        _, dqs = q_from_sigma(traj, point.s)
        return mpf(1) / 4 - 8 * dqs * (point.t - 1)


def leading_coeff_small_s(mu, n: int) -> mpf:
    """Bracket 1 - (4 mu^2 - 1)/(8n) of the leading coefficient as s -> 0."""
    mu = mpf(mu)
    return 1 - (4 * mu * mu - 1) / (8 * n)


def leading_coeff_large_s(beta, n: int) -> mpf:
    """Bracket 1 - (4 beta^2 - 1)/(8n) of the leading coefficient as s -> infinity."""
    beta = mpf(beta)
    return 1 - (4 * beta * beta - 1) / (8 * n)


def recurrence_small_s(mu, n: int) -> mpf:
    mu = mpf(mu)
    return mpf(1) / 4 - (4 * mu * mu - 1) / (16 * mpf(n) ** 2)


def recurrence_large_s(beta, n: int) -> mpf:
    beta = mpf(beta)
    return mpf(1) / 4 - (4 * beta * beta - 1) / (16 * mpf(n) ** 2)


def leading_bracket(params: PIIIParams, traj: SigmaTrajectory, point: ScalingPoint) -> mpf:
    """1 + 2 sqrt(2) (alpha/2 + q/s) sqrt(t-1), the factor multiplying 1/(sqrt(pi) D_t(inf))."""
    with mpmath.workprec(traj.bits):
        q, _ = q_from_sigma(traj, point.s)
        return 1 + 2 * mpmath.sqrt(2) * (mpf(params.alpha.numerator) / params.alpha.denominator / 2
                                         + q / point.s) * mpmath.sqrt(point.t - 1)


__all__ = [
    "PART_NAMES", "ScalingPoint", "Thm1Prediction", "ln_Dn_at_1", "ln_Dn_prediction",
    "leading_coeff_prediction", "recurrence_prediction", "leading_coeff_small_s", "leading_coeff_large_s",
    "recurrence_small_s", "recurrence_large_s", "leading_bracket", "phi",
]
