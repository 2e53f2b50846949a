"""The perturbed Jacobi weight w(x;t) = (1-x^2)^beta (t^2-x^2)^alpha h(x).

``h`` is always held as an even Chebyshev series on [-1, 1].  This module also
produces the Fourier data V_k of ln h(cos theta) and the Szegő constant D_t(inf).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import mpmath
from mpmath import mp, mpf

from .highprec import DomainError, PjacobiError, PrecisionContext, PrecisionError


class ContinuationError(PjacobiError):
    """h cannot be continued to the requested point with its Chebyshev series."""


class ConsistencyError(PjacobiError):
    """Two independent evaluation routes disagree beyond tolerance."""


@dataclass(frozen=True)
class ChebSeries:
    """Chebyshev series sum_k c_k T_k(x) on [-1, 1]."""
    coeffs: tuple

    def __call__(self, x) -> mpf:
        return clenshaw(self.coeffs, mpf(x))

    @property
    def is_even(self) -> bool:
        return all(c == 0 for c in self.coeffs[1::2])

    def continue_to(self, x) -> mpf:
        """Evaluate at |x| >= 1 where T_k(x) grows like rho^k.

        The last coefficients measure how well the stored series resolves h on
        [-1, 1].  Outside the interval they are amplified by rho^k; the value is
        trusted while that amplification costs at most half of those digits,
        otherwise x lies outside the region where the truncated series represents h.
        """
        x = mpf(x)
        if abs(x) <= 1:
            return self(x)
        total = self(x)
        n = len(self.coeffs)
        if n <= 2:
            return total
        # size of the trailing terms |c_k T_k(x)|
        rho = abs(x) + mpmath.sqrt(x * x - 1)
        last = range(max(1, n - 4), n)
        tail_terms = [abs(self.coeffs[k]) * rho ** k for k in last]
        scale = max(abs(total), max(abs(c) for c in self.coeffs))
        resolution = max(max(abs(self.coeffs[k]) for k in last) / scale, mpf(2) ** -mp.prec)
        if max(tail_terms) > mpmath.sqrt(resolution) * scale:
            raise ContinuationError(
                f"Chebyshev series of h does not resolve h at x={mpmath.nstr(x, 8)}; "
                "the point is too far outside [-1, 1] for the stored coefficients")
        return total


def clenshaw(coeffs: Sequence, x: mpf) -> mpf:
    b1 = b2 = mpf(0)
    for c in reversed(coeffs[1:]):
        b1, b2 = 2 * x * b1 - b2 + c, b1
    if not coeffs:
        return mpf(0)
    return x * b1 - b2 + coeffs[0]


def cheb_interpolate(f: Callable, ctx: PrecisionContext, even: bool = True,
                     max_points: int = 4096) -> ChebSeries:
    """Chebyshev interpolant of f at first-kind points, doubling until the tail is resolved."""
    with ctx.work():
        tol = ctx.tol
        m = 16
        while m <= max_points:
            # cos(k pi (2j+1)/(2m)) from a table of 4m values
            table = [mpmath.cospi(mpf(i) / (2 * m)) for i in range(4 * m)]
            vals = [mpf(f(table[2 * j + 1])) for j in range(m)]
            coeffs = []
            for k in range(m):
                if even and k % 2:
                    coeffs.append(mpf(0))
                    continue
                s = mpmath.fsum(v * table[((2 * j + 1) * k) % (4 * m)] for j, v in enumerate(vals))
                coeffs.append(s * 2 / m)
            coeffs[0] /= 2
            if even:
                coeffs = [c if k % 2 == 0 else mpf(0) for k, c in enumerate(coeffs)]
            scale = max(abs(c) for c in coeffs)
            tail = max(abs(c) for c in coeffs[-4:])
            if tail <= tol * scale:
                while len(coeffs) > 1 and abs(coeffs[-1]) <= tol * scale / 16:
                    coeffs.pop()
                return ChebSeries(tuple(coeffs))
            m *= 2
    raise PrecisionError("Chebyshev interpolation of h did not resolve within the point budget")


H_KINDS = ("const", "exp_x2", "two_plus_cos_pi_x", "cheb")


def make_h(kind: str = "const", coeffs: Sequence | None = None, ctx: PrecisionContext | None = None,
           value=None, c=None) -> ChebSeries:
    """Build h from a built-in family or explicit Chebyshev coefficients.

    ``const`` uses ``value`` (default 1); ``exp_x2`` is exp(c x^2) with c
    defaulting to 1; ``cheb`` takes ``coeffs`` verbatim (odd entries must vanish).
    """
    ctx = ctx or PrecisionContext.from_digits(30)
    with ctx.work():
        if kind == "const":
            return ChebSeries((mpf(1 if value is None else value),))
        if kind == "exp_x2":
            cc = mpf(1 if c is None else c)
            return cheb_interpolate(lambda x: mpmath.exp(cc * x * x), ctx)
        if kind == "two_plus_cos_pi_x":
            return cheb_interpolate(lambda x: 2 + mpmath.cos(mpmath.pi * x), ctx)
        if kind == "cheb":
            if not coeffs:
                raise DomainError("h kind 'cheb' needs a non-empty coeffs list")
            cs = tuple(mpf(v) for v in coeffs)
            if any(v != 0 for v in cs[1::2]):
                raise DomainError("h must be even: odd Chebyshev coefficients must be exactly zero")
            return ChebSeries(cs)
    raise DomainError(f"unknown h kind {kind!r}; expected one of {H_KINDS}")


def _exact_mpf(x) -> mpf:
    # decimal strings and floats become the decimal value they print as
    if isinstance(x, str):
        return mpf(x)
    if isinstance(x, float):
        return mpf(repr(x))
    return mpf(x)


@dataclass(frozen=True)
class WeightSpec:
    alpha: mpf
    beta: mpf
    t: mpf
    h: ChebSeries = field(default_factory=lambda: ChebSeries((mpf(1),)))

    def __post_init__(self):
        object.__setattr__(self, "alpha", _exact_mpf(self.alpha))
        object.__setattr__(self, "beta", _exact_mpf(self.beta))
        object.__setattr__(self, "t", _exact_mpf(self.t))
        if not self.beta > -1:
            raise DomainError("beta must exceed -1")
        if not self.alpha + self.beta > -1:
            raise DomainError("alpha + beta must exceed -1")
        if not self.t >= 1:
            raise DomainError("t must be >= 1 (t = 1 only for the reference path)")
        if not self.h.is_even:
            raise DomainError("h must be even (odd Chebyshev coefficients exactly zero)")
        # positivity by sampling on a fine grid plus a decay bound on the series
        total = sum(abs(c) for c in self.h.coeffs[1:])
        if self.h.coeffs[0] - total <= 0:
            for j in range(257):
                x = mpmath.cos(mpmath.pi * j / 256)
                if self.h(x) <= 0:
                    raise DomainError(f"h is not positive at x={mpmath.nstr(x, 6)}")

    @property
    def mu(self) -> mpf:
        return self.alpha + self.beta

    def with_t(self, t) -> "WeightSpec":
        return WeightSpec(self.alpha, self.beta, t, self.h)


def eval_weight(spec: WeightSpec, x) -> mpf:
    x = mpf(x)
    if abs(x) >= 1:
        raise DomainError("eval_weight needs -1 < x < 1")
    x2 = x * x
    return (1 - x2) ** spec.beta * (spec.t ** 2 - x2) ** spec.alpha * spec.h(x)


@dataclass(frozen=True)
class FourierLogH:
    V: tuple

    def __getitem__(self, k: int) -> mpf:
        return self.V[k] if k < len(self.V) else mpf(0)

    @property
    def K(self) -> int:
        return len(self.V) - 1

    def log_h_at_1(self) -> mpf:
        """ln h(1) = V_0 + 2 sum_{k>=1} V_k."""
        return self.V[0] + 2 * mpmath.fsum(self.V[1:])

    def k_weighted_sum(self) -> mpf:
        """sum_k k V_k^2."""
        return mpmath.fsum(k * v * v for k, v in enumerate(self.V))


def _trapezoid_moments(g: Callable, K: int, M: int):
    # periodic trapezoid on theta_j = 2 pi j / M; cos(k theta_j) read from a table
    cos_t = [mpmath.cospi(mpf(2 * m) / M) for m in range(M)]
    sin_t = [mpmath.sinpi(mpf(2 * m) / M) for m in range(M)]
    vals = [g(2 * mpmath.pi * j / M) for j in range(M)]
    re = [mpmath.fsum(v * cos_t[(k * j) % M] for j, v in enumerate(vals)) / M for k in range(K + 1)]
    im = [mpmath.fsum(v * sin_t[(k * j) % M] for j, v in enumerate(vals)) / M for k in range(K + 1)]
    return re, im


def fourier_log_h(spec: WeightSpec, K: int | None, ctx: PrecisionContext,
                  max_points: int = 1 << 13) -> FourierLogH:
    """V_k = (1/2pi) int_0^{2pi} e^{-ik theta} ln h(cos theta) d theta by the periodic trapezoid rule.

    The grid is doubled until two successive grids agree on every requested
    V_k.  With ``K=None`` the cutoff is the first index where |V_k| drops below
    10^(-target_digits-2), capped at 512.
    """
    with ctx.work():
        tol = ctx.tol
        if len(spec.h.coeffs) == 1:
            if spec.h.coeffs[0] <= 0:
                raise DomainError("h is not positive on [-1, 1]")
            kk = 0 if K is None else K
            return FourierLogH(tuple([mpmath.log(spec.h.coeffs[0])] + [mpf(0)] * kk))

        def g(th):
            hv = spec.h(mpmath.cos(th))
            if hv <= 0:
                raise DomainError("h is not positive on [-1, 1]")
            return mpmath.log(hv)

        M = 32
        prev = None
        while M <= max_points:
            kk = M // 4 if K is None else K
            kk = min(kk, 512)
            re, im = _trapezoid_moments(g, kk, M)
            if prev is not None:
                common = min(len(prev), len(re))
                agree = max(abs(a - b) for a, b in zip(re[:common], prev[:common])) <= tol
                resolved = K is not None or max(abs(v) for v in re[-4:]) <= tol / 100 or kk == 512
                if agree and resolved:
                    break
            prev = re
            M *= 2
        else:
            raise PrecisionError("trapezoid rule for V_k did not stabilize within the grid budget")
        if max(abs(v) for v in im) > tol:
            raise ConsistencyError("imaginary residue of V_k exceeds tolerance")
        # h even => ln h(cos theta) has period pi, so odd V_k vanish identically
        V = [v if k % 2 == 0 else mpf(0) for k, v in enumerate(re)]
        if K is None:
            cut = next((k for k in range(1, len(V)) if all(abs(v) < tol / 100 for v in V[k:])), len(V))
            V = V[:cut]
        return FourierLogH(tuple(+v for v in V))


@dataclass(frozen=True)
class SzegoConstants:
    D_t_infty: mpf
    D_1_infty: mpf
    phi_t: mpf
    log_phi_t: mpf
    D_t_infty_integral: mpf


def phi(t) -> mpf:
    t = mpf(t)
    return t + mpmath.sqrt(t * t - 1)


def _szego_integral(spec: WeightSpec, ctx: PrecisionContext) -> mpf:
    # (1/2pi) int_{-1}^{1} ln[(t^2-x^2)^alpha h(x)] / sqrt(1-x^2) dx with x = cos(theta)
    tol = ctx.tol
    t2 = spec.t ** 2
    at_edge = spec.t == 1

    def g(th):
        c = mpmath.cos(th)
        v = mpmath.log(spec.h(c))
        if not at_edge:
            v += spec.alpha * mpmath.log(t2 - c * c)
        return v

    # at t = 1 the alpha part is alpha * mean of ln sin^2 = -2 alpha ln 2, done exactly
    edge = -spec.alpha * mpmath.log(2) if at_edge else mpf(0)
    M = 64
    prev = None
    while M <= (1 << 13):
        val = mpmath.fsum(g(2 * mpmath.pi * j / M) for j in range(M)) / M / 2
        if prev is not None and abs(val - prev) <= tol:
            return val + edge
        prev = val
        M *= 2
    # t close to 1: the integrand has a near-logarithmic spike at theta = 0;
    # double-exponential quadrature clusters nodes there
    return mpmath.quad(g, [0, mpmath.pi / 8, mpmath.pi / 2, mpmath.pi]) / (2 * mpmath.pi) + edge


def szego_constants(spec: WeightSpec, ctx: PrecisionContext, V: FourierLogH | None = None,
                    check: bool = True) -> SzegoConstants:
    """D_t(inf) = 2^{-(alpha+beta)} e^{V_0/2} phi(t)^alpha, checked against its integral definition."""
    with ctx.work():
        V = V or fourier_log_h(spec, 0, ctx)
        ph = phi(spec.t)
        lph = mpmath.acosh(spec.t)
        d1 = mpf(2) ** (-spec.mu) * mpmath.exp(V[0] / 2)
        dt = d1 * ph ** spec.alpha
        if check:
            integral = mpf(2) ** (-spec.beta) * mpmath.exp(_szego_integral(spec, ctx))
            if abs(integral - dt) > ctx.tol * 10 ** 4 * dt:
                raise ConsistencyError(
                    f"Szegő constant routes disagree: closed form {mpmath.nstr(dt, 20)} "
                    f"vs integral {mpmath.nstr(integral, 20)}")
        else:
            integral = dt
        return SzegoConstants(+dt, +d1, +ph, +lph, +integral)


def scaling_s(n: int, t) -> mpf:
    """s = 4 n ln phi(t)."""
    t = mpf(t)
    if n < 1 or t < 1:
        raise DomainError("scaling_s needs n >= 1 and t >= 1")
    return 4 * n * mpmath.acosh(t)


def solve_t(n: int, s) -> mpf:
    """Inverse of :func:`scaling_s`: ln phi(t) = arccosh t, so t = cosh(s/(4n))."""
    s = mpf(s)
    if n < 1 or s < 0:
        raise DomainError("solve_t needs n >= 1 and s >= 0")
    return mpmath.cosh(s / (4 * n))


def default_K(ctx: PrecisionContext) -> int:
    return min(512, max(8, math.ceil(ctx.target_digits * 1.2)))
