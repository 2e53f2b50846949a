"""Exact finite-n side: quadrature, moments, recurrence coefficients, Hankel determinants.

The measure w(x;t) dx is discretized by a composite rule on [0, 1] (the weight
is even): a Gauss-Jacobi panel absorbs the (1-x)^beta endpoint factor and
geometrically graded Gauss-Legendre panels resolve the boundary layer of
(t-x)^alpha when t is close to 1.  Recurrence coefficients then come from the
Stieltjes procedure on that discrete measure.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import gmpy2
import mpmath
import numpy as np
from mpmath import mp, mpf
from scipy.linalg import eigh_tridiagonal

from .highprec import DomainError, PjacobiError, PrecisionContext, PrecisionError, to_mpf, to_mpfr
from .weight import WeightSpec

NODE_CAP = 1 << 16


class EigenError(PjacobiError):
    """Newton refinement of a Golub-Welsch node failed to converge."""


@dataclass(frozen=True)
class QuadratureRule:
    nodes: tuple
    weights: tuple
    jacobi_exponent: mpf

    def __len__(self) -> int:
        return len(self.nodes)

    def integrate(self, f) -> mpf:
        return mpmath.fsum(w * f(x) for x, w in zip(self.nodes, self.weights))


def _jacobi_coeffs(a: mpf, b: mpf, M: int):
    """Monic recurrence (diag alpha_k, offdiag beta_k) for (1-x)^a (1+x)^b on [-1, 1]."""
    diag, off = [], []
    for k in range(M):
        s = 2 * k + a + b
        if k == 0:
            diag.append((b - a) / (a + b + 2))
        else:
            diag.append((b * b - a * a) / (s * (s + 2)))
    for k in range(1, M):
        s = 2 * k + a + b
        if k == 1:
            off.append(4 * (1 + a) * (1 + b) / ((2 + a + b) ** 2 * (3 + a + b)))
        else:
            off.append(4 * k * (k + a) * (k + b) * (k + a + b) / (s * s * (s + 1) * (s - 1)))
    mu0 = mpf(2) ** (a + b + 1) * mpmath.gamma(a + 1) * mpmath.gamma(b + 1) / mpmath.gamma(a + b + 2)
    return diag, off, mu0


def _orthonormal_values(x, diag, sqoff, p0, M):
    # p_0..p_M (orthonormal) and p_M' in gmpy2 arithmetic; also sum_{k<M} p_k^2
    p_prev, p = gmpy2.mpfr(0), p0
    d_prev, d = gmpy2.mpfr(0), gmpy2.mpfr(0)
    ssum = p * p
    for k in range(M):
        t = x - diag[k]
        if k:
            nxt = (t * p - sqoff[k - 1] * p_prev) / sqoff[k]
            dnx = (p + t * d - sqoff[k - 1] * d_prev) / sqoff[k]
        else:
            nxt = t * p / sqoff[0]
            dnx = (p + t * d) / sqoff[0]
        p_prev, p = p, nxt
        d_prev, d = d, dnx
        if k < M - 1:
            ssum += p * p
    return p, d, ssum


@lru_cache(maxsize=64)
def _jacobi_rule_cached(a_str: str, b_str: str, M: int, bits: int):
    work = bits + 20
    with mp.workprec(work), gmpy2.context(gmpy2.get_context(), precision=work):
        a, b = mpf(a_str), mpf(b_str)
        diag, off, mu0 = _jacobi_coeffs(a, b, M)
        x0 = eigh_tridiagonal(np.array([float(v) for v in diag]),
                              np.array([float(mpmath.sqrt(v)) for v in off]),
                              eigvals_only=True)
        # the M-th off-diagonal only scales p_M, which does not move its roots
        gdiag = [to_mpfr(v) for v in diag]
        gsq = [gmpy2.sqrt(to_mpfr(v)) for v in off] + [gmpy2.mpfr(1)]
        p0 = 1 / gmpy2.sqrt(to_mpfr(mu0))
        eps = gmpy2.mpfr(2) ** (-bits)
        half_eps = gmpy2.mpfr(2) ** (-(bits // 2) - 10)
        symmetric = a == b
        guesses = sorted(x0)
        if symmetric:
            # nodes come in +-x pairs; polish x >= 0 and mirror
            guesses = [xf for xf in guesses if xf >= 0] if M % 2 == 0 else \
                [0.0] + [xf for xf in guesses if xf > 0][-(M // 2):] if M > 1 else [0.0]
        nodes, weights = [], []
        for xf in guesses:
            x = gmpy2.mpfr(0) if (symmetric and xf == 0.0) else gmpy2.mpfr(float(xf))
            for _ in range(200):
                p, d, ssum = _orthonormal_values(x, gdiag, gsq, p0, M)
                dx = p / d
                x -= dx
                if abs(dx) <= eps * 4:
                    break
                if abs(dx) <= half_eps * max(abs(x), 1):
                    # quadratic convergence: one more step lands at working precision
                    p, d, ssum = _orthonormal_values(x, gdiag, gsq, p0, M)
                    x -= p / d
                    break
            else:
                raise EigenError(f"Newton refinement stalled at node {xf} (M={M}, a={a_str}, b={b_str})")
            nodes.append(to_mpf(x))
            weights.append(to_mpf(1 / ssum))
        if symmetric:
            pos = [(xv, wv) for xv, wv in zip(nodes, weights) if xv > 0]
            mid = [(xv, wv) for xv, wv in zip(nodes, weights) if xv == 0]
            full = [(-xv, wv) for xv, wv in reversed(pos)] + mid + pos
            nodes, weights = [v[0] for v in full], [v[1] for v in full]
    with mp.workprec(bits):
        return tuple(+x for x in nodes), tuple(+w for w in weights)


def jacobi_rule(a, b, M: int, ctx: PrecisionContext) -> QuadratureRule:
    """M-point Gauss rule for (1-x)^a (1+x)^b dx on (-1, 1)."""
    a, b = mpf(a), mpf(b)
    if a <= -1 or b <= -1 or M < 1:
        raise DomainError("jacobi_rule needs a, b > -1 and M >= 1")
    with ctx.work():
        nodes, weights = _jacobi_rule_cached(mpmath.nstr(a, 40), mpmath.nstr(b, 40), M, ctx.bits)
    return QuadratureRule(nodes, weights, a)


def gauss_jacobi_rule(beta, M: int, ctx: PrecisionContext) -> QuadratureRule:
    """M-point rule for (1-x^2)^beta dx on (-1, 1)."""
    return jacobi_rule(beta, beta, M, ctx)


def _panels(L: mpf):
    """Breakpoints 1, 1-L, 1-3L, 1-7L, ... on [0, 1]: panel j has length 2^j L,
    equal to its distance from x = 1 + L."""
    pts = [mpf(1)]
    j = 0
    while True:
        nxt = 1 - (2 ** (j + 1) - 1) * L
        if nxt <= mpf(1) / 2:
            break
        pts.append(nxt)
        j += 1
    pts.append(mpf(0))
    return pts


def half_line_rule(spec: WeightSpec, m: int, ctx: PrecisionContext):
    """Composite rule on (0, 1) such that int_{-1}^{1} f w = sum W_i [f(x_i) + f(-x_i)] for smooth f.

    Returns (nodes, weights) with the full weight w(x;t) folded into the weights.
    """
    with ctx.work():
        beta, alpha, t = spec.beta, spec.alpha, spec.t
        delta = t - 1
        nodes, weights = [], []
        if delta == 0 or alpha == 0:
            # (1-x)^(alpha+beta) is the only singular factor; one endpoint panel suffices
            e = beta + alpha if delta == 0 else beta
            gj = jacobi_rule(e, 0, m, ctx)
            for u, wq in zip(gj.nodes, gj.weights):
                x = (1 + u) / 2
                g = (1 + x) ** e * spec.h(x)
                if delta != 0:
                    g *= (t * t - x * x) ** alpha
                nodes.append(x)
                weights.append(wq * mpf(2) ** (-e - 1) * g)
            return nodes, weights
        pts = _panels(min(delta, mpf(1) / 2))
        gl = jacobi_rule(0, 0, m, ctx)
        gj = jacobi_rule(beta, 0, m, ctx)
        for j in range(len(pts) - 1):
            hi, lo = pts[j], pts[j + 1]
            half = (hi - lo) / 2
            mid = (hi + lo) / 2
            if j == 0:
                for u, wq in zip(gj.nodes, gj.weights):
                    x = mid + half * u
                    g = (1 + x) ** beta * (t * t - x * x) ** alpha * spec.h(x)
                    nodes.append(x)
                    weights.append(wq * half ** (beta + 1) * g)
            else:
                for u, wq in zip(gl.nodes, gl.weights):
                    x = mid + half * u
                    nodes.append(x)
                    weights.append(wq * half * (1 - x * x) ** beta * (t * t - x * x) ** alpha * spec.h(x))
        return nodes, weights


@dataclass(frozen=True)
class MomentTable:
    mu: tuple

    def __getitem__(self, i: int) -> mpf:
        return self.mu[i]

    def __len__(self) -> int:
        return len(self.mu)


@dataclass(frozen=True)
class RecurrenceTable:
    n_max: int
    h: tuple
    b2: tuple
    gamma: tuple
    nodes_used: int = 0


@dataclass(frozen=True)
class HankelResult:
    n: int
    log_Dn: mpf


def default_bits(n: int) -> int:
    return max(256, 10 * n)


def _panel_order(ctx: PrecisionContext, n: int) -> int:
    # geometric grading gives Bernstein parameter 3+sqrt(8) per panel;
    # the polynomial part of the integrand has degree up to 2n
    return int(math.ceil(ctx.bits * math.log(2) / (2 * math.log(3 + math.sqrt(8))))) + n + 8


def moments(spec: WeightSpec, count: int, ctx: PrecisionContext) -> MomentTable:
    """mu_0..mu_count; odd moments are exact zeros."""
    if count < 0:
        raise DomainError("count must be non-negative")
    m = _panel_order(ctx, count // 2 + 1)
    prev = None
    with ctx.work():
        tol = ctx.tol
        while True:
            xs, ws = half_line_rule(spec, m, ctx)
            if len(xs) > NODE_CAP:
                raise PrecisionError("moments did not stabilize within the node cap; raise bits or relax tolerance")
            mu = []
            for i in range(count + 1):
                if i % 2:
                    mu.append(mpf(0))
                else:
                    mu.append(2 * mpmath.fsum(w * x ** i for x, w in zip(xs, ws)))
            if prev is not None and all(abs(a - b) <= tol * abs(b) for a, b in zip(mu, prev)):
                return MomentTable(tuple(mu))
            prev = mu
            m *= 2


def _stieltjes_even(xs, ws, n: int):
    """h_0..h_n for the symmetric discrete measure sum W_i [delta(x-x_i) + delta(x+x_i)]."""
    gx = [to_mpfr(v) for v in xs]
    gw = [to_mpfr(v) for v in ws]
    zero = gmpy2.mpfr(0)
    p_prev = [zero] * len(gx)
    p = [gmpy2.mpfr(1)] * len(gx)
    h = []
    for k in range(n + 1):
        hk = 2 * gmpy2.fsum(map(lambda w, v: w * v * v, gw, p))
        if not hk > 0:
            raise PrecisionError(f"loss of positivity in h_{k}; raise precision")
        h.append(hk)
        if k == n:
            break
        b2 = hk / h[k - 1] if k else zero
        p_prev, p = p, [x * a - b2 * c for x, a, c in zip(gx, p, p_prev)]
    return [to_mpf(v) for v in h]


def stieltjes_recurrence(spec: WeightSpec, n: int, ctx: PrecisionContext,
                         m: int | None = None) -> RecurrenceTable:
    """h_0..h_n, b2_0..b2_{n-1}, gamma_0..gamma_n for the weight.

    The panel order is doubled until every b2_k agrees between two successive
    discretizations to the context tolerance.
    """
    if n < 1:
        raise DomainError("n must be >= 1")
    m = m or _panel_order(ctx, n)
    prev = None
    with ctx.work():
        tol = ctx.tol
        while True:
            xs, ws = half_line_rule(spec, m, ctx)
            if 2 * len(xs) < 4 * n + 256:
                m = max(m + 1, (4 * n + 256) // (2 * max(1, len(xs) // m)) + 1)
                continue
            if 2 * len(xs) > NODE_CAP:
                raise PrecisionError(
                    "recurrence coefficients did not stabilize within 2^16 nodes; "
                    "increase bits or move t away from 1")
            h = _stieltjes_even(xs, ws, n)
            b2 = [h[k + 1] / h[k] for k in range(n)]
            if prev is not None and all(abs(a - b) <= tol * b for a, b in zip(b2, prev[1])) \
                    and abs(h[0] - prev[0][0]) <= tol * h[0]:
                gam = [1 / mpmath.sqrt(v) for v in h]
                return RecurrenceTable(n, tuple(h), tuple(b2), tuple(gam), 2 * len(xs))
            prev = (h, b2)
            m *= 2


def hankel_log_det(rec: RecurrenceTable, n: int) -> HankelResult:
    """ln D_n = sum_{k<n} ln h_k (D_0 = 1)."""
    if n > rec.n_max + 1 or n < 0:
        raise DomainError(f"n={n} exceeds the recurrence table (n_max={rec.n_max})")
    return HankelResult(n, mpmath.fsum(mpmath.log(v) for v in rec.h[:n]))


def hankel_det_direct(mom: MomentTable, n: int, ctx: PrecisionContext) -> mpf:
    """det(mu_{j+k})_{j,k<n} by partial-pivot elimination at four times the working precision."""
    if n > 12:
        raise DomainError("direct Hankel determinants are refused for n > 12 (use hankel_log_det)")
    if len(mom) < 2 * n - 1:
        raise DomainError(f"need {2 * n - 1} moments for n={n}")
    if n == 0:
        return mpf(1)
    with mp.workprec(4 * ctx.bits):
        A = [[mpf(mom[j + k]) for k in range(n)] for j in range(n)]
        det = mpf(1)
        for c in range(n):
            piv = max(range(c, n), key=lambda r: abs(A[r][c]))
            if A[piv][c] == 0:
                return mpf(0)
            if piv != c:
                A[c], A[piv] = A[piv], A[c]
                det = -det
            det *= A[c][c]
            for r in range(c + 1, n):
                f = A[r][c] / A[c][c]
                if f:
                    for k in range(c, n):
                        A[r][k] -= f * A[c][k]
    with ctx.work():
        return +det


# ---- truncated interval (largest-eigenvalue distribution) ----

def truncated_jacobi_rule(alpha, c, m: int, ctx: PrecisionContext):
    """Composite rule for (1-x^2)^alpha dx on (-1, c), c < 1.

    The left endpoint carries the Jacobi singularity; panels are graded toward c
    because (1-x)^alpha is singular a distance 1-c beyond it.
    """
    with ctx.work():
        alpha, c = mpf(alpha), mpf(c)
        if not -1 < c < 1:
            raise DomainError("truncation point must lie in (-1, 1)")
        delta = 1 - c
        nodes, weights = [], []
        left = min(mpf(0), c - delta)
        gj = jacobi_rule(0, alpha, m, ctx)
        half = (left + 1) / 2
        for u, wq in zip(gj.nodes, gj.weights):
            x = left - half * (1 - u)
            nodes.append(x)
            weights.append(wq * half ** (alpha + 1) * (1 - x) ** alpha)
        # graded panels on (left, c): breakpoints c - (2^j - 1) delta
        pts = [c]
        j = 0
        while True:
            nxt = c - (2 ** (j + 1) - 1) * delta
            if nxt <= left + (c - left) / 4:
                break
            pts.append(nxt)
            j += 1
        pts.append(left)
        gl = jacobi_rule(0, 0, m, ctx)
        for i in range(len(pts) - 1):
            hi, lo = pts[i], pts[i + 1]
            hh, mid = (hi - lo) / 2, (hi + lo) / 2
            for u, wq in zip(gl.nodes, gl.weights):
                x = mid + hh * u
                nodes.append(x)
                weights.append(wq * hh * (1 - x * x) ** alpha)
        return nodes, weights


def stieltjes_general(xs, ws, n: int):
    """Stieltjes procedure with diagonal terms; returns (a_k, b2_k, h_k) for k < n (h up to n)."""
    gx = [to_mpfr(v) for v in xs]
    gw = [to_mpfr(v) for v in ws]
    zero = gmpy2.mpfr(0)
    p_prev = [zero] * len(gx)
    p = [gmpy2.mpfr(1)] * len(gx)
    h, a, b2 = [], [], []
    for k in range(n + 1):
        wp2 = [w * v * v for w, v in zip(gw, p)]
        hk = gmpy2.fsum(wp2)
        if not hk > 0:
            raise PrecisionError(f"loss of positivity in h_{k} on the truncated measure")
        h.append(hk)
        if k == n:
            break
        ak = gmpy2.fsum(map(lambda x, q: x * q, gx, wp2)) / hk
        bk = hk / h[k - 1] if k else zero
        a.append(ak)
        b2.append(bk)
        p_prev, p = p, [(x - ak) * u - bk * v for x, u, v in zip(gx, p, p_prev)]
    return [to_mpf(v) for v in a], [to_mpf(v) for v in b2[1:]], [to_mpf(v) for v in h]
