"""Jimbo-Miwa-Okamoto sigma-form of Painlevé III with the hard-edge boundary data.

sigma_JM solves

    (s s'')^2 + s'(sigma - s s')(4 s' - 1) - c2 s'^2 - c1 s' - c0 = 0,
    c0 = beta^2/16,  c1 = -beta(alpha+beta)/2,  c2 = (alpha+beta)^2,

with sigma ~ beta s/(4(alpha+beta)) + C (s/4)^{1+alpha+beta} at 0.  Forward
integration is exponentially unstable (perturbations grow like e^{2 sqrt(s)}),
so the seed comes from the full convergent small-s expansion and the
integration is a high-order Taylor method at a precision sized to the range.
"""
from __future__ import annotations

import bisect
import logging
import math
import operator
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Sequence

import gmpy2
import mpmath
from mpmath import mp, mpf

from .highprec import DomainError, PjacobiError, PrecisionContext, PrecisionError, to_mpf, to_mpfr

log = logging.getLogger(__name__)

_mul = operator.mul
_fsum = gmpy2.fsum


class UnsupportedParameterError(PjacobiError, ValueError):
    """(alpha, beta) sits on a Gamma pole of the boundary data."""


class SwitchRouteError(PjacobiError):
    """sigma' vanishes inside the span; the third-order equation divides by it."""


class StepFloorError(PjacobiError):
    """The residual monitor rejected steps down to the step-size floor."""


class RangeError(PjacobiError, ValueError):
    """Evaluation outside the integrated range."""


class PoleError(PjacobiError):
    """A Lax variable reached a pole (y at 0 or +-1)."""


def _frac(x) -> Fraction:
    if isinstance(x, Fraction):
        return x
    if isinstance(x, float):
        return Fraction(repr(x))
    if isinstance(x, mpf):
        return Fraction(mpmath.nstr(x, 30, strip_zeros=True))
    return Fraction(str(x))


def _m(q: Fraction) -> mpf:
    return mpf(q.numerator) / q.denominator


def _is_pos_int(q: Fraction) -> bool:
    return q.denominator == 1 and q > 0


@dataclass(frozen=True)
class PIIIParams:
    """Parameters held as exact fractions; real-valued constants are produced at the current precision."""
    alpha: Fraction
    beta: Fraction

    def __post_init__(self):
        object.__setattr__(self, "alpha", _frac(self.alpha))
        object.__setattr__(self, "beta", _frac(self.beta))
        mu = self.alpha + self.beta
        if self.beta <= -1 or mu <= -1:
            raise DomainError("need beta > -1 and alpha + beta > -1")

    def require_small_s(self) -> None:
        """Raise unless the boundary data at s = 0 is defined for these parameters."""
        mu = self.mu
        if _is_pos_int(mu):
            raise UnsupportedParameterError(
                f"alpha+beta={mu} is a positive integer: Gamma(1-alpha-beta) has a pole and the "
                "small-s boundary data is undefined")
        if mu == 0 and self.beta != 0:
            raise UnsupportedParameterError(
                "alpha+beta=0 with beta!=0: the reduced boundary form sigma=s/4+O(s^2) leaves "
                "the residual -beta^2/16 at s=0, so no solution has that behaviour")

    @property
    def mu(self) -> Fraction:
        return self.alpha + self.beta

    @property
    def c0(self) -> mpf:
        return _m(self.beta) ** 2 / 16

    @property
    def c1(self) -> mpf:
        return -_m(self.beta) * _m(self.mu) / 2

    @property
    def c2(self) -> mpf:
        return _m(self.mu) ** 2

    @property
    def C_ab(self) -> mpf:
        """C(alpha, beta); zero when alpha is a positive integer (1/Gamma(1-alpha) = 0)."""
        if self.mu != 0:
            self.require_small_s()
        al, be, mu = _m(self.alpha), _m(self.beta), _m(self.mu)
        if self.mu == 0:
            return mpf(0)
        if self.beta == 0:
            return 1 / (mpmath.gamma(al + 1) * mpmath.gamma(al + 2))
        return al * mpmath.gamma(1 - mu) * mpmath.gamma(be + 1) * mpmath.rgamma(1 - al) / (
            mu * mpmath.gamma(mu + 2) * mpmath.gamma(mu + 1))

    @property
    def C0_ab(self) -> mpf:
        """C0(alpha, beta) = 2^{-2-2mu} Gamma(1-mu) Gamma(beta+1) / (Gamma(1-alpha) Gamma(mu+2) Gamma(mu+1))."""
        self.require_small_s()
        al, be, mu = _m(self.alpha), _m(self.beta), _m(self.mu)
        return mpf(2) ** (-2 - 2 * mu) * mpmath.gamma(1 - mu) * mpmath.gamma(be + 1) * mpmath.rgamma(1 - al) / (
            mpmath.gamma(mu + 2) * mpmath.gamma(mu + 1))

    @property
    def slope0(self) -> mpf:
        """sigma'(0) = beta/(4(alpha+beta)); 1/4 in the alpha+beta=0 case."""
        if self.mu == 0:
            return mpf(1) / 4
        return _m(self.beta) / (4 * _m(self.mu))


@dataclass(frozen=True)
class SigmaState:
    s: mpf
    sigma: mpf
    dsigma: mpf
    d2sigma: mpf
    truncation: mpf | None = None


def sigma_form_residual(state: SigmaState, params: PIIIParams) -> mpf:
    """(s sigma'')^2 + sigma'(sigma - s sigma')(4 sigma' - 1) - c2 sigma'^2 - c1 sigma' - c0."""
    s, y, d1, d2 = mpf(state.s), mpf(state.sigma), mpf(state.dsigma), mpf(state.d2sigma)
    return (s * d2) ** 2 + d1 * (y - s * d1) * (4 * d1 - 1) - params.c2 * d1 ** 2 - params.c1 * d1 - params.c0


def third_derivative(state: SigmaState, params: PIIIParams) -> mpf:
    """sigma''' from 2s^2 s' s''' - s^2 s''^2 + 2 s s' s'' - 8 s s'^3 + (4 sigma + s - c2) s'^2 + c0 = 0."""
    s, y, d1, d2 = mpf(state.s), mpf(state.sigma), mpf(state.dsigma), mpf(state.d2sigma)
    if d1 == 0:
        raise SwitchRouteError("sigma' = 0: the third-order equation is singular here")
    num = s * s * d2 * d2 - 2 * s * d1 * d2 + 8 * s * d1 ** 3 - (4 * y + s - params.c2) * d1 ** 2 - params.c0
    return num / (2 * s * s * d1)


# ---------------------------------------------------------------- small-s series

class SmallSeries:
    """Convergent expansion sigma = a s + sum_f t_f s^f at s = 0.

    The exponents are f = 1 + j + k(alpha+beta).  Writing sigma = a s + tau with
    theta = s d/ds, s^2 times the sigma-form becomes

        (theta(theta-1)tau)^2 - c2 (theta tau)^2 + a(4a-1) s^2 (1-theta)tau
          + (8a-1) s (theta tau)((1-theta)tau) + 4 (theta tau)^2 ((1-theta)tau) = 0,

    and the coefficient of s^{f+1+mu} is linear in t_f with factor
    2 C'(1+mu) mu f (f-1-mu), where C' = C(alpha,beta)/4^{1+mu}.  Processing
    exponents in increasing order determines every t_f.  When C' = 0 (alpha a
    positive integer) the expansion is a power series starting at s^2.
    """

    def __init__(self, params: PIIIParams, bits: int, fmax: int):
        params.require_small_s()
        self.params = params
        self.bits = bits
        self.fmax = fmax
        # the recursion divides by a factor proportional to mu at every level, so
        # small mu loses many bits; rebuild with a larger guard until two builds agree
        guard, prev, prev_guard = 32, None, 0
        while True:
            self.exact = True
            gctx = gmpy2.get_context().copy()
            gctx.precision = bits + guard
            with gmpy2.context(gctx), mp.workprec(bits + guard):
                self._build()
                if not self.exact or not self.coeffs:
                    break
                if prev is None:
                    nxt = 2 * guard
                else:
                    lost = self._bits_lost(prev, bits + prev_guard)
                    if lost <= prev_guard:
                        break
                    nxt = max(2 * guard, lost + 32)
            prev, prev_guard, guard = dict(self.coeffs), guard, nxt
            if guard > 8 * bits:
                raise PrecisionError("small-s expansion coefficients do not settle; lower fmax or the precision")

    def _bits_lost(self, prev: dict, prev_prec: int) -> int:
        """Bits of the earlier build (at prev_prec) that disagree with this one.

        Coefficients are weighted by 0.2^f, the largest s at which the series seeds.
        """
        w = gmpy2.mpfr(1) / 5
        diff = max(abs(v - prev.get(f, 0)) * w ** (gmpy2.mpfr(f.numerator) / f.denominator)
                   for f, v in self.coeffs.items())
        scale = max(abs(self.a) * w, max(abs(v) * w ** (gmpy2.mpfr(f.numerator) / f.denominator)
                                         for f, v in self.coeffs.items()))
        if diff == 0:
            return 0
        return max(0, prev_prec + int(math.ceil(float(gmpy2.log2(diff / scale)))))

    def _build(self):
        p = self.params
        mu_q = p.mu
        muf = gmpy2.mpfr(mu_q.numerator) / mu_q.denominator
        be = gmpy2.mpfr(p.beta.numerator) / p.beta.denominator
        c2 = muf * muf
        a = gmpy2.mpfr(1) / 4 if mu_q == 0 else be / (4 * muf)
        self.a = a
        t: dict[Fraction, gmpy2.mpfr] = {}
        self.coeffs = t
        if mu_q == 0:
            return  # alpha = beta = 0: sigma = s/4 exactly
        Cp = to_mpfr(p.C_ab / mpf(4) ** (1 + _m(mu_q)))
        self.Cprime = Cp
        th, thm, om, Q = {}, {}, {}, {}

        def fl(f: Fraction):
            return gmpy2.mpfr(f.numerator) / f.denominator

        def setc(f, v):
            ff = fl(f)
            t[f] = v
            th[f] = ff * v
            thm[f] = ff * (ff - 1) * v
            om[f] = (1 - ff) * v

        lowest = Fraction(2) if Cp == 0 else 1 + mu_q
        lo3 = 2 * lowest

        def Qc(x):
            v = Q.get(x)
            if v is None:
                v = _fsum([th[f1] * th[x - f1] for f1 in t if (x - f1) in t])
                Q[x] = v
            return v

        k8 = 8 * a - 1
        lin = a * (4 * a - 1)

        def P(E):
            terms = []
            for f1 in list(t):
                f2 = E - f1
                if f2 in t:
                    terms.append(thm[f1] * thm[f2] - c2 * th[f1] * th[f2])
                f2 = E - 1 - f1
                if f2 in t:
                    terms.append(k8 * th[f1] * om[f2])
                x = E - f1
                if x >= lo3:
                    terms.append(4 * Qc(x) * om[f1])
            if (E - 2) in t:
                terms.append(lin * om[E - 2])
            return _fsum(terms)

        self._P = P
        if Cp == 0:
            if p.beta == 0 or p.alpha == 0:
                return  # sigma = a s exactly (a = 1/4 when alpha = 0)
            t2 = lin / (4 * (1 - c2))
            setc(Fraction(2), t2)
            for f in range(3, self.fmax + 1):
                ff = gmpy2.mpfr(f)
                L = 4 * t2 * ff * (ff - 1 - c2) + lin * (1 - ff)
                if abs(L) < gmpy2.mpfr(2) ** (-self.bits // 2):
                    raise UnsupportedParameterError(f"resonant exponent {f} in the small-s expansion")
                setc(Fraction(f), -P(Fraction(f + 2)) / L)
            return
        if not (p.beta == 0 or 0 < mu_q < 1):
            # the ordering argument needs 0 < mu < 1 unless the linear term vanishes (beta = 0)
            self.exact = False
            setc(1 + mu_q, Cp)
            return
        exps = set()
        k = 0
        while 1 + k * mu_q <= self.fmax:
            j = 0
            while 1 + j + k * mu_q <= self.fmax:
                if j or k:
                    exps.add(1 + j + k * mu_q)
                j += 1
            k += 1
        if len(exps) > 20000:
            raise PrecisionError("small-s expansion would need too many exponents; lower the precision")
        setc(1 + mu_q, Cp)
        for f in sorted(exps):
            if f == 1 + mu_q:
                continue
            ff = fl(f)
            L = 2 * Cp * (1 + muf) * muf * ff * (ff - 1 - muf)
            setc(f, -P(f + 1 + mu_q) / L)

    def _powers(self, s):
        return [(f, v, gmpy2.mpfr(f.numerator) / f.denominator) for f, v in self.coeffs.items() if v != 0]

    def eval(self, s, nderiv: int = 3) -> list:
        """[sigma, sigma', ..., sigma^(nderiv)] at s as mpf."""
        gctx = gmpy2.get_context().copy()
        gctx.precision = self.bits
        with gmpy2.context(gctx):
            s = to_mpfr(s)
            out = [self.a * s, self.a] + [gmpy2.mpfr(0)] * (nderiv - 1)
            out = out[:nderiv + 1]
            ls = gmpy2.log(s)
            for f, v, ff in self._powers(s):
                base = v * gmpy2.exp(ff * ls)
                fac = gmpy2.mpfr(1)
                for d in range(nderiv + 1):
                    out[d] += base * fac
                    fac *= (ff - d) / s
            return [to_mpf(x) for x in out]

    def tau_integral(self, tau) -> mpf:
        """int_0^tau sigma(x)/x dx = a tau + sum t_f tau^f / f."""
        gctx = gmpy2.get_context().copy()
        gctx.precision = self.bits
        with gmpy2.context(gctx):
            x = to_mpfr(tau)
            ls = gmpy2.log(x)
            acc = [self.a * x] + [v * gmpy2.exp(ff * ls) / ff for f, v, ff in self._powers(x)]
            return to_mpf(_fsum(acc))

    def truncation(self, s) -> mpf:
        """Size of the highest band of terms at s, a proxy for the truncation error."""
        if not self.exact:
            # next unresolved order of the leading two-term form
            return abs(mpf(s)) ** min(2, 2 + _m(self.params.mu))
        if not self.coeffs:
            return mpf(0)
        gctx = gmpy2.get_context().copy()
        gctx.precision = self.bits
        with gmpy2.context(gctx):
            x = to_mpfr(s)
            ls = gmpy2.log(x)
            top = max(self.coeffs)
            band = [abs(v) * gmpy2.exp(ff * ls) for f, v, ff in self._powers(x) if f > top - 1]
            return to_mpf(max(band) if band else gmpy2.mpfr(0))

    def check_consistency(self, count: int = 40) -> mpf:
        """Largest coefficient of the transformed equation over exponents not used by the recursion."""
        gctx = gmpy2.get_context().copy()
        gctx.precision = self.bits
        with gmpy2.context(gctx):
            ks = sorted(self.coeffs)[:count]
            Es = sorted({f1 + f2 for f1 in ks for f2 in ks})
            lim = min(self.coeffs) + self.fmax - 1 if self.coeffs else 0
            vals = [abs(self._P(E)) for E in Es if E <= lim]
            return to_mpf(max(vals) if vals else gmpy2.mpfr(0))


def series_fmax(params: PIIIParams, digits: int, s0) -> int:
    # terms decay roughly like (s0/3)^f
    rate = max(0.5, math.log10(3.0 / float(s0)))
    return max(12, int(math.ceil(digits / rate)) + 6)


def seed_small_s(params: PIIIParams, s0, ctx: PrecisionContext, *, method: str = "series",
                 s_seed_max=None, series: SmallSeries | None = None) -> SigmaState:
    """sigma, sigma', sigma'' at s0 from the boundary behaviour at 0.

    ``method="leading"`` uses the two displayed terms beta s/(4mu) + C (s/4)^{1+mu}
    (truncation O(s0^{min(2, 2+mu)})); ``method="series"`` uses the full
    convergent expansion of :class:`SmallSeries`.
    """
    params.require_small_s()
    with ctx.work():
        s0 = mpf(s0)
        if method == "leading":
            limit = mpf("1e-3") if s_seed_max is None else mpf(s_seed_max)
            if not 0 < s0 <= limit:
                raise DomainError(f"s0 must lie in (0, {limit}] for the two-term seed")
            mu = _m(params.mu)
            a = params.slope0
            C = params.C_ab
            e = 1 + mu
            q = (s0 / 4) ** e
            sig = a * s0 + C * q
            d1 = a + C * e * q / s0
            d2 = C * e * (e - 1) * q / s0 ** 2
            return SigmaState(s0, sig, d1, d2, abs(s0) ** min(2, 2 + mu))
        if method != "series":
            raise DomainError("method must be 'series' or 'leading'")
        limit = mpf("0.2") if s_seed_max is None else mpf(s_seed_max)
        if not 0 < s0 <= limit:
            raise DomainError(f"s0 must lie in (0, {limit}]")
        if series is None:
            series = SmallSeries(params, ctx.bits, series_fmax(params, ctx.target_digits, s0))
        y, d1, d2 = series.eval(s0, 2)
        return SigmaState(s0, y, d1, d2, series.truncation(s0))


def seed_large_s(params: PIIIParams, s1, ctx: PrecisionContext) -> SigmaState:
    """State from s/4 - (alpha/2) sqrt(s) + (alpha^2+2 alpha beta)/4 - alpha(beta^2-1/4)/(4 sqrt(s))."""
    with ctx.work():
        s1 = mpf(s1)
        if s1 <= 0:
            raise DomainError("s1 must be positive")
        al, be = _m(params.alpha), _m(params.beta)
        r = mpmath.sqrt(s1)
        k = al * (be * be - mpf(1) / 4)
        sig = s1 / 4 - al / 2 * r + (al * al + 2 * al * be) / 4 - k / (4 * r)
        d1 = mpf(1) / 4 - al / (4 * r) + k / (8 * r ** 3)
        d2 = al / (8 * r ** 3) - 3 * k / (16 * r ** 5)
        return SigmaState(s1, sig, d1, d2, 1 / s1)


# ---------------------------------------------------------------- Taylor integrator

def _jet(sc, x0, x1, x2, N: int, c0, c2):
    """Taylor coefficients x_0..x_N of sigma about sc for the third-order equation.

    With D = sigma', E = sigma'', F = sigma''' as series in h = s - sc,
    2 s^2 D F = s^2 E^2 - 2 s D E + 8 s D^3 - (4 sigma + s - c2) D^2 - c0,
    solved order by order for F.
    """
    X = [x0, x1, x2 / 2]
    D = [x1, x2]
    E = [x2]
    W, E2, DE, DW, G, F = [], [], [], [], [], []
    sc2 = sc * sc
    two_sc = 2 * sc
    zero = gmpy2.mpfr(0)

    def s1(P, k):
        return sc * P[k] + (P[k - 1] if k else zero)

    def s2(P, k):
        v = sc2 * P[k]
        if k >= 1:
            v += two_sc * P[k - 1]
        if k >= 2:
            v += P[k - 2]
        return v

    for k in range(N - 2):
        W.append(_fsum(map(_mul, D[:k + 1], reversed(D[:k + 1]))))
        E2.append(_fsum(map(_mul, E[:k + 1], reversed(E[:k + 1]))))
        DE.append(_fsum(map(_mul, D[:k + 1], reversed(E[:k + 1]))))
        DW.append(_fsum(map(_mul, D[:k + 1], reversed(W[:k + 1]))))
        xw = _fsum(map(_mul, X[:k + 1], reversed(W[:k + 1])))
        rhs = s2(E2, k) - 2 * s1(DE, k) + 8 * s1(DW, k) - 4 * xw - s1(W, k) + c2 * W[k]
        if k == 0:
            rhs -= c0
        G.append(2 * s2(D, k))
        acc = _fsum(map(_mul, G[1:k + 1], reversed(F[:k]))) if k else zero
        fk = (rhs - acc) / G[0]
        F.append(fk)
        xn = fk / ((k + 1) * (k + 2) * (k + 3))
        X.append(xn)
        D.append((k + 3) * xn)
        E.append((k + 2) * (k + 3) * xn)
    return X


def _horner(X, h, nderiv: int):
    out = []
    N = len(X) - 1
    for d in range(nderiv + 1):
        acc = gmpy2.mpfr(0)
        for k in range(N, d - 1, -1):
            c = X[k]
            for j in range(d):
                c = c * (k - j)
            acc = acc * h + c
        out.append(acc)
    return out


def required_digits(s_lo, s_hi, tol) -> int:
    """Digits that keep e^{2 sqrt(s)} error growth below tol over [s_lo, s_hi]."""
    grow = 2 * (math.sqrt(float(s_hi)) - math.sqrt(max(float(s_lo), 0.0))) / math.log(10)
    return int(math.ceil(-math.log10(float(tol)) + max(grow, 0.0) + 12))


@dataclass
class _Step:
    sc: object       # expansion point (mpfr)
    h: object        # signed step (mpfr)
    X: list          # Taylor coefficients


@dataclass
class SigmaTrajectory:
    params: PIIIParams
    samples: list
    steps: list = field(repr=False, default_factory=list)
    series: SmallSeries | None = field(repr=False, default=None)
    bits: int = 256
    tol: mpf = mpf("1e-20")
    s_min: mpf = mpf(0)
    s_max: mpf = mpf(0)

    def _step_for(self, s):
        los = self._los
        i = bisect.bisect_right(los, s) - 1
        return self.steps[max(0, min(i, len(self.steps) - 1))]

    def _index(self):
        if getattr(self, "_index_built", None) is not len(self.steps):
            spans = []
            for st in self.steps:
                a, b = st.sc, st.sc + st.h
                spans.append((min(a, b), st))
            spans.sort(key=lambda p: p[0])
            self.steps = [p[1] for p in spans]
            self._los = [p[0] for p in spans]
            self._index_built = len(self.steps)

    def eval(self, s, nderiv: int = 2) -> list:
        """[sigma, sigma', ..., sigma^(nderiv)] at s (mpf) from the dense output or the series."""
        s = mpf(s)
        if s <= 0:
            raise RangeError("sigma_JM is evaluated only for s > 0")
        lo = min(self.s_min, self.s_max)
        hi = max(self.s_min, self.s_max)
        if s < lo:
            if self.series is not None and self.series.exact:
                return self.series.eval(s, nderiv)[:nderiv + 1]
            raise RangeError(f"s={mpmath.nstr(s, 8)} lies below the integrated range")
        if s > hi * (1 + mpf(2) ** (-self.bits // 2)):
            raise RangeError(f"s={mpmath.nstr(s, 8)} lies beyond the integrated range (max {mpmath.nstr(hi, 8)})")
        if not self.steps:
            st = self.samples[0]
            return [st.sigma, st.dsigma, st.d2sigma][:nderiv + 1]
        self._index()
        gctx = gmpy2.get_context().copy()
        gctx.precision = self.bits
        with gmpy2.context(gctx):
            x = to_mpfr(s)
            st = self._step_for(x)
            vals = _horner(st.X, x - st.sc, nderiv)
            return [to_mpf(v) for v in vals]

    def __call__(self, s) -> mpf:
        return self.eval(s, 0)[0]

    def state(self, s) -> SigmaState:
        y, d1, d2 = self.eval(s, 2)
        return SigmaState(mpf(s), y, d1, d2)

    def residual(self, s) -> mpf:
        with mp.workprec(self.bits):
            return sigma_form_residual(self.state(s), self.params)

    @property
    def max_residual(self) -> mpf:
        return max(abs(r) for _, r in self.residuals)

    @property
    def residuals(self) -> list:
        """(s, residual) at every accepted step end."""
        with mp.workprec(self.bits):
            return [(st.s, sigma_form_residual(st, self.params)) for st in self.samples]


def integrate_sigma(params: PIIIParams, seed: SigmaState, s_target, tol, ctx: PrecisionContext, *,
                    series: SmallSeries | None = None, floor_rel=mpf("1e-12"),
                    keep_steps: bool = True) -> SigmaTrajectory:
    """Taylor-series integration of the third-order equation from ``seed`` to ``s_target`` (either direction).

    Every accepted step is checked with the sigma-form residual; a step whose
    end state violates ``tol`` is halved down to ``floor_rel * s``.
    """
    tol = mpf(tol)
    with ctx.work():
        s_target = mpf(s_target)
        if s_target <= 0:
            raise DomainError("s_target must be positive")
        res0 = sigma_form_residual(seed, params)
        if abs(res0) > tol:
            raise PrecisionError(f"seed residual {mpmath.nstr(res0, 5)} exceeds tol {mpmath.nstr(tol, 5)}")
        digits = ctx.target_digits
        N = max(16, int(math.ceil(digits * math.log(10) / 2)) + 4)
        c0, c2 = to_mpfr(params.c0), to_mpfr(params.c2)
        c1 = to_mpfr(params.c1)
        s = to_mpfr(seed.s)
        y, d1, d2 = to_mpfr(seed.sigma), to_mpfr(seed.dsigma), to_mpfr(seed.d2sigma)
        tgt = to_mpfr(s_target)
        direction = 1 if tgt > s else -1
        e2 = gmpy2.exp(gmpy2.mpfr(2))
        floor_rel = to_mpfr(floor_rel)
        tolg = to_mpfr(tol)
        samples = [SigmaState(seed.s, seed.sigma, seed.dsigma, seed.d2sigma)]
        steps = []
        slope_scale = max(abs(d1), gmpy2.mpfr("1e-3"))
        while (tgt - s) * direction > 0:
            if abs(d1) < slope_scale * gmpy2.mpfr(2) ** (-ctx.bits // 3):
                raise SwitchRouteError(
                    f"sigma' vanishes at s={float(s):.6g}; integrate this stretch with the Lax system")
            X = _jet(s, y, d1, d2, N, c0, c2)
            M = max(abs(X[0]), abs(X[1]) * abs(s), gmpy2.mpfr(1))
            rho = None
            for k in (N - 1, N):
                if X[k] != 0:
                    r = (M / abs(X[k])) ** (gmpy2.mpfr(1) / k)
                    rho = r if rho is None else min(rho, r)
            h = abs(tgt - s) if rho is None else min(rho / e2, abs(tgt - s))
            if direction < 0:
                h = min(h, s / 2)
            h = direction * h
            # do not land where sigma' is nearly zero: the next expansion would divide by it
            for _ in range(30):
                if s + h == tgt:
                    break
                dh = _horner(X, h, 1)[1]
                if abs(dh) > slope_scale * gmpy2.mpfr("1e-2"):
                    break
                h = h * gmpy2.mpfr("0.7")
            while True:
                ny, nd1, nd2 = _horner(X, h, 2)
                ns = s + h
                res = (ns * nd2) ** 2 + nd1 * (ny - ns * nd1) * (4 * nd1 - 1) - c2 * nd1 ** 2 - c1 * nd1 - c0
                if abs(res) <= tolg:
                    break
                h = h / 2
                if abs(h) < floor_rel * abs(s):
                    raise StepFloorError(
                        f"residual {float(res):.3g} above tol at s={float(s):.6g} with the step at its floor; "
                        "raise the working precision")
            if keep_steps:
                steps.append(_Step(s, h, X))
            s, y, d1, d2 = ns, ny, nd1, nd2
            slope_scale = max(slope_scale, abs(d1) * gmpy2.mpfr("1e-3"))
            samples.append(SigmaState(to_mpf(s), to_mpf(y), to_mpf(d1), to_mpf(d2)))
        if direction < 0:
            samples.reverse()
        return SigmaTrajectory(params, samples, steps, series, ctx.bits, tol,
                               s_min=mpf(seed.s), s_max=s_target)


def solve_sigma(params: PIIIParams, s_max, tol="1e-20", *, s_seed=None, digits: int | None = None,
                min_bits: int = 0) -> SigmaTrajectory:
    """Seed from the small-s expansion and integrate to s_max at a precision sized for the range."""
    tol = mpf(tol)
    s_seed = "0.05" if s_seed is None else s_seed
    if digits is None:
        digits = required_digits(mpf(s_seed), s_max, tol)
    ctx = PrecisionContext.from_digits(digits, min_bits)
    with ctx.work():
        s_seed = mpf(s_seed)
        series = SmallSeries(params, ctx.bits, series_fmax(params, digits, s_seed))
        if not series.exact:
            log.warning("small-s expansion for (alpha, beta)=(%s, %s) is limited to its two leading terms; "
                        "trajectory accuracy is set by the seed truncation", params.alpha, params.beta)
            seed = seed_small_s(params, min(s_seed, mpf("1e-3")), ctx, method="leading")
            seed_tol = max(tol, abs(sigma_form_residual(seed, params)) * 2)
            return integrate_sigma(params, seed, s_max, seed_tol, ctx, series=series)
        seed = seed_small_s(params, s_seed, ctx, series=series)
        return integrate_sigma(params, seed, s_max, tol, ctx, series=series)


# ---------------------------------------------------------------- transformation to q, u and the Lax variables

@dataclass(frozen=True)
class QData:
    q: mpf
    dq: mpf
    d2q: mpf
    d3q: mpf

    def q_over_s_prime(self, s) -> mpf:
        s = mpf(s)
        return self.dq / s - self.q / (s * s)


def q_derivatives(traj: SigmaTrajectory, s) -> QData:
    """q(s) = 4 sigma_JM(s^2/16) - s^2/16 - c2 + 1/4 and its first three derivatives."""
    s = mpf(s)
    tau = s * s / 16
    S0, S1, S2, S3 = _sigma_jm_derivs(traj, tau)
    c2 = traj.params.c2
    q = 4 * S0 - tau - c2 + mpf(1) / 4
    q1 = s / 2 * S1 - s / 8
    q2 = S1 / 2 + tau * S2 - mpf(1) / 8
    q3 = 3 * s / 16 * S2 + s ** 3 / 128 * S3
    return QData(q, q1, q2, q3)


def _sigma_jm_derivs(traj: SigmaTrajectory, tau):
    vals = traj.eval(tau, 3)
    if len(vals) < 4:
        st = SigmaState(mpf(tau), *vals[:3])
        vals = list(vals[:3]) + [third_derivative(st, traj.params)]
    return vals


def q_from_sigma(traj: SigmaTrajectory, s):
    """(q(s), (q/s)'(s))."""
    qd = q_derivatives(traj, s)
    return qd.q, qd.q_over_s_prime(s)


def u_from_q(traj: SigmaTrajectory, s) -> mpf:
    """u = (beta/4 - 1/8 - q'')/(2q' + s/4)."""
    s = mpf(s)
    qd = q_derivatives(traj, s)
    den = 2 * qd.dq + s / 4
    if abs(den) < mpf(2) ** (-mp.prec // 2):
        raise PrecisionError(f"2q' + s/4 vanishes near s={mpmath.nstr(s, 8)}")
    return (_m(traj.params.beta) / 4 - mpf(1) / 8 - qd.d2q) / den


@dataclass(frozen=True)
class LaxState:
    s: mpf
    y: mpf
    b: mpf
    v: mpf

    def sigma(self, params: PIIIParams) -> mpf:
        return (self.b - _m(params.alpha) / 2) * self.s - self.v ** 2


@dataclass(frozen=True)
class LaxFromSigma:
    state: LaxState
    u: mpf
    du: mpf
    sigma: mpf


def lax_from_sigma(traj: SigmaTrajectory, s) -> LaxFromSigma:
    """y, b, v = s u and sigma = q + s u recovered from sigma_JM through q.

    b = sigma' + alpha/2 with sigma' = q' + (s u)', and y follows from
    v = b/y - (b-alpha) y + beta - 1/2 together with 2v' = b/y + y(b-alpha):
    y = 2b/(v + 2v' - beta + 1/2).
    """
    s = mpf(s)
    p = traj.params
    al, be = _m(p.alpha), _m(p.beta)
    qd = q_derivatives(traj, s)
    den = 2 * qd.dq + s / 4
    num = be / 4 - mpf(1) / 8 - qd.d2q
    u = num / den
    du = (-qd.d3q * den - num * (2 * qd.d2q + mpf(1) / 4)) / den ** 2
    v = s * u
    dv = u + s * du
    b = qd.dq + dv + al / 2
    y = 2 * b / (v + 2 * dv - be + mpf(1) / 2)
    return LaxFromSigma(LaxState(s, y, b, v), u, du, qd.q + v)


def lax_rhs(params: PIIIParams) -> Callable:
    al, be = _m(params.alpha), _m(params.beta)
    half = mpf(1) / 2

    def f(s, Y):
        y, b, v = Y
        y2m = y * y - 1
        dy = (-s * y / 2 + b * y2m ** 2 / y - al * y2m * y - (be - half) * y2m) / s
        dv = (b / y + y * (b - al)) / 2
        db = 2 * v * dv / s
        return [dy, db, dv]
    return f


@dataclass
class LaxTrajectory:
    params: PIIIParams
    seed: LaxState
    solution: Callable = field(repr=False)
    s_target: mpf = mpf(0)

    def at(self, s) -> LaxState:
        s = mpf(s)
        lo, hi = sorted([self.seed.s, self.s_target])
        if not lo <= s <= hi:
            raise RangeError("requested point outside the Lax integration range")
        if s == self.seed.s:
            return self.seed
        y, b, v = self.solution(s)
        return LaxState(s, y, b, v)

    def sigma(self, s) -> mpf:
        return self.at(s).sigma(self.params)


def lax_seed_large_s(params: PIIIParams, s, sign: int = 1) -> LaxState:
    """y ~ sign (2 beta - 1)/s, b ~ 4 alpha (beta-1/2)^2/s^2, v ~ (beta-1/2) + 4 alpha (beta-1/2)/s."""
    s = mpf(s)
    al, be = _m(params.alpha), _m(params.beta)
    return LaxState(s, sign * (2 * be - 1) / s, 4 * al * (be - mpf(1) / 2) ** 2 / s ** 2,
                    (be - mpf(1) / 2) + 4 * al * (be - mpf(1) / 2) / s)


def integrate_lax(params: PIIIParams, seed: LaxState, s_target, tol, ctx: PrecisionContext,
                  monitor_points: int = 16) -> LaxTrajectory:
    """Integrate y' = [-sy/2 + b(y^2-1)^2/y - alpha(y^2-1)y - (beta-1/2)(y^2-1)]/s,
    v' = (b/y + y(b-alpha))/2, b' = 2 v v'/s from ``seed``.

    The b' law follows from differentiating sigma = (b - alpha/2) s - v^2 and
    using sigma' = b - alpha/2.  The solution is monitored on a grid for y
    reaching +-1, or reaching 0 while b stays away from 0 (b/y is finite where
    both vanish together).
    """
    with ctx.work():
        s_target = mpf(s_target)
        if seed.s <= 0 or s_target <= 0:
            raise DomainError("the Lax system is integrated on s > 0")
        sol = mpmath.odefun(lax_rhs(params), seed.s, [seed.y, seed.b, seed.v], tol=mpf(tol) / 100)
        traj = LaxTrajectory(params, seed, sol, s_target)
        prev = seed
        step = (s_target - seed.s) / monitor_points
        for j in range(1, monitor_points + 1):
            cur = traj.at(seed.s + step * j)
            for pole in (1, -1):
                if (prev.y - pole) * (cur.y - pole) <= 0:
                    raise PoleError(f"y reaches {pole} between s={mpmath.nstr(prev.s, 6)} and s={mpmath.nstr(cur.s, 6)}")
            # y and b vanishing together is a removable point of the system; y alone is a pole
            if prev.y * cur.y <= 0 and prev.b * cur.b > 0:
                raise PoleError(f"y reaches 0 between s={mpmath.nstr(prev.s, 6)} and s={mpmath.nstr(cur.s, 6)}")
            prev = cur
        return traj


def sigma_integral(traj: SigmaTrajectory, S, ctx: PrecisionContext, tau_switch="1e-3",
                   with_error: bool = False):
    """int_0^S sigma_JM(x^2/16)/x dx = (1/2) int_0^{S^2/16} sigma_JM(tau)/tau d tau.

    Below tau_switch the small-s expansion is integrated term by term; above it
    the dense output is integrated with double-exponential quadrature split at
    the integrator's step boundaries.
    """
    with ctx.work():
        S = mpf(S)
        if S <= 0:
            raise DomainError("S must be positive")
        top = S * S / 16
        hi = max(traj.s_min, traj.s_max)
        if top > hi * (1 + mpf(2) ** (-ctx.bits // 2)):
            raise RangeError(f"S^2/16={mpmath.nstr(top, 8)} exceeds the integrated range {mpmath.nstr(hi, 8)}")
        ts = min(mpf(tau_switch), top)
        series = traj.series
        if series is None or not series.exact:
            raise RangeError("sigma_integral needs the exact small-s expansion attached to the trajectory")
        head = series.tau_integral(ts)
        err = series.truncation(ts)
        tail = mpf(0)
        if top > ts:
            pts = [ts]
            traj._index() if traj.steps else None
            for st in traj.steps:
                for edge in (st.sc, st.sc + st.h):
                    e = to_mpf(edge)
                    if ts < e < top:
                        pts.append(e)
            pts = sorted(set(pts)) + [top]
            tail, qerr = mpmath.quad(lambda x: traj(x) / x, pts, error=True)
            err += qerr
        val = (head + tail) / 2
        return (val, err / 2) if with_error else val


@dataclass(frozen=True)
class LargeSFit:
    sqrt_coeff: mpf
    constant: mpf
    coeffs: tuple
    max_abs_residual: mpf


def large_s_fit(traj: SigmaTrajectory, s_lo, s_hi, points: int = 40, terms: int = 6) -> LargeSFit:
    """Least-squares fit of sigma - s/4 to A sqrt(s) + c + sum_j d_j s^{-j/2} on [s_lo, s_hi].

    Sample points are geometric in s.
    """
    with mp.workprec(traj.bits):
        s_lo, s_hi = mpf(s_lo), mpf(s_hi)
        if not 0 < s_lo < s_hi:
            raise DomainError("need 0 < s_lo < s_hi")
        ss = [s_lo * (s_hi / s_lo) ** (mpf(j) / (points - 1)) for j in range(points)]
        rows = [[mpmath.sqrt(s) ** (1 - k) for k in range(terms)] for s in ss]
        rhs = [traj(s) - s / 4 for s in ss]
        A = mpmath.matrix(rows)
        coef, _ = mpmath.qr_solve(A, mpmath.matrix(rhs))
        fitted = A * coef
        res = max(abs(fitted[i] - rhs[i]) for i in range(points))
        return LargeSFit(coef[0], coef[1], tuple(coef), res)
