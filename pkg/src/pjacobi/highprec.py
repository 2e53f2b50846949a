"""Arbitrary-precision plumbing and the special functions used by the asymptotic formulas.

Everything returns mpmath ``mpf`` values computed at the precision carried by a
:class:`PrecisionContext`.  Special-function outputs are logarithms; callers
exponentiate only at the very end.
"""
from __future__ import annotations

import math
from contextlib import contextmanager
from dataclasses import dataclass

import gmpy2
import mpmath
from mpmath import mp, mpf


class PjacobiError(Exception):
    """Base class for library errors."""


class DomainError(PjacobiError, ValueError):
    """Argument outside the mathematical domain of an operation."""


class PrecisionError(PjacobiError, ArithmeticError):
    """Working precision or node budget is insufficient for the requested accuracy."""


@dataclass(frozen=True)
class PrecisionContext:
    bits: int
    target_digits: int

    def __post_init__(self):
        if self.target_digits < 1:
            raise DomainError("target_digits must be positive")
        need = max(64, math.ceil(3.33 * self.target_digits) + 32)
        if self.bits < need:
            raise DomainError(f"{self.bits} bits cannot carry {self.target_digits} digits (need >= {need})")

    @classmethod
    def from_digits(cls, digits: int, bits: int | None = None) -> "PrecisionContext":
        need = max(64, math.ceil(3.33 * digits) + 32)
        return cls(max(need, bits or 0), digits)

    @classmethod
    def from_bits(cls, bits: int) -> "PrecisionContext":
        return cls(bits, max(1, int((bits - 32) / 3.33)))

    @property
    def tol(self) -> mpf:
        with mp.workprec(self.bits):
            return mpf(10) ** (-self.target_digits)

    def doubled(self) -> "PrecisionContext":
        return PrecisionContext(2 * self.bits, self.target_digits)

    @contextmanager
    def work(self):
        """Run a block at this context's binary precision (mpmath and gmpy2)."""
        gctx = gmpy2.get_context().copy()
        gctx.precision = self.bits
        with mp.workprec(self.bits), gmpy2.context(gctx):
            yield


def to_mpf(x) -> mpf:
    """Exact conversion of a gmpy2 ``mpfr`` (or anything mpmath accepts) to ``mpf``."""
    if isinstance(x, type(gmpy2.mpfr(0))):
        if gmpy2.is_zero(x):
            return mpf(0)
        m, e = x.as_mantissa_exp()
        return mpf((int(m), int(e)))
    return mpf(x)


def to_mpfr(x):
    """Conversion of an ``mpf`` to gmpy2 ``mpfr`` at the current gmpy2 precision."""
    sign, man, exp, _ = mpf(x)._mpf_
    if not man:
        return gmpy2.mpfr(mpmath.nstr(mpf(x), 5)) if exp else gmpy2.mpfr(0)
    v = gmpy2.mul_2exp(gmpy2.mpfr(int(man)), int(exp))
    return -v if sign else v


def log_gamma(z, ctx: PrecisionContext) -> mpf:
    with ctx.work():
        z = mpf(z)
        if z <= 0:
            raise DomainError(f"log_gamma needs z > 0, got {z}")
        return +mpmath.loggamma(z)


def euler_gamma(ctx: PrecisionContext) -> mpf:
    with ctx.work():
        return +mpmath.euler


def _product_terms(z, K: int):
    # sum_{k<=K} [k ln(1+z/k) - z + z^2/(2k)], in gmpy2 at the current precision
    z2 = z * z / 2
    return gmpy2.fsum([k * gmpy2.log1p(z / k) - z + z2 / k for k in range(1, K + 1)])


def _hurwitz_tail(m: int, N: int, eps, bern: list):
    """zeta(m, N) = sum_{k>=N} k^-m for integer m >= 2 by Euler-Maclaurin at N (large)."""
    Nf = gmpy2.mpfr(N)
    lead = Nf ** (1 - m) / (m - 1)
    acc = [lead, Nf ** (-m) / 2]
    rising = gmpy2.mpfr(m)          # m (m+1) ... (m+2i-2)
    pw = Nf ** (-m - 1)
    fact = gmpy2.mpfr(2)            # (2i)!
    for i in range(1, len(bern)):
        term = bern[i] / fact * rising * pw
        acc.append(term)
        if abs(term) < eps * abs(lead):
            return gmpy2.fsum(acc)
        rising *= (m + 2 * i - 1) * (m + 2 * i)
        pw /= Nf * Nf
        fact *= (2 * i + 1) * (2 * i + 2)
    raise PrecisionError("Euler-Maclaurin tail did not converge")


def _product_tail(z, K: int, eps):
    # sum_{k>K} of the same terms, expanded in powers of z/k:
    # sum_{j>=3} (-1)^{j+1} z^j/j zeta(j-1, K+1)
    bern = [gmpy2.mpfr(0)] + [to_mpfr(mpmath.bernoulli(2 * i)) for i in range(1, 60)]
    parts = []
    zj = z * z
    j = 2
    while True:
        j += 1
        zj *= z
        term = (-1) ** (j + 1) * zj / j * _hurwitz_tail(j - 1, K + 1, eps, bern)
        parts.append(term)
        if abs(term) < eps and j > 4:
            return gmpy2.fsum(parts)
        if j > 10000:
            raise PrecisionError("Barnes G tail series failed to converge")


def log_barnes_g(z, ctx: PrecisionContext, K: int | None = None) -> mpf:
    """ln G(z) for real z > 0 from the Weierstrass product of G(1+z).

    ln G(1+z) = (z/2) ln 2pi - (z + z^2 (1+gamma_E))/2
                + sum_k [k ln(1+z/k) - z + z^2/(2k)],
    the sum truncated after K factors.  The remainder is expanded in powers of
    z/k, which turns it into Hurwitz zeta tails zeta(j-1, K+1); each of those
    is summed by Euler-Maclaurin at K+1.
    """
    if K is None:
        K = max(1000, 10 * ctx.target_digits)
    guard = PrecisionContext(ctx.bits + 32 + int(math.log2(K)) + 8, ctx.target_digits)
    with guard.work():
        z = mpf(z)
        if z <= 0:
            raise DomainError(f"log_barnes_g needs z > 0, got {z}")
        w = z - 1
        if abs(w) >= K:
            raise DomainError("argument too large for the chosen number of product factors")
        eps = gmpy2.mpfr(2) ** (-guard.bits)
        head = w / 2 * mpmath.log(2 * mpmath.pi) - (w + w * w * (1 + mpmath.euler)) / 2
        wg = to_mpfr(w)
        val = head + to_mpf(_product_terms(wg, K) + _product_tail(wg, K, eps))
    with ctx.work():
        return +val


@dataclass(frozen=True)
class SpecialValues:
    """Bundle of the special functions at one precision."""
    ctx: PrecisionContext

    @property
    def euler_gamma(self) -> mpf:
        return euler_gamma(self.ctx)

    def log_gamma(self, z) -> mpf:
        return log_gamma(z, self.ctx)

    def log_barnes_g(self, z) -> mpf:
        return log_barnes_g(z, self.ctx)
