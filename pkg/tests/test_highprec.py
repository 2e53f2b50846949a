import math

import gmpy2
import mpmath
import pytest
from hypothesis import given, settings, strategies as st
from mpmath import mp, mpf

from pjacobi.highprec import (DomainError, PrecisionContext, SpecialValues, euler_gamma, log_barnes_g,
                              log_gamma, to_mpf, to_mpfr)

CTX = PrecisionContext.from_digits(40)


def test_context_rejects_too_few_bits():
    with pytest.raises(DomainError):
        PrecisionContext(64, 40)
    with pytest.raises(DomainError):
        PrecisionContext(256, 0)


def test_context_work_sets_both_backends():
    ctx = PrecisionContext.from_bits(300)
    before = mp.prec
    with ctx.work():
        assert mp.prec == 300
        assert gmpy2.get_context().precision == 300
    assert mp.prec == before
    assert ctx.doubled().bits == 600
    with ctx.work():
        assert ctx.tol == mpf(10) ** -ctx.target_digits


@settings(max_examples=60, deadline=None)
@given(st.floats(allow_nan=False, allow_infinity=False, width=64))
def test_mpf_mpfr_round_trip(x):
    with CTX.work():
        v = mpf(x)
        assert to_mpf(to_mpfr(v)) == v


def test_log_gamma_examples():
    with CTX.work():
        assert log_gamma(1, CTX) == 0
        assert abs(log_gamma(5, CTX) - mpmath.log(24)) < CTX.tol
        assert abs(log_gamma("0.5", CTX) - mpmath.log(mpmath.sqrt(mpmath.pi))) < CTX.tol
    with pytest.raises(DomainError):
        log_gamma(0, CTX)


@pytest.mark.parametrize("k", range(11))
def test_log_gamma_half_integers(k):
    with CTX.work():
        closed = mpmath.log(mpmath.factorial(2 * k) * mpmath.sqrt(mpmath.pi) / (mpf(4) ** k * mpmath.factorial(k)))
        assert abs(log_gamma(mpf(k) + mpf(1) / 2, CTX) - closed) <= CTX.tol


def test_euler_gamma_digits():
    ctx = PrecisionContext.from_digits(30)
    assert mpmath.nstr(euler_gamma(ctx), 30) == "0.577215664901532860606512090082"


@pytest.mark.parametrize("z,expected", [(1, 0), (2, 0), (3, 0), (4, math.log(2))])
def test_barnes_g_small_integers(z, expected):
    with CTX.work():
        assert abs(log_barnes_g(z, CTX) - (mpmath.log(2) if expected else 0)) <= CTX.tol


def test_barnes_g_half_against_closed_form():
    # G(1/2) = 2^{1/24} e^{3 zeta'(-1)/2} pi^{-1/4}
    with CTX.work():
        closed = mpmath.log(2) / 24 + mpf(3) / 2 * mpmath.zeta(-1, derivative=1) - mpmath.log(mpmath.pi) / 4
        assert abs(log_barnes_g("0.5", CTX) - closed) <= CTX.tol


def test_barnes_g_against_independent_routine():
    with CTX.work():
        for z in ("0.13", "1.75", "3.3", "4.9", "7.5"):
            assert abs(log_barnes_g(z, CTX) - mpmath.log(mpmath.barnesg(mpf(z)))) <= CTX.tol * 10


@settings(max_examples=25, deadline=None)
@given(st.decimals(min_value="0.1", max_value="5", places=6))
def test_barnes_recurrence(z):
    ctx = PrecisionContext.from_digits(30)
    with ctx.work():
        z = mpf(str(z))
        lhs = log_barnes_g(z + 1, ctx) - log_barnes_g(z, ctx)
        assert abs(lhs - log_gamma(z, ctx)) <= mpf(10) ** (-ctx.target_digits + 2)


def test_barnes_precision_refinement():
    lo = PrecisionContext.from_digits(30)
    hi = PrecisionContext(2 * lo.bits, lo.target_digits)
    with hi.work():
        assert abs(log_barnes_g("2.7", lo) - log_barnes_g("2.7", hi)) <= lo.tol


def test_barnes_domain():
    with pytest.raises(DomainError):
        log_barnes_g(0, CTX)
    with pytest.raises(DomainError):
        log_barnes_g(-1.5, CTX)


def test_special_values_bundle():
    sv = SpecialValues(CTX)
    with CTX.work():
        assert abs(sv.log_gamma(3) - mpmath.log(2)) <= CTX.tol
        assert abs(sv.log_barnes_g(4) - mpmath.log(2)) <= CTX.tol
        assert abs(sv.euler_gamma - mpmath.euler) <= CTX.tol
