from fractions import Fraction

import mpmath
import pytest
from mpmath import mp, mpf

from pjacobi.highprec import DomainError, PrecisionContext
from pjacobi.piii import (PIIIParams, RangeError, SigmaState, SmallSeries, SwitchRouteError,
                          UnsupportedParameterError, integrate_sigma, lax_from_sigma, required_digits,
                          seed_large_s, seed_small_s, series_fmax, sigma_form_residual, sigma_integral,
                          solve_sigma, third_derivative)

CTX = PrecisionContext.from_digits(40)


@pytest.fixture(scope="module")
def traj():
    return solve_sigma(PIIIParams("0.5", "0.25"), 8, "1e-30")


def test_params_validation():
    with pytest.raises(DomainError):
        PIIIParams(0, -1)
    with pytest.raises(DomainError):
        PIIIParams("-0.8", "-0.5")
    for ab in (("0.5", "0.5"), ("-0.5", "0.5"), ("1", "0")):
        p = PIIIParams(*ab)
        with pytest.raises(UnsupportedParameterError):
            seed_small_s(p, "1e-4", CTX, method="leading")
        with pytest.raises(UnsupportedParameterError):
            SmallSeries(p, 128, 12)
    with pytest.raises(UnsupportedParameterError, match="positive integer"):
        PIIIParams("0.5", "0.5").C_ab
    p = PIIIParams("0.5", "0.25")
    assert p.alpha == Fraction(1, 2) and p.mu == Fraction(3, 4)


def test_constants():
    p = PIIIParams("0.5", "0.25")
    with CTX.work():
        assert p.c0 == mpf(1) / 256
        assert p.c1 == -mpf(3) / 32
        assert p.c2 == mpf(9) / 16
        assert abs(p.slope0 - mpf(1) / 12) <= CTX.tol
        mu = mpf(3) / 4
        # C carries the factor alpha/mu and the power 4^{1+mu} relative to C0
        assert abs(p.C_ab - p.C0_ab * 4 ** (1 + mu) * mpf("0.5") / mu) <= CTX.tol


@pytest.mark.parametrize("alpha", ["0.5", "1.25", "2.5"])
def test_beta_zero_leading_coefficient(alpha):
    p = PIIIParams(alpha, 0)
    with CTX.work():
        a = mpf(alpha)
        want = 1 / (mpmath.gamma(a + 1) * mpmath.gamma(a + 2))
        assert abs(p.C_ab - want) <= CTX.tol * want
        s = mpf("1e-6")
        lead = seed_small_s(p, s, CTX, method="leading").sigma
        assert abs(lead / s ** (1 + a) - want / 4 ** (1 + a)) <= mpf("1e-5") * want


@pytest.mark.parametrize("ab", [("0.5", "0.25"), ("0.3", "-0.2"), ("1", "0.5"), ("1.5", "0"), ("0.25", "0.5")])
def test_series_satisfies_sigma_form(ab):
    p = PIIIParams(*ab)
    with CTX.work():
        ser = SmallSeries(p, CTX.bits, series_fmax(p, CTX.target_digits, "0.1"))
        assert ser.exact
        for s in ("0.01", "0.05", "0.1"):
            y, d1, d2, d3 = ser.eval(mpf(s), 3)
            st = SigmaState(mpf(s), y, d1, d2, 0)
            assert abs(sigma_form_residual(st, p)) <= mpf(10) ** (-CTX.target_digits + 4) + 10 * ser.truncation(mpf(s))
            # differentiating s^f three times scales the truncation by at most (f/s)^3
            bound = ser.truncation(mpf(s)) * (ser.fmax / mpf(s)) ** 3
            assert abs(third_derivative(st, p) - d3) <= mpf(10) ** (-CTX.target_digits + 8) + bound
        assert ser.check_consistency() <= mpf(10) ** (-CTX.target_digits + 4)


def test_non_exact_series_falls_back():
    p = PIIIParams("0.7", "0.6")
    assert not SmallSeries(PIIIParams("0.25", "-0.5"), CTX.bits, 20).exact
    with CTX.work():
        assert not SmallSeries(p, CTX.bits, 20).exact


def test_leading_seed_agrees_with_series():
    p = PIIIParams("0.5", "0.25")
    with CTX.work():
        s = mpf("1e-4")
        a = seed_small_s(p, s, CTX, method="leading")
        b = seed_small_s(p, s, CTX)
        assert abs(a.sigma - b.sigma) <= 10 * a.truncation
        assert abs(sigma_form_residual(b, p)) <= mpf(10) ** (-CTX.target_digits + 4)
        with pytest.raises(DomainError):
            seed_small_s(p, "0.01", CTX, method="leading")
        with pytest.raises(DomainError):
            seed_small_s(p, "0.5", CTX)
        with pytest.raises(DomainError):
            seed_small_s(p, "0.01", CTX, method="other")


def test_large_s_seed_example():
    with CTX.work():
        st = seed_large_s(PIIIParams(1, 0), 10000, CTX)
        assert abs(st.sigma - mpf("2450.250625")) <= CTX.tol * 10 ** 4
        # the four-term form leaves an O(1/s) residual
        assert abs(sigma_form_residual(st, PIIIParams(1, 0))) < mpf("1e-3")


@pytest.mark.parametrize("beta", ["0.25", "-0.5", "0"])
def test_alpha_zero_is_linear(beta):
    p = PIIIParams(0, beta)
    tr = solve_sigma(p, 4, "1e-30")
    with mp.workprec(tr.bits):
        for s in ("0.01", "1", "3.5"):
            assert abs(tr(mpf(s)) - mpf(s) / 4) <= mpf("1e-30")
        assert abs(sigma_integral(tr, 8, CTX) - mpf(64) / 128) <= mpf("1e-30")


def test_trajectory_residuals(traj):
    with mp.workprec(traj.bits):
        assert traj.max_residual <= mpf("1e-30")
        assert all(abs(r) <= mpf("1e-30") for _, r in traj.residuals)
        assert abs(traj.s_min - mpf("0.05")) <= mpf(2) ** (-traj.bits + 4)
        # below the seed point the series is used
        ser = traj.series.eval(mpf("0.01"), 2)
        assert traj.eval(mpf("0.01"))[0] == ser[0]
        with pytest.raises(RangeError):
            traj(mpf(9))


def test_backward_forward_reversibility(traj):
    p = traj.params
    with mp.workprec(traj.bits):
        ctx = PrecisionContext(traj.bits, 40)
        end = traj.state(mpf(8))
        back = integrate_sigma(p, end, "0.5", "1e-30", ctx)
        for s in ("0.5", "2", "6"):
            assert abs(back(mpf(s)) - traj(mpf(s))) <= mpf("1e-28")


def test_vanishing_derivative_requests_route_switch():
    p = PIIIParams("0.5", "0.25")
    with CTX.work():
        s = mpf("0.5")
        seed = SigmaState(s, mpf("0.1"), mpf(0), mpf("0.25") / (4 * s), 0)
        assert abs(sigma_form_residual(seed, p)) <= CTX.tol
        with pytest.raises(SwitchRouteError):
            integrate_sigma(p, seed, 2, "1e-30", CTX)


def test_lax_small_s_limits(traj):
    with mp.workprec(traj.bits):
        st = lax_from_sigma(traj, mpf("1e-6")).state
        assert abs(st.y - 1) < mpf("1e-5")
        assert abs(st.b - mpf("0.25")) < mpf("1e-3")
        assert abs(st.v - mpf("0.25")) < mpf("1e-5")
        full = lax_from_sigma(traj, mpf("2"))
        assert abs(full.state.sigma(traj.params) - full.sigma) <= mpf("1e-28")


def test_sigma_integral_switch_invariance(traj):
    with mp.workprec(traj.bits):
        a = sigma_integral(traj, 8, CTX)
        b = sigma_integral(traj, 8, CTX, tau_switch="1e-2")
        c = sigma_integral(traj, 8, CTX, tau_switch="1e-4")
        assert abs(a - b) <= mpf("1e-30") and abs(a - c) <= mpf("1e-30")
        with pytest.raises(RangeError):
            sigma_integral(traj, 12, CTX)
        with pytest.raises(DomainError):
            sigma_integral(traj, 0, CTX)


def test_required_digits_grows_with_range():
    assert required_digits("0.05", 100, "1e-20") < required_digits("0.05", 10000, "1e-20")
    assert required_digits("0.05", 100, "1e-40") - required_digits("0.05", 100, "1e-20") == 20


def test_small_mu_coefficients_are_stable():
    # the recursion amplifies rounding by roughly 1/mu per level; the builder adds guard bits
    p = PIIIParams("0.3", "-0.2")
    ctx = PrecisionContext.from_bits(166)
    with ctx.work():
        ser = SmallSeries(p, ctx.bits, 60)
        s = mpf("0.1")
        y, d1, d2, _ = ser.eval(s, 3)
        assert abs(sigma_form_residual(SigmaState(s, y, d1, d2, 0), p)) <= mpf("1e-45")
