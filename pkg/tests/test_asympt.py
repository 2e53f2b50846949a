import mpmath
import pytest
from mpmath import mp, mpf

from pjacobi.asympt import (PART_NAMES, ScalingPoint, Thm1Prediction, leading_bracket, leading_coeff_prediction,
                            leading_coeff_small_s, ln_Dn_at_1, ln_Dn_prediction, recurrence_large_s,
                            recurrence_prediction, recurrence_small_s)
from pjacobi.highprec import DomainError, PrecisionContext
from pjacobi.orthopoly import hankel_log_det, stieltjes_recurrence
from pjacobi.piii import PIIIParams, solve_sigma
from pjacobi.weight import ChebSeries, WeightSpec, fourier_log_h, make_h, scaling_s, szego_constants

CTX = PrecisionContext.from_digits(40)
MU = mpf("0.75")


@pytest.fixture(scope="module")
def traj():
    return solve_sigma(PIIIParams("0.5", "0.25"), 2600, "1e-30")


@pytest.fixture(scope="module")
def wctx(traj):
    return PrecisionContext(traj.bits, 40)


def test_scaling_point():
    with CTX.work():
        pt = ScalingPoint.from_s(32, 2)
        assert abs(scaling_s(32, pt.t) - 2) <= CTX.tol
        back = ScalingPoint.from_t(32, pt.t)
        assert abs(back.s - pt.s) <= CTX.tol
        assert ScalingPoint.from_t(5, 1).s == 0


def test_ln_Dn_at_1_h_scaling():
    with CTX.work():
        h = make_h("two_plus_cos_pi_x", ctx=CTX)
        V = fourier_log_h(WeightSpec(0, "0.25", 1, h), None, CTX)
        V3 = fourier_log_h(WeightSpec(0, "0.25", 1, ChebSeries(tuple(3 * c for c in h.coeffs))), None, CTX)
        for n in (4, 9):
            d = ln_Dn_at_1("0.75", V3, n, CTX) - ln_Dn_at_1("0.75", V, n, CTX)
            assert abs(d - n * mpmath.log(3)) <= mpf(10) ** (-CTX.target_digits + 4)


def test_ln_Dn_at_1_truncation_stable():
    with CTX.work():
        spec = WeightSpec(0, "0.25", 1, make_h("two_plus_cos_pi_x", ctx=CTX))
        V = fourier_log_h(spec, None, CTX)
        V2 = fourier_log_h(spec, 2 * V.K, CTX)
        assert abs(ln_Dn_at_1("0.75", V, 8, CTX) - ln_Dn_at_1("0.75", V2, 8, CTX)) <= mpf(10) ** (-CTX.target_digits + 2)


def test_ln_Dn_at_1_legendre_closeness():
    with CTX.work():
        spec = WeightSpec(0, 0, 1)
        V = fourier_log_h(spec, 0, CTX)
        rec = stieltjes_recurrence(spec, 32, CTX)
        errs = [abs(ln_Dn_at_1(0, V, n, CTX) - hankel_log_det(rec, n).log_Dn) for n in (4, 8, 16, 32)]
        assert errs[0] < mpf("0.01")
        assert all(b < a for a, b in zip(errs, errs[1:]))
        with pytest.raises(DomainError):
            ln_Dn_at_1(-1, V, 4, CTX)


def test_parts_sum_exactly(traj, wctx):
    with wctx.work():
        pt = ScalingPoint.from_s(32, 2)
        spec = WeightSpec("0.5", "0.25", pt.t, make_h("exp_x2", ctx=wctx, c="0.3"))
        pr = ln_Dn_prediction(spec, pt, traj, wctx)
        assert tuple(pr.parts) == PART_NAMES
        total = mpf(0)
        for name in PART_NAMES:
            total += pr.parts[name]
        assert total == pr.ln_Dn_pred
        assert Thm1Prediction.assemble(pr.parts) == pr


def test_h_one_has_no_fourier_terms(traj, wctx):
    with wctx.work():
        pt = ScalingPoint.from_s(16, 1)
        pr = ln_Dn_prediction(WeightSpec("0.5", "0.25", pt.t), pt, traj, wctx)
        assert pr.parts["Vk_sum"] == 0


def test_t_to_one_limit(traj, wctx):
    with wctx.work():
        h = make_h("two_plus_cos_pi_x", ctx=wctx)
        base = WeightSpec("0.5", "0.25", 1, h)
        V = fourier_log_h(base, None, wctx)
        at1 = ln_Dn_at_1(MU, V, 20, wctx)
        gaps = []
        for s in ("1e-3", "1e-5"):
            pt = ScalingPoint.from_s(20, s)
            spec = WeightSpec("0.5", "0.25", pt.t, h)
            gaps.append(abs(ln_Dn_prediction(spec, pt, traj, wctx, V).ln_Dn_pred - at1))
        assert gaps[1] < mpf("1e-8") and gaps[1] < gaps[0] / 100


def test_prediction_converges_against_exact(traj, wctx):
    with wctx.work():
        errs = []
        for n in (16, 32):
            pt = ScalingPoint.from_s(n, 2)
            spec = WeightSpec("0.5", "0.25", pt.t)
            exact = hankel_log_det(stieltjes_recurrence(spec, n, wctx), n).log_Dn
            errs.append(abs(exact - ln_Dn_prediction(spec, pt, traj, wctx).ln_Dn_pred))
        assert errs[1] < errs[0]


def test_leading_coefficient_small_s_limit_form(traj, wctx):
    # 1/D_t(inf) carries phi(t)^-alpha, which cancels the alpha/2 part of the bracket
    n = 10 ** 6
    with wctx.work():
        defects = []
        for s in ("1e-2", "1e-3"):
            pt = ScalingPoint.from_s(n, s)
            spec = WeightSpec("0.5", "0.25", pt.t)
            g = leading_coeff_prediction(spec, pt, traj, wctx)
            ratio = g * mpmath.sqrt(mpmath.pi) * szego_constants(spec, wctx).D_1_infty
            defects.append(abs((ratio - 1) * 8 * n - (leading_coeff_small_s(MU, n) - 1) * 8 * n))
        assert defects[0] < mpf("1e-3")
        # O(s^2): a decade in s buys two decades
        assert defects[1] < defects[0] / 50


def test_leading_bracket_alpha_term(traj):
    n = 10 ** 6
    with mp.workprec(traj.bits):
        pt = ScalingPoint.from_s(n, "1e-3")
        e = (leading_bracket(traj.params, traj, pt) - 1) * 8 * n
        # the bracket alone keeps the linear 2 alpha s term
        assert abs(e - (1 - 4 * MU ** 2) - pt.s) < mpf("1e-5")


def test_recurrence_small_s_limit_form(traj):
    n = 10 ** 6
    with mp.workprec(traj.bits):
        defects = []
        for s in ("1e-2", "1e-3"):
            pt = ScalingPoint.from_s(n, s)
            b2 = recurrence_prediction(WeightSpec("0.5", "0.25", pt.t), pt, traj)
            want = recurrence_small_s(MU, n)
            defects.append(abs((mpf(1) / 4 - b2) - (mpf(1) / 4 - want)) * 16 * mpf(n) ** 2)
        assert defects[0] < mpf("1e-3") and defects[1] < defects[0] / 50


def test_recurrence_large_s_limit_form(traj):
    n = 10 ** 7
    with mp.workprec(traj.bits):
        defects = []
        for s in ("50", "200"):
            pt = ScalingPoint.from_s(n, s)
            b2 = recurrence_prediction(WeightSpec("0.5", "0.25", pt.t), pt, traj)
            defects.append(abs((mpf(1) / 4 - b2) - (mpf(1) / 4 - recurrence_large_s("0.25", n))) * 16 * mpf(n) ** 2)
        assert defects[1] < defects[0] / 3 and defects[1] < mpf("0.02")


def test_alpha_zero_collapse(wctx):
    tr = solve_sigma(PIIIParams(0, "0.25"), 1, "1e-30")
    with wctx.work():
        pt = ScalingPoint.from_s(40, 2)
        spec = WeightSpec(0, "0.25", pt.t)
        g = leading_coeff_prediction(spec, pt, tr, wctx)
        # alpha = 0 leaves the plain Jacobi Szego constant and sigma = s/4 gives q = 1/4 - beta^2
        q = mpf(1) / 4 - mpf("0.25") ** 2
        want = (1 + 2 * mpmath.sqrt(2) * q / pt.s * mpmath.sqrt(pt.t - 1)) / (
            mpmath.sqrt(mpmath.pi) * szego_constants(spec, wctx).D_t_infty)
        assert abs(g - want) <= mpf("1e-35")
