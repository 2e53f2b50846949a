"""Double-scaling sweeps: exact finite-n quantities against their asymptotic predictions."""
from __future__ import annotations

import csv
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from decimal import Decimal
from pathlib import Path
from typing import Sequence

import mpmath
from mpmath import mpf

from .asympt import PART_NAMES, ScalingPoint, leading_coeff_prediction, ln_Dn_prediction, recurrence_prediction
from .highprec import DomainError, PjacobiError, PrecisionContext, PrecisionError
from .orthopoly import (_panel_order, hankel_log_det, stieltjes_general, stieltjes_recurrence,
                        truncated_jacobi_rule)
from .piii import PIIIParams, SigmaTrajectory, solve_sigma
from .weight import ConsistencyError, WeightSpec, fourier_log_h, make_h

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

log = logging.getLogger(__name__)

CSV_HEADER = ("n", "t", "s", "exact_lnDn", "pred_lnDn", "err1", "exact_gamma_ratio", "pred_gamma_ratio",
              "err2", "exact_b2", "pred_b2", "err3")


class SweepError(PjacobiError):
    """A row of the sweep failed; carries the (n, s) coordinate."""

    def __init__(self, n, s, cause: Exception):
        super().__init__(f"row n={n}, s={s}: {type(cause).__name__}: {cause}")
        self.n, self.s, self.cause = n, s, cause


def _dec(x) -> str:
    # decimal strings pass through; floats become the decimal they print as
    return repr(x) if isinstance(x, float) else str(x)


@dataclass
class ExperimentConfig:
    alpha: str = "0.5"
    beta: str = "0.25"
    h_kind: str = "const"
    h_value: str | None = None
    h_c: str | None = None
    h_coeffs: list = field(default_factory=list)
    t: str | None = None
    s_values: list = field(default_factory=lambda: ["0.5", "2", "8"])
    n_values: list = field(default_factory=lambda: [16, 32, 64])
    bits: int = 512
    digits: int | None = None
    tol: str | None = None
    workers: int = 1
    csv_path: str | None = None
    json_path: str | None = None

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        w = d.get("weight", {})
        h = w.get("h", {})
        sw = d.get("sweep", {})
        pr = d.get("precision", {})
        out = d.get("outputs", {})
        cfg = cls(
            alpha=_dec(w.get("alpha", "0.5")), beta=_dec(w.get("beta", "0.25")),
            h_kind=h.get("kind", "const"),
            h_value=None if "value" not in h else _dec(h["value"]),
            h_c=None if "c" not in h else _dec(h["c"]),
            h_coeffs=[_dec(v) for v in h.get("coeffs", [])],
            t=None if "t" not in w else _dec(w["t"]),
            s_values=[_dec(v) for v in sw.get("s_values", ["0.5", "2", "8"])],
            n_values=[int(v) for v in sw.get("n_values", [16, 32, 64])],
            bits=int(pr.get("bits", 512)), digits=pr.get("digits"),
            tol=None if "tol" not in pr else _dec(pr["tol"]), workers=int(pr.get("workers", 1)),
            csv_path=out.get("csv"), json_path=out.get("json"))
        cfg.validate()
        return cfg

    @classmethod
    def from_toml(cls, path) -> "ExperimentConfig":
        with open(path, "rb") as fh:
            return cls.from_dict(tomllib.load(fh))

    @property
    def ctx(self) -> PrecisionContext:
        if self.digits is not None:
            return PrecisionContext.from_digits(int(self.digits), self.bits)
        return PrecisionContext.from_bits(self.bits)

    @property
    def tolerance(self) -> mpf:
        return mpf(self.tol) if self.tol is not None else self.ctx.tol

    def weight(self, t="1") -> WeightSpec:
        h = make_h(self.h_kind, self.h_coeffs or None, self.ctx, value=self.h_value, c=self.h_c)
        return WeightSpec(self.alpha, self.beta, t, h)

    def validate(self):
        if not self.s_values or not self.n_values:
            raise DomainError("sweep needs at least one s and one n")
        for s in self.s_values:
            if not mpf(s) > 0:
                raise DomainError("s = 0 means t = 1; use ln_Dn_at_1 for that case")
        if any(n < 1 for n in self.n_values):
            raise DomainError("n must be >= 1")
        if self.workers < 1:
            raise DomainError("workers must be >= 1")
        base = self.weight()
        for s in self.s_values:
            for n in self.n_values:
                base.h.continue_to(ScalingPoint.from_s(n, s).t)


@dataclass
class ReportRow:
    n: int
    t: mpf
    s: mpf
    exact_lnDn: mpf
    pred_lnDn: mpf
    err1: mpf
    exact_gamma_ratio: mpf
    pred_gamma_ratio: mpf
    err2: mpf
    exact_b2: mpf
    pred_b2: mpf
    err3: mpf
    parts: dict = field(default_factory=dict)


@dataclass
class AsymptoticReport:
    rows: list
    meta: dict = field(default_factory=dict)
    digits: int = 30

    def column(self, s, name: str) -> list:
        """(n, value) pairs of one column at fixed s, ordered by n."""
        s = mpf(s)
        return sorted((r.n, getattr(r, name)) for r in self.rows if abs(r.s - s) <= abs(s) * mpf("1e-20"))


def _exact_row(args):
    alpha, beta, t, hcoeffs, n, bits = args
    ctx = PrecisionContext.from_bits(bits)
    with ctx.work():
        from .weight import ChebSeries
        spec = WeightSpec(mpf(alpha), mpf(beta), mpf(t), ChebSeries(tuple(mpf(c) for c in hcoeffs)))
        rec = stieltjes_recurrence(spec, n, ctx)
        lnD = hankel_log_det(rec, n).log_Dn
        # bookkeeping identity b2_{n-1} h_{n-1} = h_n
        if abs(rec.b2[n - 1] * rec.h[n - 1] - rec.h[n]) > ctx.tol * rec.h[n]:
            raise ConsistencyError("b2_{n-1} h_{n-1} != h_n")
        return lnD, rec.gamma[n] / mpf(2) ** n, rec.b2[n - 1]


def sigma_for(alpha, beta, s_max, ctx: PrecisionContext) -> SigmaTrajectory:
    """One trajectory covering the tau = s^2/16 range of every requested s."""
    tau_max = mpf(s_max) ** 2 / 16 * (1 + mpf("1e-12"))
    digits = max(ctx.target_digits, 30)
    return solve_sigma(PIIIParams(alpha, beta), max(tau_max, mpf("0.1")), mpf(10) ** (-digits + 5),
                       min_bits=ctx.bits)


def run_sweep(config: ExperimentConfig, traj: SigmaTrajectory | None = None) -> AsymptoticReport:
    ctx = config.ctx
    with ctx.work():
        base = config.weight()
        svals = [mpf(s) for s in config.s_values]
        if traj is None:
            traj = sigma_for(config.alpha, config.beta, max(svals), ctx)
        V = fourier_log_h(base, None, ctx)
        points = [ScalingPoint.from_s(n, s) for s in svals for n in config.n_values]
        jobs = [(config.alpha, config.beta, mpmath.nstr(p.t, ctx.target_digits + 20),
                 tuple(mpmath.nstr(c, ctx.target_digits + 20) for c in base.h.coeffs), p.n, ctx.bits)
                for p in points]
        # exact-side t is the decimal rendering of the point, so predictions use the same t
        points = [ScalingPoint(p.n, mpf(j[2]), p.s) for p, j in zip(points, jobs)]
        if config.workers > 1 and len(jobs) > 1:
            with ProcessPoolExecutor(max_workers=config.workers) as ex:
                futs = [ex.submit(_exact_row, j) for j in jobs]
                exact = []
                for p, f in zip(points, futs):
                    try:
                        exact.append(f.result())
                    except Exception as e:
                        raise SweepError(p.n, mpmath.nstr(p.s, 8), e) from e
        else:
            exact = []
            for p, j in zip(points, jobs):
                try:
                    exact.append(_exact_row(j))
                except Exception as e:
                    raise SweepError(p.n, mpmath.nstr(p.s, 8), e) from e
        rows = []
        for p, (lnD, g, b2) in zip(points, exact):
            try:
                spec = base.with_t(p.t)
                pr = ln_Dn_prediction(spec, p, traj, ctx, V)
                gp = leading_coeff_prediction(spec, p, traj, ctx, V)
                bp = recurrence_prediction(spec, p, traj)
            except Exception as e:
                raise SweepError(p.n, mpmath.nstr(p.s, 8), e) from e
            rows.append(ReportRow(p.n, p.t, p.s, lnD, pr.ln_Dn_pred, abs(lnD - pr.ln_Dn_pred), g, gp, abs(g - gp),
                                  b2, bp, abs(b2 - bp), pr.parts))
        meta = {"alpha": config.alpha, "beta": config.beta, "h_kind": config.h_kind, "bits": ctx.bits,
                "digits": ctx.target_digits}
        return AsymptoticReport(rows, meta, ctx.target_digits)


TRAJ_HEADER = ("s", "sigma", "dsigma", "d2sigma", "residual")


def emit_trajectory(traj: SigmaTrajectory, path, digits: int = 30, s_min=None) -> None:
    """Accepted step ends of ``traj`` (from ``s_min`` on) as CSV with columns ``TRAJ_HEADER``."""
    with mpmath.workprec(traj.bits):
        lo = mpf(s_min) if s_min is not None else None
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(TRAJ_HEADER)
            for st, (_, res) in zip(traj.samples, traj.residuals):
                if lo is not None and st.s < lo:
                    continue
                w.writerow([mpmath.nstr(v, digits) for v in (st.s, st.sigma, st.dsigma, st.d2sigma, res)])


def _sig_digits(txt: str) -> int:
    return len(Decimal(txt).normalize().as_tuple().digits)


def trajectory_from_csv(alpha, beta, path, ctx: PrecisionContext) -> SigmaTrajectory:
    """Rebuild the trajectory a CSV written by :func:`emit_trajectory` describes.

    The first row fixes the seed point (it must lie where the small-s expansion
    seeds, s <= 0.2) and the last row the range.  The trajectory is recomputed
    at full precision and every stored row must agree with it to the digits
    printed, which also catches a file written for other (alpha, beta).
    """
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows or not set(TRAJ_HEADER[:4]) <= set(rows[0]):
        raise DomainError(f"{path}: expected columns {', '.join(TRAJ_HEADER[:4])}")
    with ctx.work():
        s0, s1 = mpf(rows[0]["s"]), mpf(rows[-1]["s"])
        if not 0 < s0 <= mpf("0.2"):
            raise DomainError(f"{path}: first row must have 0 < s <= 0.2 so the small-s expansion can seed it")
        digits = max(_sig_digits(r["sigma"]) for r in rows)
    traj = solve_sigma(PIIIParams(alpha, beta), rows[-1]["s"], mpf(10) ** (-max(ctx.target_digits, 30) + 5),
                       s_seed=rows[0]["s"], min_bits=ctx.bits)
    with mpmath.workprec(traj.bits):
        tol = mpf(10) ** (-digits + 2)
        for r in rows:
            s, want = mpf(r["s"]), mpf(r["sigma"])
            if abs(traj(min(max(s, s0), s1)) - want) > tol * max(1, abs(want)):
                raise ConsistencyError(f"{path}: row s={r['s']} does not match the trajectory for "
                                       f"(alpha, beta)=({alpha}, {beta})")
    return traj


# ---------------------------------------------------------------- reporting

def _fmt(v, digits: int) -> str:
    if isinstance(v, int):
        return str(v)
    return mpmath.nstr(v, digits)


def _io_prec(digits: int) -> int:
    return PrecisionContext.from_digits(digits).bits + 16


def emit_report(report: AsymptoticReport, fmt: str, path) -> None:
    """Write ``report`` as CSV (columns ``CSV_HEADER``) or JSON (rows, parts breakdown and metadata)."""
    with mpmath.workprec(_io_prec(report.digits)):
        _emit(report, fmt, Path(path))


def _emit(report: AsymptoticReport, fmt: str, path: Path) -> None:
    d = report.digits
    if fmt == "csv":
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(CSV_HEADER)
            for r in report.rows:
                w.writerow([_fmt(getattr(r, k), d) for k in CSV_HEADER])
    elif fmt == "json":
        payload = {
            "meta": report.meta, "digits": d,
            "rows": [{**{k: _fmt(getattr(r, k), d) for k in CSV_HEADER},
                      "parts": {k: _fmt(v, d) for k, v in r.parts.items()}} for r in report.rows],
        }
        path.write_text(json.dumps(payload, indent=2))
    else:
        raise DomainError("format must be 'csv' or 'json'")


def parse_report(path, fmt: str | None = None, digits: int = 30) -> AsymptoticReport:
    path = Path(path)
    fmt = fmt or path.suffix.lstrip(".")
    with mpmath.workprec(_io_prec(digits)):
        return _parse(path, fmt, digits)


def _parse(path: Path, fmt: str, digits: int) -> AsymptoticReport:

    def row_from(d: dict) -> ReportRow:
        vals = {k: (int(d[k]) if k == "n" else mpf(d[k])) for k in CSV_HEADER}
        parts = {k: mpf(v) for k, v in d.get("parts", {}).items()}
        return ReportRow(**vals, parts=parts)

    if fmt == "csv":
        with open(path, newline="") as fh:
            rd = csv.DictReader(fh)
            if tuple(rd.fieldnames or ()) != CSV_HEADER:
                raise DomainError("unexpected CSV header")
            return AsymptoticReport([row_from(d) for d in rd], {}, digits)
    if fmt == "json":
        payload = json.loads(path.read_text())
        return AsymptoticReport([row_from(d) for d in payload["rows"]], payload.get("meta", {}),
                                payload.get("digits", digits))
    raise DomainError("format must be 'csv' or 'json'")


# ---------------------------------------------------------------- hard-edge largest eigenvalue

@dataclass(frozen=True)
class TWRow:
    s: mpf
    finite_n: mpf         # -d/ds ln P_n from the five-point stencil
    finite_n_kernel: mpf  # w(c) K_n(c, c) / (2n^2)
    sigma_over_s: mpf
    deviation: mpf


@dataclass(frozen=True)
class TWTable:
    alpha: mpf
    n: int
    rows: tuple

    @property
    def max_deviation(self) -> mpf:
        return max(r.deviation for r in self.rows)


def _truncated_state(alpha, n: int, c, m: int, ctx: PrecisionContext):
    xs, ws = truncated_jacobi_rule(alpha, c, m, ctx)
    a, b2, h = stieltjes_general(xs, ws, n)
    return a, b2, h


def _ln_D_truncated(alpha, n, c, m, ctx) -> mpf:
    _, _, h = _truncated_state(alpha, n, c, m, ctx)
    return mpmath.fsum(mpmath.log(v) for v in h[:n])


def _kernel_derivative(alpha, n, c, m, ctx) -> mpf:
    """d/dc ln D_n on [-1, c] equals w(c) sum_{k<n} pi_k(c)^2 / h_k (reproducing kernel on the diagonal)."""
    a, b2, h = _truncated_state(alpha, n, c, m, ctx)
    p_prev, p = mpf(0), mpf(1)
    acc = mpf(0)
    for k in range(n):
        acc += p * p / h[k]
        bk = b2[k - 1] if k else mpf(0)
        p_prev, p = p, (c - a[k]) * p - bk * p_prev
    return (1 - c * c) ** mpf(alpha) * acc


def tracy_widom_check(alpha, n: int, s_grid: Sequence, ctx: PrecisionContext,
                      traj: SigmaTrajectory | None = None, m: int | None = None) -> TWTable:
    """Compare -d/ds ln P_n(lambda_max < 1 - s/(2n^2)) for the weight (1-x^2)^alpha with sigma_JM(s)/s.

    P_n is a ratio of Hankel determinants on [-1, c] and [-1, 1]; only the
    numerator depends on s.  The derivative comes from a five-point stencil and
    is cross-checked against the reproducing-kernel identity.
    """
    if n < 1 or n > 40:
        raise DomainError("tracy_widom_check supports 1 <= n <= 40")
    with ctx.work():
        alpha = mpf(alpha)
        grid = sorted(mpf(s) for s in s_grid)
        if not grid or grid[0] <= 0:
            raise DomainError("s grid must be positive")
        spacing = min([b - a for a, b in zip(grid, grid[1:])] or [grid[0]])
        delta = min(spacing, grid[0]) / 64
        if traj is None:
            traj = solve_sigma(PIIIParams(mpmath.nstr(alpha, 30), 0), grid[-1] * (1 + mpf("1e-12")),
                               mpf(10) ** (-min(ctx.target_digits, 40)))
        m = m or _panel_order(ctx, n)
        # settle the panel order on the hardest point (c closest to 1)
        c0 = 1 - grid[0] / (2 * n * n)
        ref = _ln_D_truncated(alpha, n, c0, m, ctx)
        while True:
            nxt = _ln_D_truncated(alpha, n, c0, 2 * m, ctx)
            if abs(nxt - ref) <= ctx.tol * max(1, abs(ref)) * 10 ** 4:
                break
            m, ref = 2 * m, nxt
            if m > 4096:
                raise PrecisionError("truncated-measure quadrature did not settle")
        rows = []
        scale = 1 / (2 * mpf(n) ** 2)
        for s in grid:
            f = [_ln_D_truncated(alpha, n, 1 - (s + k * delta) * scale, m, ctx) for k in (-2, -1, 1, 2)]
            dlnP = (f[0] - 8 * f[1] + 8 * f[2] - f[3]) / (12 * delta)
            stencil = -dlnP
            kern = _kernel_derivative(alpha, n, 1 - s * scale, m, ctx) * scale
            if abs(stencil - kern) > max(abs(kern), 1) * mpf(10) ** -9:
                raise ConsistencyError(f"stencil and kernel derivatives disagree at s={mpmath.nstr(s, 6)}: "
                                       f"{mpmath.nstr(stencil, 12)} vs {mpmath.nstr(kern, 12)}")
            target = traj(s) / s
            rows.append(TWRow(s, stencil, kern, target, abs(stencil - target)))
        return TWTable(alpha, n, tuple(rows))


def emit_tw(table: TWTable, path, digits: int = 20) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(("s", "finite_n", "finite_n_kernel", "sigma_over_s", "deviation"))
        for r in table.rows:
            w.writerow([mpmath.nstr(v, digits) for v in (r.s, r.finite_n, r.finite_n_kernel, r.sigma_over_s,
                                                          r.deviation)])
