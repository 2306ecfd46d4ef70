"""Convergence measurement, order estimation and cost-accuracy comparison.

Errors here are plain L2 distances to the exact-flow labels (not squared),
summarised by nearest-rank quantiles over the sample set, so one record
per (scheme, N) captures the error band at a known subflow budget.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.optimize import least_squares, nnls

from .coeffs import SchemeDescriptor
from .data import Dataset, generate_batch
from .reference import build_reference
from .spectral import Grid, apply_scheme, build_potential, subflow_count

__all__ = [
    "ConvergenceRecord",
    "OrderEstimate",
    "ExpansionFit",
    "AdvantageRow",
    "FitError",
    "convergence_study",
    "records_csv",
    "empirical_order",
    "fit_error_expansion",
    "advantage_table",
    "advantage_csv",
    "generalization_study",
]


class FitError(RuntimeError):
    """Raised when the error-expansion fit cannot converge."""


@dataclass(frozen=True)
class ConvergenceRecord:
    """Error quantiles of one scheme at one step count."""

    scheme: str
    n_steps: int
    subflow_evals: int
    error_q15: float
    error_median: float
    error_q84: float

    def __post_init__(self):
        if not (self.error_q15 <= self.error_median <= self.error_q84):
            raise ValueError("quantiles must be ordered")


def _nearest_rank(sorted_vals: np.ndarray, q: float) -> float:
    n = sorted_vals.size
    idx = int(np.ceil(q * n)) - 1
    return float(sorted_vals[min(max(idx, 0), n - 1)])


def convergence_study(scheme: SchemeDescriptor, ds: Dataset, n_list, T: float):
    """Propagate the whole sample set at each N = T/h and record the
    15.9/50/84.1 percent error quantiles (nearest-rank)."""
    if len(ds) == 0:
        raise ValueError("dataset must be nonempty")
    records = []
    for n in n_list:
        n = int(n)
        report = apply_scheme(ds.u0, scheme.coeffs, ds.potential, ds.grid, T / n, n)
        errs = np.sort(np.linalg.norm(report.state - ds.u_ref, axis=-1))
        records.append(
            ConvergenceRecord(
                scheme.name,
                n,
                report.subflow_evals,
                _nearest_rank(errs, 0.159),
                _nearest_rank(errs, 0.5),
                _nearest_rank(errs, 0.841),
            )
        )
    return records


def records_csv(records) -> str:
    """CSV rows (scheme, N, subflowEvals, q15.9, median, q84.1)."""
    lines = ["scheme,N,subflowEvals,q15.9,median,q84.1"]
    for r in records:
        lines.append(
            f"{r.scheme},{r.n_steps},{r.subflow_evals},"
            f"{r.error_q15!r},{r.error_median!r},{r.error_q84!r}"
        )
    return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class OrderEstimate:
    """Mean log2 error ratio under step halving, with stability diagnostics."""

    estimate: float
    pair_estimates: tuple
    asymptotic: bool


def empirical_order(scheme: SchemeDescriptor, ds: Dataset, T: float, n_list) -> OrderEstimate:
    """Estimate the convergence order from a doubling ladder of step counts.

    n_list must be doubling (N, 2N, 4N, ...).  The estimate is the mean of
    log2(E(h)/E(h/2)) over adjacent pairs of median errors; the result is
    flagged non-asymptotic unless there are at least 3 pairs whose error
    ratios stay within 25% relative spread.
    """
    ns = [int(n) for n in n_list]
    if len(ns) < 3:
        raise ValueError("need at least 3 step counts (2 halving pairs)")
    for a, b in zip(ns, ns[1:]):
        if b != 2 * a:
            raise ValueError(f"step counts must double: got {a} then {b}")
    recs = convergence_study(scheme, ds, ns, T)
    med = np.array([r.error_median for r in recs])
    if np.any(med <= 0.0):
        raise ValueError("zero error encountered; cannot estimate an order")
    ratios = med[:-1] / med[1:]
    pairs = tuple(float(p) for p in np.log2(ratios))
    estimate = float(np.mean(pairs))
    drift = float((np.max(ratios) - np.min(ratios)) / np.mean(ratios))
    asymptotic = len(pairs) >= 3 and drift <= 0.25
    return OrderEstimate(estimate, pairs, asymptotic)


@dataclass(frozen=True)
class ExpansionFit:
    """Even-power error model E(h) = C2 h^2 + C4 h^4 + C6 h^6, all C >= 0."""

    C2: float
    C4: float
    C6: float

    def evaluate(self, h):
        h = np.asarray(h, dtype=float)
        return self.C2 * h**2 + self.C4 * h**4 + self.C6 * h**6


def fit_error_expansion(points, exclude_largest: int = 2) -> ExpansionFit:
    """Fit the even-power model to (h, error) points on log residuals.

    The squared reparameterisation C_2j = c_j^2 keeps coefficients
    nonnegative; minimising sum (log model - log E)^2 weights all decades
    equally.  The largest `exclude_largest` step sizes are dropped first
    (they sit outside the expansion's radius).  Deterministic multistart
    (nonnegative linear fit, single-term seeds, fixed random restarts),
    each polished by damped Gauss-Newton (Levenberg-Marquardt).
    """
    pts = sorted(((float(h), float(e)) for h, e in points), key=lambda p: p[0])
    if exclude_largest < 0:
        raise ValueError("exclude_largest must be >= 0")
    if exclude_largest:
        pts = pts[:-exclude_largest]
    if len(pts) < 5:
        raise ValueError("need at least 5 points after exclusion")
    h = np.array([p[0] for p in pts])
    E = np.array([p[1] for p in pts])
    if not (np.all(np.isfinite(h)) and np.all(np.isfinite(E))):
        raise ValueError("step sizes and errors must be finite")
    if np.any(h <= 0.0) or np.any(E <= 0.0):
        raise ValueError("step sizes and errors must be positive")
    powers = np.stack([h**2, h**4, h**6], axis=1)
    floor = 1e-300

    def resid(c):
        model = powers @ c**2
        return np.log(np.maximum(model, floor)) - np.log(E)

    starts = []
    nn, _ = nnls(powers, E)
    starts.append(np.sqrt(np.maximum(nn, 1e-12)))
    for j in range(3):
        c = np.full(3, 1e-8)
        c[j] = np.sqrt(np.median(E / powers[:, j]))
        starts.append(c)
    rng = np.random.default_rng(0)
    scale = np.sqrt(np.median(E))
    for _ in range(8):
        starts.append(scale * 10.0 ** rng.uniform(-4, 2, size=3))

    best = None
    for c0 in starts:
        try:
            res = least_squares(resid, c0, method="lm", xtol=1e-14, ftol=1e-14, gtol=1e-14)
        except Exception:
            continue
        if best is None or res.cost < best.cost:
            best = res
    if best is None:
        raise FitError("all fit starts failed")
    J = best.jac
    sv = np.linalg.svd(J, compute_uv=False)
    if sv[0] > 0 and sv[-1] < 1e-10 * sv[0]:
        warnings.warn(
            "error-expansion fit has a near-zero curvature direction; "
            "some coefficients are unconstrained by the data",
            stacklevel=2,
        )
    c = best.x
    return ExpansionFit(float(c[0] ** 2), float(c[1] ** 2), float(c[2] ** 2))


@dataclass(frozen=True)
class AdvantageRow:
    """Cost-matched comparison of one scheme against the reference scheme.

    rel_accuracy = reference error / scheme error at the common budget;
    rel_speed = reference subflows needed to reach the scheme's error,
    divided by the budget.  extrapolated marks values read outside the
    measured range.
    """

    scheme: str
    error: float
    rel_accuracy: float
    rel_speed: float
    extrapolated: bool


def _loglog_interp(xs, ys, x):
    """Piecewise-linear interpolation in log-log space; extrapolates with
    the nearest segment and says so."""
    lx = np.log(np.asarray(xs, dtype=float))
    ly = np.log(np.asarray(ys, dtype=float))
    t = np.log(float(x))
    if t <= lx[0]:
        i, extrap = 0, t < lx[0]
    elif t >= lx[-1]:
        i, extrap = len(lx) - 2, t > lx[-1]
    else:
        i = int(np.searchsorted(lx, t, side="right")) - 1
        extrap = False
    slope = (ly[i + 1] - ly[i]) / (lx[i + 1] - lx[i])
    return float(np.exp(ly[i] + slope * (t - lx[i]))), bool(extrap)


def _inverse_interp(xs, ys, y):
    """First bracketing segment of y along the (decreasing) error curve."""
    lys = np.log(np.asarray(ys, dtype=float))
    t = np.log(float(y))
    for i in range(len(lys) - 1):
        lo, hi = sorted((lys[i], lys[i + 1]))
        if lo <= t <= hi:
            x, _ = _loglog_interp([ys[i], ys[i + 1]], [xs[i], xs[i + 1]], y)
            return x, False
    # out of range: extrapolate from the nearer end segment
    if abs(t - lys[0]) <= abs(t - lys[-1]):
        seg = (0, 1)
    else:
        seg = (len(lys) - 2, len(lys) - 1)
    x, _ = _loglog_interp([ys[seg[0]], ys[seg[1]]], [xs[seg[0]], xs[seg[1]]], y)
    return x, True


def advantage_table(records_by_scheme: dict, budget: float, reference: str = "yoshida"):
    """Cost-matched error comparison at a common subflow budget.

    records_by_scheme maps scheme name to its convergence records; the
    reference scheme must be present.  The reference row is exactly
    (1, 1) by definition.
    """
    if reference not in records_by_scheme:
        raise ValueError(f"records for the reference scheme {reference!r} are required")

    def curve(recs):
        recs = sorted(recs, key=lambda r: r.subflow_evals)
        if len(recs) < 2:
            raise ValueError("need at least two records per scheme")
        return (
            [r.subflow_evals for r in recs],
            [r.error_median for r in recs],
        )

    ref_costs, ref_errs = curve(records_by_scheme[reference])
    ref_err_at_budget, ref_extrap = _loglog_interp(ref_costs, ref_errs, budget)
    rows = []
    for name, recs in records_by_scheme.items():
        costs, errs = curve(recs)
        err, ex1 = _loglog_interp(costs, errs, budget)
        if name == reference:
            rows.append(AdvantageRow(name, err, 1.0, 1.0, bool(ex1)))
            continue
        ref_cost, ex2 = _inverse_interp(ref_costs, ref_errs, err)
        rows.append(
            AdvantageRow(
                name,
                err,
                ref_err_at_budget / err,
                ref_cost / float(budget),
                bool(ex1 or ex2 or ref_extrap),
            )
        )
    rows.sort(key=lambda r: r.error)
    return rows


def advantage_csv(rows) -> str:
    lines = ["scheme,error,relAccuracy,relSpeed,extrapolated"]
    for r in rows:
        lines.append(
            f"{r.scheme},{r.error!r},{r.rel_accuracy!r},{r.rel_speed!r},"
            f"{'yes' if r.extrapolated else 'no'}"
        )
    return "\n".join(lines) + "\n"


def generalization_study(schemes, configs, grid: Grid, n_list, count: int, seed: int):
    """Convergence records for each scheme under several data regimes.

    configs is an iterable of (label, T, DistributionParams, (c4, c2, c1));
    each regime gets its own reference propagator and freshly sampled
    labelled set (seeded per regime index).
    """
    out = {}
    for i, (label, T, params, pot_coeffs) in enumerate(configs):
        potential = build_potential(grid, *pot_coeffs)
        prop = build_reference(grid, potential)
        ds = generate_batch(params, count, int(seed) + i, prop, T)
        out[label] = {s.name: convergence_study(s, ds, n_list, T) for s in schemes}
    return out
