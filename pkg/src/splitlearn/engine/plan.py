"""Subflow execution plans shared by the propagation backends.

A plan expands (coefficients, h, n_steps) into the literal sequence of
diagonal-phase applications, so cost accounting, the numpy backend and the
compiled backend all run the exact same operation list.
"""

from __future__ import annotations

import numpy as np

POTENTIAL = 0
KINETIC = 1

__all__ = [
    "POTENTIAL",
    "KINETIC",
    "FlowDivergenceError",
    "SubflowPlan",
    "build_plan",
    "phase_tables",
]


class FlowDivergenceError(FloatingPointError):
    """The state became non-finite while stepping; carries the step index."""

    def __init__(self, step):
        super().__init__(f"non-finite state detected during step {step}")
        self.step = int(step)


class SubflowPlan:
    """Flat subflow sequence for n_steps steps of size h.

    kinds[i] selects the subflow (POTENTIAL or KINETIC), times[i] is its
    physical duration, steps[i] the outer step owning it.  The parallel
    arrays (coeff_ops, coeff_idx) record which flat coefficient entry
    (alpha_k -> k, beta_k -> K + k) contributed h to each op's duration;
    merged boundary ops carry two contributions.
    """

    __slots__ = ("kinds", "times", "steps", "coeff_ops", "coeff_idx", "n_steps", "K", "h")

    def __init__(self, kinds, times, steps, coeff_ops, coeff_idx, n_steps, K, h):
        self.kinds = kinds
        self.times = times
        self.steps = steps
        self.coeff_ops = coeff_ops
        self.coeff_idx = coeff_idx
        self.n_steps = n_steps
        self.K = K
        self.h = h

    @property
    def n_ops(self) -> int:
        return self.kinds.size


def build_plan(alpha, beta, h, n_steps) -> SubflowPlan:
    """Expand scheme coefficients into the exact subflow sequence.

    When beta[-1] == 0 each step's trailing kinetic flow is skipped and the
    adjacent potential flows of consecutive steps merge into one, which is
    what makes symmetric schemes cheaper: 2*(K-1)*n_steps + 1 subflows
    instead of 2*K*n_steps.
    """
    alpha = np.asarray(alpha, dtype=float)
    beta = np.asarray(beta, dtype=float)
    K = alpha.size
    n_steps = int(n_steps)
    if n_steps < 1:
        raise ValueError("n_steps must be >= 1")
    h = float(h)
    if not np.isfinite(h) or h == 0.0:
        raise ValueError("h must be finite and nonzero")
    merge = beta[K - 1] == 0.0
    kinds: list[int] = []
    times: list[float] = []
    steps: list[int] = []
    cops: list[int] = []
    cidx: list[int] = []
    for n in range(n_steps):
        for k in range(K):
            if merge and n > 0 and k == 0:
                times[-1] += alpha[0] * h
                cops.append(len(times) - 1)
                cidx.append(0)
            else:
                kinds.append(POTENTIAL)
                times.append(alpha[k] * h)
                steps.append(n)
                cops.append(len(times) - 1)
                cidx.append(k)
            if not (merge and k == K - 1):
                kinds.append(KINETIC)
                times.append(beta[k] * h)
                steps.append(n)
                cops.append(len(times) - 1)
                cidx.append(K + k)
    return SubflowPlan(
        np.asarray(kinds, dtype=np.uint8),
        np.asarray(times, dtype=np.float64),
        np.asarray(steps, dtype=np.int32),
        np.asarray(cops, dtype=np.int32),
        np.asarray(cidx, dtype=np.int32),
        n_steps,
        K,
        h,
    )


def phase_tables(plan: SubflowPlan, vpot, ksq):
    """Per-op diagonal phase factors, deduplicated by (kind, duration).

    Potential ops multiply by exp(-i t V(x_m)); kinetic ops multiply mode n
    by exp(-i t kappa_n^2) between a forward and an inverse FFT.  Returns
    (tables, index, row_kinds): tables is (n_unique, M) complex, index maps
    each op to its row.
    """
    vpot = np.asarray(vpot, dtype=float)
    ksq = np.asarray(ksq, dtype=float)
    key_to_row: dict[tuple[int, float], int] = {}
    rows = []
    row_kinds = []
    index = np.empty(plan.n_ops, dtype=np.int32)
    for i in range(plan.n_ops):
        key = (int(plan.kinds[i]), float(plan.times[i]))
        r = key_to_row.get(key)
        if r is None:
            r = len(rows)
            key_to_row[key] = r
            base = vpot if key[0] == POTENTIAL else ksq
            rows.append(np.exp(-1j * key[1] * base))
            row_kinds.append(key[0])
        index[i] = r
    tables = np.ascontiguousarray(np.vstack(rows))
    return tables, index, np.asarray(row_kinds, dtype=np.uint8)
