"""Loss, analytic gradients and the candidate-screening training pipeline.

The training objective is the mean squared L2 distance between the
scheme's N-step propagation of each sample and its exact-flow label.  The
gradient with respect to the reduced parameters gamma is computed by a
reverse sweep through the (unitary) subflow sequence and pulled back
through the affine expansion, so it is exact up to rounding.
"""

from __future__ import annotations

import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import engine
from .coeffs import ReducedCoeffs, expand, transform_matrices
from .data import Dataset

__all__ = [
    "TrainConfig",
    "OptimizerState",
    "LeaderboardEntry",
    "Leaderboard",
    "steps_for",
    "batch_loss",
    "batch_loss_gradient",
    "adam_step",
    "generate_candidates",
    "screen_candidates",
    "run_pipeline",
    "fd_condition_number",
    "hessian_condition_number",
    "leaderboard_csv",
    "trace_csv",
]


def steps_for(T: float, h: float) -> int:
    """Number of steps N with N*h = T; rejects non-integral T/h."""
    if not (np.isfinite(T) and T > 0.0):
        raise ValueError("T must be positive and finite")
    if not (np.isfinite(h) and h > 0.0):
        raise ValueError("h must be positive and finite")
    n = round(T / h)
    if n < 1 or abs(n - T / h) > 1e-9 * max(1.0, n):
        raise ValueError(f"T/h = {T / h!r} is not a positive integer")
    return int(n)


def _loss_and_gradient(reduced: ReducedCoeffs, ds: Dataset, T: float, h: float):
    if len(ds) == 0:
        raise ValueError("batch must be nonempty")
    K = reduced.K
    coeffs = expand(reduced)
    n = steps_for(T, h)
    h_eff = T / n
    plan = engine.build_plan(coeffs.alpha, coeffs.beta, h_eff, n)
    tables, index, row_kinds = engine.phase_tables(plan, ds.potential.samples, ds.grid.ksq)
    loss_sum, grad_t = engine.propagate_with_time_grad(
        ds.u0, ds.u_ref, plan, tables, index, row_kinds, ds.potential.samples, ds.grid.ksq
    )
    B = len(ds)
    # chain rule: op durations are h * (sum of contributing coefficients)
    gcoef = (
        h_eff
        * np.bincount(plan.coeff_idx, weights=grad_t[plan.coeff_ops], minlength=2 * K)
        / B
    )
    A, Bm, _, _ = transform_matrices(K)
    grad_gamma = np.concatenate([gcoef[:K] @ A, gcoef[K:] @ Bm])
    return loss_sum / B, grad_gamma


def batch_loss(reduced: ReducedCoeffs, ds: Dataset, T: float, h: float) -> float:
    """Mean over the batch of ||Psi_h^N(u0) - u_ref||_2^2."""
    if len(ds) == 0:
        raise ValueError("batch must be nonempty")
    coeffs = expand(reduced)
    n = steps_for(T, h)
    h_eff = T / n
    plan = engine.build_plan(coeffs.alpha, coeffs.beta, h_eff, n)
    tables, index, row_kinds = engine.phase_tables(plan, ds.potential.samples, ds.grid.ksq)
    out = engine.propagate(ds.u0, plan, tables, index, row_kinds)
    diff = out - ds.u_ref
    return float(np.sum(diff.real**2 + diff.imag**2)) / len(ds)


def batch_loss_gradient(reduced: ReducedCoeffs, ds: Dataset, T: float, h: float) -> np.ndarray:
    """Gradient of ``batch_loss`` with respect to gamma (length K-2)."""
    return _loss_and_gradient(reduced, ds, T, h)[1]


@dataclass(frozen=True)
class OptimizerState:
    """Adam state: current gamma plus first/second moment accumulators."""

    gamma: ReducedCoeffs
    m: np.ndarray
    v: np.ndarray
    step_count: int = 0

    @classmethod
    def fresh(cls, gamma: ReducedCoeffs) -> "OptimizerState":
        d = gamma.gamma.size
        return cls(gamma, np.zeros(d), np.zeros(d), 0)


def adam_step(
    state: OptimizerState,
    grad: np.ndarray,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> OptimizerState:
    """One bias-corrected Adam update; returns a new state."""
    grad = np.asarray(grad, dtype=float)
    if grad.shape != state.m.shape:
        raise ValueError("gradient shape does not match the optimizer state")
    t = state.step_count + 1
    m = beta1 * state.m + (1.0 - beta1) * grad
    v = beta2 * state.v + (1.0 - beta2) * grad**2
    mhat = m / (1.0 - beta1**t)
    vhat = v / (1.0 - beta2**t)
    new_gamma = state.gamma.gamma - lr * mhat / (np.sqrt(vhat) + eps)
    return OptimizerState(ReducedCoeffs(new_gamma, state.gamma.K), m, v, t)


@dataclass(frozen=True)
class TrainConfig:
    """Pipeline configuration; T/h must be integral.

    candidate_mode 'grid' lays a regular lattice of spacing grid_step over
    [box_lo, box_hi]^(K-2); 'random' draws candidate_count uniform points
    from the same box.  epsilon = None keeps candidates with loss up to
    11x the best (ten times the head loss above it).
    """

    K: int
    T: float = 10.0
    h: float = 1.0 / 7.0
    candidate_mode: str = "grid"
    candidate_count: int = 1000
    box_lo: float = -0.5
    box_hi: float = 0.4
    grid_step: float = 0.1
    keep_best: int = 100
    epsilon: float | None = None
    delta: float = 0.75
    iterations: int = 250
    learning_rate: float = 0.01
    decay_rate: float = 0.995
    batch_size: int = 100
    seed: int = 0
    threads: int = 1
    val_every: int = 10
    gamma_cap: float = 10.0

    def __post_init__(self):
        if self.K < 3:
            raise ValueError("training needs K >= 3 (at least one free parameter)")
        steps_for(self.T, self.h)
        if self.candidate_mode not in ("grid", "random"):
            raise ValueError("candidate_mode must be 'grid' or 'random'")
        if not self.box_hi > self.box_lo:
            raise ValueError("candidate box must be a nonempty interval")
        if self.candidate_mode == "grid" and not self.grid_step > 0.0:
            raise ValueError("grid_step must be positive")
        if self.candidate_mode == "random" and self.candidate_count < 1:
            raise ValueError("candidate_count must be >= 1")
        if self.keep_best < 1 or self.iterations < 0 or self.batch_size < 1:
            raise ValueError("keep_best, iterations and batch_size must be positive")
        if self.epsilon is not None and self.epsilon < 0.0:
            raise ValueError("epsilon must be >= 0")
        if self.delta < 0.0:
            raise ValueError("delta must be >= 0")
        if not (0.0 < self.decay_rate <= 1.0) or self.learning_rate <= 0.0:
            raise ValueError("learning_rate must be positive and decay_rate in (0, 1]")
        if self.threads < 1:
            raise ValueError("threads must be >= 1")


def generate_candidates(config: TrainConfig) -> np.ndarray:
    """Candidate gamma array of shape (n, K-2), deterministic in the seed."""
    d = config.K - 2
    if config.candidate_mode == "grid":
        n_pts = int(np.floor((config.box_hi - config.box_lo) / config.grid_step + 1e-9)) + 1
        axis = config.box_lo + config.grid_step * np.arange(n_pts)
        mesh = np.meshgrid(*([axis] * d), indexing="ij")
        return np.column_stack([m.reshape(-1) for m in mesh])
    rng = np.random.default_rng(np.random.SeedSequence([config.seed, 0]))
    return rng.uniform(config.box_lo, config.box_hi, size=(config.candidate_count, d))


def _parallel_map(fn, items, threads):
    if threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def _screen_indices(gammas, losses, epsilon, delta, keep_best=None):
    # Candidates with non-finite loss are dropped outright; the rest are
    # ranked, truncated to keep_best, filtered by the loss band, then
    # deduplicated: a candidate dies if a strictly better survivor sits
    # within delta.  Ties at equal loss both survive.
    losses = np.asarray(losses, dtype=float)
    finite = np.flatnonzero(np.isfinite(losses))
    if finite.size == 0:
        return []
    order = finite[np.argsort(losses[finite], kind="stable")]
    if keep_best is not None:
        order = order[:keep_best]
    lmin = losses[order[0]]
    eps = 10.0 * lmin if epsilon is None else epsilon
    order = [i for i in order if losses[i] <= lmin + eps]
    kept: list[int] = []
    for i in order:
        ok = True
        for j in kept:
            if losses[j] < losses[i] and np.linalg.norm(gammas[i] - gammas[j]) <= delta:
                ok = False
                break
        if ok:
            kept.append(i)
    return kept


def screen_candidates(
    candidates,
    valid_ds: Dataset,
    T: float,
    h: float,
    epsilon: float | None = None,
    delta: float = 0.75,
    threads: int = 1,
):
    """Evaluate each candidate once on the fixed validation set and screen.

    Returns the surviving gamma vectors, best loss first.
    """
    gammas = np.atleast_2d(np.asarray(candidates, dtype=float))
    K = gammas.shape[1] + 2

    def _loss(g):
        try:
            return batch_loss(ReducedCoeffs(g, K), valid_ds, T, h)
        except engine.FlowDivergenceError:
            return np.inf

    losses = _parallel_map(_loss, list(gammas), threads)
    kept = _screen_indices(gammas, losses, epsilon, delta)
    return [gammas[i].copy() for i in kept]


@dataclass(frozen=True)
class LeaderboardEntry:
    gamma: np.ndarray
    validation_loss: float
    candidate_index: int
    iterations_run: int
    diverged: bool = False


@dataclass(frozen=True)
class Leaderboard:
    """Fine-tuned candidates ranked by fixed-validation loss.

    traces maps candidate_index to per-iteration rows
    (iteration, train_loss, val_loss-or-nan, *gamma).
    """

    entries: tuple
    traces: dict = field(default_factory=dict, compare=False)


def _check_compatible(train_ds: Dataset, valid_ds: Dataset, T: float):
    for ds, label in ((train_ds, "training"), (valid_ds, "validation")):
        if ds.meta.T != T:
            raise ValueError(f"{label} set was labelled at T = {ds.meta.T}, config says {T}")
    if valid_ds.grid.M != train_ds.grid.M or valid_ds.grid.L != train_ds.grid.L:
        raise ValueError("training and validation sets use different grids")
    pt, pv = train_ds.potential, valid_ds.potential
    if (pt.c4, pt.c2, pt.c1) != (pv.c4, pv.c2, pv.c1):
        raise ValueError("training and validation sets use different potentials")


def _fine_tune(gamma0, cand_index, config: TrainConfig, train_ds: Dataset):
    """Adam with decayed learning rate on fresh minibatches.

    Returns (gamma, iterations_run, diverged, trace_rows); trace rows hold
    (iteration, train_loss, nan, *gamma) with validation losses filled in
    by the caller at val_every checkpoints.
    """
    K = config.K
    rng = np.random.default_rng(np.random.SeedSequence([config.seed, 1 + cand_index]))
    state = OptimizerState.fresh(ReducedCoeffs(gamma0, K))
    rows = []
    for t in range(config.iterations):
        idx = rng.integers(0, len(train_ds), config.batch_size)
        try:
            loss, grad = _loss_and_gradient(state.gamma, train_ds.take(idx), config.T, config.h)
        except engine.FlowDivergenceError:
            return state.gamma.gamma, t, True, rows
        if not (np.isfinite(loss) and np.all(np.isfinite(grad))):
            return state.gamma.gamma, t, True, rows
        rows.append((t, loss, np.nan, state.gamma.gamma.copy()))
        lr = config.learning_rate * config.decay_rate**t
        state = adam_step(state, grad, lr)
        if np.max(np.abs(state.gamma.gamma)) > config.gamma_cap:
            return state.gamma.gamma, t + 1, True, rows
    return state.gamma.gamma, config.iterations, False, rows


def run_pipeline(config: TrainConfig, train_ds: Dataset, valid_ds: Dataset) -> Leaderboard:
    """Candidate generation, screening, fine-tuning, final ranking.

    Fully deterministic for a given (config, datasets): candidate draws use
    seed child 0, the minibatch stream of candidate i uses seed child 1+i,
    and reductions are order-fixed, so --threads never changes results.
    Divergent candidates stay on the leaderboard, flagged, ranked last.
    """
    _check_compatible(train_ds, valid_ds, config.T)
    gammas = generate_candidates(config)
    K = config.K

    def _val_loss(g):
        try:
            loss = batch_loss(ReducedCoeffs(g, K), valid_ds, config.T, config.h)
        except engine.FlowDivergenceError:
            return np.inf
        return loss if np.isfinite(loss) else np.inf

    losses = _parallel_map(_val_loss, list(gammas), config.threads)
    kept = _screen_indices(gammas, losses, config.epsilon, config.delta, config.keep_best)

    def _tune(i):
        return _fine_tune(gammas[i].copy(), int(i), config, train_ds)

    tuned = _parallel_map(_tune, kept, config.threads)

    entries = []
    traces = {}
    for i, (g, iters, diverged, rows) in zip(kept, tuned):
        vloss = np.inf if diverged else _val_loss(g)
        if not np.isfinite(vloss):
            diverged, vloss = True, np.inf
        entries.append(LeaderboardEntry(g, float(vloss), int(i), iters, diverged))
        # validation checkpoints: every val_every iterations plus the last
        filled = []
        for (t, tl, _, gam) in rows:
            want = config.val_every > 0 and (t % config.val_every == 0 or t == iters - 1)
            vl = _val_loss(gam) if want else np.nan
            filled.append((t, tl, vl, gam))
        traces[int(i)] = filled
    entries.sort(key=lambda e: (e.diverged, e.validation_loss, e.candidate_index))
    return Leaderboard(tuple(entries), traces)


def leaderboard_csv(board: Leaderboard) -> str:
    """CSV rows (rank, gamma..., valLoss, flag)."""
    if not board.entries:
        return "rank,valLoss,flag\n"
    d = board.entries[0].gamma.size
    head = ["rank"] + [f"gamma{i + 1}" for i in range(d)] + ["valLoss", "flag"]
    lines = [",".join(head)]
    for rank, e in enumerate(board.entries, start=1):
        flag = "diverged" if e.diverged else "ok"
        gam = ",".join(repr(float(x)) for x in e.gamma)
        lines.append(f"{rank},{gam},{e.validation_loss!r},{flag}")
    return "\n".join(lines) + "\n"


def trace_csv(rows) -> str:
    """CSV rows (iteration, trainLoss, valLoss, gamma...)."""
    if not rows:
        return "iteration,trainLoss,valLoss\n"
    d = rows[0][3].size
    head = ["iteration", "trainLoss", "valLoss"] + [f"gamma{i + 1}" for i in range(d)]
    lines = [",".join(head)]
    for (t, tl, vl, gam) in rows:
        vtxt = "" if not np.isfinite(vl) else repr(float(vl))
        gtxt = ",".join(repr(float(x)) for x in gam)
        lines.append(f"{t},{tl!r},{vtxt},{gtxt}")
    return "\n".join(lines) + "\n"


def fd_condition_number(func, x, step: float = 1e-4) -> float:
    """Condition number of the central finite-difference Hessian of func.

    Warns when the smallest-magnitude eigenvalue is negative beyond noise
    (the point is then not a local minimum).
    """
    x = np.asarray(x, dtype=float)
    d = x.size
    H = np.empty((d, d))
    f0 = func(x)

    def at(*pairs):
        y = x.copy()
        for i, s in pairs:
            y[i] += s
        return func(y)

    for i in range(d):
        H[i, i] = (at((i, step)) - 2.0 * f0 + at((i, -step))) / step**2
        for j in range(i + 1, d):
            H[i, j] = H[j, i] = (
                at((i, step), (j, step))
                - at((i, step), (j, -step))
                - at((i, -step), (j, step))
                + at((i, -step), (j, -step))
            ) / (4.0 * step**2)
    eig = np.linalg.eigvalsh(0.5 * (H + H.T))
    amax = float(np.max(np.abs(eig)))
    amin = float(np.min(np.abs(eig)))
    if np.min(eig) < -1e-6 * amax:
        warnings.warn(
            f"Hessian has a negative eigenvalue ({np.min(eig):.3e}); not a local minimum",
            stacklevel=2,
        )
    if amin == 0.0:
        return np.inf
    return amax / amin


def hessian_condition_number(
    reduced: ReducedCoeffs, valid_ds: Dataset, T: float, h: float, step: float = 1e-4
) -> float:
    """Condition number of the validation loss Hessian at gamma."""
    K = reduced.K
    return fd_condition_number(
        lambda g: batch_loss(ReducedCoeffs(g, K), valid_ds, T, h), reduced.gamma, step
    )
