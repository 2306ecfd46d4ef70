"""Spectral discretisation of the periodic 1-D Schrodinger problem.

The equation i du/dt = (V - Lap) u is semi-discretised on M equispaced
points over (-L, L); the Laplacian is diagonal in Fourier space with
symbol -kappa^2.  Splitting schemes alternate two exactly-solvable
subflows: a diagonal potential phase and an FFT-diagonal kinetic phase.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import engine
from .coeffs import SplitCoeffs

__all__ = [
    "Grid",
    "Potential",
    "StepReport",
    "build_grid",
    "build_potential",
    "named_potential",
    "potential_names",
    "potential_flow",
    "kinetic_flow",
    "apply_scheme",
    "subflow_count",
    "build_hamiltonian",
]

# Quartic double/asymmetric wells used throughout: (c4, c2, c1) with
# V(x) = c4 x^4 + c2 x^2 + c1 x.
_POTENTIALS = {
    "v1": (1.0, -10.0, 0.0),
    "v2": (1.0, -10.0, -10.0),
    "v3": (3.0, -50.0, 20.0),
    "v4": (1.0, -30.0, 0.0),
}


class Grid:
    """Equispaced periodic grid: x_m = ((2m - 1)/M - 1) L for m = 1..M.

    Wavenumbers kappa_n = pi n / L with n in FFT order
    {0, 1, ..., M/2, -M/2 + 1, ..., -1}.
    """

    def __init__(self, M, L):
        M = int(M)
        L = float(L)
        if M < 4 or M % 2:
            raise ValueError("M must be an even integer >= 4")
        if not (np.isfinite(L) and L > 0.0):
            raise ValueError("L must be positive and finite")
        m = np.arange(1, M + 1)
        self.M = M
        self.L = L
        self.points = ((2.0 * m - 1.0) / M - 1.0) * L
        n = np.fft.fftfreq(M, d=1.0 / M)
        n[M // 2] = M // 2
        self.wavenumbers = np.pi * n / L
        self.ksq = self.wavenumbers**2

    @property
    def spacing(self) -> float:
        return 2.0 * self.L / self.M

    def __repr__(self):
        return f"Grid(M={self.M}, L={self.L!r})"


def build_grid(M: int = 200, L: float = 10.0) -> Grid:
    """Standard grid: M = 200 points over (-10, 10), spacing 0.1."""
    return Grid(M, L)


@dataclass(frozen=True)
class Potential:
    """Cubic-free quartic potential V(x) = c4 x^4 + c2 x^2 + c1 x on a grid."""

    c4: float
    c2: float
    c1: float
    samples: np.ndarray

    def __repr__(self):
        return f"Potential(c4={self.c4!r}, c2={self.c2!r}, c1={self.c1!r})"


def build_potential(grid: Grid, c4: float, c2: float, c1: float = 0.0) -> Potential:
    x = grid.points
    samples = c4 * x**4 + c2 * x**2 + c1 * x
    return Potential(float(c4), float(c2), float(c1), samples)


def potential_names():
    return sorted(_POTENTIALS)


def named_potential(grid: Grid, name: str) -> Potential:
    key = name.lower()
    if key not in _POTENTIALS:
        raise KeyError(f"unknown potential {name!r}; known: {', '.join(potential_names())}")
    return build_potential(grid, *_POTENTIALS[key])


def potential_flow(states, potential: Potential, t: float):
    """Exact flow of i du/dt = V u for time t: a diagonal phase."""
    return states * np.exp(-1j * t * potential.samples)


def kinetic_flow(states, grid: Grid, t: float):
    """Exact flow of i du/dt = -Lap u for time t: a Fourier-diagonal phase."""
    return np.fft.ifft(np.fft.fft(states, axis=-1) * np.exp(-1j * t * grid.ksq), axis=-1)


@dataclass(frozen=True)
class StepReport:
    """Final state of a scheme application plus the exact subflow count."""

    state: np.ndarray
    subflow_evals: int


def subflow_count(coeffs: SplitCoeffs, n_steps: int) -> int:
    """Number of subflow evaluations for n_steps steps.

    2*K*n_steps in general; with a trailing beta_K = 0 the zero flows are
    skipped and boundary potential flows merge: 2*(K-1)*n_steps + 1.
    """
    n_steps = int(n_steps)
    if n_steps < 1:
        raise ValueError("n_steps must be >= 1")
    K = coeffs.K
    if coeffs.beta[K - 1] == 0.0:
        return 2 * (K - 1) * n_steps + 1
    return 2 * K * n_steps


def apply_scheme(
    states, coeffs: SplitCoeffs, potential: Potential, grid: Grid, h: float, n_steps: int
) -> StepReport:
    """Apply n_steps steps of size h of the splitting scheme.

    states may be a single vector of length M or a (batch, M) array; the
    report's state matches the input shape.  Raises FlowDivergenceError
    when the state stops being finite (checked once per step).
    """
    states = np.asarray(states, dtype=np.complex128)
    single = states.ndim == 1
    u = np.atleast_2d(states)
    if u.shape[-1] != grid.M:
        raise ValueError(f"state length {u.shape[-1]} does not match grid M = {grid.M}")
    plan = engine.build_plan(coeffs.alpha, coeffs.beta, h, n_steps)
    tables, index, row_kinds = engine.phase_tables(plan, potential.samples, grid.ksq)
    out = engine.propagate(u, plan, tables, index, row_kinds)
    return StepReport(out[0] if single else out, plan.n_ops)


def build_hamiltonian(grid: Grid, potential: Potential, dense_cap: int = 1024) -> np.ndarray:
    """Dense real symmetric H = V - Lap with the spectral Laplacian.

    Intended for the reference propagator; refuses grids above dense_cap
    since the matrix is O(M^2).
    """
    M = grid.M
    if M > dense_cap:
        raise ValueError(f"M = {M} exceeds the dense-matrix cap {dense_cap}")
    # Columns of the kinetic matrix are -Lap applied to the identity.
    eye = np.eye(M)
    kin = np.fft.ifft(grid.ksq[:, None] * np.fft.fft(eye, axis=0), axis=0)
    H = np.diag(potential.samples) + kin.real
    return 0.5 * (H + H.T)
