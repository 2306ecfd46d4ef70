"""Reference propagator: exact flow of the semi-discrete problem.

u(T) = Q exp(-i T diag(lambda)) Q^T u(0) from one Hermitian
eigendecomposition of the dense Hamiltonian.  The decomposition is the
expensive part and can be cached on disk keyed by the problem content.
"""

from __future__ import annotations

import hashlib
import os

import numpy as np

from .spectral import Grid, Potential, build_grid, build_potential, build_hamiltonian

__all__ = ["ReferencePropagator", "build_reference", "propagate_exact"]

_CACHE_VERSION = 1


class ReferencePropagator:
    """Eigendecomposition (lambda, Q) of H plus the defining problem."""

    def __init__(self, grid: Grid, potential: Potential, eigenvalues, eigenvectors):
        self.grid = grid
        self.potential = potential
        self.eigenvalues = np.asarray(eigenvalues, dtype=float)
        self.eigenvectors = np.asarray(eigenvectors, dtype=float)
        if self.eigenvalues.shape != (grid.M,) or self.eigenvectors.shape != (grid.M, grid.M):
            raise ValueError("eigendecomposition shape does not match the grid")
        # final-time phases memoised per T; recomputing is cheap, the memo
        # just avoids M exponentials per call in tight loops
        self._phases: dict[float, np.ndarray] = {}

    def __repr__(self):
        return f"ReferencePropagator(M={self.grid.M}, potential={self.potential!r})"


def _cache_manifest(grid: Grid, potential: Potential) -> str:
    return (
        f"version = {_CACHE_VERSION}\n"
        f"M = {grid.M}\n"
        f"L = {grid.L!r}\n"
        f"c4 = {potential.c4!r}\n"
        f"c2 = {potential.c2!r}\n"
        f"c1 = {potential.c1!r}\n"
    )


def _cache_dirname(manifest: str) -> str:
    return "ref-" + hashlib.sha256(manifest.encode()).hexdigest()[:16]


def build_reference(grid: Grid, potential: Potential, cache_dir=None) -> ReferencePropagator:
    """Eigendecompose H = V - Lap, optionally through an on-disk cache.

    Cache layout: <cache_dir>/ref-<hash>/ with manifest.txt and eigs.bin
    (lambda then Q, row-major, little-endian float64).
    """
    if cache_dir is not None:
        manifest = _cache_manifest(grid, potential)
        entry = os.path.join(cache_dir, _cache_dirname(manifest))
        mpath = os.path.join(entry, "manifest.txt")
        bpath = os.path.join(entry, "eigs.bin")
        if os.path.exists(mpath) and os.path.exists(bpath):
            with open(mpath, "r", encoding="utf-8") as fh:
                stored = fh.read()
            if stored != manifest:
                raise ValueError(f"cache entry {entry} does not match the requested problem")
            M = grid.M
            expected = (M + M * M) * 8
            raw = np.fromfile(bpath, dtype="<f8")
            if raw.size * 8 != expected:
                raise ValueError(
                    f"cache file {bpath} has {raw.size * 8} bytes, expected {expected}"
                )
            lam = raw[:M]
            Q = raw[M:].reshape(M, M)
            return ReferencePropagator(grid, potential, lam, Q)
    H = build_hamiltonian(grid, potential)
    lam, Q = np.linalg.eigh(H)
    prop = ReferencePropagator(grid, potential, lam, Q)
    if cache_dir is not None:
        os.makedirs(entry, exist_ok=True)
        with open(mpath, "w", encoding="utf-8") as fh:
            fh.write(manifest)
        blob = np.concatenate([lam, Q.reshape(-1)]).astype("<f8")
        blob.tofile(bpath)
    return prop


def propagate_exact(prop: ReferencePropagator, states, T: float):
    """Exact flow for time T applied to a state or (batch, M) array."""
    T = float(T)
    if not np.isfinite(T):
        raise ValueError("T must be finite")
    phase = prop._phases.get(T)
    if phase is None:
        phase = np.exp(-1j * T * prop.eigenvalues)
        prop._phases[T] = phase
    states = np.asarray(states, dtype=np.complex128)
    Q = prop.eigenvectors
    return (states @ Q) * phase @ Q.T
