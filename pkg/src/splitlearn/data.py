"""Initial-condition sampling and dataset persistence.

Samples are generated by a sequential mutation chain: each item starts
from the previous item's propagated state and randomly gains a Gaussian
bump, a global phase, or resets to a fresh Gaussian, then is normalised
and labelled with the exact flow.  The chain makes the marginal
distribution hard to write down but easy to reproduce from a seed.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from .reference import ReferencePropagator, build_reference, propagate_exact
from .spectral import Grid, Potential, build_grid, build_potential

__all__ = [
    "DistributionParams",
    "DatasetMeta",
    "Dataset",
    "gaussian_state",
    "named_distribution",
    "distribution_names",
    "generate_batch",
    "save_dataset",
    "load_dataset",
    "save_states",
    "load_states",
]

_FORMAT_VERSION = 1


@dataclass(frozen=True)
class DistributionParams:
    """Sampling-chain parameters: Gaussian centre distribution and width.

    Bump centres are drawn from N(x_cent, x_std_dev^2); sigma is the bump
    width.
    """

    x_cent: float
    x_std_dev: float
    sigma: float

    def __post_init__(self):
        object.__setattr__(self, "x_cent", float(self.x_cent))
        object.__setattr__(self, "x_std_dev", float(self.x_std_dev))
        object.__setattr__(self, "sigma", float(self.sigma))
        if not (self.x_std_dev > 0.0 and self.sigma > 0.0):
            raise ValueError("x_std_dev and sigma must be positive")


# The three sampling regimes used throughout: wells of the quartic
# potentials at -sqrt(5), +sqrt(5) and -sqrt(15).
_DISTRIBUTIONS = {
    "u1": DistributionParams(-np.sqrt(5.0), 0.1, 0.5),
    "u2": DistributionParams(np.sqrt(5.0), 0.2, 0.5),
    "u3": DistributionParams(-np.sqrt(15.0), 0.05, np.sqrt(0.1)),
}


def distribution_names():
    return sorted(_DISTRIBUTIONS)


def named_distribution(name: str) -> DistributionParams:
    key = name.lower()
    if key not in _DISTRIBUTIONS:
        raise KeyError(
            f"unknown distribution {name!r}; known: {', '.join(distribution_names())}"
        )
    return _DISTRIBUTIONS[key]


def gaussian_state(grid: Grid, x0: float, sigma: float):
    """Normalised Gaussian wavepacket exp(-((x - x0)/sigma)^2 / 2).

    Normalisation is the plain vector norm, sum |u_m|^2 = 1, matching the
    loss convention.
    """
    if not sigma > 0.0:
        raise ValueError("sigma must be positive")
    g = np.exp(-0.5 * ((grid.points - x0) / sigma) ** 2).astype(np.complex128)
    return g / np.sqrt(np.sum(g.real**2))


@dataclass(frozen=True)
class DatasetMeta:
    T: float
    seed: int
    count: int
    params: DistributionParams


class Dataset:
    """Labelled pairs (u0, u_ref = exact flow of u0 over T) on one problem."""

    def __init__(self, grid: Grid, potential: Potential, u0, u_ref, meta: DatasetMeta):
        u0 = np.asarray(u0, dtype=np.complex128)
        u_ref = np.asarray(u_ref, dtype=np.complex128)
        if u0.shape != u_ref.shape or u0.ndim != 2 or u0.shape[1] != grid.M:
            raise ValueError("u0 and u_ref must be (count, M) arrays matching the grid")
        self.grid = grid
        self.potential = potential
        self.u0 = u0
        self.u_ref = u_ref
        self.meta = meta

    def __len__(self) -> int:
        return self.u0.shape[0]

    def take(self, indices) -> "Dataset":
        """Subset view used for minibatching; metadata is shared."""
        return Dataset(self.grid, self.potential, self.u0[indices], self.u_ref[indices], self.meta)


def generate_batch(
    params: DistributionParams,
    count: int,
    seed: int,
    prop: ReferencePropagator,
    T: float,
    add_prob: float = 0.5,
    phase_prob: float = 0.5,
    reset_prob: float = 0.01,
) -> Dataset:
    """Run the sequential sampling chain for `count` items.

    Item j mutates the previous label (item 0 starts from a fresh
    Gaussian): with add_prob a Gaussian bump at x0_j ~ N(x_cent, x_std^2)
    is added, with phase_prob a uniform global phase is applied, and with
    reset_prob the state is replaced by the pure Gaussian at x0_j.  The
    result is normalised to unit vector norm and labelled by the exact
    flow.  Fixed draw pattern per item, so truncating to the first j items
    reproduces bit-identically under the same seed.
    """
    count = int(count)
    if count < 0:
        raise ValueError("count must be >= 0")
    grid = prop.grid
    rng = np.random.default_rng(seed)
    u0 = np.empty((count, grid.M), dtype=np.complex128)
    u_ref = np.empty((count, grid.M), dtype=np.complex128)
    prev = None
    for j in range(count):
        x0 = rng.normal(params.x_cent, params.x_std_dev)
        xi = rng.random(4)
        if j == 0:
            xbar = rng.normal(params.x_cent, params.x_std_dev)
            phi = gaussian_state(grid, xbar, params.sigma)
        else:
            phi = prev
        if xi[0] < add_prob:
            phi = phi + gaussian_state(grid, x0, params.sigma)
        if xi[1] < phase_prob:
            phi = np.exp(2j * np.pi * xi[2]) * phi
        if xi[3] < reset_prob:
            phi = gaussian_state(grid, x0, params.sigma)
        u0[j] = phi / np.sqrt(np.sum(phi.real**2 + phi.imag**2))
        u_ref[j] = propagate_exact(prop, u0[j], T)
        prev = u_ref[j]
    meta = DatasetMeta(float(T), int(seed), count, params)
    return Dataset(grid, prop.potential, u0, u_ref, meta)


def _write_manifest(path, fields):
    lines = [f"{k} = {v}" for k, v in fields]
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def _read_manifest(path):
    fields = {}
    with open(path, "r", encoding="utf-8") as fh:
        for raw in fh:
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            key, sep, val = line.partition("=")
            if not sep:
                raise ValueError(f"malformed manifest line {line!r} in {path}")
            fields[key.strip()] = val.strip()
    return fields


def save_dataset(ds: Dataset, path):
    """Write a dataset directory: manifest.txt plus data.bin.

    data.bin holds, per item, u0 then u_ref, each as M little-endian
    float64 (re, im) pairs.
    """
    os.makedirs(path, exist_ok=True)
    m = ds.meta
    _write_manifest(
        os.path.join(path, "manifest.txt"),
        [
            ("version", _FORMAT_VERSION),
            ("M", ds.grid.M),
            ("L", repr(ds.grid.L)),
            ("c4", repr(ds.potential.c4)),
            ("c2", repr(ds.potential.c2)),
            ("c1", repr(ds.potential.c1)),
            ("T", repr(m.T)),
            ("x_cent", repr(m.params.x_cent)),
            ("x_std_dev", repr(m.params.x_std_dev)),
            ("sigma", repr(m.params.sigma)),
            ("seed", m.seed),
            ("count", m.count),
        ],
    )
    inter = np.empty((len(ds), 2, ds.grid.M), dtype="<c16")
    inter[:, 0, :] = ds.u0
    inter[:, 1, :] = ds.u_ref
    inter.tofile(os.path.join(path, "data.bin"))


def load_dataset(path) -> Dataset:
    """Read a dataset directory written by ``save_dataset``.

    Payload size must match the manifest exactly; short or oversized files
    are rejected with byte offsets.
    """
    fields = _read_manifest(os.path.join(path, "manifest.txt"))
    version = int(fields.get("version", -1))
    if version != _FORMAT_VERSION:
        raise ValueError(f"unsupported dataset format version {version}")
    M = int(fields["M"])
    count = int(fields["count"])
    grid = build_grid(M, float(fields["L"]))
    potential = build_potential(
        grid, float(fields["c4"]), float(fields["c2"]), float(fields["c1"])
    )
    params = DistributionParams(
        float(fields["x_cent"]), float(fields["x_std_dev"]), float(fields["sigma"])
    )
    meta = DatasetMeta(float(fields["T"]), int(fields["seed"]), count, params)
    bpath = os.path.join(path, "data.bin")
    expected = count * 2 * M * 16
    actual = os.path.getsize(bpath)
    if actual != expected:
        raise ValueError(
            f"{bpath}: payload is {actual} bytes but the manifest implies {expected}; "
            f"data ends at byte {min(actual, expected)}"
        )
    raw = np.fromfile(bpath, dtype="<c16").reshape(count, 2, M).astype(np.complex128)
    return Dataset(grid, potential, raw[:, 0, :].copy(), raw[:, 1, :].copy(), meta)


def save_states(states, grid: Grid, potential: Potential, path):
    """Write bare states (no labels) with a problem manifest."""
    states = np.atleast_2d(np.asarray(states, dtype=np.complex128))
    if states.shape[1] != grid.M:
        raise ValueError("state length does not match the grid")
    os.makedirs(path, exist_ok=True)
    _write_manifest(
        os.path.join(path, "manifest.txt"),
        [
            ("version", _FORMAT_VERSION),
            ("M", grid.M),
            ("L", repr(grid.L)),
            ("c4", repr(potential.c4)),
            ("c2", repr(potential.c2)),
            ("c1", repr(potential.c1)),
            ("count", states.shape[0]),
        ],
    )
    states.astype("<c16").tofile(os.path.join(path, "states.bin"))


def load_states(path):
    """Read states written by ``save_states``: returns (states, grid, potential)."""
    fields = _read_manifest(os.path.join(path, "manifest.txt"))
    M = int(fields["M"])
    count = int(fields["count"])
    grid = build_grid(M, float(fields["L"]))
    potential = build_potential(
        grid, float(fields["c4"]), float(fields["c2"]), float(fields["c1"])
    )
    bpath = os.path.join(path, "states.bin")
    expected = count * M * 16
    actual = os.path.getsize(bpath)
    if actual != expected:
        raise ValueError(
            f"{bpath}: payload is {actual} bytes but the manifest implies {expected}; "
            f"data ends at byte {min(actual, expected)}"
        )
    states = np.fromfile(bpath, dtype="<c16").reshape(count, M).astype(np.complex128)
    return states, grid, potential
