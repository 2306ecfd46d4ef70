"""Shared fixtures: grids, potentials, reference propagators and datasets.

Everything heavy is session-scoped.  The small M=64 problem keeps unit
tests fast; the M=200 double well is the configuration the numerical
contracts are stated on.
"""

import numpy as np
import pytest

import splitlearn as sl


@pytest.fixture(scope="session")
def grid64():
    return sl.build_grid(64, 10.0)


@pytest.fixture(scope="session")
def pot64(grid64):
    return sl.named_potential(grid64, "v1")


@pytest.fixture(scope="session")
def prop64(grid64, pot64):
    return sl.build_reference(grid64, pot64)


@pytest.fixture(scope="session")
def ds64(prop64):
    # 20 labelled samples at T=10 on the small grid
    return sl.generate_batch(sl.named_distribution("u1"), 20, 11, prop64, 10.0)


@pytest.fixture(scope="session")
def grid200():
    return sl.build_grid(200, 10.0)


@pytest.fixture(scope="session")
def pot200(grid200):
    return sl.named_potential(grid200, "v1")


@pytest.fixture(scope="session")
def prop200(grid200, pot200):
    return sl.build_reference(grid200, pot200)


@pytest.fixture(scope="session")
def valid200(prop200):
    # fixed 200-sample validation set, defaults of the training problem
    return sl.generate_batch(sl.named_distribution("u1"), 200, 2026, prop200, 10.0)
