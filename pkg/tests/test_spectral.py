"""Grid construction, subflows, scheme application and cost accounting."""

import numpy as np
import pytest

import splitlearn as sl
from splitlearn.engine import FlowDivergenceError


def test_build_grid_points_m4():
    g = sl.build_grid(4, 1.0)
    assert np.allclose(g.points, [-0.75, -0.25, 0.25, 0.75], atol=1e-15)


def test_build_grid_default_problem(grid200):
    assert grid200.M == 200 and grid200.L == 10.0
    assert grid200.points.size == 200
    assert grid200.points[0] == pytest.approx(-9.95)
    assert grid200.points[-1] == pytest.approx(9.95)
    assert np.allclose(np.diff(grid200.points), 0.1, atol=1e-14)


def test_wavenumber_multiset_m4():
    g = sl.build_grid(4, np.pi)
    assert sorted(g.wavenumbers.tolist()) == [-1.0, 0.0, 1.0, 2.0]
    assert np.all(g.ksq >= 0.0)


def test_build_grid_rejects_bad_args():
    for M, L in ((5, 1.0), (2, 1.0), (200, 0.0), (200, -3.0)):
        with pytest.raises(ValueError):
            sl.build_grid(M, L)


def test_potential_samples_match_polynomial(grid200):
    x = grid200.points
    cases = {"v1": (1, -10, 0), "v2": (1, -10, -10), "v3": (3, -50, 20), "v4": (1, -30, 0)}
    for name, (c4, c2, c1) in cases.items():
        p = sl.named_potential(grid200, name)
        assert (p.c4, p.c2, p.c1) == (c4, c2, c1)
        want = c4 * x**4 + c2 * x**2 + c1 * x
        assert np.allclose(p.samples, want, rtol=1e-12, atol=1e-12)


def test_named_potential_unknown(grid200):
    with pytest.raises(KeyError):
        sl.named_potential(grid200, "v9")


# --- subflows -------------------------------------------------------------

def test_potential_flow_definition(grid64, pot64):
    rng = np.random.default_rng(4)
    u = rng.standard_normal(64) + 1j * rng.standard_normal(64)
    out = sl.potential_flow(u, pot64, 0.37)
    assert np.allclose(out, np.exp(-1j * 0.37 * pot64.samples) * u, atol=1e-14)
    assert np.linalg.norm(out) == pytest.approx(np.linalg.norm(u), abs=1e-13)
    assert np.array_equal(sl.potential_flow(u, pot64, 0.0), u)


def test_kinetic_flow_identity_and_constant(grid64):
    rng = np.random.default_rng(5)
    u = rng.standard_normal(64) + 1j * rng.standard_normal(64)
    assert np.allclose(sl.kinetic_flow(u, grid64, 0.0), u, atol=1e-14)
    const = np.full(64, 2.0 - 1.0j)
    assert np.allclose(sl.kinetic_flow(const, grid64, 1.3), const, atol=1e-13)


def test_kinetic_flow_single_mode_eigenrelation(grid64):
    x = grid64.points
    for n in (1, 5, -7, 31):
        kappa = np.pi * n / grid64.L
        u = np.exp(1j * kappa * x)
        out = sl.kinetic_flow(u, grid64, 0.21)
        assert np.allclose(out, np.exp(-1j * 0.21 * kappa**2) * u, atol=1e-12)


def test_kinetic_flow_norm_preserving(grid200):
    rng = np.random.default_rng(6)
    u = rng.standard_normal((3, 200)) + 1j * rng.standard_normal((3, 200))
    out = sl.kinetic_flow(u, grid200, 0.8)
    assert np.allclose(np.linalg.norm(out, axis=1), np.linalg.norm(u, axis=1), atol=1e-13)


# --- scheme application ----------------------------------------------------

def test_apply_scheme_unitarity_all_schemes(grid200, pot200, valid200):
    u = valid200.u0[:5]
    for name in sl.scheme_names():
        c = sl.named_scheme(name).coeffs
        rep = sl.apply_scheme(u, c, pot200, grid200, 1.0 / 7.0, 70)
        drift = np.abs(np.linalg.norm(rep.state, axis=1) - np.linalg.norm(u, axis=1))
        assert drift.max() < 1e-12, name


def test_apply_scheme_time_reversal_symmetric(grid64, pot64, ds64):
    u = ds64.u0[:4]
    for name in ("strang", "yoshida", "strang4x", "learn5a", "learn8a"):
        c = sl.named_scheme(name).coeffs
        fwd = sl.apply_scheme(u, c, pot64, grid64, 0.11, 1).state
        back = sl.apply_scheme(fwd, c, pot64, grid64, -0.11, 1).state
        assert np.abs(back - u).max() < 1e-10, name


def test_apply_scheme_trotter_not_reversible(grid64, pot64, ds64):
    # sanity that the reversal check can fail: trotter is first order
    u = ds64.u0[:1]
    c = sl.named_scheme("trotter").coeffs
    fwd = sl.apply_scheme(u, c, pot64, grid64, 0.11, 1).state
    back = sl.apply_scheme(fwd, c, pot64, grid64, -0.11, 1).state
    assert np.abs(back - u).max() > 1e-6


def test_apply_scheme_commuting_limit(grid64):
    # with V = 0 every consistent scheme equals the kinetic flow at N*h
    zero = sl.build_potential(grid64, 0.0, 0.0, 0.0)
    rng = np.random.default_rng(7)
    u = rng.standard_normal(64) + 1j * rng.standard_normal(64)
    want = sl.kinetic_flow(u, grid64, 5 * 0.17)
    for K in (2, 5, 8):
        c = sl.expand(sl.ReducedCoeffs(0.4 * (rng.random(K - 2) - 0.5), K))
        got = sl.apply_scheme(u, c, zero, grid64, 0.17, 5).state
        assert np.abs(got - want).max() < 1e-12


def test_subflow_accounting(grid64, pot64, ds64):
    l5 = sl.named_scheme("learn5a").coeffs
    l8 = sl.named_scheme("learn8a").coeffs
    assert sl.apply_scheme(ds64.u0[0], l5, pot64, grid64, 1 / 7, 70).subflow_evals == 561
    assert sl.apply_scheme(ds64.u0[0], l8, pot64, grid64, 1 / 7, 70).subflow_evals == 981
    assert sl.subflow_count(l5, 70) == 561
    assert sl.subflow_count(l8, 70) == 981
    # non-symmetric: no trailing-zero skip, no boundary merge
    trotter = sl.named_scheme("trotter").coeffs
    assert sl.subflow_count(trotter, 70) == 2 * 1 * 70


def test_subflow_count_property():
    rng = np.random.default_rng(8)
    for K in range(2, 10):
        for N in (1, 3, 17):
            c = sl.expand(sl.ReducedCoeffs(rng.random(K - 2) - 0.5, K))
            assert sl.subflow_count(c, N) == 2 * (K - 1) * N + 1


def test_apply_scheme_single_state_matches_batch(grid64, pot64, ds64):
    # FFT plans may differ with batch shape, so equality is numerical
    c = sl.named_scheme("strang").coeffs
    single = sl.apply_scheme(ds64.u0[3], c, pot64, grid64, 0.2, 50).state
    batch = sl.apply_scheme(ds64.u0[:5], c, pot64, grid64, 0.2, 50).state
    assert np.abs(single - batch[3]).max() < 1e-12


def test_apply_scheme_rejects_nonfinite_state(grid64, pot64):
    u = np.ones(64, complex)
    u[10] = np.nan
    c = sl.named_scheme("strang").coeffs
    with pytest.raises(FlowDivergenceError) as exc:
        sl.apply_scheme(u, c, pot64, grid64, 0.1, 5)
    assert exc.value.step == 0


def test_apply_scheme_input_not_mutated(grid64, pot64, ds64):
    u = ds64.u0[:2].copy()
    sl.apply_scheme(u, sl.named_scheme("yoshida").coeffs, pot64, grid64, 0.1, 3)
    assert np.array_equal(u, ds64.u0[:2])


# --- hamiltonian ----------------------------------------------------------

def test_hamiltonian_symmetric(grid64, pot64):
    H = sl.build_hamiltonian(grid64, pot64)
    assert np.abs(H - H.T).max() < 1e-12


def test_hamiltonian_zero_mode(grid64):
    zero = sl.build_potential(grid64, 0.0, 0.0, 0.0)
    H = sl.build_hamiltonian(grid64, zero)
    assert np.abs(H @ np.ones(64)).max() < 1e-12


def test_hamiltonian_single_mode_eigenrelation(grid64):
    zero = sl.build_potential(grid64, 0.0, 0.0, 0.0)
    H = sl.build_hamiltonian(grid64, zero)
    x = grid64.points
    for n in (2, 9, -13):
        kappa = np.pi * n / grid64.L
        u = np.exp(1j * kappa * x)
        assert np.abs(H @ u - kappa**2 * u).max() < 1e-10 * max(1.0, kappa**2)


def test_hamiltonian_action_matches_flows(grid64, pot64):
    # H u = V u - u'' with the spectral second derivative
    rng = np.random.default_rng(9)
    u = rng.standard_normal(64) + 1j * rng.standard_normal(64)
    H = sl.build_hamiltonian(grid64, pot64)
    ddu = np.fft.ifft(-grid64.ksq * np.fft.fft(u))
    assert np.abs(H @ u - (pot64.samples * u - ddu)).max() < 1e-10 * np.abs(H @ u).max()


def test_hamiltonian_dense_cap():
    g = sl.build_grid(2048, 10.0)
    p = sl.build_potential(g, 1.0, -10.0)
    with pytest.raises(ValueError):
        sl.build_hamiltonian(g, p)
