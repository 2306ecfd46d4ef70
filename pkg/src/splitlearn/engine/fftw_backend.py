"""Compiled backend: adapts subflow plans to the FFTW core kernels."""

from __future__ import annotations

import numpy as np

from . import _fftw_core
from .plan import KINETIC, FlowDivergenceError


def _prepared(u, plan, tables, row_kinds):
    u = np.array(u, dtype=np.complex128, order="C", copy=True)
    # FFTW's backward transform is unnormalised; fold 1/M into the kinetic rows
    t = np.array(tables, dtype=np.complex128, order="C", copy=True)
    t[row_kinds == KINETIC] *= 1.0 / u.shape[-1]
    return u, t


def propagate(states, plan, tables, index, row_kinds):
    u, t = _prepared(states, plan, tables, row_kinds)
    squeeze = u.ndim == 1
    if squeeze:
        u = u[None, :]
    bad = _fftw_core.run_plan(u, plan.kinds, plan.steps, index, t)
    if bad >= 0:
        raise FlowDivergenceError(bad)
    return u[0] if squeeze else u


def propagate_with_time_grad(u0, uref, plan, tables, index, row_kinds, vpot, ksq):
    u, t = _prepared(u0, plan, tables, row_kinds)
    if u.ndim == 1:
        u = u[None, :]
    bad = _fftw_core.run_plan(u, plan.kinds, plan.steps, index, t)
    if bad >= 0:
        raise FlowDivergenceError(bad)
    r = u - np.asarray(uref, dtype=np.complex128).reshape(u.shape)
    loss = float(np.sum(r.real**2 + r.imag**2))
    lam = np.ascontiguousarray(r)
    grad = np.zeros(plan.n_ops)
    _fftw_core.accumulate_time_grad(
        u,
        lam,
        plan.kinds,
        index,
        t,
        np.ascontiguousarray(vpot, dtype=np.float64),
        np.ascontiguousarray(ksq, dtype=np.float64),
        grad,
    )
    return loss, grad
