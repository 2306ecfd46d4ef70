"""Pure-numpy execution of subflow plans (fallback backend)."""

from __future__ import annotations

import numpy as np

from .plan import KINETIC, POTENTIAL, FlowDivergenceError


def propagate(states, plan, tables, index, row_kinds):
    """Apply the planned subflow sequence to a (batch, M) array.

    The input is not mutated.  The state is checked for finiteness once per
    outer step; a failure raises FlowDivergenceError with the step index.
    """
    u = np.array(states, dtype=np.complex128, order="C", copy=True)
    kinds = plan.kinds
    steps = plan.steps
    n_ops = plan.n_ops
    for i in range(n_ops):
        tbl = tables[index[i]]
        if kinds[i] == POTENTIAL:
            u *= tbl
        else:
            u = np.fft.ifft(np.fft.fft(u, axis=-1) * tbl, axis=-1)
        if i + 1 == n_ops or steps[i + 1] != steps[i]:
            if not np.all(np.isfinite(u)):
                raise FlowDivergenceError(int(steps[i]))
    return u


def propagate_with_time_grad(u0, uref, plan, tables, index, row_kinds, vpot, ksq):
    """Forward propagate u0 and reverse-accumulate duration derivatives.

    Returns (loss_sum, grad_t): loss_sum = sum_b ||Psi u0_b - uref_b||^2 and
    grad_t[i] = d loss_sum / d times[i].  The backward sweep rolls the state
    and the residual back through the inverse subflows (all unitary), so no
    intermediate states are stored.
    """
    u = propagate(u0, plan, tables, index, row_kinds)
    r = u - uref
    loss = float(np.sum(r.real**2 + r.imag**2))
    lam = r
    kinds = plan.kinds
    M = u.shape[-1]
    grad = np.zeros(plan.n_ops)
    for i in range(plan.n_ops - 1, -1, -1):
        tbl = tables[index[i]]
        if kinds[i] == POTENTIAL:
            # d/dt of exp(-i t V) pairs the generator -iV with the state:
            # d loss/dt = 2 Im <lam, V u>.
            grad[i] = 2.0 * float(np.sum(vpot * np.imag(np.conj(lam) * u)))
            c = np.conj(tbl)
            u = u * c
            lam = lam * c
        else:
            uh = np.fft.fft(u, axis=-1)
            lh = np.fft.fft(lam, axis=-1)
            # Parseval: <lam, F^-1 diag(k^2) F u> = (1/M) sum k^2 conj(lh) uh.
            grad[i] = (2.0 / M) * float(np.sum(ksq * np.imag(np.conj(lh) * uh)))
            c = np.conj(tbl)
            u = np.fft.ifft(uh * c, axis=-1)
            lam = np.fft.ifft(lh * c, axis=-1)
    return loss, grad
