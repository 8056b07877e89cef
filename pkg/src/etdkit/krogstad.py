"""Hand-expanded linearised and transposed Krogstad steps.

These spell out every tableau entry instead of looping over the generic
tableau structure and serve as an independent cross-check of
:func:`etdkit.tangent.tangent_step` and :func:`etdkit.adjoint.adjoint_step`.
"""
from __future__ import annotations

import numpy as np


def _d(op, act, direction, terms):
    """Sum of phi-action derivatives for (ell, scale, vector) triples."""
    out = 0
    for ell, scale, x in terms:
        out = out + op.dphi(ell, scale, x, act, direction)
    return out


def _dT(op, act, z, terms):
    out = 0
    for ell, scale, x in terms:
        out = out + op.dphi_adjoint(ell, scale, x, act, z)
    return out


def _state_terms(tau, y, Y):
    """Brace-term triples of the four stage inputs and of the update."""
    h = 0.5 * tau
    Y1, Y2, Y3, Y4 = Y
    s2 = [(0, h, y), (1, h, 0.5 * tau * Y1)]
    s3 = [(0, h, y), (1, h, 0.5 * tau * Y1), (2, h, -tau * Y1), (2, h, tau * Y2)]
    s4 = [(0, tau, y), (1, tau, tau * Y1), (2, tau, -2 * tau * Y1), (2, tau, 2 * tau * Y3)]
    up = [(0, tau, y), (1, tau, tau * Y1), (2, tau, tau * (-3 * Y1 + 2 * Y2 + 2 * Y3 - Y4)),
          (3, tau, tau * (4 * Y1 - 4 * Y2 - 4 * Y3 + 4 * Y4))]
    return [[], s2, s3, s4], up


def krogstad_tangent_step(rec, problem, m, vk, stage_src=None, state_src=None, state_action=None):
    op, tau, yk, U = rec.op, rec.tau, rec.y, rec.stage_inputs
    h = 0.5 * tau
    relin = problem.depends_on_state
    brace_s, brace_u = _state_terms(tau, yk, rec.stages) if relin else ([[]] * 4, [])
    times = (rec.t, rec.t + h, rec.t + h, rec.t + tau)
    V = np.empty((4, vk.size), dtype=complex)

    def stage(i, u):
        if relin:
            u = u + _d(op, state_action, vk, brace_s[i])
        out = problem.n_y(U[i], m, times[i], yk, u)
        if relin:
            out = out + problem.n_yk(U[i], m, times[i], yk, vk)
        if stage_src is not None:
            out = out + stage_src[i]
        return out

    eh_v = op.phi(0, h, vk)
    V[0] = stage(0, vk)
    V[1] = stage(1, eh_v + tau * 0.5 * op.phi(1, h, V[0]))
    V[2] = stage(2, eh_v + tau * (0.5 * op.phi(1, h, V[0]) - op.phi(2, h, V[0])
                                  + op.phi(2, h, V[1])))
    V[3] = stage(3, op.phi(0, tau, vk) + tau * (op.phi(1, tau, V[0]) - 2 * op.phi(2, tau, V[0])
                                                + 2 * op.phi(2, tau, V[2])))
    b1 = op.phi(1, tau, V[0]) - 3 * op.phi(2, tau, V[0]) + 4 * op.phi(3, tau, V[0])
    b23 = 2 * op.phi(2, tau, V[1] + V[2]) - 4 * op.phi(3, tau, V[1] + V[2])
    b4 = 4 * op.phi(3, tau, V[3]) - op.phi(2, tau, V[3])
    v_next = op.phi(0, tau, vk) + tau * (b1 + b23 + b4)
    if relin:
        v_next = v_next + _d(op, state_action, vk, brace_u)
    if state_src is not None:
        v_next = v_next + state_src
    return V, v_next


def krogstad_adjoint_step(rec, problem, m, lam_next, stage_src=None, state_src=None,
                          state_action=None):
    op, tau, yk, U = rec.op, rec.tau, rec.y, rec.stage_inputs
    h = 0.5 * tau
    times = (rec.t, rec.t + h, rec.t + h, rec.t + tau)
    th = (lambda i: 0) if stage_src is None else (lambda i: stage_src[i])
    pT = op.phi_adjoint
    p2 = pT(2, tau, lam_next)
    p3 = pT(3, tau, lam_next)

    L4 = th(3) + tau * (4 * p3 - p2)
    u4 = problem.n_y_adj(U[3], m, times[3], yk, L4)
    L3 = th(2) + tau * (2 * p2 - 4 * p3) + tau * 2 * pT(2, tau, u4)
    u3 = problem.n_y_adj(U[2], m, times[2], yk, L3)
    L2 = th(1) + tau * (2 * p2 - 4 * p3) + tau * pT(2, h, u3)
    u2 = problem.n_y_adj(U[1], m, times[1], yk, L2)
    L1 = (th(0) + tau * (pT(1, tau, lam_next) - 3 * p2 + 4 * p3)
          + tau * (pT(1, tau, u4) - 2 * pT(2, tau, u4))
          + tau * (0.5 * pT(1, h, u3) - pT(2, h, u3))
          + tau * 0.5 * pT(1, h, u2))
    u1 = problem.n_y_adj(U[0], m, times[0], yk, L1)

    lam = pT(0, tau, lam_next) + u1 + pT(0, h, u2 + u3) + pT(0, tau, u4)
    if problem.depends_on_state:
        brace_s, brace_u = _state_terms(tau, yk, rec.stages)
        lam = lam + _dT(op, state_action, lam_next, brace_u)
        for i, ui in enumerate((u1, u2, u3, u4)):
            lam = lam + _dT(op, state_action, ui, brace_s[i])
        for i, Li in enumerate((L1, L2, L3, L4)):
            lam = lam + problem.n_yk_adj(U[i], m, times[i], yk, Li)
    if state_src is not None:
        lam = lam + state_src
    return np.stack([L1, L2, L3, L4]), np.stack([u1, u2, u3, u4]), lam
