"""Backward substitution with the transposed step equations.

Every formula here is the exact adjoint of the corresponding line in
:mod:`etdkit.tangent`, so the discrete dot-product identity holds to rounding.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .schemes import stage_phi_groups, update_phi_groups


@dataclass
class AdjointSource:
    """``stage[k]`` (s, N) pairs with the stage unknowns of step k,
    ``state[k]`` with y_k for k = 0..K.  ``None`` means zero."""

    stage: list
    state: list

    @classmethod
    def zeros(cls, steps):
        return cls([None] * steps, [None] * (steps + 1))


@dataclass
class AdjointSolution:
    stages: list       # Lambda per step, shape (s, N)
    stage_duals: list  # n_y^T Lambda per step (reused by the gradient)
    states: list       # lambda_0, ..., lambda_K; lambda_0 is the initial-state gradient


def _brace_adjoint(op, groups, action, z):
    acc = None
    for ell, scale, vec in groups:
        term = op.dphi_adjoint(ell, scale, vec, action, z)
        acc = term if acc is None else acc + term
    return acc


def adjoint_step(rec, problem, tableau, m, lam_next, stage_src=None, state_src=None,
                 state_action=None):
    """Transposed step: returns (Lambda, stage duals, lambda_k)."""
    op, tau, yk, Y, U = rec.op, rec.tau, rec.y, rec.stages, rec.stage_inputs
    s = tableau.stages
    n = lam_next.size
    contrib = np.zeros((s, n), dtype=complex)
    for ell, ns, members in tableau.update_groups:
        P = op.phi_adjoint(ell, ns * tau, lam_next)
        for j, w in members:
            contrib[j] += (tau * w) * P
    Lam = np.empty((s, n), dtype=complex)
    Ubar = np.empty((s, n), dtype=complex)
    for i in range(s - 1, -1, -1):
        Li = contrib[i] if stage_src is None else contrib[i] + stage_src[i]
        ti = rec.t + tableau.c[i] * tau
        Lam[i] = Li
        Ubar[i] = problem.n_y_adj(U[i], m, ti, yk, Li)
        for ell, ns, members in tableau.row_groups[i]:
            P = op.phi_adjoint(ell, ns * tau, Ubar[i])
            for j, w in members:
                contrib[j] += (tau * w) * P

    lam = op.phi_adjoint(0, tau, lam_next)
    for i in range(s):
        ci = tableau.c[i]
        lam = lam + (Ubar[i] if ci == 0 else op.phi_adjoint(0, ci * tau, Ubar[i]))
    if problem.depends_on_state:
        lam = lam + _brace_adjoint(op, update_phi_groups(tableau, tau, yk, Y), state_action, lam_next)
        for i in range(s):
            ti = rec.t + tableau.c[i] * tau
            extra = _brace_adjoint(op, stage_phi_groups(tableau, i, tau, yk, Y), state_action, Ubar[i])
            if extra is not None:
                lam = lam + extra
            lam = lam + problem.n_yk_adj(U[i], m, ti, yk, Lam[i])
    if state_src is not None:
        lam = lam + state_src
    return Lam, Ubar, lam


def solve_adjoint(trace, source: AdjointSource) -> AdjointSolution:
    """Solve (dt/dy)^T lambda = theta by backward substitution."""
    problem, tableau, m = trace.problem, trace.tableau, trace.m
    K = len(trace.steps)
    n = trace.states[0].size
    lam = np.zeros(n, dtype=complex)
    if source.state[K] is not None:
        lam = lam + source.state[K]
    states = [None] * (K + 1)
    states[K] = lam
    stages = [None] * K
    duals = [None] * K
    for k in range(K - 1, -1, -1):
        rec = trace.steps[k]
        act = problem.L_state_action(m, rec.y) if problem.depends_on_state else None
        Lam, Ubar, lam = adjoint_step(rec, problem, tableau, m, lam, source.stage[k],
                                      source.state[k], act)
        stages[k] = Lam
        duals[k] = Ubar
        states[k] = lam
    return AdjointSolution(stages, duals, states)


def model_gradient(trace, adj: AdjointSolution):
    """-(dt/dm)^T lambda: contract the adjoint with every step's model sensitivity."""
    problem, tableau, m = trace.problem, trace.tableau, trace.m
    g = np.zeros(problem.model_dim)
    for k, rec in enumerate(trace.steps):
        tau, yk, Y, U = rec.tau, rec.y, rec.stages, rec.stage_inputs
        Lam, Ubar = adj.stages[k], adj.stage_duals[k]
        act = problem.L_model_action(m, yk) if problem.depends_on_model else None
        for i in range(tableau.stages):
            ti = rec.t + tableau.c[i] * tau
            g += problem.n_m_adj(U[i], m, ti, yk, Lam[i])
            if act is not None:
                extra = _brace_adjoint(rec.op, stage_phi_groups(tableau, i, tau, yk, Y), act, Ubar[i])
                if extra is not None:
                    g += extra
        if act is not None:
            g += _brace_adjoint(rec.op, update_phi_groups(tableau, tau, yk, Y), act,
                                adj.states[k + 1])
    return g


def sensitivity_transpose(trace, data_weights, obs_steps):
    """J^T u for data-space weights ``u`` given per observed step."""
    problem = trace.problem
    K = len(trace.steps)
    src = AdjointSource.zeros(K)
    for k, u in zip(obs_steps, data_weights):
        th = problem.observe_adjoint(trace.states[k], u)
        src.state[k] = th if src.state[k] is None else src.state[k] + th
    adj = solve_adjoint(trace, src)
    return model_gradient(trace, adj), adj
