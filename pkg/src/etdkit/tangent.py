"""Forward substitution with the linearised step equations.

The solver marches the tangent of the exponential Runge-Kutta recursion
through a recorded :class:`~etdkit.schemes.ForwardTrace`.  In relinearised
mode the operator depends on the step-start state, which adds derivative
terms of the phi-actions with respect to that state.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .schemes import apply_groups, stage_phi_groups, update_phi_groups


@dataclass
class TangentSource:
    """Right-hand side of the linearised system.

    ``stage[k]`` has shape (s, N) and drives the stage equations of step k,
    ``state[k]`` drives the equation for y_{k+1}.  ``None`` means zero.
    """

    stage: list
    state: list

    @classmethod
    def zeros(cls, steps):
        return cls([None] * steps, [None] * steps)


@dataclass
class TangentSolution:
    stages: list   # V per step, shape (s, N)
    states: list   # v_0 (= 0), v_1, ..., v_K


def _brace_forward(op, groups, action, direction):
    acc = None
    for ell, scale, vec in groups:
        term = op.dphi(ell, scale, vec, action, direction)
        acc = term if acc is None else acc + term
    return acc


def tangent_step(rec, problem, tableau, m, vk, stage_src=None, state_src=None, state_action=None):
    """Linearised step k: returns (V, v_{k+1})."""
    op, tau, yk, Y, U = rec.op, rec.tau, rec.y, rec.stages, rec.stage_inputs
    s = tableau.stages
    V = np.empty((s, vk.size), dtype=complex)
    relin = problem.depends_on_state
    for i in range(s):
        ci = tableau.c[i]
        u = apply_groups(op, stage_phi_groups(tableau, i, tau, vk, V))
        if ci == 0:
            u = vk if u is None else vk + u
        ti = rec.t + ci * tau
        if relin:
            extra = _brace_forward(op, stage_phi_groups(tableau, i, tau, yk, Y), state_action, vk)
            if extra is not None:
                u = u + extra
        Vi = problem.n_y(U[i], m, ti, yk, u)
        if relin:
            Vi = Vi + problem.n_yk(U[i], m, ti, yk, vk)
        if stage_src is not None:
            Vi = Vi + stage_src[i]
        V[i] = Vi
    v_next = apply_groups(op, update_phi_groups(tableau, tau, vk, V))
    if relin:
        v_next = v_next + _brace_forward(op, update_phi_groups(tableau, tau, yk, Y),
                                         state_action, vk)
    if state_src is not None:
        v_next = v_next + state_src
    return V, v_next


def solve_linearized(trace, source: TangentSource) -> TangentSolution:
    """Solve (dt/dy) v = q by forward substitution over the trace."""
    problem, tableau, m = trace.problem, trace.tableau, trace.m
    v = np.zeros_like(trace.states[0], dtype=complex)
    states = [v]
    stages = []
    for k, rec in enumerate(trace.steps):
        act = problem.L_state_action(m, rec.y) if problem.depends_on_state else None
        V, v = tangent_step(rec, problem, tableau, m, v, source.stage[k], source.state[k], act)
        stages.append(V)
        states.append(v)
    return TangentSolution(stages, states)


def model_source(trace, w) -> TangentSource:
    """Source -(dt/dm) w: the sensitivity of every step equation to ``m``."""
    problem, tableau, m = trace.problem, trace.tableau, trace.m
    w = np.asarray(w, dtype=float)
    stage, state = [], []
    for rec in trace.steps:
        tau, yk, Y, U = rec.tau, rec.y, rec.stages, rec.stage_inputs
        act = problem.L_model_action(m, yk) if problem.depends_on_model else None
        Q = np.empty_like(Y)
        for i in range(tableau.stages):
            ti = rec.t + tableau.c[i] * tau
            Qi = problem.n_m(U[i], m, ti, yk, w)
            if act is not None:
                du = _brace_forward(rec.op, stage_phi_groups(tableau, i, tau, yk, Y), act, w)
                if du is not None:
                    Qi = Qi + problem.n_y(U[i], m, ti, yk, du)
            Q[i] = Qi
        q = None
        if act is not None:
            q = _brace_forward(rec.op, update_phi_groups(tableau, tau, yk, Y), act, w)
        stage.append(Q)
        state.append(q)
    return TangentSource(stage, state)


def observation_steps(trace, times):
    return [trace.grid.index_of(t) for t in times]


def sensitivity_apply(trace, w, obs_steps):
    """J w: change of the observed data per unit change of ``m`` along ``w``.

    Returns one data array per entry of ``obs_steps``.
    """
    sol = solve_linearized(trace, model_source(trace, w))
    p = trace.problem
    return [p.observe_tangent(trace.states[k], sol.states[k]) for k in obs_steps]
