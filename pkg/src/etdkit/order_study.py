"""Empirical convergence orders of the forward state, adjoint and gradient.

Each scheme is run on a ladder of step sizes tau, 2 tau, 4 tau, ...; errors
are measured against a fine reference run and turned into slopes
``p = log2(e(2^i tau) / e(2^(i-1) tau))``.  The adjoint and gradient belong
to the misfit of snapshots taken every ``obs_every`` seconds against a zero
target.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .adjoint import sensitivity_transpose
from .schemes import DivergenceError, TimeGrid, integrate, make_tableau

QUANTITIES = ("y", "lambda", "grad")
ROUNDOFF = 1e-12
OUTLIER_SCHEMES = ("euler",)


@dataclass
class RunResult:
    y: np.ndarray
    lam: np.ndarray
    grad: np.ndarray


@dataclass
class OrderStudyResult:
    rows: list                    # (scheme, quantity, pair, p)
    errors: dict = field(default_factory=dict)   # (scheme, seed, tau_multiple) -> {quantity: error}
    invalid: list = field(default_factory=list)  # (scheme, seed, tau_multiple) that diverged

    def value(self, scheme, quantity, pair):
        for s, q, pr, p in self.rows:
            if (s, q, pr) == (scheme, quantity, pair):
                return p
        raise KeyError((scheme, quantity, pair))


def run_once(problem, tableau, y0, m, T, tau, obs_every, phi_config=None):
    grid = TimeGrid.uniform(T, tau)
    trace = integrate(problem, tableau, y0, m, grid, phi_config, keep_factorizations=True)
    count = int(math.floor(T / obs_every + 1e-9))
    steps = [grid.index_of(obs_every * (i + 1)) for i in range(count)]
    weights = [problem.observe(trace.states[k]) for k in steps]
    grad, adj = sensitivity_transpose(trace, weights, steps)
    return RunResult(trace.final.copy(), adj.states[0].copy(), grad)


def pair_label(i):
    """Label of the step pair (2^i tau, 2^(i-1) tau)."""
    lo = "tau" if i == 1 else f"{2 ** (i - 1)}tau"
    return f"{2 ** i}tau/{lo}"


def _slope(e_coarse, e_fine, scale):
    if not (np.isfinite(e_coarse) and np.isfinite(e_fine)):
        return float("nan")
    if e_fine <= ROUNDOFF * scale or e_coarse <= ROUNDOFF * scale:
        return float("nan")
    return math.log2(e_coarse / e_fine)


def order_study(setup, schemes, tau, levels, T, seeds, reference_scheme="krogstad",
                reference_factor=0.5, obs_every=1.0, phi_config=None, outlier_band=0.5,
                outlier_schemes=OUTLIER_SCHEMES):
    """Estimate convergence orders.

    ``setup(seed)`` returns ``(problem, y0, m)``.  Step sizes are
    ``tau * 2**j`` for ``j < levels``; the reference uses ``reference_scheme``
    at ``tau * reference_factor``.  Slopes are averaged over seeds; for the
    schemes in ``outlier_schemes`` estimates farther than ``outlier_band``
    from the nominal order are left out of the average.
    """
    if levels < 2:
        raise ValueError("need at least two step sizes")
    tabs = {name: make_tableau(name) for name in schemes}
    ref_tab = make_tableau(reference_scheme)
    per_seed = {}
    result = OrderStudyResult([])
    for seed in seeds:
        problem, y0, m = setup(seed)
        ref = run_once(problem, ref_tab, y0, m, T, tau * reference_factor, obs_every, phi_config)
        scales = {q: float(np.linalg.norm(getattr(ref, _attr(q)))) for q in QUANTITIES}
        for name, tab in tabs.items():
            errs = []
            for j in range(levels):
                key = (tab.name, seed, 2 ** j)
                try:
                    run = run_once(problem, tab, y0, m, T, tau * 2 ** j, obs_every, phi_config)
                    e = {q: float(np.linalg.norm(getattr(run, _attr(q)) - getattr(ref, _attr(q))))
                         for q in QUANTITIES}
                    if not all(np.isfinite(v) for v in e.values()):
                        raise DivergenceError(-1)
                except (DivergenceError, FloatingPointError):
                    e = {q: float("nan") for q in QUANTITIES}
                    result.invalid.append(key)
                result.errors[key] = e
                errs.append(e)
            for q in QUANTITIES:
                for i in range(1, levels):
                    p = _slope(errs[i][q], errs[i - 1][q], scales[q])
                    per_seed.setdefault((tab.name, q, i), []).append(p)
    for name, tab in tabs.items():
        for q in QUANTITIES:
            for i in range(1, levels):
                vals = [p for p in per_seed[(tab.name, q, i)] if np.isfinite(p)]
                if tab.name in outlier_schemes:
                    vals = [p for p in vals if abs(p - tab.order) < outlier_band]
                p = float(np.mean(vals)) if vals else float("nan")
                result.rows.append((tab.name, q, pair_label(i), p))
    return result


def _attr(q):
    return {"y": "y", "lambda": "lam", "grad": "grad"}[q]
