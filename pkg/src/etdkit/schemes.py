"""Exponential Runge-Kutta tableaux and forward time stepping.

A tableau entry is a short list of :class:`PhiTerm` objects; the entry value
for an operator ``tau L`` is ``sum weight * phi_ell(node_scale * tau L)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .phi import PhiConfig, phi


class UnknownSchemeError(KeyError):
    pass


class DivergenceError(FloatingPointError):
    def __init__(self, step, message=None):
        self.step = step
        super().__init__(message or f"non-finite state produced at step {step}")


@dataclass(frozen=True)
class PhiTerm:
    ell: int
    node_scale: float
    weight: float

    def __post_init__(self):
        if not 0 < self.node_scale <= 1:
            raise ValueError("node_scale must lie in (0, 1]")
        if not 0 <= self.ell <= 8:
            raise ValueError("ell must lie in [0, 8]")


def _group(pairs):
    """Merge (index, PhiTerm) pairs into [(ell, node_scale, [(index, weight), ...])]."""
    groups = {}
    for idx, term in pairs:
        groups.setdefault((term.ell, term.node_scale), []).append((idx, term.weight))
    return [(ell, ns, tuple(members)) for (ell, ns), members in sorted(groups.items())]


@dataclass
class Tableau:
    name: str
    c: tuple
    a: dict            # (i, j) -> tuple[PhiTerm], j < i, zero-based
    b: tuple           # stage -> tuple[PhiTerm]
    order: int
    row_groups: list = field(init=False, repr=False)
    update_groups: list = field(init=False, repr=False)

    def __post_init__(self):
        s = len(self.c)
        if len(self.b) != s:
            raise ValueError("b must have one entry per stage")
        for (i, j) in self.a:
            if not 0 <= j < i < s:
                raise ValueError(f"a[{i},{j}] is not strictly lower triangular")
        self.row_groups = [
            _group([(j, t) for j in range(i) for t in self.a.get((i, j), ())])
            for i in range(s)]
        self.update_groups = _group([(i, t) for i in range(s) for t in self.b[i]])

    @property
    def stages(self):
        return len(self.c)

    @staticmethod
    def evaluate(terms, z):
        """Scalar value of a tableau entry at ``tau L = z``."""
        return sum(t.weight * phi(t.ell, t.node_scale * z) for t in terms)

    def consistency_errors(self, z):
        """Residuals of sum_i b_i = phi_1 and sum_j a_ij = c_i phi_1(c_i z)."""
        sb = sum(self.evaluate(bi, z) for bi in self.b)
        err_b = abs(sb - phi(1, z))
        err_a = 0.0
        for i, ci in enumerate(self.c):
            row = sum(self.evaluate(self.a.get((i, j), ()), z) for j in range(i))
            target = ci * phi(1, ci * z) if ci else 0.0
            err_a = max(err_a, abs(row - target))
        return err_b, err_a

    def perturbed(self, stage, delta):
        """Copy with one extra ``delta * phi_1`` term in ``b[stage]`` (negative control)."""
        b = list(self.b)
        b[stage] = tuple(b[stage]) + (PhiTerm(1, 1.0, delta),)
        return Tableau(self.name + "-perturbed", self.c, dict(self.a), tuple(b), self.order)


def _t(ell, ns, w):
    return PhiTerm(ell, ns, w)


def _cm_weights():
    # shared fourth-order output weights
    return (
        (_t(1, 1.0, 1.0), _t(2, 1.0, -3.0), _t(3, 1.0, 4.0)),
        (_t(2, 1.0, 2.0), _t(3, 1.0, -4.0)),
        (_t(2, 1.0, 2.0), _t(3, 1.0, -4.0)),
        (_t(2, 1.0, -1.0), _t(3, 1.0, 4.0)),
    )


def _euler():
    return Tableau("euler", (0.0,), {}, ((_t(1, 1.0, 1.0),),), 1)


def _cox_matthews():
    h = 0.5
    a = {
        (1, 0): (_t(1, h, 0.5),),
        (2, 1): (_t(1, h, 0.5),),
        (3, 0): (_t(1, 1.0, 1.0), _t(1, h, -1.0)),
        (3, 2): (_t(1, h, 1.0),),
    }
    return Tableau("cox_matthews", (0.0, h, h, 1.0), a, _cm_weights(), 4)


def _krogstad():
    h = 0.5
    a = {
        (1, 0): (_t(1, h, 0.5),),
        (2, 0): (_t(1, h, 0.5), _t(2, h, -1.0)),
        (2, 1): (_t(2, h, 1.0),),
        (3, 0): (_t(1, 1.0, 1.0), _t(2, 1.0, -2.0)),
        (3, 2): (_t(2, 1.0, 2.0),),
    }
    return Tableau("krogstad", (0.0, h, h, 1.0), a, _cm_weights(), 4)


def _hochbruck_ostermann():
    h = 0.5
    # shared entry of rows 5: a52 = a53
    a52 = (_t(2, h, 0.5), _t(3, 1.0, -1.0), _t(2, 1.0, 0.25), _t(3, h, -0.5))
    neg = tuple(PhiTerm(t.ell, t.node_scale, -t.weight) for t in a52)
    a = {
        (1, 0): (_t(1, h, 0.5),),
        (2, 0): (_t(1, h, 0.5), _t(2, h, -1.0)),
        (2, 1): (_t(2, h, 1.0),),
        (3, 0): (_t(1, 1.0, 1.0), _t(2, 1.0, -2.0)),
        (3, 1): (_t(2, 1.0, 1.0),),
        (3, 2): (_t(2, 1.0, 1.0),),
        (4, 0): (_t(1, h, 0.5), _t(2, h, -0.25)) + neg,
        (4, 1): a52,
        (4, 2): a52,
        (4, 3): (_t(2, h, 0.25),) + neg,
    }
    b = (
        (_t(1, 1.0, 1.0), _t(2, 1.0, -3.0), _t(3, 1.0, 4.0)),
        (),
        (),
        (_t(2, 1.0, -1.0), _t(3, 1.0, 4.0)),
        (_t(2, 1.0, 4.0), _t(3, 1.0, -8.0)),
    )
    return Tableau("hochbruck_ostermann", (0.0, h, h, 1.0, h), a, b, 4)


_BUILDERS = {
    "euler": _euler,
    "cox_matthews": _cox_matthews,
    "krogstad": _krogstad,
    "hochbruck_ostermann": _hochbruck_ostermann,
}
ALIASES = {"cm": "cox_matthews", "kr": "krogstad", "ho": "hochbruck_ostermann",
           "etd1": "euler"}
SCHEMES = tuple(_BUILDERS)


def make_tableau(name: str) -> Tableau:
    key = ALIASES.get(name.lower(), name.lower())
    if key not in _BUILDERS:
        raise UnknownSchemeError(f"unknown scheme {name!r}; choose from {', '.join(SCHEMES)}")
    return _BUILDERS[key]()


class TimeGrid:
    """Strictly increasing time points t_0 < ... < t_K."""

    def __init__(self, times):
        t = np.asarray(times, dtype=float)
        if t.ndim != 1 or t.size < 2 or not np.all(np.diff(t) > 0):
            raise ValueError("time grid must be strictly increasing with at least two points")
        self.times = t

    @classmethod
    def uniform(cls, T, tau, t0=0.0):
        steps = (T - t0) / tau
        k = int(round(steps))
        if k < 1 or abs(k - steps) > 1e-9 * max(1.0, steps):
            raise ValueError(f"step {tau} does not divide the interval length {T - t0}")
        return cls(t0 + tau * np.arange(k + 1))

    @property
    def steps(self):
        return self.times.size - 1

    def dt(self, k):
        return self.times[k + 1] - self.times[k]

    def index_of(self, t, tol=1e-9):
        """Index of grid point ``t``; raises ``ValueError`` if ``t`` is off-grid."""
        k = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[k] - t) > tol * max(1.0, abs(t)):
            raise ValueError(f"time {t} is not on the time grid")
        return k


@dataclass
class StepRecord:
    """Everything the linearised solvers need about one step."""

    t: float
    tau: float
    y: np.ndarray            # state at the start of the step
    stages: np.ndarray       # nonlinear stage values, shape (s, N)
    stage_inputs: np.ndarray  # arguments the nonlinearity was evaluated at
    op: object


@dataclass
class ForwardTrace:
    problem: object
    tableau: Tableau
    m: np.ndarray
    grid: TimeGrid
    states: list
    steps: list
    config: PhiConfig | None = None

    @property
    def final(self):
        return self.states[-1]


def stage_phi_groups(tableau, i, tau, y, Y):
    """(ell, scale, vector) triples whose phi-actions sum to stage input i."""
    out = []
    if tableau.c[i]:
        out.append((0, tableau.c[i] * tau, y))
    for ell, ns, members in tableau.row_groups[i]:
        out.append((ell, ns * tau, tau * sum(w * Y[j] for j, w in members)))
    return out


def update_phi_groups(tableau, tau, y, Y):
    out = [(0, tau, y)]
    for ell, ns, members in tableau.update_groups:
        out.append((ell, ns * tau, tau * sum(w * Y[j] for j, w in members)))
    return out


def apply_groups(op, groups):
    acc = None
    for ell, scale, vec in groups:
        term = op.phi(ell, scale, vec)
        acc = term if acc is None else acc + term
    return acc


def step_forward(problem, tableau: Tableau, op, y, m, t, tau):
    """One exponential Runge-Kutta step; returns (y_next, stages, stage_inputs)."""
    s = tableau.stages
    Y = np.empty((s, y.size), dtype=complex)
    U = np.empty_like(Y)
    for i in range(s):
        groups = stage_phi_groups(tableau, i, tau, y, Y)
        u = apply_groups(op, groups)
        if tableau.c[i] == 0:
            u = y if u is None else y + u
        U[i] = u
        Y[i] = problem.n(u, m, t + tableau.c[i] * tau, y)
    y_next = apply_groups(op, update_phi_groups(tableau, tau, y, Y))
    return y_next, Y, U


def integrate(problem, tableau: Tableau, y0, m, grid: TimeGrid, config: PhiConfig | None = None,
              mode=None, keep_factorizations=True):
    """March ``y0`` over ``grid`` and record a :class:`ForwardTrace`.

    ``mode`` is ``"fixed"`` (one operator for the whole run) or ``"rosenbrock"``
    (operator relinearised at every step); it must match the problem.
    """
    expected = "rosenbrock" if problem.depends_on_state else "fixed"
    if mode is not None and mode != expected:
        raise ValueError(f"problem requires mode {expected!r}, got {mode!r}")
    y = np.asarray(y0, dtype=complex).copy()
    m = np.asarray(m, dtype=float)
    states = [y]
    records = []
    op = None if problem.depends_on_state else problem.linear_operator(m, y, config)
    for k in range(grid.steps):
        t, tau = grid.times[k], grid.dt(k)
        op_k = problem.linear_operator(m, y, config) if op is None else op
        y_next, Y, U = step_forward(problem, tableau, op_k, y, m, t, tau)
        if not np.all(np.isfinite(y_next)):
            raise DivergenceError(k + 1)
        if op is None and not keep_factorizations:
            op_k.release()
        records.append(StepRecord(t, tau, y, Y, U, op_k))
        y = y_next
        states.append(y)
    return ForwardTrace(problem, tableau, m, grid, states, records, config)


def nominal_order(name):
    return make_tableau(name).order


__all__ = ["PhiTerm", "Tableau", "make_tableau", "TimeGrid", "StepRecord", "ForwardTrace",
           "step_forward", "integrate", "UnknownSchemeError", "DivergenceError", "SCHEMES"]
