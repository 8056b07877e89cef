"""Problem interface for semilinear systems y' = L y + n(y, t).

A problem supplies the stiff operator (possibly depending on the model vector
``m`` and, in relinearised mode, on the step-start state ``yk``), the
nonlinearity ``n(y, m, t, yk)`` and the directional derivatives of both, each
with its adjoint.  Adjoints are taken with respect to ``Re(vdot(a, b))``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .operators import DenseOperator
from .phi_diff import OperatorDerivativeAction


def inner(a, b):
    """Real inner product used by every adjoint identity."""
    return float(np.real(np.vdot(a, b)))


class SemilinearProblem:
    """Base class; subclasses override what their structure requires.

    Attributes
    ----------
    state_dim, model_dim : int
    depends_on_state : bool
        The operator is rebuilt from the state at every step and the
        nonlinearity carries the matching correction.
    depends_on_model : bool
        The operator depends on ``m``.
    """

    state_dim = 0
    model_dim = 0
    depends_on_state = False
    depends_on_model = False

    def linear_operator(self, m, yk, config=None):
        raise NotImplementedError

    def n(self, y, m, t, yk):
        raise NotImplementedError

    def rhs(self, y, m, t):
        """Full right-hand side f(y) = L y + n(y) (independent of the splitting)."""
        op = self.linear_operator(m, y)
        return op.apply(y) + self.n(y, m, t, y)

    def n_y(self, y, m, t, yk, v):
        raise NotImplementedError

    def n_y_adj(self, y, m, t, yk, z):
        raise NotImplementedError

    def n_yk(self, y, m, t, yk, v):
        return np.zeros_like(v)

    def n_yk_adj(self, y, m, t, yk, z):
        return np.zeros_like(z)

    def n_m(self, y, m, t, yk, w):
        raise NotImplementedError

    def n_m_adj(self, y, m, t, yk, z):
        raise NotImplementedError

    def L_state_action(self, m, yk):
        return None

    def L_model_action(self, m, yk):
        return None

    # observation of the state (default: real part of the full state)
    def observe(self, y):
        return np.real(y).copy()

    def observe_tangent(self, y, v):
        return np.real(v).copy()

    def observe_adjoint(self, y, u):
        return np.asarray(u, dtype=complex)

    # sampling helpers for the derivative checks
    def sample_state(self, rng):
        return rng.standard_normal(self.state_dim) + 1j * rng.standard_normal(self.state_dim)

    def sample_model(self, rng):
        return rng.standard_normal(self.model_dim)


class ToyProblem(SemilinearProblem):
    """y' = A(m) y + m2 * y**2 with A(m) = A0 + m1 D.

    ``A0`` is a random symmetric negative definite matrix and ``D`` a random
    diagonal; ``m = (m1, m2_1, ..., m2_N)``.  With ``state_dependent=True`` the
    operator is the Jacobian at the step-start state and the nonlinearity is
    the remainder.
    """

    depends_on_model = True

    def __init__(self, size=8, seed=0, state_dependent=False, stiffness=20.0):
        if not 2 <= size <= 16:
            raise ValueError("toy problem size must lie in [2, 16]")
        rng = np.random.default_rng(seed)
        q, _ = np.linalg.qr(rng.standard_normal((size, size)))
        eig = -np.geomspace(0.5, stiffness, size)
        a0 = (q * eig) @ q.T
        self.A0 = 0.5 * (a0 + a0.T)
        self.D = np.diag(rng.uniform(-1.0, 1.0, size))
        self.state_dim = size
        self.model_dim = size + 1
        self.depends_on_state = bool(state_dependent)

    def default_model(self, rng=None):
        rng = rng or np.random.default_rng(1)
        return np.concatenate([[0.3], rng.uniform(-0.5, 0.5, self.state_dim)])

    def initial_state(self, rng=None):
        rng = rng or np.random.default_rng(2)
        return rng.standard_normal(self.state_dim).astype(complex)

    def _A(self, m):
        return self.A0 + m[0] * self.D

    def linear_operator(self, m, yk, config=None):
        A = self._A(m).astype(complex)
        if self.depends_on_state:
            A = A + np.diag(2.0 * m[1:] * yk)
        return DenseOperator(A, config)

    def rhs(self, y, m, t):
        return self._A(m) @ y + m[1:] * y**2

    def n(self, y, m, t, yk):
        m2 = m[1:]
        if self.depends_on_state:
            return m2 * y**2 - 2.0 * m2 * yk * y
        return m2 * y**2

    def _ny_diag(self, y, m, yk):
        d = 2.0 * m[1:] * y
        return d - 2.0 * m[1:] * yk if self.depends_on_state else d

    def n_y(self, y, m, t, yk, v):
        return self._ny_diag(y, m, yk) * v

    def n_y_adj(self, y, m, t, yk, z):
        return np.conj(self._ny_diag(y, m, yk)) * z

    def n_yk(self, y, m, t, yk, v):
        if not self.depends_on_state:
            return np.zeros_like(v)
        return -2.0 * m[1:] * y * v

    def n_yk_adj(self, y, m, t, yk, z):
        if not self.depends_on_state:
            return np.zeros_like(z)
        return np.conj(-2.0 * m[1:] * y) * z

    def _nm_field(self, y, yk):
        return y**2 - 2.0 * yk * y if self.depends_on_state else y**2

    def n_m(self, y, m, t, yk, w):
        return w[1:] * self._nm_field(y, yk)

    def n_m_adj(self, y, m, t, yk, z):
        out = np.zeros(self.model_dim)
        out[1:] = np.real(np.conj(self._nm_field(y, yk)) * z)
        return out

    def L_model_action(self, m, yk):
        D = np.diag(self.D)

        def fwd(v, w):
            out = w[0] * D * v
            if self.depends_on_state:
                out = out + 2.0 * w[1:] * yk * v
            return out

        def tr(v, z):
            out = np.zeros(np.shape(v)[:-1] + (self.model_dim,))
            out[..., 0] = np.real(np.sum(np.conj(D * v) * z, axis=-1))
            if self.depends_on_state:
                out[..., 1:] = np.real(np.conj(2.0 * yk * v) * z)
            return out

        return OperatorDerivativeAction(fwd, tr, batched=True)

    def L_state_action(self, m, yk):
        if not self.depends_on_state:
            return None
        m2 = m[1:]
        return OperatorDerivativeAction(lambda v, d: 2.0 * m2 * d * v,
                                        lambda v, z: np.conj(2.0 * m2 * v) * z, batched=True)

    def sample_state(self, rng):
        return rng.standard_normal(self.state_dim) + 0.3j * rng.standard_normal(self.state_dim)


@dataclass
class CheckReport:
    """Largest discrepancies found by :func:`check_problem` (relative)."""

    adjoint: dict
    finite_difference: dict
    adjoint_tol: float
    fd_tol: float

    @property
    def max_adjoint(self):
        return max(self.adjoint.values(), default=0.0)

    @property
    def max_fd(self):
        return max(self.finite_difference.values(), default=0.0)

    @property
    def passed(self):
        return self.max_adjoint <= self.adjoint_tol and self.max_fd <= self.fd_tol

    def as_dict(self):
        return {"adjoint": self.adjoint, "finite_difference": self.finite_difference,
                "max_adjoint": self.max_adjoint, "max_fd": self.max_fd,
                "adjoint_tol": self.adjoint_tol, "fd_tol": self.fd_tol,
                "passed": self.passed}


def _rel(a, b):
    scale = max(abs(a), abs(b), 1e-300)
    return abs(a - b) / scale


def _rel_vec(a, b):
    scale = max(np.linalg.norm(a), np.linalg.norm(b), 1e-300)
    return float(np.linalg.norm(a - b) / scale)


def check_problem(problem: SemilinearProblem, samples=3, seed=0, eps=1e-6,
                  adjoint_tol=1e-10, fd_tol=1e-6):
    """Dot-product and central-difference checks of every derivative callback."""
    rng = np.random.default_rng(seed)
    adj = {}
    fd = {}

    def note(store, key, val):
        store[key] = max(store.get(key, 0.0), val)

    for _ in range(samples):
        y = problem.sample_state(rng)
        yk = problem.sample_state(rng) if problem.depends_on_state else y
        m = problem.sample_model(rng)
        t = float(rng.uniform())
        v = problem.sample_state(rng)
        z = problem.sample_state(rng)
        w = rng.standard_normal(problem.model_dim)

        note(adj, "n_y", _rel(inner(problem.n_y(y, m, t, yk, v), z),
                              inner(v, problem.n_y_adj(y, m, t, yk, z))))
        fdv = (problem.n(y + eps * v, m, t, yk) - problem.n(y - eps * v, m, t, yk)) / (2 * eps)
        note(fd, "n_y", _rel_vec(fdv, problem.n_y(y, m, t, yk, v)))

        note(adj, "n_m", _rel(inner(problem.n_m(y, m, t, yk, w), z),
                              inner(w, problem.n_m_adj(y, m, t, yk, z))))
        fdm = (problem.n(y, m + eps * w, t, yk) - problem.n(y, m - eps * w, t, yk)) / (2 * eps)
        note(fd, "n_m", _rel_vec(fdm, problem.n_m(y, m, t, yk, w)))

        if problem.depends_on_state:
            note(adj, "n_yk", _rel(inner(problem.n_yk(y, m, t, yk, v), z),
                                   inner(v, problem.n_yk_adj(y, m, t, yk, z))))
            fdk = (problem.n(y, m, t, yk + eps * v) - problem.n(y, m, t, yk - eps * v)) / (2 * eps)
            note(fd, "n_yk", _rel_vec(fdk, problem.n_yk(y, m, t, yk, v)))
            act = problem.L_state_action(m, yk)
            x = problem.sample_state(rng)
            note(adj, "L_state", _rel(inner(act.forward(x, v), z), inner(v, act.transpose(x, z))))
            fdl = (problem.linear_operator(m, yk + eps * v).apply(x)
                   - problem.linear_operator(m, yk - eps * v).apply(x)) / (2 * eps)
            note(fd, "L_state", _rel_vec(fdl, act.forward(x, v)))
            # splitting: L_k y + n_k(y) must reproduce the full right-hand side
            full = problem.rhs(y, m, t)
            split = problem.linear_operator(m, yk).apply(y) + problem.n(y, m, t, yk)
            note(fd, "splitting", _rel_vec(full, split))

        act = problem.L_model_action(m, yk) if problem.depends_on_model else None
        if act is not None:
            x = problem.sample_state(rng)
            note(adj, "L_model", _rel(inner(act.forward(x, w), z), inner(w, act.transpose(x, z))))
            fdl = (problem.linear_operator(m + eps * w, yk).apply(x)
                   - problem.linear_operator(m - eps * w, yk).apply(x)) / (2 * eps)
            note(fd, "L_model", _rel_vec(fdl, act.forward(x, w)))

        op = problem.linear_operator(m, yk)
        note(adj, "L", _rel(inner(op.apply(v), z), inner(v, op.adjoint_apply(z))))

        u = problem.observe(y)
        uz = rng.standard_normal(np.shape(u))
        note(adj, "observe", _rel(inner(problem.observe_tangent(y, v), uz),
                                  inner(v, problem.observe_adjoint(y, uz))))

    return CheckReport(adj, fd, adjoint_tol, fd_tol)
