"""Parameter derivatives of phi-function actions and their transposes.

Derivatives are taken through the same rational (contour) or polynomial
representation used for the forward action, so tangent and adjoint codes see
exactly the derivative of what was computed.  Adjoints are with respect to the
real inner product ``Re(vdot(a, b))``; for complex-linear maps this is the
conjugate transpose, for real data the plain transpose.
"""
from __future__ import annotations

import numpy as np
import scipy.linalg as sla

from .phi import (InvalidInputError, QuadratureNodes, ResolventError,
                  chebyshev_coefficients, monomial_coefficients)


class OperatorDerivativeAction:
    """Directional derivative of ``p -> L(p) v`` and its transpose.

    ``forward(v, direction)`` returns ``(d/dp L(p) v) . direction`` and
    ``transpose(v, z)`` returns the adjoint of ``direction -> forward(v, direction)``
    applied to ``z``.

    With ``batched=True`` both callables also accept a stack of vectors
    ``v`` of shape (n, N) (and matching ``z``) and return one row per vector.
    """

    def __init__(self, forward, transpose, batched=False):
        self.forward = forward
        self.transpose = transpose
        self.batched = batched


class Basis:
    """Identity change of basis; subclasses map state vectors (last axis,
    possibly stacked) to the coordinates in which an operator matrix is stored."""

    def to(self, x):
        return x

    def frm(self, x):
        return x

    def to_adjoint(self, x):
        return x

    def frm_adjoint(self, x):
        return x


IDENTITY_BASIS = Basis()


class _ResolventBase:
    """Shifted resolvents R_i = (s_i I - scale A)^{-1} for a fixed node set.

    Row ``i`` of every returned array belongs to node ``i``.
    """

    def __init__(self, nodes, scale, basis):
        self.nodes = np.asarray(nodes, dtype=complex)
        self.scale = scale
        self.basis = basis or IDENTITY_BASIS

    def solve(self, x):
        return self.solve_each(np.broadcast_to(x, (self.nodes.size, np.size(x))))

    def solve_each(self, X):
        b = self.basis
        return b.frm(self._solve_core(b.to(np.asarray(X)), adjoint=False))

    def solve_adjoint_each(self, Z):
        b = self.basis
        return b.to_adjoint(self._solve_core(b.frm_adjoint(np.asarray(Z)), adjoint=True))

    def rational(self, weights, x):
        """sum_i weights[i] R_i x."""
        b = self.basis
        return b.frm(self._rational_core(weights, b.to(x), adjoint=False))

    def rational_adjoint(self, weights, z):
        """Adjoint of :meth:`rational`: sum_i conj(weights[i]) R_i^H z."""
        b = self.basis
        return b.to_adjoint(self._rational_core(weights, b.frm_adjoint(z), adjoint=True))

    def _rational_core(self, weights, x, adjoint):
        Y = self._solve_core(np.broadcast_to(x, (self.nodes.size, x.size)), adjoint)
        w = np.conj(weights) if adjoint else weights
        return w @ Y


class EigResolvent(_ResolventBase):
    """Resolvents of a Hermitian matrix ``A = Q diag(mu) Q^H`` (or a diagonal one)."""

    def __init__(self, mu, Q, nodes, scale, basis=None):
        super().__init__(nodes, scale, basis)
        self.mu = np.asarray(mu)
        self.Q = Q
        self.den = self.nodes[:, None] - scale * self.mu[None, :]
        bad = np.abs(self.den).min(axis=1) == 0.0
        if np.any(bad):
            raise ResolventError(int(np.flatnonzero(bad)[0]))

    def _solve_core(self, X, adjoint):
        den = self.den.conj() if adjoint else self.den
        if self.Q is None:
            return X / den
        Xt = self.Q.conj().T @ np.asarray(X).T
        return (self.Q @ (Xt / den.T)).T

    def _rational_core(self, weights, x, adjoint):
        w = np.conj(weights) if adjoint else weights
        den = self.den.conj() if adjoint else self.den
        r = w @ (1.0 / den)
        if self.Q is None:
            return r * x
        return self.Q @ (r * (self.Q.conj().T @ x))


class LUResolvent(_ResolventBase):
    """Resolvents of a general square matrix via one LU factorisation per node."""

    def __init__(self, A, nodes, scale, basis=None):
        super().__init__(nodes, scale, basis)
        A = np.asarray(A)
        eye = np.eye(A.shape[0])
        self.factors = []
        for i, s in enumerate(self.nodes):
            lu, piv = sla.lu_factor(s * eye - scale * A, check_finite=False)
            d = np.abs(np.diag(lu))
            if not np.all(np.isfinite(d)) or d.min() <= np.finfo(float).eps * max(d.max(), 1e-300):
                raise ResolventError(i)
            self.factors.append((lu, piv))

    def _solve_core(self, X, adjoint):
        trans = 2 if adjoint else 0
        return np.stack([sla.lu_solve(f, np.asarray(x, dtype=complex), trans=trans,
                                      check_finite=False)
                         for f, x in zip(self.factors, X)])


def dphi_from_resolvent(weights, res, w, dL, direction):
    """(d/dp sum_i c_i R_i(p) w) . direction, with dR_i = R_i (scale dL) R_i."""
    V = res.solve(w)
    if dL.batched:
        G = dL.forward(V, direction)
    else:
        G = np.stack([dL.forward(v, direction) for v in V])
    U = res.solve_each(G * res.scale)
    return np.asarray(weights) @ U


def dphi_transpose_from_resolvent(weights, res, w, dL, z):
    """Adjoint of :func:`dphi_from_resolvent` with respect to ``direction``."""
    V = res.solve(w)
    Z = res.solve_adjoint_each(np.conj(np.asarray(weights))[:, None] * np.asarray(z)[None, :])
    if dL.batched:
        return dL.transpose(V, Z).sum(axis=0) * res.scale
    out = dL.transpose(V[0], Z[0])
    for v, zz in zip(V[1:], Z[1:]):
        out = out + dL.transpose(v, zz)
    return out * res.scale


def _dense_resolvent(L, nodes: QuadratureNodes, scale):
    s, c = nodes.full()
    return c, LUResolvent(L, s, scale)


def dphi_apply_forward(ell, L, w, dL, direction, nodes: QuadratureNodes, scale=1.0):
    """Directional derivative of the contour action of phi_ell(scale L(p)) w.

    ``L`` is the dense matrix at the current parameter, ``dL`` its derivative
    action.  Uses the full (conjugate-completed) node set.
    """
    if nodes.ell != ell:
        raise InvalidInputError("quadrature nodes were built for a different ell")
    c, res = _dense_resolvent(L, nodes, scale)
    return dphi_from_resolvent(c, res, w, dL, direction)


def dphi_apply_transpose(ell, L, w, dL, z, nodes: QuadratureNodes, scale=1.0):
    """Transpose of :func:`dphi_apply_forward` in the direction argument."""
    if nodes.ell != ell:
        raise InvalidInputError("quadrature nodes were built for a different ell")
    c, res = _dense_resolvent(L, nodes, scale)
    return dphi_transpose_from_resolvent(c, res, w, dL, z)


def _poly_setup(ell, degree, mode):
    if mode == "monomial":
        return monomial_coefficients(ell, degree)
    if mode == "chebyshev":
        return chebyshev_coefficients(ell, degree)
    raise InvalidInputError(f"unknown polynomial mode {mode!r}")


def _poly_basis(L, w, degree, mode):
    """Vectors P_j(L) w for j = 0..degree."""
    out = [np.asarray(w), L @ w]
    for _ in range(2, degree + 1):
        nxt = L @ out[-1]
        if mode == "chebyshev":
            nxt = 2.0 * nxt - out[-2]
        out.append(nxt)
    return out


def dphi_apply_poly_forward(ell, L, w, dL, direction, degree, mode="chebyshev"):
    """Derivative of the polynomial phi_ell(L(p)) w by differentiating the recurrence."""
    coef = _poly_setup(ell, degree, mode)
    L = np.asarray(L)
    P = _poly_basis(L, w, degree, mode)
    d_prev = np.zeros_like(P[1], dtype=np.result_type(P[1], complex))
    d_cur = dL.forward(P[0], direction)
    acc = coef[1] * d_cur
    for j in range(2, degree + 1):
        g = dL.forward(P[j - 1], direction)
        if mode == "chebyshev":
            nxt = 2.0 * g + 2.0 * (L @ d_cur) - d_prev
        else:
            nxt = g + L @ d_cur
        d_prev, d_cur = d_cur, nxt
        acc = acc + coef[j] * d_cur
    return acc


def dphi_apply_poly_transpose(ell, L, w, dL, z, degree, mode="chebyshev"):
    """Transpose of :func:`dphi_apply_poly_forward`, by reverse accumulation."""
    coef = _poly_setup(ell, degree, mode)
    L = np.asarray(L)
    LH = L.conj().T
    P = _poly_basis(L, w, degree, mode)
    z = np.asarray(z)
    nxt1 = np.zeros_like(z, dtype=np.result_type(z, complex))
    nxt2 = nxt1
    out = None
    for j in range(degree, 0, -1):
        if mode == "chebyshev":
            zj = np.conj(coef[j]) * z + 2.0 * (LH @ nxt1) - nxt2
            factor = 1.0 if j == 1 else 2.0
        else:
            zj = np.conj(coef[j]) * z + LH @ nxt1
            factor = 1.0
        term = factor * dL.transpose(P[j - 1], zj)
        out = term if out is None else out + term
        nxt2, nxt1 = nxt1, zj
    return out
