"""Linear operators carrying phi-function actions and their parameter derivatives.

Two concrete kinds exist.  :class:`DiagonalOperator` is diagonal in a known
basis and evaluates phi-functions pointwise.  :class:`DenseOperator` stores a
matrix (optionally in a different basis than the state) and evaluates them by
contour quadrature over shifted resolvents.  All adjoints refer to the real
inner product ``Re(vdot(a, b))``.
"""
from __future__ import annotations

import numpy as np

from .phi import DEFAULT_CONFIG, PhiConfig, contour_nodes, phi
from .phi_diff import (IDENTITY_BASIS, EigResolvent, LUResolvent,
                       dphi_from_resolvent, dphi_transpose_from_resolvent)

DENSE_LIMIT = 4096


class CapabilityError(RuntimeError):
    """The requested operation exceeds what the chosen representation supports."""


def _scale_key(scale):
    return float(np.float64(scale))


class LinearOperator:
    """Common interface; ``scale`` multiplies the operator inside phi."""

    dim: int

    def __init__(self, config: PhiConfig | None = None, basis=None):
        self.config = config or DEFAULT_CONFIG
        self.basis = basis or IDENTITY_BASIS
        self._weights = {}
        self._resolvents = {}

    def weights(self, ell):
        if ell not in self._weights:
            s, c = contour_nodes(ell, config=self.config).full()
            self._weights[ell] = (s, c)
        return self._weights[ell]

    def resolvent(self, scale):
        key = _scale_key(scale)
        if key not in self._resolvents:
            s, _ = self.weights(0)
            self._resolvents[key] = self._make_resolvent(s, key)
        return self._resolvents[key]

    def release(self):
        """Drop cached factorisations (they are rebuilt on demand)."""
        self._resolvents.clear()

    def dphi(self, ell, scale, w, action, direction):
        """(d/dp phi_ell(scale L(p)) w) . direction."""
        _, c = self.weights(ell)
        return dphi_from_resolvent(c, self.resolvent(scale), w, action, direction)

    def dphi_adjoint(self, ell, scale, w, action, z):
        _, c = self.weights(ell)
        return dphi_transpose_from_resolvent(c, self.resolvent(scale), w, action, z)


class DiagonalOperator(LinearOperator):
    """``L = B diag(eigenvalues) B^{-1}`` with ``B`` given by ``basis``."""

    def __init__(self, eigenvalues, config=None, basis=None):
        super().__init__(config, basis)
        self.eigenvalues = np.asarray(eigenvalues)
        self.dim = self.eigenvalues.size
        self._phi_cache = {}

    def spectrum(self):
        return self.eigenvalues

    def _phi_diag(self, ell, scale):
        key = (ell, _scale_key(scale))
        if key not in self._phi_cache:
            self._phi_cache[key] = phi(ell, scale * self.eigenvalues, self.config)
        return self._phi_cache[key]

    def apply(self, v):
        b = self.basis
        return b.frm(self.eigenvalues * b.to(v))

    def adjoint_apply(self, v):
        b = self.basis
        return b.to_adjoint(np.conj(self.eigenvalues) * b.frm_adjoint(v))

    def phi(self, ell, scale, w):
        if ell == 0 and scale == 0:
            return w
        b = self.basis
        return b.frm(self._phi_diag(ell, scale) * b.to(w))

    def phi_adjoint(self, ell, scale, w):
        if ell == 0 and scale == 0:
            return w
        b = self.basis
        return b.to_adjoint(np.conj(self._phi_diag(ell, scale)) * b.frm_adjoint(w))

    def _make_resolvent(self, nodes, scale):
        return EigResolvent(self.eigenvalues, None, nodes, scale, self.basis)


class DenseOperator(LinearOperator):
    """``L = B A B^{-1}`` for a dense matrix ``A``.

    Hermitian matrices are diagonalised once and every shifted resolvent is
    read off the eigendecomposition; other matrices get one LU factorisation
    per quadrature node and scale.
    """

    def __init__(self, matrix, config=None, basis=None, hermitian=None):
        super().__init__(config, basis)
        A = np.asarray(matrix)
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise ValueError("dense operator needs a square matrix")
        if A.shape[0] > DENSE_LIMIT:
            raise CapabilityError(
                f"dense resolvent path limited to {DENSE_LIMIT} unknowns, got {A.shape[0]}")
        self.matrix = A
        self.dim = A.shape[0]
        self.hermitian = bool(np.array_equal(A, A.conj().T)) if hermitian is None else hermitian
        self._eig = None

    def _eigh(self):
        if self._eig is None:
            self._eig = np.linalg.eigh(self.matrix)
        return self._eig

    def release(self):
        super().release()
        self._eig = None

    def spectrum(self):
        if self.hermitian:
            return self._eigh()[0]
        return np.linalg.eigvals(self.matrix)

    def apply(self, v):
        b = self.basis
        return b.frm(self.matrix @ b.to(v))

    def adjoint_apply(self, v):
        b = self.basis
        return b.to_adjoint(self.matrix.conj().T @ b.frm_adjoint(v))

    def _make_resolvent(self, nodes, scale):
        if self.hermitian:
            mu, Q = self._eigh()
            return EigResolvent(mu, Q, nodes, scale, self.basis)
        return LUResolvent(self.matrix, nodes, scale, self.basis)

    def phi(self, ell, scale, w):
        if ell == 0 and scale == 0:
            return w
        _, c = self.weights(ell)
        return self.resolvent(scale).rational(c, w)

    def phi_adjoint(self, ell, scale, w):
        if ell == 0 and scale == 0:
            return w
        _, c = self.weights(ell)
        return self.resolvent(scale).rational_adjoint(c, w)
