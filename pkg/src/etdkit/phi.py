"""Scalar and operator phi-functions.

``phi(ell, z)`` evaluates phi_0 = exp and the higher phi_ell entire functions
elementwise.  Operator versions act on vectors through a diagonal spectrum,
a rational contour quadrature with dense resolvent solves, or a truncated
polynomial (monomial or Chebyshev) expansion.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

MAX_ELL = 8

# Contour shapes tuned at 32 points (see ContourSpec.shape_params).
PARABOLA_DEFAULT = (14.0, 0.09, -3.0)
TALBOT_DEFAULT = (0.5017, 0.6407, 0.6122, 0.2645)


class InvalidInputError(ValueError):
    """Raised for malformed arguments (bad ell, non-finite z, bad contour)."""


class ResolventError(ArithmeticError):
    """A shifted resolvent ``s_i I - L`` was singular at quadrature node ``index``."""

    def __init__(self, index, message=None):
        self.index = index
        super().__init__(message or f"singular resolvent at quadrature node {index}")


def _check_ell(ell):
    if isinstance(ell, bool) or not isinstance(ell, (int, np.integer)):
        raise InvalidInputError(f"ell must be an integer, got {ell!r}")
    if ell < 0 or ell > MAX_ELL:
        raise InvalidInputError(f"ell must lie in [0, {MAX_ELL}], got {ell}")
    return int(ell)


def _series_terms(radius, ell, base_terms):
    # enough terms that radius**n / (n + ell)! is below double-precision resolution
    n = base_terms
    if radius <= 1.0:
        return n
    bound = math.log(radius)
    while n * bound - math.lgamma(n + ell + 1) > math.log(1e-18) - math.lgamma(ell + 1):
        n += 1
    return n


@dataclass(frozen=True)
class ContourSpec:
    """Quadrature contour for the rational approximation of phi_ell.

    ``kind`` is ``"circle"``, ``"parabola"`` or ``"hankel"``.  Circles use
    ``center``/``radius``; the other two wind around the negative real axis and
    are shaped by ``shape_params`` (defaults tuned for 32 points and rescaled
    with the point count).
    """

    kind: str = "parabola"
    num_points: int = 32
    center: complex = 0.0
    radius: float = 1.0
    shape_params: tuple = ()

    def __post_init__(self):
        if self.kind not in ("circle", "parabola", "hankel"):
            raise InvalidInputError(f"unknown contour kind {self.kind!r}")
        m = self.num_points
        if isinstance(m, bool) or not isinstance(m, (int, np.integer)) or m < 2 or m % 2:
            raise InvalidInputError(f"num_points must be an even integer >= 2, got {m!r}")
        if self.kind == "circle" and not (np.isfinite(self.radius) and self.radius > 0):
            raise InvalidInputError("circle radius must be positive and finite")
        if not np.isfinite(complex(self.center)):
            raise InvalidInputError("contour center must be finite")

    @classmethod
    def circle_around(cls, eigenvalues, num_points=32, factor=1.1, min_radius=1.0):
        """Circle centred on the spectrum mean enclosing every eigenvalue."""
        lam = np.asarray(eigenvalues, dtype=complex).ravel()
        center = complex(lam.mean())
        if abs(center.imag) < 1e-14 * max(1.0, abs(center)):
            center = complex(center.real, 0.0)
        radius = max(factor * float(np.max(np.abs(lam - center))), min_radius)
        return cls(kind="circle", num_points=num_points, center=center, radius=radius)

    def validate_enclosure(self, eigenvalues):
        """Raise if a circle fails to strictly enclose ``eigenvalues``."""
        if self.kind != "circle":
            return
        lam = np.asarray(eigenvalues, dtype=complex).ravel()
        if lam.size and np.max(np.abs(lam - self.center)) >= self.radius:
            raise InvalidInputError("circle contour does not enclose the spectrum")


@dataclass(frozen=True)
class PhiConfig:
    series_threshold: float = 1.0
    series_terms: int = 25
    contour: ContourSpec = field(default_factory=ContourSpec)

    def __post_init__(self):
        if not self.series_threshold > 0:
            raise InvalidInputError("series_threshold must be positive")
        if self.series_terms < 1:
            raise InvalidInputError("series_terms must be positive")


DEFAULT_CONFIG = PhiConfig()


def phi(ell, z, config: PhiConfig | None = None):
    """Evaluate phi_ell elementwise.

    Small arguments use the Taylor series sum_i z**i / (i + ell)!, larger ones
    the closed form (exp(z) - sum_{j<ell} z**j / j!) / z**ell.  The series
    region grows with ``ell`` so the closed form is only used where its
    cancellation is harmless.  Real input gives real output.
    """
    ell = _check_ell(ell)
    cfg = config or DEFAULT_CONFIG
    za = np.asarray(z)
    if za.dtype.kind not in "fciub":
        raise InvalidInputError("z must be numeric")
    if not np.all(np.isfinite(za)):
        raise InvalidInputError("z must be finite")
    real_input = za.dtype.kind != "c"
    zc = za.astype(complex if not real_input else float)
    if ell == 0:
        out = np.exp(zc)
        return out.item() if np.ndim(z) == 0 else out

    radius = max(cfg.series_threshold, 0.5 * ell + 0.5)
    absz = np.abs(zc)
    small = absz < radius
    out = np.empty_like(zc)

    if np.any(small):
        zs = zc[small]
        nterm = _series_terms(float(absz[small].max(initial=0.0)), ell, cfg.series_terms)
        acc = np.zeros_like(zs)
        for i in range(nterm - 1, -1, -1):
            acc = acc * zs + 1.0 / math.factorial(i + ell)
        out[small] = acc
    big = ~small
    if np.any(big):
        zb = zc[big]
        partial = np.zeros_like(zb)
        for j in range(ell - 1, -1, -1):
            partial = partial * zb + 1.0 / math.factorial(j)
        with np.errstate(over="ignore"):
            out[big] = (np.exp(zb) - partial) / zb**ell
    return out.item() if np.ndim(z) == 0 else out


def phi_scalar(ell, z, config: PhiConfig | None = None):
    """Scalar convenience wrapper around :func:`phi`."""
    if np.ndim(z) != 0:
        raise InvalidInputError("phi_scalar expects a scalar")
    return phi(ell, z, config)


@dataclass(frozen=True)
class QuadratureNodes:
    """Rational approximation phi(z) ~ sum_i weights[i] / (nodes[i] - z).

    With ``real_symmetric`` only nodes with Im >= 0 are stored; the omitted
    half are their complex conjugates with conjugated weights.
    """

    nodes: np.ndarray
    weights: np.ndarray
    real_symmetric: bool
    ell: int = 0

    def full(self):
        if not self.real_symmetric:
            return self.nodes, self.weights
        return (np.concatenate([self.nodes, self.nodes.conj()]),
                np.concatenate([self.weights, self.weights.conj()]))

    def reconstruct(self, z):
        """Evaluate the rational approximation at scalar or array ``z``."""
        za = np.asarray(z, dtype=complex)
        s, c = self.nodes, self.weights
        terms = c / (s - za[..., None])
        if self.real_symmetric:
            terms = terms + (c / (s - za.conj()[..., None])).conj()
        out = terms.sum(axis=-1)
        if self.real_symmetric and np.isrealobj(z):
            out = out.real
        return out.item() if np.ndim(z) == 0 else out


def _scaled_parabola(m, params):
    mu, h, shift = params or PARABOLA_DEFAULT
    mu = mu * m / 32.0
    h = h * 32.0 / m
    u = (np.arange(m) - m / 2 + 0.5) * h
    s = shift + mu * (1j * u + 1.0) ** 2
    ds = 2j * mu * (1j * u + 1.0) * h
    return s, ds / (2j * np.pi)


def _talbot(m, params):
    a, b, c, d = params or TALBOT_DEFAULT
    theta = -np.pi + (np.arange(m) + 0.5) * 2 * np.pi / m
    s = m * (a * theta / np.tan(b * theta) - c + 1j * d * theta)
    ds = m * (a / np.tan(b * theta) - a * b * theta / np.sin(b * theta) ** 2 + 1j * d)
    return s, ds / (1j * m)


def contour_nodes(ell, spec: ContourSpec | None = None, config: PhiConfig | None = None):
    """Quadrature nodes and weights approximating phi_ell on ``spec``."""
    ell = _check_ell(ell)
    spec = spec or (config or DEFAULT_CONFIG).contour
    m = spec.num_points
    if spec.kind == "circle":
        center = complex(spec.center)
        theta = 2 * np.pi * (np.arange(m) + 0.5) / m
        offs = spec.radius * np.exp(1j * theta)
        s = center + offs
        c = offs * phi(ell, s, config) / m
        symmetric = center.imag == 0.0
    else:
        s, jac = (_scaled_parabola if spec.kind == "parabola" else _talbot)(m, spec.shape_params)
        c = jac * np.exp(s) / s**ell
        symmetric = True
    if symmetric:
        keep = s.imag > 0
        s, c = s[keep], c[keep]
    return QuadratureNodes(nodes=s, weights=c, real_symmetric=symmetric, ell=ell)


def phi_apply_diag(ell, eigenvalues, scale, w, config: PhiConfig | None = None):
    """phi_ell(scale * diag(eigenvalues)) @ w."""
    return phi(ell, scale * np.asarray(eigenvalues), config) * w


def _lu_or_raise(matrix, index):
    lu, piv = sla.lu_factor(matrix, check_finite=False)
    d = np.abs(np.diag(lu))
    if not np.all(np.isfinite(d)) or d.min() <= np.finfo(float).eps * max(d.max(), 1e-300):
        raise ResolventError(index)
    return lu, piv


def phi_apply_dense(ell, L, w, nodes: QuadratureNodes, scale=1.0):
    """Apply the contour approximation of phi_ell(scale L) by direct solves.

    Each node needs one LU factorisation of ``s_i I - scale L``.  A numerically
    singular shift raises :class:`ResolventError` naming the node.
    """
    L = np.asarray(L)
    w = np.asarray(w)
    n = L.shape[0]
    eye = np.eye(n)
    real_fold = nodes.real_symmetric and np.isrealobj(L)
    if real_fold:
        cols = [w.real, w.imag] if np.iscomplexobj(w) else [w]
        rhs = np.stack(cols, axis=-1)
        acc = np.zeros(rhs.shape, dtype=complex)
        for i, (s, c) in enumerate(zip(nodes.nodes, nodes.weights)):
            acc += c * sla.lu_solve(_lu_or_raise(s * eye - scale * L, i), rhs.astype(complex))
        res = 2.0 * acc.real
        return res[:, 0] + 1j * res[:, 1] if np.iscomplexobj(w) else res[:, 0]
    s_all, c_all = nodes.full()
    acc = np.zeros(n, dtype=complex)
    for i, (s, c) in enumerate(zip(s_all, c_all)):
        acc += c * sla.lu_solve(_lu_or_raise(s * eye - scale * L, i), w.astype(complex))
    return acc


def chebyshev_coefficients(ell, degree):
    """Interpolation coefficients of phi_ell on [-1, 1] at first-kind Chebyshev points."""
    ell = _check_ell(ell)
    if degree < 1:
        raise InvalidInputError("polynomial degree must be at least 1")
    return np.polynomial.chebyshev.chebinterpolate(lambda x: phi(ell, x), degree)


def monomial_coefficients(ell, degree):
    ell = _check_ell(ell)
    if degree < 1:
        raise InvalidInputError("polynomial degree must be at least 1")
    return np.array([1.0 / math.factorial(j + ell) for j in range(degree + 1)])


def phi_apply_poly(ell, L, w, degree, mode="chebyshev"):
    """Truncated polynomial approximation of phi_ell(L) @ w.

    ``mode="monomial"`` sums the Taylor series, ``"chebyshev"`` uses the
    three-term recurrence and assumes the spectrum of ``L`` lies in [-1, 1].
    """
    L = np.asarray(L)
    if mode == "monomial":
        coef = monomial_coefficients(ell, degree)
        acc = coef[-1] * w
        for cj in coef[-2::-1]:
            acc = L @ acc + cj * w
        return acc
    if mode != "chebyshev":
        raise InvalidInputError(f"unknown polynomial mode {mode!r}")
    coef = chebyshev_coefficients(ell, degree)
    t_prev, t_cur = w, L @ w
    acc = coef[0] * t_prev + coef[1] * t_cur
    for cj in coef[2:]:
        t_prev, t_cur = t_cur, 2.0 * (L @ t_cur) - t_prev
        acc = acc + cj * t_cur
    return acc
