"""Swift-Hohenberg model in Fourier coefficients on a periodic box.

The state is the flattened array of unnormalised FFT coefficients of a real
field ``y``.  The linear part is the symbol ``-(1 - |k|^2)^2``; the pointwise
nonlinearity ``r*y + g*y**2 - y**3`` carries the spatially varying parameter
fields ``r`` and ``g`` (the model vector is ``concat(r, g)``).

Two formulations are provided: a fixed diagonal operator and a relinearised
one whose operator is the full Jacobian at the step-start state, stored as a
dense real-space matrix.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from . import kernels
from .operators import DENSE_LIMIT, CapabilityError, DenseOperator, DiagonalOperator
from .phi_diff import Basis, OperatorDerivativeAction
from .problem import SemilinearProblem

DEFAULT_LENGTH = 40.0 * np.pi


@dataclass(frozen=True)
class SHConfig:
    """Grid and stripe-pattern settings.

    ``ny = 1`` selects a one-dimensional box.  Box lengths default to 40*pi.
    ``amplitude`` scales the unit-variance Gaussian initial field.
    """

    nx: int = 64
    ny: int = 64
    lx: float | None = None
    ly: float | None = None
    seed: int = 0
    r_outer: float = 2.0
    r_inner: float = 0.04
    g_outer: float = -1.0
    g_inner: float = 1.0
    amplitude: float = 1.0

    def __post_init__(self):
        for n in (self.nx,) + ((self.ny,) if self.ny != 1 else ()):
            if n < 8 or n & (n - 1):
                raise ValueError("grid sizes must be powers of two and at least 8")
        if any(length <= 0 for length in self.lengths):
            raise ValueError("box lengths must be positive")
        if self.amplitude < 0:
            raise ValueError("amplitude must be non-negative")

    @property
    def shape(self):
        return (self.nx,) if self.ny == 1 else (self.nx, self.ny)

    @property
    def lengths(self):
        lx = self.lx if self.lx is not None else DEFAULT_LENGTH
        if self.ny == 1:
            return (lx,)
        ly = self.ly if self.ly is not None else DEFAULT_LENGTH
        return (lx, ly)

    @property
    def size(self):
        return int(np.prod(self.shape))


class FourierBasis(Basis):
    """Maps coefficient vectors to grid values (``to``) and back (``frm``)."""

    def __init__(self, shape):
        self.shape = tuple(shape)
        self.size = int(np.prod(shape))

    def _axes(self):
        return tuple(range(1, len(self.shape) + 1))

    def to(self, x):
        x = np.asarray(x)
        out = np.fft.ifftn(x.reshape((-1,) + self.shape), axes=self._axes())
        return out.reshape(x.shape)

    def frm(self, x):
        x = np.asarray(x)
        out = np.fft.fftn(x.reshape((-1,) + self.shape), axes=self._axes())
        return out.reshape(x.shape)

    def to_adjoint(self, x):
        return self.frm(x) / self.size

    def frm_adjoint(self, x):
        return self.to(x) * self.size


def wavenumbers(cfg: SHConfig):
    """Per-axis angular wavenumbers in FFT order."""
    return [2 * np.pi * np.fft.fftfreq(n, d=length / n) for n, length in zip(cfg.shape, cfg.lengths)]


def symbol(cfg: SHConfig):
    """Flattened eigenvalues -(1 - |k|^2)^2 of the linear part."""
    ks = np.meshgrid(*wavenumbers(cfg), indexing="ij")
    k2 = sum(k * k for k in ks)
    return (-(1.0 - k2) ** 2).ravel()


def grid_coordinates(cfg: SHConfig):
    return [np.arange(n) * (length / n) for n, length in zip(cfg.shape, cfg.lengths)]


def stripe_fields(cfg: SHConfig):
    """Three equal strips along x; the middle one uses the inner values."""
    x = grid_coordinates(cfg)[0]
    inner = (np.floor(3.0 * x / cfg.lengths[0]) == 1)
    mask = np.broadcast_to(inner.reshape((-1,) + (1,) * (len(cfg.shape) - 1)), cfg.shape)
    r = np.where(mask, cfg.r_inner, cfg.r_outer).astype(float)
    g = np.where(mask, cfg.g_inner, cfg.g_outer).astype(float)
    return r, g


def pack_model(r, g):
    return np.concatenate([np.ravel(r), np.ravel(g)]).astype(float)


def unpack_model(m, cfg: SHConfig):
    n = cfg.size
    return m[:n].reshape(cfg.shape), m[n:].reshape(cfg.shape)


def initial_condition(cfg: SHConfig, seed=None):
    """Coefficients of a Gaussian random field with standard deviation ``cfg.amplitude``."""
    rng = np.random.default_rng(cfg.seed if seed is None else seed)
    field = cfg.amplitude * rng.standard_normal(cfg.shape)
    return np.fft.fftn(field).ravel()


class _SHBase(SemilinearProblem):
    depends_on_model = False

    def __init__(self, cfg: SHConfig):
        self.cfg = cfg
        self.basis = FourierBasis(cfg.shape)
        self.N = cfg.size
        self.state_dim = cfg.size
        self.model_dim = 2 * cfg.size
        self.lam = symbol(cfg)

    def _split(self, m):
        return m[: self.N], m[self.N:]

    def field(self, yhat):
        """Grid values of a coefficient vector (complex in general)."""
        return self.basis.to(yhat)

    def fft(self, x):
        return self.basis.frm(x)

    def ifft(self, x):
        return self.basis.to(x)

    def rhs(self, y, m, t):
        r, g = self._split(m)
        return self.lam * y + self.fft(kernels.sh_nonlinearity(self.field(y), r, g))

    def observe(self, y):
        return np.real(self.field(y))

    def observe_tangent(self, y, v):
        return np.real(self.field(v))

    def observe_adjoint(self, y, u):
        return self.fft(np.asarray(u, dtype=complex)) / self.N

    def sample_state(self, rng):
        return self.fft(rng.standard_normal(self.N))

    def sample_model(self, rng):
        return np.concatenate([rng.uniform(0.01, 2.3, self.N), rng.uniform(-1.2, 1.2, self.N)])

    def initial_state(self, seed=None):
        return initial_condition(self.cfg, seed)

    def stripe_model(self):
        return pack_model(*stripe_fields(self.cfg))


class SwiftHohenberg(_SHBase):
    """Fixed diagonal linear part; the nonlinearity is the full pointwise term."""

    def linear_operator(self, m, yk, config=None):
        return DiagonalOperator(self.lam, config)

    def n(self, y, m, t, yk):
        r, g = self._split(m)
        return self.fft(kernels.sh_nonlinearity(self.field(y), r, g))

    def n_y(self, y, m, t, yk, v):
        r, g = self._split(m)
        return self.fft(kernels.sh_jacobian(self.field(y), r, g) * self.ifft(v))

    def n_y_adj(self, y, m, t, yk, z):
        r, g = self._split(m)
        return self.fft(np.conj(kernels.sh_jacobian(self.field(y), r, g)) * self.ifft(z))

    def n_m(self, y, m, t, yk, w):
        wr, wg = self._split(w)
        u = self.field(y)
        return self.fft(wr * u + wg * u * u)

    def n_m_adj(self, y, m, t, yk, z):
        u = self.field(y)
        back = self.N * self.ifft(z)
        return np.concatenate([np.real(np.conj(u) * back), np.real(np.conj(u * u) * back)])


class SwiftHohenbergRelinearized(_SHBase):
    """Operator rebuilt at every step as the Jacobian at the step-start field.

    The step-start field enters through its real part, so derivatives with
    respect to that state are real-linear.
    """

    depends_on_state = True
    depends_on_model = True

    def __init__(self, cfg: SHConfig):
        if cfg.size > DENSE_LIMIT:
            raise CapabilityError(
                f"relinearised model needs a dense operator; {cfg.size} unknowns exceed {DENSE_LIMIT}")
        super().__init__(cfg)
        kern = np.real(np.fft.ifftn(self.lam.reshape(cfg.shape)))
        idx = np.indices(cfg.shape).reshape(len(cfg.shape), -1)
        diff = [(idx[a][:, None] - idx[a][None, :]) % cfg.shape[a] for a in range(len(cfg.shape))]
        C = kern[tuple(diff)]
        self.C = 0.5 * (C + C.T)

    def _yk_field(self, yk):
        return np.real(self.field(yk))

    def linear_operator(self, m, yk, config=None):
        r, g = self._split(m)
        u = self._yk_field(yk)
        diag = np.real(kernels.sh_jacobian(u, r, g))
        A = self.C + np.diag(diag)
        return DenseOperator(A, config, basis=self.basis, hermitian=True)

    def n(self, y, m, t, yk):
        r, g = self._split(m)
        u = self.field(y)
        uk = self._yk_field(yk)
        return self.fft((g * u - u * u - 2.0 * g * uk + 3.0 * uk * uk) * u)

    def _ny_mult(self, y, m, yk):
        r, g = self._split(m)
        u = self.field(y)
        uk = self._yk_field(yk)
        return 2.0 * g * u - 3.0 * u * u - 2.0 * g * uk + 3.0 * uk * uk

    def n_y(self, y, m, t, yk, v):
        return self.fft(self._ny_mult(y, m, yk) * self.ifft(v))

    def n_y_adj(self, y, m, t, yk, z):
        return self.fft(np.conj(self._ny_mult(y, m, yk)) * self.ifft(z))

    def _real_linear(self, a):
        """Forward/adjoint of d -> F(a * Re(F^{-1} d))."""
        return (lambda d: self.fft(a * np.real(self.ifft(d))),
                lambda z: self.fft(np.real(np.conj(a) * self.ifft(z))))

    def _nyk_mult(self, y, m, yk):
        r, g = self._split(m)
        u = self.field(y)
        uk = self._yk_field(yk)
        return (-2.0 * g + 6.0 * uk) * u

    def n_yk(self, y, m, t, yk, v):
        return self._real_linear(self._nyk_mult(y, m, yk))[0](v)

    def n_yk_adj(self, y, m, t, yk, z):
        return self._real_linear(self._nyk_mult(y, m, yk))[1](z)

    def n_m(self, y, m, t, yk, w):
        _, wg = self._split(w)
        u = self.field(y)
        uk = self._yk_field(yk)
        return self.fft(wg * (u * u - 2.0 * uk * u))

    def n_m_adj(self, y, m, t, yk, z):
        u = self.field(y)
        uk = self._yk_field(yk)
        back = self.N * self.ifft(z)
        return np.concatenate([np.zeros(self.N), np.real(np.conj(u * u - 2.0 * uk * u) * back)])

    def L_state_action(self, m, yk):
        r, g = self._split(m)
        coef = 2.0 * g - 6.0 * self._yk_field(yk)

        def fwd(v, d):
            return self._real_linear(coef * self.ifft(v))[0](d)

        def tr(v, z):
            return self._real_linear(coef * self.ifft(v))[1](z)

        return OperatorDerivativeAction(fwd, tr, batched=True)

    def L_model_action(self, m, yk):
        uk = self._yk_field(yk)

        def fwd(v, w):
            wr, wg = self._split(w)
            return self.fft((wr + 2.0 * wg * uk) * self.ifft(v))

        def tr(v, z):
            cu = np.conj(self.ifft(v)) * (self.N * self.ifft(z))
            return np.concatenate([np.real(cu), np.real(2.0 * uk * cu)], axis=-1)

        return OperatorDerivativeAction(fwd, tr, batched=True)


def build_problem(cfg: SHConfig, relinearized=False):
    return SwiftHohenbergRelinearized(cfg) if relinearized else SwiftHohenberg(cfg)


@dataclass
class ObservationSet:
    times: np.ndarray
    data: list
    noise_frac: float
    steps: list

    def __len__(self):
        return len(self.times)


def make_observations(trace, every, until, noise_frac=0.05, seed=0):
    """Noisy full-field snapshots of a trace at multiples of ``every``.

    Noise is Gaussian with standard deviation ``noise_frac`` times the RMS of
    each snapshot.  Returns an empty set (with a warning) when no observation
    time falls inside the run.
    """
    rng = np.random.default_rng(seed)
    grid = trace.grid
    t_end = min(until, grid.times[-1])
    count = int(np.floor(t_end / every + 1e-9))
    times = [every * (i + 1) for i in range(count)]
    if not times:
        warnings.warn("no observation time lies inside the simulated interval", RuntimeWarning)
        return ObservationSet(np.array([]), [], noise_frac, [])
    steps = [grid.index_of(t) for t in times]
    data = []
    for k in steps:
        clean = trace.problem.observe(trace.states[k])
        rms = float(np.sqrt(np.mean(clean * clean)))
        data.append(clean + noise_frac * rms * rng.standard_normal(clean.shape))
    return ObservationSet(np.array(times), data, noise_frac, steps)
