"""Least-squares parameter estimation with Huber total variation and box bounds."""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .adjoint import sensitivity_transpose
from .schemes import DivergenceError, integrate


def misfit(pred, obs):
    """0.5 * sum of squared residuals over all snapshots, and the residuals."""
    if len(pred) != len(obs):
        raise ValueError("prediction and observation counts differ")
    value = 0.0
    res = []
    for p, d in zip(pred, obs):
        p = np.asarray(p, dtype=float)
        d = np.asarray(d, dtype=float)
        if p.shape != d.shape:
            raise ValueError(f"shape mismatch {p.shape} vs {d.shape}")
        r = p - d
        value += 0.5 * float(np.sum(r * r))
        res.append(r)
    return value, res


def tv_huber(field, eps=1e-3):
    """Huber-smoothed total variation with periodic forward differences.

    One-dimensional fields are treated as a single column.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    f = np.asarray(field, dtype=float)
    shape = f.shape
    if f.ndim == 1:
        f = f[:, None]
    value, grad = kernels.huber_tv(np.ascontiguousarray(f), float(eps))
    return value, np.asarray(grad).reshape(shape)


def project(x, lower, upper):
    return np.minimum(np.maximum(x, lower), upper)


@dataclass
class ObjectiveConfig:
    beta: float = 10.0
    huber_eps: float = 1e-3
    bounds: list = field(default_factory=lambda: [(0.01, 2.3), (-1.2, 1.2)])
    lbfgs_memory: int = 20
    max_iters: int = 100

    def __post_init__(self):
        if self.beta < 0:
            raise ValueError("beta must be non-negative")
        if self.huber_eps <= 0:
            raise ValueError("huber_eps must be positive")
        if self.lbfgs_memory < 1 or self.max_iters < 1:
            raise ValueError("lbfgs_memory and max_iters must be positive")
        for lo, hi in self.bounds:
            if lo > hi:
                raise ValueError(f"empty bound interval [{lo}, {hi}]")


class ObjectiveDivergence(RuntimeError):
    def __init__(self, model, step):
        super().__init__(f"forward run diverged at step {step}")
        self.model = model
        self.step = step


class Objective:
    """Misfit plus beta times the TV of each model segment.

    The model vector is split into equal segments of shape ``segment_shape``
    (for Swift-Hohenberg: the r field followed by the g field).
    """

    def __init__(self, problem, tableau, y0, grid, observations, cfg: ObjectiveConfig,
                 segment_shape, phi_config=None):
        self.problem = problem
        self.tableau = tableau
        self.y0 = y0
        self.grid = grid
        self.obs = observations
        self.cfg = cfg
        self.segment_shape = tuple(segment_shape)
        self.phi_config = phi_config
        self.evaluations = 0
        seg = int(np.prod(self.segment_shape))
        if problem.model_dim % seg:
            raise ValueError("model size is not a multiple of the segment size")
        self.segments = problem.model_dim // seg
        if len(cfg.bounds) != self.segments:
            raise ValueError(f"need {self.segments} bound pairs, got {len(cfg.bounds)}")

    def bounds(self):
        seg = int(np.prod(self.segment_shape))
        lo = np.repeat([b[0] for b in self.cfg.bounds], seg).astype(float)
        hi = np.repeat([b[1] for b in self.cfg.bounds], seg).astype(float)
        return lo, hi

    def regularization(self, m):
        value = 0.0
        grad = np.zeros_like(m, dtype=float)
        if self.cfg.beta == 0:
            return value, grad
        seg = int(np.prod(self.segment_shape))
        for i in range(self.segments):
            v, g = tv_huber(m[i * seg:(i + 1) * seg].reshape(self.segment_shape), self.cfg.huber_eps)
            value += v
            grad[i * seg:(i + 1) * seg] = g.ravel()
        return self.cfg.beta * value, self.cfg.beta * grad

    def predict(self, m):
        try:
            # trial points may blow up; the non-finite check in integrate reports it
            with np.errstate(over="ignore", invalid="ignore"):
                trace = integrate(self.problem, self.tableau, self.y0, m, self.grid, self.phi_config)
        except DivergenceError as exc:
            raise ObjectiveDivergence(np.array(m), exc.step) from exc
        pred = [self.problem.observe(trace.states[k]) for k in self.obs.steps]
        return trace, pred

    def evaluate(self, m):
        """Return (objective, gradient, parts) with parts = {misfit, reg}."""
        m = np.asarray(m, dtype=float)
        self.evaluations += 1
        trace, pred = self.predict(m)
        mis, res = misfit(pred, self.obs.data)
        gmis, _ = sensitivity_transpose(trace, res, self.obs.steps)
        reg, greg = self.regularization(m)
        return mis + reg, gmis + greg, {"misfit": mis, "reg": reg}

    def __call__(self, m):
        return self.evaluate(m)


@dataclass
class LBFGSResult:
    x: np.ndarray
    value: float
    grad: np.ndarray
    log: list
    status: str
    iterations: int
    evaluations: int


def _two_loop(g, pairs):
    q = g.copy()
    alphas = []
    for s, y, rho in reversed(pairs):
        a = rho * np.dot(s, q)
        alphas.append(a)
        q -= a * y
    if pairs:
        s, y, _ = pairs[-1]
        q *= np.dot(s, y) / np.dot(y, y)
    for (s, y, rho), a in zip(pairs, reversed(alphas)):
        b = rho * np.dot(y, q)
        q += (a - b) * s
    return q


def _cubic_step(alpha, f0, d0, fa, da):
    """Minimiser of the cubic through (0, f0, d0) and (alpha, fa, da), or None."""
    d1 = d0 + da - 3.0 * (f0 - fa) / (0.0 - alpha)
    disc = d1 * d1 - d0 * da
    if disc < 0 or not np.isfinite(disc):
        return None
    d2 = np.sqrt(disc)
    denom = da - d0 + 2.0 * d2
    if denom == 0:
        return None
    step = alpha - alpha * (da + d2 - d1) / denom
    return step if np.isfinite(step) else None


def _projected_gradient(x, g, lower, upper):
    return x - project(x - g, lower, upper)


def lbfgs_bounded(fun, x0, lower, upper, max_iters=100, memory=20, gtol=1e-10,
                  c1=1e-4, max_backtracks=30, callback=None):
    """Projected L-BFGS for box constraints.

    ``fun(x)`` returns ``(value, gradient)`` or ``(value, gradient, parts)``.
    Trial points are projected onto the box; curvature pairs with
    ``s.y <= 1e-10`` are skipped; the first backtrack uses cubic interpolation
    and later ones fall back to bisection.  Accepted iterates never increase
    the objective.
    """
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    if np.any(lower > upper):
        raise ValueError("lower bound exceeds upper bound")

    def call(x):
        out = fun(x)
        return (out[0], np.asarray(out[1], dtype=float), out[2] if len(out) > 2 else {})

    x = project(np.asarray(x0, dtype=float), lower, upper)
    f, g, parts = call(x)
    evals = 1
    pairs = deque(maxlen=memory)
    log = [_log_row(0, f, parts, _projected_gradient(x, g, lower, upper), 0.0)]
    status = "max_iters"
    it = 0
    for it in range(1, max_iters + 1):
        pg = _projected_gradient(x, g, lower, upper)
        if np.linalg.norm(pg) <= gtol:
            status = "converged"
            it -= 1
            break
        active = ((x <= lower) & (g > 0)) | ((x >= upper) & (g < 0))
        d = -_two_loop(np.where(active, 0.0, g), list(pairs))
        d[active] = 0.0
        if np.dot(g, d) >= 0:
            pairs.clear()
            d = -np.where(active, 0.0, g)
        alpha = 1.0 if pairs else min(1.0, 1.0 / max(np.linalg.norm(d), 1e-300))
        accepted = False
        for attempt in range(max_backtracks):
            xt = project(x + alpha * d, lower, upper)
            s = xt - x
            slope = float(np.dot(g, s))
            if not np.any(s):
                break
            try:
                ft, gt, pt = call(xt)
            except (FloatingPointError, ObjectiveDivergence):
                ft, gt, pt = np.inf, None, {}
            evals += 1
            if np.isfinite(ft) and ft <= f + c1 * slope and slope < 0:
                accepted = True
                break
            new = None
            if attempt == 0 and gt is not None and np.isfinite(ft):
                new = _cubic_step(alpha, f, float(np.dot(g, d)), ft, float(np.dot(gt, d)))
            if new is None or not (0.1 * alpha <= new <= 0.5 * alpha):
                new = 0.5 * alpha
            alpha = new
        if not accepted:
            status = "line_search_failed"
            it -= 1
            break
        yv = gt - g
        sy = float(np.dot(s, yv))
        if sy > 1e-10:
            pairs.append((s, yv, 1.0 / sy))
        x, f, g, parts = xt, ft, gt, pt
        row = _log_row(it, f, parts, _projected_gradient(x, g, lower, upper), alpha)
        log.append(row)
        if callback is not None:
            callback(row)
    return LBFGSResult(x, f, g, log, status, it, evals)


def _log_row(it, f, parts, pg, step):
    return {"iter": it, "objective": float(f), "misfit": float(parts.get("misfit", f)),
            "reg": float(parts.get("reg", 0.0)), "grad_norm": float(np.linalg.norm(pg)),
            "step": float(step)}


LOG_FIELDS = ("iter", "objective", "misfit", "reg", "grad_norm", "step")
