"""NumPy reference implementations of the pointwise kernels."""
import numpy as np


def sh_nonlinearity(y, r, g):
    """r*y + g*y**2 - y**3, elementwise."""
    y2 = y * y
    return r * y + g * y2 - y2 * y


def sh_jacobian(y, r, g):
    """r + 2*g*y - 3*y**2, elementwise."""
    return r + 2.0 * g * y - 3.0 * (y * y)


def huber_tv(field, eps):
    """Periodic forward-difference Huber total variation and its gradient.

    ``field`` is a 2-D real array; returns (value, gradient).
    """
    f = np.asarray(field, dtype=float)
    dx = np.roll(f, -1, axis=0) - f
    dy = np.roll(f, -1, axis=1) - f
    t = np.sqrt(dx * dx + dy * dy)
    value = np.where(t <= eps, t * t / (2.0 * eps), t - 0.5 * eps).sum()
    w = 1.0 / np.maximum(t, eps)
    px, py = w * dx, w * dy
    grad = (np.roll(px, 1, axis=0) - px) + (np.roll(py, 1, axis=1) - py)
    return float(value), grad
