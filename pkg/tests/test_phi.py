import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from etdkit.phi import (MAX_ELL, ContourSpec, InvalidInputError, PhiConfig, ResolventError,
                        contour_nodes, phi, phi_apply_dense, phi_apply_diag, phi_apply_poly,
                        phi_scalar)

mpmath.mp.dps = 250


def phi_oracle(ell, z):
    """Closed form (|z| > 1) or Taylor series, both in 250-digit arithmetic."""
    z = mpmath.mpc(z)
    if abs(z) > 1:
        head = sum(z ** k / mpmath.factorial(k) for k in range(ell))
        return complex((mpmath.exp(z) - head) / z ** ell)
    term = mpmath.mpf(1) / mpmath.factorial(ell)
    total = term
    for i in range(1, 400):
        term = term * z / (i + ell)
        total += term
    return complex(total)


def rel(a, b):
    return abs(a - b) / max(abs(b), 1e-300)


# frozen from the closed form evaluated in 60-digit mpmath
FROZEN = [
    (3, -40.0, 0.011890625),
    (1, -100.0, 0.01),  # 0.01 - exp(-100)/100
    (2, -0.5, 0.42612263885053369442),
    (0, -20.0, 2.061153622438557828e-9),
    (4, -3.0, 0.025306013189726715345),
    (1, complex(-1, 10), complex(-0.0068580659146036957933, 0.13155352311341166411)),
]


@pytest.mark.parametrize("ell,z,expected", FROZEN)
def test_frozen_values(ell, z, expected):
    assert rel(phi(ell, z), expected) <= 1e-14


def test_phi_zero_is_inverse_factorial():
    for ell in range(MAX_ELL + 1):
        assert phi(ell, 0.0) == pytest.approx(1.0 / math.factorial(ell), rel=1e-16)


@pytest.mark.parametrize("ell", range(MAX_ELL + 1))
def test_against_high_precision_oracle(ell):
    rng = np.random.default_rng(ell)
    radii = np.concatenate([np.geomspace(1e-8, 1e3, 40), [0.25, 0.5, 1.0, 2.0]])
    angles = rng.uniform(0, 2 * np.pi, radii.size)
    zs = radii * np.exp(1j * angles)
    zs = zs[zs.real < 600]
    worst = max(rel(complex(phi(ell, z)), phi_oracle(ell, z)) for z in zs)
    assert worst <= 5e-15


def test_real_input_gives_real_output():
    out = phi(2, np.array([-1.0, 0.0, 3.0]))
    assert out.dtype == np.float64


@settings(max_examples=60, deadline=None)
@given(ell=st.integers(0, MAX_ELL - 1),
       x=st.floats(-200, 50, allow_nan=False), y=st.floats(-50, 50, allow_nan=False))
def test_recurrence(ell, x, y):
    z = complex(x, y)
    lhs = phi(ell, z)
    rhs = z * phi(ell + 1, z) + 1.0 / math.factorial(ell)
    assert abs(lhs - rhs) <= 1e-12 * max(1.0, abs(lhs), abs(z * phi(ell + 1, z)))


@settings(max_examples=40, deadline=None)
@given(ell=st.integers(0, MAX_ELL), x=st.floats(-100, 100), y=st.floats(-100, 100))
def test_conjugate_symmetry(ell, x, y):
    z = complex(x, y)
    assert abs(phi(ell, z.conjugate()) - np.conj(phi(ell, z))) <= 1e-14 * abs(phi(ell, z))


@settings(max_examples=40, deadline=None)
@given(ell=st.integers(1, MAX_ELL), x=st.floats(-500, -1e-6))
def test_positive_and_decreasing_on_negative_axis(ell, x):
    a, b = phi(ell, x), phi(ell, x * 0.5)
    assert 0 < a <= b <= 1.0 / math.factorial(ell)


@pytest.mark.parametrize("bad", [-1, MAX_ELL + 1, 1.5, "2"])
def test_invalid_ell(bad):
    with pytest.raises(InvalidInputError):
        phi(bad, 0.1)


def test_nonfinite_argument_rejected():
    with pytest.raises(InvalidInputError):
        phi(1, np.nan)
    with pytest.raises(InvalidInputError):
        phi_scalar(1, [1.0, 2.0])


def test_contour_spec_validation():
    with pytest.raises(InvalidInputError):
        ContourSpec(kind="ellipse")
    with pytest.raises(InvalidInputError):
        ContourSpec(num_points=31)
    with pytest.raises(InvalidInputError):
        ContourSpec(kind="circle", radius=-1.0)
    with pytest.raises(InvalidInputError):
        PhiConfig(series_threshold=0.0)


@pytest.mark.parametrize("ell", range(4))
def test_parabola_reconstruction(ell):
    nodes = contour_nodes(ell, ContourSpec("parabola", 32))
    zs = np.concatenate([-np.geomspace(1e-3, 100, 60), [0.0, 0.5, 2.0]])
    approx = nodes.reconstruct(zs)
    exact = phi(ell, zs)
    if ell == 0:
        err = np.abs(approx - exact).max()
    else:
        err = (np.abs(approx - exact) / np.abs(exact)).max()
    assert err <= 1e-10
    off_axis = nodes.reconstruct(np.array([-1 + 10j, -1 - 10j]))
    assert np.abs(off_axis - phi(ell, np.array([-1 + 10j, -1 - 10j]))).max() <= 1e-10


def test_hankel_contour_on_negative_axis():
    nodes = contour_nodes(1, ContourSpec("hankel", 32))
    zs = -np.geomspace(1e-3, 100, 50)
    assert (np.abs(nodes.reconstruct(zs) - phi(1, zs)) / phi(1, zs)).max() <= 1e-11


@pytest.mark.parametrize("ell", range(4))
def test_circle_around_point_is_relative(ell):
    for z in (-100.0, -37.5, -1e-3, 0.0, -1 + 10j):
        nodes = contour_nodes(ell, ContourSpec("circle", 32, center=z, radius=1.0))
        assert rel(nodes.reconstruct(z), phi(ell, z)) <= 1e-13


def test_real_symmetric_nodes_store_half():
    nodes = contour_nodes(2, ContourSpec("parabola", 32))
    assert nodes.real_symmetric and nodes.nodes.size == 16
    s, c = nodes.full()
    assert s.size == 32 and np.allclose(np.sort_complex(s), np.sort_complex(s.conj()))


def test_circle_enclosure_check():
    spec = ContourSpec.circle_around([-1.0, -3.0])
    spec.validate_enclosure([-1.0, -3.0])
    with pytest.raises(InvalidInputError):
        spec.validate_enclosure([-10.0])


def _sym_matrix(rng, n, lo, hi):
    q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    eig = rng.uniform(lo, hi, n)
    return (q * eig) @ q.T, q, eig


@pytest.mark.parametrize("ell", [0, 1, 3])
def test_dense_matches_eigendecomposition(ell):
    rng = np.random.default_rng(3)
    L, q, eig = _sym_matrix(rng, 12, -40, 0)
    w = rng.standard_normal(12)
    exact = q @ (phi(ell, 0.5 * eig) * (q.T @ w))
    nodes = contour_nodes(ell, ContourSpec("parabola", 32))
    out = phi_apply_dense(ell, L, w, nodes, scale=0.5)
    assert np.linalg.norm(out - exact) <= 1e-10 * max(np.linalg.norm(exact), 1.0)
    wc = w + 1j * rng.standard_normal(12)
    outc = phi_apply_dense(ell, L, wc, nodes, scale=0.5)
    exactc = q @ (phi(ell, 0.5 * eig) * (q.T @ wc))
    assert np.linalg.norm(outc - exactc) <= 1e-10 * max(np.linalg.norm(exactc), 1.0)


def test_diag_application():
    eig = np.array([-1.0, -5.0, 0.0])
    w = np.array([1.0, 2.0, 3.0])
    assert np.allclose(phi_apply_diag(2, eig, 0.3, w), phi(2, 0.3 * eig) * w, rtol=1e-15)


@pytest.mark.parametrize("mode", ["monomial", "chebyshev"])
def test_polynomial_matches_exact_on_small_spectrum(mode):
    rng = np.random.default_rng(5)
    L, q, eig = _sym_matrix(rng, 10, -1, 1)
    w = rng.standard_normal(10)
    exact = q @ (phi(2, eig) * (q.T @ w))
    out = phi_apply_poly(2, L, w, 20, mode)
    assert np.linalg.norm(out - exact) <= 1e-13 * np.linalg.norm(exact)


def test_polynomial_rejects_unknown_mode_and_degree():
    with pytest.raises(InvalidInputError):
        phi_apply_poly(1, np.eye(2), np.ones(2), 5, "legendre")
    with pytest.raises(InvalidInputError):
        phi_apply_poly(1, np.eye(2), np.ones(2), 0, "monomial")


def test_singular_shift_raises_with_node_index():
    nodes = contour_nodes(1, ContourSpec("parabola", 32))
    s0 = nodes.nodes[3]
    L = np.diag([s0.real, -1.0])
    with pytest.raises(ResolventError) as info:
        phi_apply_dense(1, L.astype(complex) + np.diag([1j * s0.imag, 0]), np.ones(2), nodes)
    assert info.value.index == 3
