import warnings

import numpy as np
import pytest

from etdkit.adjoint import sensitivity_transpose
from etdkit.operators import CapabilityError
from etdkit.problem import check_problem, inner
from etdkit.schemes import TimeGrid, integrate, make_tableau
from etdkit.swift_hohenberg import (SHConfig, SwiftHohenberg, SwiftHohenbergRelinearized,
                                    build_problem, initial_condition, make_observations,
                                    pack_model, stripe_fields, symbol, unpack_model)


@pytest.mark.parametrize("shape", [(8, 8), (16, 1)])
@pytest.mark.parametrize("relinearized", [False, True])
def test_derivative_callbacks(shape, relinearized):
    cfg = SHConfig(nx=shape[0], ny=shape[1], lx=10 * np.pi, ly=10 * np.pi)
    report = check_problem(build_problem(cfg, relinearized), samples=3, seed=1)
    assert report.passed, report.as_dict()


def test_symbol_vanishes_on_critical_circle():
    cfg = SHConfig(nx=16, ny=16, lx=8 * np.pi, ly=8 * np.pi)  # k = 1 is a grid wavenumber
    lam = symbol(cfg)
    assert lam.max() == pytest.approx(0.0, abs=1e-14)
    assert np.all(lam <= 0)
    assert lam[0] == -1.0


def test_config_validation():
    with pytest.raises(ValueError):
        SHConfig(nx=24, ny=24)
    with pytest.raises(ValueError):
        SHConfig(nx=4, ny=4)
    with pytest.raises(ValueError):
        SHConfig(lx=-1.0)
    with pytest.raises(ValueError):
        SHConfig(amplitude=-0.1)
    assert SHConfig(nx=32, ny=1).shape == (32,)


def test_dense_path_capability_limit():
    with pytest.raises(CapabilityError):
        SwiftHohenbergRelinearized(SHConfig(nx=128, ny=64))


def test_nonlinearity_vanishes_at_zero_and_is_symmetric():
    cfg = SHConfig(nx=16, ny=16)
    prob = SwiftHohenberg(cfg)
    rng = np.random.default_rng(0)
    m = prob.sample_model(rng)
    zero = np.zeros(cfg.size, dtype=complex)
    assert np.all(prob.n(zero, m, 0.0, zero) == 0)
    y = prob.sample_state(rng)
    v, z = prob.sample_state(rng), prob.sample_state(rng)
    # pointwise multiplication by a real field is self-adjoint
    lhs = inner(prob.n_y(y, m, 0.0, y, v), z)
    rhs = inner(v, prob.n_y(y, m, 0.0, y, z))
    assert abs(lhs - rhs) <= 1e-12 * abs(lhs)


def test_splitting_reproduces_full_right_hand_side():
    cfg = SHConfig(nx=8, ny=8)
    fixed = SwiftHohenberg(cfg)
    relin = SwiftHohenbergRelinearized(cfg)
    rng = np.random.default_rng(3)
    m = fixed.sample_model(rng)
    y, yk = fixed.sample_state(rng), fixed.sample_state(rng)
    a = fixed.linear_operator(m, y).apply(y) + fixed.n(y, m, 0.0, y)
    b = relin.linear_operator(m, yk).apply(y) + relin.n(y, m, 0.0, yk)
    assert np.linalg.norm(a - b) <= 1e-12 * np.linalg.norm(a)
    assert np.allclose(a, fixed.rhs(y, m, 0.0), rtol=1e-13)


def test_model_packing_round_trip_and_stripes():
    cfg = SHConfig(nx=32, ny=8)
    r, g = stripe_fields(cfg)
    rr, gg = unpack_model(pack_model(r, g), cfg)
    assert np.array_equal(r, rr) and np.array_equal(g, gg)
    assert set(np.unique(r)) == {cfg.r_outer, cfg.r_inner}
    assert np.all(r[11:22] == cfg.r_inner) and np.all(r[:11] == cfg.r_outer) and np.all(r[22:] == cfg.r_outer)
    assert np.all(g[11] == cfg.g_inner) and np.all(g[-1] == cfg.g_outer)


def test_initial_condition_amplitude_and_reality():
    cfg = SHConfig(nx=64, ny=64, amplitude=0.1, seed=4)
    field = np.fft.ifftn(initial_condition(cfg).reshape(cfg.shape))
    assert np.abs(field.imag).max() <= 1e-15
    assert field.real.std() == pytest.approx(0.1, rel=0.05)
    assert np.array_equal(initial_condition(cfg), initial_condition(cfg))


def _run(cfg, relinearized=False, T=2.0, tau=0.1, scheme="krogstad", y0=None):
    prob = build_problem(cfg, relinearized)
    y0 = prob.initial_state() if y0 is None else y0
    return integrate(prob, make_tableau(scheme), y0, prob.stripe_model(), TimeGrid.uniform(T, tau))


def test_evolution_stays_real():
    trace = _run(SHConfig(nx=32, ny=32), T=5.0)
    prob = trace.problem
    residue = max(np.abs(prob.field(y).imag).max() for y in trace.states)
    assert residue <= 1e-10


def test_zero_field_stays_zero():
    cfg = SHConfig(nx=16, ny=16)
    trace = _run(cfg, y0=np.zeros(cfg.size, dtype=complex))
    assert np.all(trace.final == 0)


def test_observation_noise_level():
    trace = _run(SHConfig(nx=32, ny=32, lx=10 * np.pi, ly=10 * np.pi), T=1.0, tau=0.25)
    obs = make_observations(trace, every=0.5, until=1.0, noise_frac=0.05, seed=7)
    assert len(obs) == 2 and obs.steps == [2, 4]
    for k, d in zip(obs.steps, obs.data):
        clean = trace.problem.observe(trace.states[k])
        ratio = np.std(d - clean) / np.sqrt(np.mean(clean ** 2))
        assert 0.045 <= ratio <= 0.055


def test_empty_observation_set_warns():
    trace = _run(SHConfig(nx=16, ny=16), T=1.0, tau=0.25)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        obs = make_observations(trace, every=2.0, until=1.0)
    assert len(obs) == 0
    assert any(issubclass(w.category, RuntimeWarning) for w in caught)


@pytest.mark.parametrize("relinearized,shape", [(False, (16, 16)), (True, (32, 1))])
def test_model_gradient_against_central_difference(relinearized, shape):
    cfg = SHConfig(nx=shape[0], ny=shape[1], lx=10 * np.pi, ly=10 * np.pi, amplitude=0.5)
    trace = _run(cfg, relinearized, T=1.0, tau=0.1, scheme="hochbruck_ostermann")
    prob = trace.problem
    steps = [5, 10]
    grad, _ = sensitivity_transpose(trace, [prob.observe(trace.states[k]) for k in steps], steps)

    def value(m):
        tr = integrate(prob, trace.tableau, trace.states[0], m, trace.grid)
        return 0.5 * sum(float(np.sum(prob.observe(tr.states[k]) ** 2)) for k in steps)

    rng = np.random.default_rng(0)
    w = rng.standard_normal(prob.model_dim)
    w /= np.linalg.norm(w)
    eps = 1e-4
    fd = (value(trace.m + eps * w) - value(trace.m - eps * w)) / (2 * eps)
    assert abs(fd - grad @ w) <= 1e-6 * abs(fd)


def test_batched_derivative_actions_match_row_by_row():
    cfg = SHConfig(nx=16, ny=1)
    prob = SwiftHohenbergRelinearized(cfg)
    rng = np.random.default_rng(9)
    m = prob.sample_model(rng)
    yk = prob.sample_state(rng)
    X = np.stack([prob.sample_state(rng) for _ in range(3)])
    Z = np.stack([prob.sample_state(rng) for _ in range(3)])
    w = rng.standard_normal(prob.model_dim)
    for act, d in ((prob.L_model_action(m, yk), w), (prob.L_state_action(m, yk), prob.sample_state(rng))):
        assert act.batched
        rows = np.stack([act.forward(x, d) for x in X])
        assert np.allclose(act.forward(X, d), rows, rtol=1e-13, atol=1e-13)
        tr_rows = np.stack([act.transpose(x, z) for x, z in zip(X, Z)])
        assert np.allclose(act.transpose(X, Z), tr_rows, rtol=1e-13, atol=1e-13)
