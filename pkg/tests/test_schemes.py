import numpy as np
import pytest
from scipy.integrate import solve_ivp

from etdkit.phi import phi
from etdkit.problem import ToyProblem
from etdkit.schemes import (SCHEMES, DivergenceError, PhiTerm, Tableau, TimeGrid, UnknownSchemeError,
                            integrate, make_tableau, nominal_order)

FOURTH_ORDER = ("cox_matthews", "krogstad", "hochbruck_ostermann")
POINTS = (0.0, -0.5, -3.0, -20.0)


@pytest.mark.parametrize("name", FOURTH_ORDER + ("euler",))
@pytest.mark.parametrize("z", POINTS)
def test_row_and_weight_sums(name, z):
    err_b, err_a = make_tableau(name).consistency_errors(z)
    assert err_b <= 1e-12 and err_a <= 1e-12


@pytest.mark.parametrize("name", FOURTH_ORDER)
def test_weight_moments_at_zero(name):
    # classical conditions sum b_i c_i^k = 1/(k+1)! at z = 0 for the phi-weights
    tab = make_tableau(name)
    b0 = [tab.evaluate(bi, 0.0) for bi in tab.b]
    assert sum(b0) == pytest.approx(1.0, abs=1e-14)
    assert sum(b * c for b, c in zip(b0, tab.c)) == pytest.approx(0.5, abs=1e-14)
    assert sum(b * c * c for b, c in zip(b0, tab.c)) == pytest.approx(1 / 3, abs=1e-14)


def test_perturbed_tableau_breaks_identity():
    tab = make_tableau("krogstad").perturbed(2, 1e-3)
    err_b, _ = tab.consistency_errors(-0.5)
    assert err_b == pytest.approx(1e-3 * phi(1, -0.5), rel=1e-10)


def test_aliases_and_unknown_names():
    assert make_tableau("kr").name == make_tableau("krogstad").name
    assert make_tableau("HO").name == "hochbruck_ostermann"
    with pytest.raises(UnknownSchemeError):
        make_tableau("rk4")
    assert set(SCHEMES) == {"euler", "cox_matthews", "krogstad", "hochbruck_ostermann"}
    assert nominal_order("euler") == 1 and nominal_order("cm") == 4


def test_tableau_validation():
    with pytest.raises(ValueError):
        PhiTerm(1, 1.5, 1.0)
    with pytest.raises(ValueError):
        Tableau("bad", (0.0, 0.5), {(0, 1): (PhiTerm(1, 0.5, 1.0),)}, ((), ()), 1)
    with pytest.raises(ValueError):
        Tableau("bad", (0.0,), {}, ((), ()), 1)


def test_time_grid():
    g = TimeGrid.uniform(1.0, 0.25)
    assert g.steps == 4 and g.index_of(0.5) == 2
    with pytest.raises(ValueError):
        g.index_of(0.3)
    with pytest.raises(ValueError):
        TimeGrid.uniform(1.0, 0.3)
    with pytest.raises(ValueError):
        TimeGrid([0.0, 0.5, 0.5])
    assert TimeGrid([0.0, 0.1, 0.4]).dt(1) == pytest.approx(0.3)


def _final(problem, name, tau, T=1.0):
    m = problem.default_model()
    y0 = problem.initial_state()
    return integrate(problem, make_tableau(name), y0, m, TimeGrid.uniform(T, tau)).final


@pytest.fixture(scope="module")
def toy_reference():
    # independent high-order explicit integration of the same ODE
    problem = ToyProblem(size=8, seed=3)
    m = problem.default_model()
    y0 = problem.initial_state().real
    A = problem._A(m)
    sol = solve_ivp(lambda t, y: A @ y + m[1:] * y ** 2, (0.0, 1.0), y0, method="DOP853",
                    rtol=2.3e-14, atol=1e-16)
    return sol.y[:, -1]


@pytest.mark.parametrize("state_dependent", [False, True])
@pytest.mark.parametrize("name,order", [("euler", 1)] + [(n, 4) for n in FOURTH_ORDER])
def test_convergence_order_on_toy_problem(name, order, state_dependent, toy_reference):
    problem = ToyProblem(size=8, seed=3, state_dependent=state_dependent)
    if state_dependent and name == "euler":
        order = 2  # relinearised exponential Euler is exponential Rosenbrock-Euler
    errs = [np.linalg.norm(_final(problem, name, t) - toy_reference) for t in (1 / 10, 1 / 20, 1 / 40)]
    slopes = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(np.abs(slopes - order) < 0.6), slopes


def test_fixed_and_relinearised_modes_are_enforced():
    problem = ToyProblem(state_dependent=True)
    with pytest.raises(ValueError):
        integrate(problem, make_tableau("krogstad"), problem.initial_state(), problem.default_model(),
                  TimeGrid.uniform(1.0, 0.5), mode="fixed")


def test_blow_up_reports_step():
    problem = ToyProblem(size=4, seed=0)
    m = problem.default_model()
    m[1:] = 50.0
    y0 = np.full(4, 40.0, dtype=complex)
    with pytest.raises(DivergenceError) as info:
        integrate(problem, make_tableau("euler"), y0, m, TimeGrid.uniform(20.0, 0.5))
    assert info.value.step >= 1


def test_linear_problem_is_exact_for_every_scheme():
    # zero nonlinearity: every scheme reduces to exp(tau L)
    problem = ToyProblem(size=6, seed=5)
    m = problem.default_model()
    m[1:] = 0.0
    y0 = problem.initial_state()
    mu, Q = np.linalg.eigh(problem._A(m))
    exact = Q @ (np.exp(mu) * (Q.T @ y0))
    for name in SCHEMES:
        y = integrate(problem, make_tableau(name), y0, m, TimeGrid.uniform(1.0, 0.25)).final
        # the contour's absolute floor for phi_0 (about 1e-11 per step) sets the tolerance
        assert np.linalg.norm(y - exact) <= 1e-9 * np.linalg.norm(y0)
