import numpy as np
import pytest
from scipy.optimize import linprog

from stablelbm.errors import Infeasible
from stablelbm.simplex import simplex


def _random_feasible_lp(rng, m, n):
    a = rng.normal(size=(m, n))
    x0 = rng.uniform(0.5, 2.0, n)
    return a, a @ x0, rng.uniform(0.1, 1.0, n)


@pytest.mark.parametrize("seed", range(8))
@pytest.mark.parametrize("m,n", [(2, 5), (5, 12), (10, 30)])
def test_matches_highs(seed, m, n):
    rng = np.random.default_rng(seed)
    a, b, c = _random_feasible_lp(rng, m, n)
    ours = simplex(c, a, b)
    ref = linprog(c, A_eq=a, b_eq=b, bounds=(0, None), method="highs")
    assert ref.status == 0
    assert ours.objective == pytest.approx(ref.fun, rel=1e-8, abs=1e-10)
    np.testing.assert_allclose(a @ ours.x, b, atol=1e-9)
    assert ours.x.min() >= -1e-12


def test_trivial_problem():
    res = simplex(np.array([1.0, 1.0]), np.array([[1.0, 1.0]]), np.array([1.0]))
    assert res.objective == pytest.approx(1.0)


def test_negative_rhs_handled():
    res = simplex(np.array([1.0, 2.0]), np.array([[-1.0, -1.0]]), np.array([-3.0]))
    np.testing.assert_allclose(res.x, [3.0, 0.0])


def test_redundant_rows():
    a = np.array([[1.0, 1.0, 0.0], [2.0, 2.0, 0.0], [0.0, 1.0, 1.0]])
    b = np.array([1.0, 2.0, 1.0])
    res = simplex(np.array([1.0, 0.0, 1.0]), a, b)
    ref = linprog([1.0, 0.0, 1.0], A_eq=a, b_eq=b, method="highs")
    assert res.objective == pytest.approx(ref.fun)


def test_infeasible_reports_phase1():
    with pytest.raises(Infeasible) as info:
        simplex(np.zeros(2), np.array([[1.0, 1.0]]), np.array([-1.0]))
    assert info.value.phase1_objective > 0


def test_degenerate_cycling_example():
    # Beale's example, cycles under the textbook largest-coefficient rule
    c = np.array([-0.75, 150.0, -0.02, 6.0, 0, 0, 0])
    a = np.array(
        [
            [0.25, -60.0, -0.04, 9.0, 1, 0, 0],
            [0.5, -90.0, -0.02, 3.0, 0, 1, 0],
            [0.0, 0.0, 1.0, 0.0, 0, 0, 1],
        ]
    )
    b = np.array([0.0, 0.0, 1.0])
    res = simplex(c, a, b)
    assert res.objective == pytest.approx(-0.05)
