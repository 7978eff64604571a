import numpy as np
import pytest
import scipy.sparse as sp

from oracles import vertex_enumeration
from rmabsched.simplex import LpProblem, simplex_solve


def test_textbook_example():
    # max 3x + 5y, x <= 4, 2y <= 12, 3x + 2y <= 18 (slacks appended)
    A = [[1, 0, 1, 0, 0], [0, 2, 0, 1, 0], [3, 2, 0, 0, 1]]
    sol = simplex_solve(LpProblem([3, 5, 0, 0, 0], A, [4, 12, 18]))
    assert sol.status == "optimal"
    assert sol.value == pytest.approx(36.0)
    assert sol.x[:2] == pytest.approx([2.0, 6.0])


def test_infeasible_and_unbounded():
    assert simplex_solve(LpProblem([1, 1], [[1, 1]], [-1])).status == "infeasible"
    assert simplex_solve(LpProblem([1, 0], [[1, -1]], [1])).status == "unbounded"


def test_negative_rhs_and_redundant_row():
    A = [[1, 1, 0], [-1, -1, 0], [0, 1, 1]]
    sol = simplex_solve(LpProblem([1, 2, 0], A, [2, -2, 3]))
    assert sol.status == "optimal" and sol.value == pytest.approx(4.0)
    assert len(sol.dropped_rows) == 1
    assert sol.residual < 1e-10


@pytest.mark.parametrize("rule", ["bland", "dantzig"])
def test_matches_vertex_enumeration(rule):
    rng = np.random.default_rng(0)
    checked = 0
    for _ in range(60):
        m, n = int(rng.integers(1, 4)), int(rng.integers(3, 7))
        A = rng.integers(-3, 4, size=(m, n)).astype(float)
        x0 = rng.random(n) * (rng.random(n) < 0.6)
        b = A @ x0
        c = rng.normal(size=n)
        # box the feasible set so the optimum is finite
        A = np.vstack([A, np.ones(n)])
        b = np.append(b, x0.sum() + 1.0)
        A = np.hstack([A, np.eye(m + 1)[:, [-1]]])
        c = np.append(c, 0.0)
        best, _ = vertex_enumeration(c, A, b)
        sol = simplex_solve(LpProblem(c, A, b), rule=rule)
        assert sol.status == "optimal"
        if best is not None:
            assert sol.value == pytest.approx(best, abs=1e-8)
            checked += 1
    assert checked > 40


def test_sparse_input_and_initial_basis():
    A = np.array([[1, 0, 1, 0, 0], [0, 2, 0, 1, 0], [3, 2, 0, 0, 1]], float)
    prob = LpProblem([3, 5, 0, 0, 0], sp.csc_matrix(A), [4, 12, 18])
    warm = simplex_solve(prob, initial_basis=[2, 3, 4])
    cold = simplex_solve(prob)
    assert warm.value == pytest.approx(cold.value) == pytest.approx(36.0)
    # an infeasible warm start is ignored rather than trusted
    assert simplex_solve(prob, initial_basis=[0, 1, 3]).value == pytest.approx(36.0)
    with pytest.raises(ValueError):
        simplex_solve(prob, initial_basis=[0])
    with pytest.raises(ValueError):
        simplex_solve(prob, rule="steepest")


def test_degenerate_problem_terminates():
    # a classic cycling example for the largest-coefficient rule
    A = np.array(
        [
            [0.25, -60, -1 / 25, 9, 1, 0, 0],
            [0.5, -90, -1 / 50, 3, 0, 1, 0],
            [0, 0, 1, 0, 0, 0, 1],
        ]
    )
    c = np.array([0.75, -150, 1 / 50, -6, 0, 0, 0])
    for rule in ("bland", "dantzig"):
        sol = simplex_solve(LpProblem(c, A, [0, 0, 1]), rule=rule)
        assert sol.status == "optimal" and sol.value == pytest.approx(0.05)
