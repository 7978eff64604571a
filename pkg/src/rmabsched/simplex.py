"""Equality-form primal simplex (two phases, revised form).

Solves ``max c.x  s.t.  A x = b, x >= 0``. The basis matrix is refactorized
from scratch every pivot (dense LU for small bases, sparse LU otherwise),
which is slow but keeps the iterates free of accumulated update error.
Pivoting follows Bland's rule by default, so the method cannot cycle.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

FEAS_TOL = 1e-8
PIVOT_TOL = 1e-9
COST_TOL = 1e-10
DENSE_LIMIT = 400
DEGENERATE_SWITCH = 50


class NumericalStall(RuntimeError):
    """The simplex iteration limit was hit or the basis became singular."""


@dataclass
class LpProblem:
    """``max c.x`` subject to ``A_eq x = b_eq`` and ``x >= 0``."""

    c: np.ndarray
    A_eq: object  # dense array or scipy sparse matrix
    b_eq: np.ndarray
    var_names: Optional[list] = None
    row_names: Optional[list] = None

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float)
        self.b_eq = np.asarray(self.b_eq, dtype=float)
        A = self.A_eq
        self.A_eq = sp.csc_matrix(A, dtype=float) if sp.issparse(A) else np.asarray(A, dtype=float)
        if self.A_eq.shape != (self.b_eq.size, self.c.size):
            raise ValueError(f"A_eq shape {self.A_eq.shape} disagrees with b {self.b_eq.size}, c {self.c.size}")

    @property
    def shape(self):
        return self.A_eq.shape

    def residual(self, x) -> float:
        r = self.A_eq @ x - self.b_eq
        return float(np.max(np.abs(r))) if r.size else 0.0


@dataclass
class LpSolution:
    status: str  # optimal | infeasible | unbounded
    value: float = float("nan")
    x: Optional[np.ndarray] = None
    iterations: int = 0
    residual: float = float("nan")
    basis: Optional[list] = field(default=None, repr=False)
    dropped_rows: list = field(default_factory=list)


class _Basis:
    def __init__(self, columns, n_rows: int):
        self.n = n_rows
        self.columns = columns

    def factor(self, idx):
        B = self.columns(idx)
        if self.n <= DENSE_LIMIT:
            dense = B.toarray() if sp.issparse(B) else B
            lu = sla.lu_factor(dense, check_finite=False)
            if np.min(np.abs(np.diag(lu[0]))) < 1e-13:
                raise np.linalg.LinAlgError("singular basis")
            self._solve = lambda v, t=0: sla.lu_solve(lu, v, trans=t, check_finite=False)
        else:
            lu = spla.splu(sp.csc_matrix(B))
            self._solve = lambda v, t=0: lu.solve(np.asarray(v, dtype=float), trans="T" if t else "N")

    def solve(self, v):
        return self._solve(v)

    def solve_t(self, v):
        return self._solve(v, 1)


def _run_phase(A_full, cost, b, basis, allowed, rule, max_iter, it0):
    """Primal simplex from a feasible ``basis``; returns (status, basis, x_B, iters)."""
    m = b.size
    sparse = sp.issparse(A_full)

    def columns(idx):
        return A_full[:, idx]

    fac = _Basis(columns, m)
    it = it0
    degenerate_run = 0
    while True:
        if it - it0 >= max_iter:
            raise NumericalStall(f"no convergence within {max_iter} pivots")
        try:
            fac.factor(basis)
        except (RuntimeError, np.linalg.LinAlgError) as exc:
            raise NumericalStall(f"singular basis after {it} pivots: {exc}") from exc
        x_B = fac.solve(b)
        y = fac.solve_t(cost[basis])
        d = cost - (A_full.T @ y if sparse else A_full.T.dot(y))
        d[~allowed] = 0.0
        d[basis] = 0.0
        cand = np.flatnonzero(d > COST_TOL)
        if cand.size == 0:
            return "optimal", basis, x_B, it
        use_bland = rule == "bland" or degenerate_run >= DEGENERATE_SWITCH
        j = int(cand[0]) if use_bland else int(cand[np.argmax(d[cand])])
        col = A_full[:, [j]].toarray().ravel() if sparse else A_full[:, j]
        u = fac.solve(col)
        rows = np.flatnonzero(u > PIVOT_TOL)
        if rows.size == 0:
            return "unbounded", basis, x_B, it
        ratios = np.maximum(x_B[rows], 0.0) / u[rows]
        best = ratios.min()
        ties = rows[ratios <= best + 1e-12 * max(1.0, best)]
        basis_arr = np.asarray(basis)
        # Bland: leave with the smallest variable index among the tied rows
        leave = int(ties[np.argmin(basis_arr[ties])])
        degenerate_run = degenerate_run + 1 if best <= 1e-12 else 0
        basis = list(basis)
        basis[leave] = j
        it += 1


def simplex_solve(
    problem: LpProblem,
    *,
    rule: str = "bland",
    initial_basis: Optional[Sequence[int]] = None,
    max_iter: int = 100000,
) -> LpSolution:
    """Two-phase primal simplex.

    ``rule`` is ``"bland"`` (lowest-index entering variable) or
    ``"dantzig"`` (largest reduced cost, falling back to Bland after a run
    of degenerate pivots). ``initial_basis`` optionally names one column per
    row (``-1`` for that row's artificial variable); it is ignored unless it
    is nonsingular and primal feasible.
    """
    if rule not in ("bland", "dantzig"):
        raise ValueError(f"unknown pivot rule {rule!r}")
    A, b, c = problem.A_eq, problem.b_eq.copy(), problem.c
    m, n = A.shape
    sparse = sp.issparse(A)
    if m == 0:
        if np.any(c > COST_TOL):
            return LpSolution("unbounded")
        return LpSolution("optimal", 0.0, np.zeros(n), 0, 0.0, [])
    # artificial j of row i has sign +1 when b_i >= 0, -1 otherwise, so it starts nonnegative
    signs = np.where(b >= 0, 1.0, -1.0)
    art = sp.diags(signs, format="csc") if sparse else np.diag(signs)
    A_full = sp.hstack([A, art], format="csc") if sparse else np.hstack([A, art])
    n_full = n + m
    basis = _crash(A_full, b, n, initial_basis)

    # phase 1: drive the artificials to zero
    cost1 = np.zeros(n_full)
    cost1[n:] = -1.0
    allowed = np.ones(n_full, dtype=bool)
    status, basis, x_B, it = _run_phase(A_full, cost1, b, basis, allowed, rule, max_iter, 0)
    art_level = sum(x_B[i] for i, j in enumerate(basis) if j >= n)
    if art_level > FEAS_TOL * max(1.0, np.max(np.abs(b))):
        return LpSolution("infeasible", iterations=it)

    # pivot zero-level artificials out of the basis; drop rows where that is impossible
    dropped = []
    fac = _Basis(lambda idx: A_full[:, idx], m)
    for pos in range(m):
        if basis[pos] < n:
            continue
        fac.factor(basis)
        e = np.zeros(m)
        e[pos] = 1.0
        row = fac.solve_t(e)
        tab = A.T @ row if sparse else A.T.dot(row)
        tab[[j for j in basis if j < n]] = 0.0
        cand = np.flatnonzero(np.abs(tab) > 1e-7)
        if cand.size:
            basis = list(basis)
            basis[pos] = int(cand[np.argmax(np.abs(tab[cand]))])
        else:
            dropped.append(pos)
    if dropped:
        keep_rows = [i for i in range(m) if i not in dropped]
        A = A[keep_rows, :]
        b = b[keep_rows]
        basis = [basis[i] for i in keep_rows]
        m = len(keep_rows)
    # no artificials remain in the basis
    A_full = A
    cost2 = c.copy()
    allowed = np.ones(n, dtype=bool)
    status, basis, x_B, it = _run_phase(A_full, cost2, b, basis, allowed, rule, max_iter, it)
    if status == "unbounded":
        return LpSolution("unbounded", iterations=it, dropped_rows=dropped)
    x = np.zeros(n)
    x[basis] = np.maximum(x_B, 0.0)
    return LpSolution(
        status="optimal",
        value=float(c @ x),
        x=x,
        iterations=it,
        residual=problem.residual(x),
        basis=list(basis),
        dropped_rows=dropped,
    )


def _crash(A_full, b, n, initial_basis):
    m = b.size
    default = list(range(n, n + m))
    if initial_basis is None:
        return default
    if len(initial_basis) != m:
        raise ValueError(f"initial basis has {len(initial_basis)} entries for {m} rows")
    basis = [n + i if j < 0 else int(j) for i, j in enumerate(initial_basis)]
    if len(set(basis)) != m:
        return default
    fac = _Basis(lambda idx: A_full[:, idx], m)
    try:
        fac.factor(basis)
        x_B = fac.solve(b)
    except (RuntimeError, np.linalg.LinAlgError):
        return default
    if not np.all(np.isfinite(x_B)) or np.min(x_B) < -FEAS_TOL:
        return default
    return basis
