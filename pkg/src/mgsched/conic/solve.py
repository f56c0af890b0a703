"""Continuous SOCP solves for ConicProgram via the Clarabel interior-point solver.

The program's binaries are relaxed to their [0,1] boxes here; integrality
is the branch-and-bound driver's job.  The Clarabel matrices are built once
and reused across nodes by patching only the bound right-hand sides.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse

import clarabel

from .program import ConicProgram, convert_rotated

OPTIMAL = "optimal"
GAP_FEASIBLE = "gap-feasible"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"
ITERATION_LIMIT = "iteration-limit"
NUMERICAL = "numerical-failure"


@dataclass
class SolveResult:
    status: str
    x: np.ndarray | None = None
    objective: float = float("nan")
    bound: float = float("-inf")
    gap: float = float("nan")
    nodes: int = 0
    wall_time: float = 0.0
    iterations: int = 0
    r_prim: float = float("nan")
    r_dual: float = float("nan")

    @property
    def ok(self) -> bool:
        return self.status in (OPTIMAL, GAP_FEASIBLE)


@dataclass
class _Backend:
    """Prepared Clarabel data for one ConicProgram (binaries relaxed)."""

    A: sparse.csc_matrix
    b: np.ndarray
    q: np.ndarray
    obj_const: float
    cones: list
    nvars: int
    # col -> (row of x >= lb, row of x <= ub); only present for finite bounds
    lb_row: dict[int, int] = field(default_factory=dict)
    ub_row: dict[int, int] = field(default_factory=dict)


def _affine_rows(expr, rows, cols, vals, brow, row):
    # encode s_row = expr(x): A[row,:] = -coefs, b[row] = const
    for c, v in expr.coefs.items():
        rows.append(row)
        cols.append(c)
        vals.append(-v)
    brow.append(expr.const)


def prepare(p: ConicProgram) -> _Backend:
    rows: list[int] = []
    cols: list[int] = []
    vals: list[float] = []
    b: list[float] = []
    cones = []
    r = 0

    # zero cone: equality rows
    neq = 0
    for lr in p.lin:
        if lr.sense == "==":
            for c, v in lr.expr.coefs.items():
                rows.append(r)
                cols.append(c)
                vals.append(v)
            b.append(lr.rhs - lr.expr.const)
            r += 1
            neq += 1
    if neq:
        cones.append(clarabel.ZeroConeT(neq))

    # nonnegative cone: inequality rows then variable bounds
    nin = 0
    for lr in p.lin:
        if lr.sense == "==":
            continue
        sgn = 1.0 if lr.sense == "<=" else -1.0
        for c, v in lr.expr.coefs.items():
            rows.append(r)
            cols.append(c)
            vals.append(sgn * v)
        b.append(sgn * (lr.rhs - lr.expr.const))
        r += 1
        nin += 1
    lb_row: dict[int, int] = {}
    ub_row: dict[int, int] = {}
    for j in range(p.num_vars):
        if np.isfinite(p.lb[j]):
            rows.append(r)
            cols.append(j)
            vals.append(-1.0)
            b.append(-p.lb[j])
            lb_row[j] = r
            r += 1
            nin += 1
        if np.isfinite(p.ub[j]):
            rows.append(r)
            cols.append(j)
            vals.append(1.0)
            b.append(p.ub[j])
            ub_row[j] = r
            r += 1
            nin += 1
    if nin:
        cones.append(clarabel.NonnegativeConeT(nin))

    # second-order cones (rotated ones converted to standard form)
    soc_rows = list(p.soc) + [convert_rotated(rr) for rr in p.rsoc]
    for sr in soc_rows:
        _affine_rows(sr.rhs, rows, cols, vals, b, r)
        r += 1
        for t in sr.terms:
            _affine_rows(t, rows, cols, vals, b, r)
            r += 1
        cones.append(clarabel.SecondOrderConeT(1 + len(sr.terms)))

    q = np.zeros(p.num_vars)
    for c, v in p.objective.coefs.items():
        q[c] += v
    A = sparse.csc_matrix(
        (vals, (rows, cols)), shape=(r, p.num_vars), dtype=float)
    return _Backend(A, np.asarray(b, dtype=float), q, p.objective.const,
                    cones, p.num_vars, lb_row, ub_row)


def _settings(max_iter: int = 200) -> "clarabel.DefaultSettings":
    s = clarabel.DefaultSettings()
    s.verbose = False
    s.max_iter = max_iter
    return s


def solve_prepared(be: _Backend, fixes: dict[int, float] | None = None) -> SolveResult:
    """Solve the relaxation, optionally with bound-fixed columns."""
    t0 = time.perf_counter()
    b = be.b
    if fixes:
        b = b.copy()
        for j, v in fixes.items():
            b[be.lb_row[j]] = -v
            b[be.ub_row[j]] = v
    P = sparse.csc_matrix((be.nvars, be.nvars))
    solver = clarabel.DefaultSolver(P, be.q, be.A, b, be.cones, _settings())
    sol = solver.solve()
    wall = time.perf_counter() - t0
    st = str(sol.status)
    if st in ("Solved", "AlmostSolved"):
        status = OPTIMAL if max(sol.r_prim, sol.r_dual) <= 1e-6 else NUMERICAL
        x = np.asarray(sol.x)
        obj = sol.obj_val + be.obj_const
        return SolveResult(status, x, obj, obj, 0.0, 0, wall,
                           sol.iterations, sol.r_prim, sol.r_dual)
    if st in ("PrimalInfeasible", "AlmostPrimalInfeasible"):
        return SolveResult(INFEASIBLE, None, wall_time=wall,
                           iterations=sol.iterations)
    if st in ("DualInfeasible", "AlmostDualInfeasible"):
        return SolveResult(UNBOUNDED, None, wall_time=wall,
                           iterations=sol.iterations)
    if st == "MaxIterations":
        return SolveResult(ITERATION_LIMIT, None, wall_time=wall,
                           iterations=sol.iterations)
    return SolveResult(NUMERICAL, None, wall_time=wall,
                       iterations=sol.iterations)


def solve_socp(p: ConicProgram) -> SolveResult:
    """Solve the continuous conic relaxation of the program."""
    if p.num_vars == 0:
        return SolveResult(OPTIMAL, np.zeros(0), p.objective.const,
                           p.objective.const, 0.0)
    return solve_prepared(prepare(p))
