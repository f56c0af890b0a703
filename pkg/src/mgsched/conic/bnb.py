"""Best-first branch-and-bound over the binary columns of a ConicProgram.

Each node solves the continuous SOCP relaxation with a subset of binaries
bound-fixed.  Branching picks the most fractional binary (tie-break:
smallest column id), which together with the deterministic backend makes
the whole search reproducible run to run.
"""

from __future__ import annotations

import heapq
import math
import time

import numpy as np

from .program import ConicProgram
from .solve import (GAP_FEASIBLE, INFEASIBLE, ITERATION_LIMIT, OPTIMAL,
                    UNBOUNDED, SolveResult, prepare, solve_prepared)

DEFAULT_GAP = 1e-3
INT_TOL = 1e-6


def _fractional(x, bins, tol=INT_TOL):
    """Binary columns whose relaxed value is not within tol of 0/1."""
    out = []
    for j in bins:
        v = x[j]
        if min(abs(v), abs(v - 1.0)) > tol:
            out.append(j)
    return out


def _most_fractional(x, frac_cols):
    return min(frac_cols, key=lambda j: (abs(x[j] - 0.5), j))


def _pick_branch(x, frac_cols, priority):
    """Branching column: first priority tier with a fractional member wins;
    most-fractional within the tier (tie-break: smallest column id)."""
    for tier in priority or ():
        hit = [j for j in tier if j in frac_cols]
        if hit:
            return _most_fractional(x, hit)
    return _most_fractional(x, frac_cols)


def _rel_gap(incumbent: float, bound: float) -> float:
    if not math.isfinite(incumbent):
        return math.inf
    return (incumbent - bound) / max(1.0, abs(incumbent))


def branch_and_bound(p: ConicProgram, gap: float = DEFAULT_GAP,
                     node_limit: int = 20000,
                     priority=None, warm=None) -> SolveResult:
    """priority: optional tiers (lists of binary columns) branched in
    order before any remaining fractional column.

    warm: optional incumbent hints tried before the generic rounding dive.
    A {column: value} dict over the binaries, a list of such dicts, or a
    callable invoked as warm(x_root, resolve) returning either, where
    resolve(fixes) solves the relaxation with the given binaries fixed
    (letting the caller stage its dive).  Each hint is solved with those
    binaries fixed; feasible integral ones seed the incumbent (cheapest
    wins), infeasible ones are discarded."""
    if gap <= 0:
        raise ValueError("relative gap must be positive")
    t0 = time.perf_counter()
    bins = p.binary_cols()
    be = prepare(p)

    root = solve_prepared(be)
    nodes = 1
    if root.status in (INFEASIBLE, UNBOUNDED):
        root.nodes = nodes
        root.wall_time = time.perf_counter() - t0
        return root
    if root.status != OPTIMAL:
        return SolveResult(root.status, nodes=nodes,
                           wall_time=time.perf_counter() - t0)

    inc_obj = math.inf
    inc_x = None

    def consider(res: SolveResult):
        nonlocal inc_obj, inc_x
        if res.status == OPTIMAL and res.objective < inc_obj:
            inc_obj = res.objective
            inc_x = res.x

    frac = _fractional(root.x, bins)
    if not frac:
        consider(root)
        return SolveResult(OPTIMAL, inc_x, inc_obj, root.objective, 0.0,
                           nodes, time.perf_counter() - t0)

    if warm is not None:
        if callable(warm):
            def _resolve(fixes):
                nonlocal nodes
                nodes += 1
                return solve_prepared(be, fixes)
            hints = warm(root.x, _resolve)
        else:
            hints = warm
        if isinstance(hints, dict):
            hints = [hints]
        for hint in hints or ():
            hint = {j: float(round(v)) for j, v in hint.items() if j in bins}
            if not hint:
                continue
            res = solve_prepared(be, hint)
            nodes += 1
            if res.status == OPTIMAL and not _fractional(
                    res.x, [j for j in bins if j not in hint]):
                consider(res)

    # rounding dive: fix confidently-integral binaries, re-solve, and let
    # logic rows (start-up/shut-down, charge-direction pairing) settle the
    # rest; one-shot rounding of every binary tends to violate them
    fixes_h: dict[int, float] = {}
    xh = root.x
    for _ in range(12) if _rel_gap(inc_obj, root.objective) > gap else ():
        rounded = dict(fixes_h)
        for j in bins:
            if j in rounded:
                continue
            v = xh[j]
            if min(v, 1.0 - v) <= 0.2:
                rounded[j] = 1.0 if v >= 0.5 else 0.0
        if len(rounded) == len(fixes_h):
            # no confident column left: force a whole priority tier at
            # once (these settle coupled groups), else the most fractional
            rem = [j for j in bins if j not in rounded]
            tier_hit = []
            for tier in priority or ():
                tier_hit = [j for j in tier if j in rem]
                if tier_hit:
                    break
            if tier_hit:
                for j in tier_hit:
                    rounded[j] = 1.0 if xh[j] >= 0.5 else 0.0
            else:
                jf = _most_fractional(xh, rem)
                rounded[jf] = 1.0 if xh[jf] >= 0.5 else 0.0
        fixes_h = rounded
        heur = solve_prepared(be, fixes_h)
        nodes += 1
        if heur.status != OPTIMAL:
            break
        if len(fixes_h) == len(bins) or not _fractional(
                heur.x, [j for j in bins if j not in fixes_h]):
            consider(heur)
            break
        xh = heur.x

    seq = 0
    heap = [(root.objective, seq, {}, root.x)]
    exhausted = True
    while heap:
        bound = heap[0][0]
        if _rel_gap(inc_obj, bound) <= gap or nodes >= node_limit:
            # leave the node queued so the reported lower bound keeps it
            exhausted = False
            break
        _, _, fixes, xrel = heapq.heappop(heap)
        if xrel is not None:
            frac = _fractional(xrel, [j for j in bins if j not in fixes])
            branch_col = _pick_branch(xrel, frac, priority)
        else:
            branch_col = next(j for j in bins if j not in fixes)
        for val in (0.0, 1.0):
            child = dict(fixes)
            child[branch_col] = val
            res = solve_prepared(be, child)
            nodes += 1
            if res.status in (INFEASIBLE, UNBOUNDED):
                continue
            if res.status != OPTIMAL:
                # numerical trouble: keep exploring below with parent bound
                if len(child) < len(bins):
                    seq += 1
                    heapq.heappush(heap, (bound, seq, child, None))
                continue
            if res.objective >= inc_obj - gap * max(1.0, abs(inc_obj)):
                continue
            if not _fractional(res.x, [j for j in bins if j not in child]):
                consider(res)
                continue
            seq += 1
            heapq.heappush(heap, (res.objective, seq, child, res.x))

    wall = time.perf_counter() - t0
    lower = min([bound for bound, *_ in heap], default=inc_obj)
    lower = min(lower, inc_obj)
    if inc_x is None:
        if nodes >= node_limit:
            return SolveResult(ITERATION_LIMIT, nodes=nodes, wall_time=wall)
        return SolveResult(INFEASIBLE, nodes=nodes, wall_time=wall)
    final_gap = max(0.0, _rel_gap(inc_obj, lower))
    if nodes >= node_limit and final_gap > gap:
        status = ITERATION_LIMIT
    elif exhausted and not heap:
        status = OPTIMAL
    else:
        status = GAP_FEASIBLE if final_gap > 1e-9 else OPTIMAL
    return SolveResult(status, inc_x, inc_obj, lower, final_gap, nodes, wall)
