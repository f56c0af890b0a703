import json

import numpy as np
import pytest

from mgsched import packaged_case
from mgsched.case import load_case, loads_case
from mgsched.conic.bnb import branch_and_bound
from mgsched.conic.program import ConicProgram, LinExpr
from mgsched.conic.solve import prepare, solve_prepared, solve_socp
from mgsched.conic.textio import dumps
from mgsched.model.build import (
    SIGMA_FLOOR_FRAC, BuildConfig, ambiguity_from_case, assemble,
    coverage_report, extract_schedule, linearize_bilinear, write_manifest,
)

T = 4
TINY = {
    "meta": {"base_mva": 1.0, "f0": 50.0, "v_min": 0.95, "v_max": 1.05,
             "cos_phi": 0.95, "period_h": 1.0, "m1_load_step": 0.3},
    "nodes": [{"id": 1}, {"id": 2}, {"id": 3}],
    "lines": [
        {"from": 1, "to": 2, "r": 0.01, "x": 0.02, "smax": 5.0},
        {"from": 2, "to": 3, "r": 0.01, "x": 0.02, "smax": 5.0},
    ],
    "dg": [{"node": 2, "gp_max": 2.0, "gp_min": 0.4, "gq_max": 1.0,
            "gq_min": -1.0, "h": 4.0, "ramp_up": 1.0, "ramp_down": 1.0,
            "startup_ramp": 1.0, "shutdown_ramp": 1.0, "t_on": 2, "t_off": 2,
            "c_su": 20.0, "c_sd": 10.0, "c_no": 5.0, "c_energy": 80.0,
            "c_reserve": 8.0, "r_up_max": 1.0, "r_dn_max": 1.0, "x0": 1}],
    "bess": [{"node": 3, "p_ch_max": 0.5, "p_dch_max": 0.5, "e_min": 0.2,
              "e_max": 2.0, "e0": 1.0, "eta_ch": 0.95, "eta_dch": 0.95,
              "h_min": 0.0, "h_max": 6.0, "c_cycle": 3.0, "c_ir": 2.0,
              "c_reserve": 4.0}],
    "res": [{"node": 3, "p_max": 1.5,
             "forecast": [0.8, 1.0, 1.2, 0.9],
             "h_min": 0.0, "h_max": 5.0, "delta_max": 0.3,
             "c_ir": 2.0, "c_reserve": 3.0}],
    "load": {
        "p": [[0.5, 0.6, 0.7, 0.6], [0.4, 0.5, 0.5, 0.4]],
        "q": [[0.15, 0.2, 0.22, 0.2], [0.1, 0.15, 0.15, 0.1]],
    },
    "freq": {"t_db": 0.2, "t_e": 1.0, "t_g": 8.0, "rocof_max": 0.5,
             "df_max": 0.5},
    "exchange": {"s_max": 3.0, "price": [60.0, 70.0, 90.0, 65.0]},
    "uncertainty": {"sigma_frac": 0.05, "theta": 0.01, "eps_g": 0.05,
                    "eps_b": 0.05, "eps_s": 0.05, "eps_l": 0.05,
                    "eps_v": 0.05, "eps_e": 0.05, "eps_f": 0.05,
                    "nu_l": 0.5, "nu_e": 0.5},
}


def tiny_case():
    return loads_case(json.dumps(TINY))


def test_coverage_audit_complete():
    build = assemble(tiny_case(), BuildConfig(variant="m3"))
    assert coverage_report(build.prog) == []


def test_binary_count_tiny_and_desk():
    build = assemble(tiny_case(), BuildConfig(variant="m3"))
    # per period: x/y/z per DG would be 3 per DG but y,z are continuous
    # here; binaries are x (DG), u_ch/u_dch (BESS), u (direction)
    assert len(build.prog.binary_cols()) == T * (3 * 1 + 2 * 1 + 1)
    desk = assemble(load_case(str(packaged_case())), BuildConfig(variant="m3"))
    assert len(desk.prog.binary_cols()) == 24 * (3 * 3 + 2 * 2 + 1)


def test_theta_zero_modes_byte_identical():
    case = tiny_case()
    b1 = assemble(case, BuildConfig(variant="m3", mode="gauss"))
    b2 = assemble(case, BuildConfig(variant="m3", mode="ewdrcc", theta=0.0))
    assert dumps(b1.prog) == dumps(b2.prog)


def test_theta_widens_margins():
    # the robust program is a restriction: its optimum can only cost more
    case = tiny_case()
    costs = {}
    for theta in (0.0, 0.05):
        b = assemble(case, BuildConfig(variant="m3", theta=theta))
        res = branch_and_bound(b.prog, gap=1e-6, node_limit=2000)
        assert res.x is not None
        costs[theta] = res.objective
    assert costs[0.05] >= costs[0.0] - 1e-6


def test_m2_never_references_nadir_columns():
    build = assemble(tiny_case(), BuildConfig(variant="m2"))
    idx, p = build.idx, build.prog
    cols = {idx.col(nm, t) for t in range(T) for nm in ("xt", "yt", "z", "w")}
    for row in p.lin:
        assert not (cols & set(row.expr.coefs)), row.tags
    for row in p.soc:
        assert not any(cols & set(e.coefs) for e in row.terms + [row.rhs])
    assert not p.rsoc


def test_m1_m2_m3_variant_structure():
    case = tiny_case()
    m3 = assemble(case, BuildConfig(variant="m3"))
    m2 = assemble(case, BuildConfig(variant="m2"))
    m1 = assemble(case, BuildConfig(variant="m1"))
    # same column space across m2/m3 (audit comparability)
    assert m2.prog.num_vars == m3.prog.num_vars
    assert len(m2.prog.lin) < len(m3.prog.lin)
    assert m1.prog.rsoc and m3.prog.rsoc
    # m1 swaps the probabilistic islanding block for the deterministic one
    tags1 = m1.prog.all_tags()
    tags3 = m3.prog.all_tags()
    assert {"3", "9", "39a"} <= tags1
    assert "32a" not in tags1
    assert {"32a", "32c", "39a", "40", "41"} <= tags3
    assert "3" not in tags3
    # columns are shared so m1 still carries the (pinned) direction binary
    names1 = {m1.prog.names[c] for c in m1.prog.binary_cols()}
    assert any(n.startswith("u[") for n in names1)


def test_direction_gates_collapse_correctly():
    """Fixing the direction binary must recover the intended gate algebra."""
    case = tiny_case()
    build = assemble(case, BuildConfig(variant="m3"))
    be = prepare(build.prog)
    idx = build.idx
    kb = case.active_batteries()[0][0]
    ks = case.active_renewables()[0][0]
    for u_val, sign in ((1.0, +1.0), (0.0, -1.0)):
        fixes = {idx.col("u", t): u_val for t in range(T)}
        res = solve_prepared(be, fixes)
        assert res.status == "optimal"
        for t in range(T):
            # the islanding imbalance is the lost import: u=1 forces a
            # deficit event (pex >= 0), u=0 a surplus (pex <= 0)
            assert sign * res.x[idx.col("pex", t)] >= -1e-6
            if u_val == 1.0:
                # down-regulation reserve is gated off in a deficit event
                assert res.x[idx.col("rbd", kb, t)] <= 1e-6
            else:
                assert res.x[idx.col("rbu", kb, t)] <= 1e-6
                assert res.x[idx.col("rsu", ks, t)] <= 1e-6


def test_bilinear_linearization_exact_on_grid():
    """X = rho * Y via big-M rows is exact for every binary rho and Y."""
    for y_lo, y_hi in ((-2.0, 3.0), (0.0, 1.0), (-1.5, -0.5)):
        for rho_val in (0.0, 1.0):
            for y_val in np.linspace(y_lo, y_hi, 7):
                p = ConicProgram()
                rho = p.add_var("rho", "b")
                y = p.add_var("y", lb=y_lo, ub=y_hi)
                x = p.add_var("x", lb=-10, ub=10)
                M = max(abs(y_lo), abs(y_hi))
                linearize_bilinear(p, LinExpr.var(x), LinExpr.var(rho),
                                   LinExpr.var(y), M, tags=("44",))
                p.add_lin(LinExpr.var(rho), "==", rho_val)
                p.add_lin(LinExpr.var(y), "==", float(y_val))
                # feasibility pins x to rho*y: check both optimization senses
                p.objective = LinExpr.var(x)
                lo = solve_socp(p)
                p.objective = LinExpr.var(x) * -1.0
                hi = solve_socp(p)
                want = rho_val * y_val
                assert lo.objective == pytest.approx(want, abs=1e-6)
                assert -hi.objective == pytest.approx(want, abs=1e-6)


def test_bilinear_rejects_insufficient_big_m():
    p = ConicProgram()
    rho = p.add_var("rho", "b")
    y = p.add_var("y")            # unbounded: no static big-M can dominate
    x = p.add_var("x")
    with pytest.raises(ValueError):
        linearize_bilinear(p, LinExpr.var(x), LinExpr.var(rho),
                           LinExpr.var(y), 100.0)
    q = ConicProgram()
    rho2 = q.add_var("rho", "b")
    y2 = q.add_var("y", lb=-3.0, ub=3.0)
    x2 = q.add_var("x")
    with pytest.raises(ValueError):
        linearize_bilinear(q, LinExpr.var(x2), LinExpr.var(rho2),
                           LinExpr.var(y2), 2.0)   # M below sup|Y|


def test_nadir_cone_tight_after_polish():
    """The rotated-cone relaxation of w^2 = x*y is recovered by polishing."""
    case = tiny_case()
    build = assemble(case, BuildConfig(variant="m3"))
    res = branch_and_bound(build.prog, gap=1e-6, node_limit=2000)
    assert res.x is not None
    sched = extract_schedule(build, res)
    assert sched.relaxation_gap_raw is not None
    assert sched.relaxation_gap_raw < 1e-5
    for t in range(T):
        w = sched.val("w", t)
        xt = sched.val("xt", t)
        yt = sched.val("yt", t)
        assert w * w == pytest.approx(xt * yt, abs=1e-7)


def test_schedule_breakdown_sums_to_objective():
    case = tiny_case()
    build = assemble(case, BuildConfig(variant="m3"))
    res = branch_and_bound(build.prog, gap=1e-6, node_limit=2000)
    sched = extract_schedule(build, res)
    assert sum(sched.cost_breakdown.values()) == pytest.approx(
        sched.objective, rel=1e-9)
    # extracted point satisfies every row of the program
    viol = build.prog.check_point(np.asarray(sched.x), tol=1e-6)
    assert viol == []


def test_fixed_deloading_pins_headroom():
    case = tiny_case()
    cfg = BuildConfig(variant="m3", fixed_deloading=0.08)
    build = assemble(case, cfg)
    idx = build.idx
    ks = case.active_renewables()[0][0]
    for t in range(T):
        c = idx.col("delta", ks, t)
        assert build.prog.lb[c] == build.prog.ub[c] == 0.08
    res = branch_and_bound(build.prog, gap=1e-6, node_limit=2000)
    sched = extract_schedule(build, res)
    assert sched.val("delta", ks, 0) == pytest.approx(0.08)
    free = assemble(case, BuildConfig(variant="m3"))
    res_free = branch_and_bound(free.prog, gap=1e-6, node_limit=2000)
    # the free problem relaxes the pin, so it can only do at least as well
    assert res_free.objective <= res.objective + 1e-6
    with pytest.raises(ValueError):
        assemble(case, BuildConfig(variant="m3", fixed_deloading=0.5))


def test_manifest_lists_tagged_rows(tmp_path):
    build = assemble(tiny_case(), BuildConfig(variant="m3"))
    path = tmp_path / "manifest.txt"
    write_manifest(build.prog, path)
    text = path.read_text()
    for tag in ("24a", "26a", "27a", "30a", "32a", "8b", "39a", "40",
                "41", "44", "22", "31", "38"):
        assert tag in text, f"tag {tag} missing from manifest"


def test_ambiguity_construction():
    case = tiny_case()
    amb = ambiguity_from_case(case, BuildConfig(variant="m3"))
    assert amb.dim == len(case.active_renewables())
    assert amb.mu.shape == (T, amb.dim)
    # sigma tracks the forecast level, floored at a fraction of capacity
    # so near-zero forecasts (dark hours) keep a bounded precision matrix
    s = case.active_renewables()[0][1]
    for t in range(T):
        sd = float(np.sqrt(amb.sigma[t, 0, 0]))
        expect = max(0.05 * s.forecast[t], SIGMA_FLOOR_FRAC * s.p_max)
        assert sd == pytest.approx(expect, rel=1e-9)
    # gauss mode forces theta to zero regardless of the case value
    g = ambiguity_from_case(case, BuildConfig(variant="m3", mode="gauss"))
    assert g.theta == 0.0


def test_build_config_validation():
    with pytest.raises(ValueError):
        BuildConfig(variant="m4")
    with pytest.raises(ValueError):
        BuildConfig(variant="m3", mode="bogus")
    with pytest.raises(ValueError):
        BuildConfig(variant="m3", theta=-1.0)


def test_branch_priority_tiers():
    build = assemble(tiny_case(), BuildConfig(variant="m3"))
    tiers = build.branch_priority()
    names = build.prog.names
    assert all(names[c].startswith("u[") for c in tiers[0])
    assert all(names[c].startswith("x[") for c in tiers[1])
    assert len(tiers[0]) == T
