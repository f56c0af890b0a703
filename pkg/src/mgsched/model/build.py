"""Assembly of the robust frequency-constrained scheduling MISOCP.

The builder walks the case horizon and emits, per period: the cost terms
(worst-case expectations for the random ones), nominal and participation
LinDistFlow balances, diesel-generator commitment and chance-constrained
dispatch limits, storage and renewable constraints with their virtual-
inertia couplings, apparent-power chance constraints on lines and the
substation, voltage chance constraints, and the post-islanding frequency
block (direction, RoCoF, nadir, quasi-steady-state).

Every emitted row carries audit tags naming the constraint group it
implements; `coverage_report` checks an assembled program against the
expected tag set.

Variants:
  m3 — the full robust model (default);
  m2 — m3 without the RoCoF and nadir material (capacity-only frequency
       security: direction + quasi-steady-state remain);
  m1 — frequency block made deterministic at a fixed post-islanding
       imbalance (`m1_load_step`), everything else as m3.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..case import MicrogridCase, uncertainty_of
from ..conic.program import ConicProgram, LinExpr
from ..drcc import (AmbiguitySpec, AffineRandomExpr, decompose_quadratic_cc,
                    nadir_cc_material, reformulate_linear_cc, two_sided_cc,
                    worst_case_expectation)
from .index import DecisionIndex

__all__ = [
    "BuildConfig", "BuildResult", "Schedule", "ScheduleError",
    "ambiguity_from_case", "assemble", "linearize_bilinear",
    "extract_schedule", "coverage_report", "COVERAGE_TAGS",
    "write_manifest",
]

VARIANTS = ("m1", "m2", "m3")
MODES = ("gauss", "ewdrcc")
SIGMA_FLOOR_FRAC = 0.01   # forecast-error sd floor, fraction of capacity

# constraint-group tags an m3 build must cover (audit contract)
COVERAGE_TAGS = (
    [f"8{c}" for c in "bcdefghi"]
    + [f"24{c}" for c in "abcdefghij"]
    + [f"26{c}" for c in "abcdefghijkl"]
    + [f"27{c}" for c in "abcdefghijk"]
    + [f"28{c}" for c in "abcde"]
    + ["38", "30a", "30b", "31"]
    + [f"32{c}" for c in "abcdefg"]
    + ["40", "41", "44"]
)


@dataclass
class BuildConfig:
    variant: str = "m3"
    mode: str = "ewdrcc"            # "gauss" forces theta = 0
    theta: float | None = None      # override case uncertainty.theta
    eps: float | None = None        # override all violation levels
    fixed_deloading: float | None = None   # None = optimize delta
    mip_gap: float = 2e-2

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}")
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.theta is not None and self.theta < 0:
            raise ValueError("theta must be nonnegative")
        if self.eps is not None and not 0.0 < self.eps < 0.5:
            raise ValueError("eps must lie in (0, 0.5)")
        if self.fixed_deloading is not None and not \
                0.0 <= self.fixed_deloading <= 1.0:
            raise ValueError("fixed_deloading must lie in [0, 1]")
        if self.mip_gap <= 0:
            raise ValueError("mip_gap must be positive")


@dataclass
class BuildResult:
    prog: ConicProgram
    idx: DecisionIndex
    amb: AmbiguitySpec
    cfg: BuildConfig
    case: MicrogridCase
    cost_groups: dict[str, LinExpr]

    def branch_priority(self) -> list[list[int]]:
        """Branching tiers: islanding direction first (it gates reserve
        availability and the nadir material, so fixing it collapses most
        other fractionality), then unit commitment."""
        T = self.case.horizon.periods
        u_tier = [self.idx.col("u", t) for t in range(T)]
        x_tier = [self.idx.col("x", k, t)
                  for k, _ in self.case.active_dgs() for t in range(T)]
        return [u_tier, x_tier]

    def warm_start_fixes(self, x_root: np.ndarray,
                         resolve=None) -> list[dict[int, float]]:
        """Incumbent hints via a staged dive on the root relaxation.

        Stage 1 fixes the islanding direction to the sign of the grid
        exchange and aligns each battery's charge/discharge state with it
        (exchange sign, not the relaxed direction value, because the
        direction binary is weakly determined when exchange is near zero).
        When a resolver is available the relaxation is re-solved with
        those fixes so stage 2 reads a consistent dispatch; stage 2 then
        derives the generator commitment at two support thresholds --
        commit any hour with nonzero relaxed support (keeps inertia and
        reserve rows satisfiable) and plain rounding at one half (cheaper
        when the support is thin).  Minimum up/down times are repaired by
        filling short gaps; start-up/shut-down indicators follow from the
        commitment profile.  Infeasible hints cost one node each."""
        idx, case = self.idx, self.case
        T = case.horizon.periods

        def stage1(direction):
            fixes: dict[int, float] = {}
            for t in range(T):
                u = direction(t)
                fixes[idx.col("u", t)] = u
                for k, _ in case.active_batteries():
                    fixes[idx.col("udch", k, t)] = u
                    fixes[idx.col("uch", k, t)] = 1.0 - u
            return fixes

        by_sign = stage1(
            lambda t: 1.0 if x_root[idx.col("pex", t)] >= 0.0 else 0.0)
        by_value = stage1(
            lambda t: float(round(x_root[idx.col("u", t)])))
        candidates = [by_sign]
        if by_value != by_sign:
            candidates.append(by_value)
        hints: list[dict[int, float]] = []
        for s1 in candidates:
            x_ref = x_root
            if resolve is not None:
                mid = resolve(s1)
                if mid.x is None:
                    continue
                x_ref = mid.x
            hints += [self._commit_hint(x_ref, s1, thr)
                      for thr in (1e-6, 0.5)]
        return hints

    def _commit_hint(self, x_ref: np.ndarray, stage1: dict[int, float],
                     threshold: float) -> dict[int, float]:
        idx, case = self.idx, self.case
        T = case.horizon.periods
        fixes = dict(stage1)
        for k, g in case.active_dgs():
            on = [1 if x_ref[idx.col("x", k, t)] > threshold else 0
                  for t in range(T)]
            # interior runs shorter than the minimum dwell time are
            # absorbed into the surrounding state: short off-gaps are
            # bridged (min-down), short on-bursts dropped (min-up)
            for run_val, min_len, repl in ((0, g.t_off, 1), (1, g.t_on, 0)):
                t = 0
                while t < T:
                    if on[t] != run_val:
                        t += 1
                        continue
                    j = t
                    while j < T and on[j] == run_val:
                        j += 1
                    if t > 0 and j < T and j - t < min_len:
                        on[t:j] = [repl] * (j - t)
                    t = j
            prev = g.x0
            for t in range(T):
                fixes[idx.col("x", k, t)] = float(on[t])
                fixes[idx.col("zu", k, t)] = float(max(on[t] - prev, 0))
                fixes[idx.col("zd", k, t)] = float(max(prev - on[t], 0))
                prev = on[t]
        return fixes


class ScheduleError(RuntimeError):
    pass


@dataclass
class Schedule:
    objective: float
    cost_breakdown: dict[str, float]
    x: np.ndarray                 # full primal point (binaries rounded,
    build: BuildResult            # nadir magnitude polished onto the cone)
    relaxation_gap_raw: float | None = None

    def val(self, *key) -> float:
        return self.build.idx.value(self.x, *key)

    def series(self, name, *fixed) -> np.ndarray:
        """Per-period vector for decision `name` at fixed leading indices."""
        T = self.build.case.horizon.periods
        return np.array([self.val(name, *fixed, t) for t in range(T)])


def ambiguity_from_case(case: MicrogridCase, cfg: BuildConfig) -> AmbiguitySpec:
    unc = uncertainty_of(case)
    T = case.horizon.periods
    ress = [s for _, s in case.active_renewables()]
    S = len(ress)
    mu = np.zeros((T, max(S, 1)))
    sigma = np.zeros((T, max(S, 1), max(S, 1)))
    for t in range(T):
        for j, s in enumerate(ress):
            sd = unc.sigma_frac * s.forecast[t]
            # floor at 1% of capacity: keeps the factorization valid for
            # dark hours and keeps the Mahalanobis recourse penalty
            # theta*||L^-1 c|| bounded when a forecast goes to zero
            sigma[t, j, j] = max(sd, SIGMA_FLOOR_FRAC * max(s.p_max, 1e-6)) ** 2
        if S == 0:
            sigma[t, 0, 0] = 1e-18
    theta = unc.theta if cfg.theta is None else cfg.theta
    if cfg.mode == "gauss":
        theta = 0.0
    eps = {}
    for name in ("eps_g", "eps_b", "eps_s", "eps_l", "eps_v", "eps_e",
                 "eps_f"):
        eps[name] = getattr(unc, name) if cfg.eps is None else cfg.eps
    return AmbiguitySpec(mu=mu, sigma=sigma, theta=theta,
                         nu_l=unc.nu_l, nu_e=unc.nu_e, **eps)


def linearize_bilinear(prog: ConicProgram, X: LinExpr, rho: LinExpr,
                       Y: LinExpr, M: float, tags=()) -> None:
    """Emit X = rho*Y (rho binary-valued affine) via four big-M rows.

    Statically requires M to dominate |Y| over the variable bounds.
    """
    hi = Y.const + sum(v * (prog.ub[c] if v > 0 else prog.lb[c])
                       for c, v in Y.coefs.items())
    lo = Y.const + sum(v * (prog.lb[c] if v > 0 else prog.ub[c])
                       for c, v in Y.coefs.items())
    if M < max(abs(hi), abs(lo)) - 1e-9:
        raise ValueError(f"big-M {M} below sup|Y| = {max(abs(hi), abs(lo))}")
    prog.add_lin(X - Y + rho * M, "<=", M, tags=tags)
    prog.add_lin(X - Y - rho * M, ">=", -M, tags=tags)
    prog.add_lin(X - rho * M, "<=", 0.0, tags=tags)
    prog.add_lin(X + rho * M, ">=", 0.0, tags=tags)


# ---------------------------------------------------------------------
# variable declaration

def _declare(prog, idx: DecisionIndex, case: MicrogridCase, cfg: BuildConfig):
    T = case.horizon.periods
    S = len(case.active_renewables())
    rng_s = range(S)
    fcap = _freq_caps(case)
    for t in range(T):
        for k, g in case.active_dgs():
            idx.add(("x", k, t), "b")
            idx.add(("zu", k, t), "b")
            idx.add(("zd", k, t), "b")
            idx.add(("gp", k, t), lb=0.0, ub=g.gp_max)
            idx.add(("gq", k, t), lb=min(0.0, g.gq_min),
                    ub=max(0.0, g.gq_max))
            idx.add(("rgu", k, t), lb=0.0, ub=g.r_up_max)
            idx.add(("rgd", k, t), lb=0.0, ub=g.r_dn_max)
            for s in rng_s:
                idx.add(("aP", k, s, t), lb=0.0)
                idx.add(("aQ", k, s, t), lb=0.0)
        for k, b in case.active_batteries():
            idx.add(("uch", k, t), "b")
            idx.add(("udch", k, t), "b")
            idx.add(("pch", k, t), lb=0.0, ub=b.p_ch_max)
            idx.add(("pdch", k, t), lb=0.0, ub=b.p_dch_max)
            idx.add(("e", k, t), lb=b.e_min, ub=b.e_max)
            idx.add(("rbu", k, t), lb=0.0, ub=b.p_dch_max)
            idx.add(("rbd", k, t), lb=0.0, ub=b.p_ch_max)
            r2 = 2.0 * case.freq.rocof_max * b.h_max
            idx.add(("irbu", k, t), lb=0.0, ub=r2 * b.p_dch_max)
            idx.add(("irbd", k, t), lb=0.0, ub=r2 * b.p_ch_max)
            idx.add(("hb", k, t), lb=b.h_min, ub=b.h_max)
            for s in rng_s:
                idx.add(("bch", k, s, t), lb=0.0)
                idx.add(("bdch", k, s, t), lb=0.0)
        for j, (k, s) in enumerate(case.active_renewables()):
            if cfg.fixed_deloading is None:
                idx.add(("delta", k, t), lb=0.0, ub=s.delta_max)
            else:
                if cfg.fixed_deloading > s.delta_max + 1e-12:
                    raise ValueError("fixed deloading exceeds delta_max")
                d0 = cfg.fixed_deloading
                idx.add(("delta", k, t), lb=d0, ub=d0)
            idx.add(("hs", k, t), lb=s.h_min, ub=s.h_max)
            idx.add(("rsu", k, t), lb=0.0, ub=s.p_max)
            idx.add(("irsu", k, t), lb=0.0,
                    ub=2.0 * case.freq.rocof_max * s.h_max * s.p_max)
        smax = case.exchange.s_max
        idx.add(("pex", t), lb=-smax, ub=smax)
        idx.add(("qex", t), lb=-smax, ub=smax)
        for s in rng_s:
            idx.add(("gP", s, t), lb=0.0)
            idx.add(("gQ", s, t), lb=0.0)
        for l, ln in enumerate(case.lines):
            idx.add(("fp", l, t), lb=-ln.smax, ub=ln.smax)
            idx.add(("fq", l, t), lb=-ln.smax, ub=ln.smax)
            for s in rng_s:
                idx.add(("cP", l, s, t))
                idx.add(("cQ", l, s, t))
        for n in case.nodes:
            if n.id == 1:
                idx.add(("v", n.id, t), lb=1.0, ub=1.0)
                for s in rng_s:
                    idx.add(("pi", n.id, s, t), lb=0.0, ub=0.0)
            else:
                idx.add(("v", n.id, t))
                for s in rng_s:
                    idx.add(("pi", n.id, s, t))
        idx.add(("u", t), "b")
        idx.add(("z", t), lb=-fcap["Mz"], ub=fcap["Mz"])
        idx.add(("yt", t), lb=0.0, ub=fcap["My"])
        idx.add(("xt", t), lb=0.0, ub=fcap["Mx"])
        idx.add(("w", t), lb=0.0, ub=fcap["Mw"])
        idx.add(("RGU", t), lb=0.0, ub=fcap["rgu_cap"])
        idx.add(("RGD", t), lb=0.0, ub=fcap["rgd_cap"])
        idx.add(("REU", t), lb=0.0, ub=fcap["reu_cap"])
        idx.add(("RED", t), lb=0.0, ub=fcap["red_cap"])


def _freq_caps(case: MicrogridCase) -> dict[str, float]:
    fp = case.freq
    rgu = sum(g.r_up_max for _, g in case.active_dgs())
    rgd = sum(g.r_dn_max for _, g in case.active_dgs())
    reu = (sum(b.p_dch_max for _, b in case.active_batteries())
           + sum(s.p_max for _, s in case.active_renewables()))
    red = sum(b.p_ch_max for _, b in case.active_batteries())
    h_cap = (sum(g.inertia * g.gp_max for _, g in case.active_dgs())
             + sum(b.h_max * b.p_dch_max for _, b in case.active_batteries())
             + sum(s.h_max * s.p_max for _, s in case.active_renewables())
             ) / fp.f0
    mz = reu + red + (rgu + rgd) * fp.t_db / fp.t_g + 1.0
    my = (rgu + rgd) / fp.t_g + 1.0
    mx = 4.0 * fp.df_max * h_cap + (reu + red) * fp.t_e + 1.0
    return {"rgu_cap": rgu, "rgd_cap": rgd, "reu_cap": reu, "red_cap": red,
            "h_cap": h_cap, "Mz": mz, "My": my, "Mx": mx,
            "Mw": math.sqrt(mx * my) + 1.0,
            "Mdir": 4.0 * case.exchange.s_max + 1.0}


def _inertia_expr(idx, case, t) -> LinExpr:
    e = LinExpr.constant(0.0)
    for k, g in case.active_dgs():
        e = e + idx.expr("x", k, t) * (g.inertia * g.gp_max)
    for k, b in case.active_batteries():
        e = e + idx.expr("hb", k, t) * b.p_dch_max
    for k, s in case.active_renewables():
        e = e + idx.expr("hs", k, t) * s.p_max
    return e * (1.0 / case.freq.f0)


# ---------------------------------------------------------------------
# objective

def _build_objective(prog, idx, case, amb, cfg) -> dict[str, LinExpr]:
    T = case.horizon.periods
    S = amb.dim
    dt = case.horizon.dt_h
    groups = {name: LinExpr.constant(0.0) for name in
              ("start_up", "shut_down", "no_load", "dg_energy", "dg_reserve",
               "res_ir", "res_reserve", "bess_energy", "bess_ir",
               "bess_reserve", "exchange")}
    for t in range(T):
        for k, g in case.active_dgs():
            groups["start_up"] += idx.expr("zu", k, t) * g.c_su
            groups["shut_down"] += idx.expr("zd", k, t) * g.c_sd
            groups["no_load"] += idx.expr("x", k, t) * (g.c_no * dt)
            c = [idx.expr("aP", k, s, t) * -1.0 for s in range(S)]
            wc = worst_case_expectation(prog, c, t, amb,
                                        f"wce.g[{k},{t}]", tags=("22",))
            groups["dg_energy"] += (idx.expr("gp", k, t) + wc) * (g.c_energy * dt)
            groups["dg_reserve"] += (idx.expr("rgu", k, t)
                                     + idx.expr("rgd", k, t)) * (g.c_reserve * dt)
        for k, s in case.active_renewables():
            groups["res_ir"] += idx.expr("irsu", k, t) * (s.c_ir * dt)
            groups["res_reserve"] += idx.expr("rsu", k, t) * (s.c_reserve * dt)
        for k, b in case.active_batteries():
            # throughput recourse is costed per direction: on any point
            # with a single active state one term vanishes, so this equals
            # the net-throughput cost there, while the relaxation can no
            # longer cancel charge against discharge participation for free
            wc_c = worst_case_expectation(
                prog, [idx.expr("bch", k, s, t) for s in range(S)],
                t, amb, f"wce.bc[{k},{t}]", tags=("22",))
            wc_d = worst_case_expectation(
                prog, [idx.expr("bdch", k, s, t) for s in range(S)],
                t, amb, f"wce.bd[{k},{t}]", tags=("22",))
            groups["bess_energy"] += (
                idx.expr("pch", k, t) + idx.expr("pdch", k, t)
                + wc_c + wc_d) * (b.c_cycle * dt)
            groups["bess_ir"] += (idx.expr("irbu", k, t)
                                  + idx.expr("irbd", k, t)) * (b.c_ir * dt)
            groups["bess_reserve"] += (idx.expr("rbu", k, t)
                                       + idx.expr("rbd", k, t)) * (b.c_reserve * dt)
        lam = case.exchange.price[t]
        c = [idx.expr("gP", s, t) * -1.0 for s in range(S)]
        wc = worst_case_expectation(prog, c, t, amb, f"wce.ex[{t}]",
                                    tags=("22",))
        groups["exchange"] += (idx.expr("pex", t) + wc) * (lam * dt)
    total = LinExpr.constant(0.0)
    for e in groups.values():
        total = total + e
    prog.objective = total
    return groups


# ---------------------------------------------------------------------
# network

def _tree(case: MicrogridCase):
    """Orient lines parent->child from root 1; returns per-node line maps."""
    adj: dict[int, list[tuple[int, int]]] = {n.id: [] for n in case.nodes}
    for l, ln in enumerate(case.lines):
        adj[ln.from_node].append((ln.to_node, l))
        adj[ln.to_node].append((ln.from_node, l))
    parent_line: dict[int, int] = {}      # node -> incoming line id
    parent_node: dict[int, int] = {}
    children: dict[int, list[tuple[int, int]]] = {n.id: [] for n in case.nodes}
    seen = {1}
    frontier = [1]
    while frontier:
        i = frontier.pop()
        for j, l in adj[i]:
            if j in seen:
                continue
            seen.add(j)
            parent_line[j] = l
            parent_node[j] = i
            children[i].append((j, l))
            frontier.append(j)
    if len(seen) != len(case.nodes):
        raise ValueError("dangling node: network not connected from root")
    return parent_line, parent_node, children


def _build_network(prog, idx, case, amb, cfg):
    T = case.horizon.periods
    S = amb.dim
    unc = uncertainty_of(case)
    eps_l = unc.eps_l if cfg.eps is None else cfg.eps
    eps_v = unc.eps_v if cfg.eps is None else cfg.eps
    eps_e = unc.eps_e if cfg.eps is None else cfg.eps
    phi = case.phi
    parent_line, parent_node, children = _tree(case)
    res_at = {s.node: j for j, (_, s) in enumerate(case.active_renewables())}
    slot_of = {nid: k for k, nid in enumerate(case.non_root_nodes)}
    vmax2, vmin2 = case.v_max ** 2, case.v_min ** 2

    for t in range(T):
        # (24a)-(24b) root balances
        out_p = LinExpr.constant(0.0)
        out_q = LinExpr.constant(0.0)
        for _, l in children[1]:
            out_p = out_p + idx.expr("fp", l, t)
            out_q = out_q + idx.expr("fq", l, t)
        prog.add_lin(idx.expr("pex", t) - out_p, "==", 0.0, tags=("24a",))
        prog.add_lin(idx.expr("qex", t) - out_q, "==", 0.0, tags=("24b",))
        # (24f)-(24g) root participation
        for s in range(S):
            op = LinExpr.constant(0.0)
            oq = LinExpr.constant(0.0)
            for _, l in children[1]:
                op = op + idx.expr("cP", l, s, t)
                oq = oq + idx.expr("cQ", l, s, t)
            prog.add_lin(idx.expr("gP", s, t) * -1.0 - op, "==", 0.0,
                         tags=("24f",))
            prog.add_lin(idx.expr("gQ", s, t) * -1.0 - oq, "==", 0.0,
                         tags=("24g",))

        for nid in case.non_root_nodes:
            k = slot_of[nid]
            g, b, r = case.dgs[k], case.batteries[k], case.renewables[k]
            inj_p = LinExpr.constant(-case.load_p[k][t])
            inj_q = LinExpr.constant(-case.load_q[k][t])
            if g.active:
                inj_p = inj_p + idx.expr("gp", k, t)
                inj_q = inj_q + idx.expr("gq", k, t)
            if b.active:
                inj_p = inj_p + idx.expr("pdch", k, t) - idx.expr("pch", k, t)
            if r.active:
                pf = r.forecast[t]
                inj_p = inj_p + (LinExpr.constant(pf)
                                 - idx.expr("delta", k, t) * pf)
                inj_q = inj_q + (LinExpr.constant(phi * pf)
                                 - idx.expr("delta", k, t) * (phi * pf))
            net_p = idx.expr("fp", parent_line[nid], t)
            net_q = idx.expr("fq", parent_line[nid], t)
            for _, l in children[nid]:
                net_p = net_p - idx.expr("fp", l, t)
                net_q = net_q - idx.expr("fq", l, t)
            prog.add_lin(inj_p + net_p, "==", 0.0, tags=("24c",))
            prog.add_lin(inj_q + net_q, "==", 0.0, tags=("24d",))
            # (24h)-(24i) participation balances
            for s in range(S):
                pp = LinExpr.constant(0.0)
                qq = LinExpr.constant(0.0)
                if g.active:
                    pp = pp - idx.expr("aP", k, s, t)
                    qq = qq - idx.expr("aQ", k, s, t)
                if b.active:
                    pp = pp - idx.expr("bdch", k, s, t) - idx.expr("bch", k, s, t)
                if r.active and res_at.get(nid) == s:
                    pp = pp + LinExpr.constant(1.0) - idx.expr("delta", k, t)
                    qq = qq + LinExpr.constant(phi) - idx.expr("delta", k, t) * phi
                np_ = idx.expr("cP", parent_line[nid], s, t)
                nq_ = idx.expr("cQ", parent_line[nid], s, t)
                for _, l in children[nid]:
                    np_ = np_ - idx.expr("cP", l, s, t)
                    nq_ = nq_ - idx.expr("cQ", l, s, t)
                prog.add_lin(pp + np_, "==", 0.0, tags=("24h",))
                prog.add_lin(qq + nq_, "==", 0.0, tags=("24i",))
            # (24e)/(24j) voltage drop down the incoming line
            l = parent_line[nid]
            ln = case.lines[l]
            pn = parent_node[nid]
            drop = (idx.expr("fp", l, t) * (2.0 * ln.r)
                    + idx.expr("fq", l, t) * (2.0 * ln.x))
            prog.add_lin(idx.expr("v", nid, t) - idx.expr("v", pn, t) + drop,
                         "==", 0.0, tags=("24e",))
            for s in range(S):
                dps = (idx.expr("cP", l, s, t) * (2.0 * ln.r)
                       + idx.expr("cQ", l, s, t) * (2.0 * ln.x))
                prog.add_lin(idx.expr("pi", nid, s, t)
                             - idx.expr("pi", pn, s, t) + dps, "==", 0.0,
                             tags=("24j",))
            # (30a)-(30b) voltage chance constraints
            pi_vec = [idx.expr("pi", nid, s, t) for s in range(S)]
            reformulate_linear_cc(
                prog, AffineRandomExpr(
                    tuple(pi_vec),
                    LinExpr.constant(vmax2) - idx.expr("v", nid, t), t),
                eps_v, amb, tags=("30a",))
            reformulate_linear_cc(
                prog, AffineRandomExpr(
                    tuple(p * -1.0 for p in pi_vec),
                    idx.expr("v", nid, t) - vmin2, t),
                eps_v, amb, tags=("30b",))

        # (29)->(38) line apparent-power chance constraints
        for l, ln in enumerate(case.lines):
            decompose_quadratic_cc(
                prog,
                idx.expr("fp", l, t), [idx.expr("cP", l, s, t) for s in range(S)],
                idx.expr("fq", l, t), [idx.expr("cQ", l, s, t) for s in range(S)],
                t, ln.smax, amb.nu_l, eps_l, amb,
                name=f"Kline[{l},{t}]", tags_cc=("38",), tags_soc=("38",))
        # (31) substation apparent-power chance constraint
        decompose_quadratic_cc(
            prog,
            idx.expr("pex", t), [idx.expr("gP", s, t) * -1.0 for s in range(S)],
            idx.expr("qex", t), [idx.expr("gQ", s, t) * -1.0 for s in range(S)],
            t, case.exchange.s_max, amb.nu_e, eps_e, amb,
            name=f"Kex[{t}]", tags_cc=("31",), tags_soc=("31",))


# ---------------------------------------------------------------------
# devices

def _build_devices(prog, idx, case, amb, cfg):
    T = case.horizon.periods
    S = amb.dim
    unc = uncertainty_of(case)
    eps_g = unc.eps_g if cfg.eps is None else cfg.eps
    eps_b = unc.eps_b if cfg.eps is None else cfg.eps
    dt = case.horizon.dt_h
    rmax = case.freq.rocof_max

    for k, g in case.active_dgs():
        if g.t_on > T or g.t_off > T:
            raise ValueError(f"dg@{g.node}: min up/down window exceeds horizon")
        for t in range(T):
            x_t = idx.expr("x", k, t)
            x_prev = idx.expr("x", k, t - 1) if t else LinExpr.constant(g.x0)
            prog.add_lin(idx.expr("zu", k, t) - idx.expr("zd", k, t)
                         - x_t + x_prev, "==", 0.0, tags=("26a", "26b"))
            up = LinExpr.constant(0.0)
            for tb in range(max(0, t - g.t_on + 1), t + 1):
                up = up + idx.expr("zu", k, tb)
            prog.add_lin(up - x_t, "<=", 0.0, tags=("26c",))
            dn = LinExpr.constant(0.0)
            for tb in range(max(0, t - g.t_off + 1), t + 1):
                dn = dn + idx.expr("zd", k, tb)
            prog.add_lin(dn + x_t, "<=", 1.0, tags=("26d",))
            aP = [idx.expr("aP", k, s, t) for s in range(S)]
            aQ = [idx.expr("aQ", k, s, t) for s in range(S)]
            gp, gq = idx.expr("gp", k, t), idx.expr("gq", k, t)
            # (26e)-(26f): active output +/- PFR reserve within gated limits
            reformulate_linear_cc(
                prog, AffineRandomExpr(
                    tuple(a * -1.0 for a in aP),
                    x_t * g.gp_max - gp - idx.expr("rgu", k, t), t),
                eps_g, amb, tags=("26e",))
            reformulate_linear_cc(
                prog, AffineRandomExpr(
                    tuple(aP),
                    gp - idx.expr("rgd", k, t) - x_t * g.gp_min, t),
                eps_g, amb, tags=("26f",))
            # (26g)-(26h): direction-gated reserve caps
            prog.add_lin(idx.expr("rgu", k, t)
                         - idx.expr("u", t) * g.r_up_max, "<=", 0.0,
                         tags=("26g",))
            prog.add_lin(idx.expr("rgd", k, t)
                         + idx.expr("u", t) * g.r_dn_max, "<=", g.r_dn_max,
                         tags=("26h",))
            # (26i)-(26j): reactive output bounds
            reformulate_linear_cc(
                prog, AffineRandomExpr(tuple(a * -1.0 for a in aQ),
                                       x_t * g.gq_max - gq, t),
                eps_g, amb, tags=("26i",))
            reformulate_linear_cc(
                prog, AffineRandomExpr(tuple(aQ), gq - x_t * g.gq_min, t),
                eps_g, amb, tags=("26j",))
            # (26k)-(26l): probabilistic ramping (same-error coupling across
            # consecutive periods; the initial period has no defined
            # predecessor output and is skipped)
            if t:
                aPm = [idx.expr("aP", k, s, t - 1) for s in range(S)]
                gpm = idx.expr("gp", k, t - 1)
                reformulate_linear_cc(
                    prog, AffineRandomExpr(
                        tuple(aPm[s] - aP[s] for s in range(S)),
                        x_prev * (g.ramp_up * dt)
                        + idx.expr("zu", k, t) * (g.startup_ramp * dt)
                        - gp + gpm, t),
                    eps_g, amb, tags=("26k",))
                reformulate_linear_cc(
                    prog, AffineRandomExpr(
                        tuple(aP[s] - aPm[s] for s in range(S)),
                        x_t * (g.ramp_down * dt)
                        + idx.expr("zd", k, t) * (g.shutdown_ramp * dt)
                        + gp - gpm, t),
                    eps_g, amb, tags=("26l",))

    for k, b in case.active_batteries():
        for t in range(T):
            bch = [idx.expr("bch", k, s, t) for s in range(S)]
            bdch = [idx.expr("bdch", k, s, t) for s in range(S)]
            # (27a)-(27b): headroom for adjustment + IR + PFR
            reformulate_linear_cc(
                prog, AffineRandomExpr(
                    tuple(bch),
                    idx.expr("uch", k, t) * b.p_ch_max - idx.expr("pch", k, t)
                    - idx.expr("irbd", k, t) - idx.expr("rbd", k, t), t),
                eps_b, amb, tags=("27a",))
            reformulate_linear_cc(
                prog, AffineRandomExpr(
                    tuple(a * -1.0 for a in bdch),
                    idx.expr("udch", k, t) * b.p_dch_max
                    - idx.expr("pdch", k, t)
                    - idx.expr("irbu", k, t) - idx.expr("rbu", k, t), t),
                eps_b, amb, tags=("27b",))
            prog.add_lin(idx.expr("uch", k, t) + idx.expr("udch", k, t),
                         "==", 1.0, tags=("27c",))
            # (27d): state of charge recursion on nominal power
            e_prev = idx.expr("e", k, t - 1) if t else LinExpr.constant(b.e0)
            prog.add_lin(idx.expr("e", k, t) - e_prev
                         - idx.expr("pch", k, t) * (b.eta_ch * dt)
                         + idx.expr("pdch", k, t) * (dt / b.eta_dch),
                         "==", 0.0, tags=("27d",))
            # (27e)-(27f): IR = 2 H p RoCoF^max gated by direction (bilinear)
            linearize_bilinear(
                prog, idx.expr("irbu", k, t),
                LinExpr.constant(1.0) - idx.expr("u", t),
                idx.expr("hb", k, t) * (2.0 * b.p_dch_max * rmax),
                2.0 * b.p_dch_max * rmax * b.h_max + 1e-9,
                tags=("27e", "44"))
            linearize_bilinear(
                prog, idx.expr("irbd", k, t), idx.expr("u", t),
                idx.expr("hb", k, t) * (2.0 * b.p_ch_max * rmax),
                2.0 * b.p_ch_max * rmax * b.h_max + 1e-9,
                tags=("27f", "44"))
            prog.add_lin(idx.expr("hb", k, t), ">=", b.h_min, tags=("27g",))
            prog.add_lin(idx.expr("hb", k, t), "<=", b.h_max, tags=("27g",))
            # (27h)-(27i): direction-gated PFR reserves
            prog.add_lin(idx.expr("rbu", k, t)
                         - idx.expr("u", t) * b.p_dch_max, "<=", 0.0,
                         tags=("27h",))
            prog.add_lin(idx.expr("rbd", k, t)
                         + idx.expr("u", t) * b.p_ch_max, "<=", b.p_ch_max,
                         tags=("27i",))
            prog.add_lin(idx.expr("e", k, t), ">=", b.e_min, tags=("27j",))
            prog.add_lin(idx.expr("e", k, t), "<=", b.e_max, tags=("27j",))
        prog.add_lin(idx.expr("e", k, T - 1), "==", b.e0, tags=("27k",))

    for j, (k, s) in enumerate(case.active_renewables()):
        unc_sd = [math.sqrt(amb.sigma[t, j, j]) for t in range(T)]
        eps_s = s.eps_s if s.eps_s is not None else (
            unc.eps_s if cfg.eps is None else cfg.eps)
        kap = amb.kappa(eps_s)
        for t in range(T):
            # (28a): marginal chance constraint on the deloaded share
            # IR + R <= delta*(pf + xi_s); delta >= 0 makes the norm linear
            # available power is nonnegative, so the robust share is
            # clamped at zero (dark hours would otherwise go negative
            # and forbid any pinned deloading level)
            share = max(s.forecast[t] - kap * unc_sd[t], 0.0)
            prog.add_lin(idx.expr("irsu", k, t) + idx.expr("rsu", k, t)
                         - idx.expr("delta", k, t) * share,
                         "<=", 0.0, tags=("28a",))
            linearize_bilinear(
                prog, idx.expr("irsu", k, t),
                LinExpr.constant(1.0) - idx.expr("u", t),
                idx.expr("hs", k, t) * (2.0 * s.p_max * rmax),
                2.0 * s.p_max * rmax * s.h_max + 1e-9,
                tags=("28b", "44"))
            prog.add_lin(idx.expr("rsu", k, t)
                         - idx.expr("u", t) * s.p_max, "<=", 0.0,
                         tags=("28c",))
            prog.add_lin(idx.expr("hs", k, t), ">=", s.h_min, tags=("28d",))
            prog.add_lin(idx.expr("hs", k, t), "<=", s.h_max, tags=("28d",))
            prog.add_lin(idx.expr("delta", k, t), ">=", 0.0, tags=("28e",))
            prog.add_lin(idx.expr("delta", k, t), "<=", s.delta_max,
                         tags=("28e",))


# ---------------------------------------------------------------------
# frequency block

def _build_frequency(prog, idx, case, amb, cfg):
    T = case.horizon.periods
    S = amb.dim
    unc = uncertainty_of(case)
    eps_f = unc.eps_f if cfg.eps is None else cfg.eps
    fp = case.freq
    caps = _freq_caps(case)
    variant = cfg.variant

    for t in range(T):
        # aggregate reserve definitions + nonnegativity (8f)
        rgu = LinExpr.constant(0.0)
        rgd = LinExpr.constant(0.0)
        for k, _g in case.active_dgs():
            rgu = rgu + idx.expr("rgu", k, t)
            rgd = rgd + idx.expr("rgd", k, t)
        reu = LinExpr.constant(0.0)
        red = LinExpr.constant(0.0)
        for k, _b in case.active_batteries():
            reu = reu + idx.expr("rbu", k, t)
            red = red + idx.expr("rbd", k, t)
        for k, _s in case.active_renewables():
            reu = reu + idx.expr("rsu", k, t)
        for name, e in (("RGU", rgu), ("RGD", rgd), ("REU", reu),
                        ("RED", red)):
            prog.add_lin(idx.expr(name, t) - e, "==", 0.0, tags=("plumbing",))
            prog.add_lin(idx.expr(name, t), ">=", 0.0, tags=("8f",))

        u = idx.expr("u", t)
        pex = idx.expr("pex", t)
        gam = [idx.expr("gP", s, t) * -1.0 for s in range(S)]
        h_t = _inertia_expr(idx, case, t)
        m_dir = caps["Mdir"]

        if variant == "m1":
            pbar = case.m1_load_step
            # deterministic direction (8a) at the fixed imbalance
            prog.add_lin(u * m_dir, ">=", pbar, tags=("8a",))
            prog.add_lin(u * m_dir, "<=", pbar + m_dir, tags=("8a",))
            # deterministic RoCoF and quasi-steady-state counterparts
            prog.add_lin(h_t * (2.0 * fp.rocof_max), ">=", pbar, tags=("3",))
            prog.add_lin(h_t * (-2.0 * fp.rocof_max), "<=", pbar, tags=("3",))
            prog.add_lin(idx.expr("RGU", t) + idx.expr("REU", t), ">=", pbar,
                         tags=("9",))
            prog.add_lin(idx.expr("RGD", t) + idx.expr("RED", t), ">=", -pbar,
                         tags=("9",))
            # deterministic nadir magnitude pair + rotated cone
            prog.add_lin(idx.expr("z", t) + idx.expr("w", t), ">=", pbar,
                         tags=("39a",))
            prog.add_lin(idx.expr("z", t) - idx.expr("w", t), "<=", pbar,
                         tags=("39a",))
            prog.add_rsoc(idx.expr("xt", t) * 0.5, idx.expr("yt", t),
                          [idx.expr("w", t)], tags=("8i", "40"))
        else:
            # (32a)-(32b) direction chance constraints
            reformulate_linear_cc(
                prog, AffineRandomExpr(tuple(gam), u * m_dir - pex, t),
                eps_f, amb, tags=("32a",))
            reformulate_linear_cc(
                prog, AffineRandomExpr(tuple(g * -1.0 for g in gam),
                                       pex + m_dir - u * m_dir, t),
                eps_f, amb, tags=("32b",))
            # (32f)-(32g) quasi-steady state
            reformulate_linear_cc(
                prog, AffineRandomExpr(
                    tuple(gam),
                    idx.expr("RGU", t) + idx.expr("REU", t) - pex, t),
                eps_f, amb, tags=("32f",))
            reformulate_linear_cc(
                prog, AffineRandomExpr(
                    tuple(g * -1.0 for g in gam),
                    idx.expr("RGD", t) + idx.expr("RED", t) + pex, t),
                eps_f, amb, tags=("32g",))

        if variant == "m2":
            continue
        if variant == "m3":
            # (32c)-(32d) RoCoF chance constraints
            reformulate_linear_cc(
                prog, AffineRandomExpr(
                    tuple(gam), h_t * (2.0 * fp.rocof_max) - pex, t),
                eps_f, amb, tags=("32c",))
            reformulate_linear_cc(
                prog, AffineRandomExpr(
                    tuple(g * -1.0 for g in gam),
                    h_t * (2.0 * fp.rocof_max) + pex, t),
                eps_f, amb, tags=("32d",))
            # (32e)->(39)-(41) nadir chance material
            nadir_cc_material(
                prog, pex, gam, t, idx.col("z", t),
                idx.col("xt", t), idx.col("yt", t), idx.col("w", t),
                eps_f, amb, tags_cc=("32e", "39a", "41"),
                tags_cone=("8i", "40"))

        # (8b)-(8h): big-M gates tying z, y, x to the direction branch
        tdb_tg = fp.t_db / fp.t_g
        z, y, xv = idx.expr("z", t), idx.expr("yt", t), idx.expr("xt", t)
        reu_e, red_e = idx.expr("REU", t), idx.expr("RED", t)
        rgu_e, rgd_e = idx.expr("RGU", t), idx.expr("RGD", t)
        mz, my, mx = caps["Mz"], caps["My"], caps["Mx"]
        lhs = z - reu_e + rgu_e * tdb_tg
        prog.add_lin(lhs - u * mz, ">=", -mz, tags=("8b",))
        prog.add_lin(lhs + u * mz, "<=", mz, tags=("8b",))
        lhs = z + red_e - rgd_e * tdb_tg
        prog.add_lin(lhs + u * mz, ">=", 0.0, tags=("8c",))
        prog.add_lin(lhs - u * mz, "<=", 0.0, tags=("8c",))
        lhs = y - rgu_e * (1.0 / fp.t_g)
        prog.add_lin(lhs - u * my, ">=", -my, tags=("8d",))
        prog.add_lin(lhs + u * my, "<=", my, tags=("8d",))
        lhs = y - rgd_e * (1.0 / fp.t_g)
        prog.add_lin(lhs + u * my, ">=", 0.0, tags=("8e",))
        prog.add_lin(lhs - u * my, "<=", 0.0, tags=("8e",))
        lhs = xv - h_t * (4.0 * fp.df_max) + reu_e * fp.t_e
        prog.add_lin(lhs - u * mx, ">=", -mx, tags=("8g",))
        prog.add_lin(lhs + u * mx, "<=", mx, tags=("8g",))
        lhs = xv - h_t * (4.0 * fp.df_max) + red_e * fp.t_e
        prog.add_lin(lhs + u * mx, ">=", 0.0, tags=("8h",))
        prog.add_lin(lhs - u * mx, "<=", 0.0, tags=("8h",))


# ---------------------------------------------------------------------
# assembly, audit, extraction

def assemble(case: MicrogridCase, cfg: BuildConfig | None = None) -> BuildResult:
    cfg = cfg or BuildConfig()
    amb = ambiguity_from_case(case, cfg)
    prog = ConicProgram()
    idx = DecisionIndex(prog)
    _declare(prog, idx, case, cfg)
    groups = _build_objective(prog, idx, case, amb, cfg)
    _build_network(prog, idx, case, amb, cfg)
    _build_devices(prog, idx, case, amb, cfg)
    _build_frequency(prog, idx, case, amb, cfg)
    return BuildResult(prog, idx, amb, cfg, case, groups)


def coverage_report(prog: ConicProgram) -> list[str]:
    """Audit tags missing from an assembled m3 program (empty = pass)."""
    have = prog.all_tags()
    return [tag for tag in COVERAGE_TAGS if tag not in have]


def write_manifest(prog: ConicProgram, path) -> None:
    with open(path, "w", newline="\n") as fh:
        for kind, rows in (("L", prog.lin), ("S", prog.soc),
                           ("R", prog.rsoc)):
            for i, row in enumerate(rows):
                fh.write(f"{kind} {i} {','.join(row.tags) or 'plumbing'}\n")


def extract_schedule(build: BuildResult, result) -> Schedule:
    if result.x is None:
        raise ScheduleError(f"no incumbent: solver status {result.status}")
    x = np.array(result.x, dtype=float)
    prog, idx = build.prog, build.idx
    for j in prog.binary_cols():
        if min(abs(x[j]), abs(1.0 - x[j])) > 1e-6:
            raise ScheduleError(
                f"binary {prog.names[j]} = {x[j]} not integral at 1e-6")
        x[j] = round(x[j])
    gap_raw = None
    if build.cfg.variant != "m2":
        # recover the boundary point of the nadir cone: the relaxed
        # magnitude may sit strictly inside the cone at an interior-point
        # solution; lifting it onto w = sqrt(x*y) keeps every row feasible
        # (w only appears as an upper bound on |p_imb - z| and in the cone)
        # and leaves the objective unchanged
        T = build.case.horizon.periods
        gaps = []
        for t in range(T):
            xv = x[idx.col("xt", t)]
            yv = x[idx.col("yt", t)]
            wv = x[idx.col("w", t)]
            gaps.append(abs(xv * yv - wv * wv))
            x[idx.col("w", t)] = math.sqrt(max(xv * yv, 0.0))
        gap_raw = float(np.mean(gaps))
    bad = prog.check_point(x, tol=1e-6)
    if bad:
        raise ScheduleError("rounded solution violates rows:\n  "
                            + "\n  ".join(bad[:20]))
    breakdown = {name: e.value(x) for name, e in build.cost_groups.items()}
    return Schedule(objective=float(prog.objective.value(x)),
                    cost_breakdown=breakdown, x=x, build=build,
                    relaxation_gap_raw=gap_raw)
