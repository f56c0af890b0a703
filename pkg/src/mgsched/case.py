"""Microgrid case ingestion, validation and per-unit normalization.

A case file is a single JSON document with sections `meta`, `nodes`,
`lines`, `dg`, `bess`, `res`, `load`, `freq`, `exchange`, `uncertainty`
(see docs/case_schema.md).  Power quantities in the file are MW / MVAr /
MWh and prices $/MWh; the loader converts everything to per-unit on the
declared `meta.base_mva`.  Line r/x are already per-unit on that base.

Device slots are dense: every non-root node carries exactly one DG, BESS,
RES and load slot, absent devices being all-zero entries.  The random
vector dimension used elsewhere is the number of *active* (nonzero
capacity) renewables, with a node -> renewable-index map kept on the case.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace

__all__ = [
    "CaseError", "ParseError", "SchemaError", "ValidationError",
    "Node", "Line", "DieselGenerator", "BatteryStorage", "RenewableSource",
    "FrequencyParams", "TimeHorizon", "ExchangeParams", "UncertaintyParams",
    "MicrogridCase", "load_case", "loads_case", "validate_case",
    "per_unit_normalize", "serialize_case", "dumps_case",
]


class CaseError(Exception):
    pass


class ParseError(CaseError):
    pass


class SchemaError(CaseError):
    pass


class ValidationError(CaseError):
    def __init__(self, diagnostics: list[str]):
        super().__init__("invalid case:\n  " + "\n  ".join(diagnostics))
        self.diagnostics = diagnostics


@dataclass(frozen=True)
class Node:
    id: int


@dataclass(frozen=True)
class Line:
    from_node: int
    to_node: int
    r: float
    x: float
    smax: float


@dataclass(frozen=True)
class DieselGenerator:
    node: int
    gp_max: float = 0.0
    gp_min: float = 0.0
    gq_max: float = 0.0
    gq_min: float = 0.0
    inertia: float = 0.0          # H_i [s]
    ramp_up: float = 0.0
    ramp_down: float = 0.0
    startup_ramp: float = 0.0
    shutdown_ramp: float = 0.0
    t_on: int = 1
    t_off: int = 1
    c_su: float = 0.0
    c_sd: float = 0.0
    c_no: float = 0.0
    c_energy: float = 0.0
    c_reserve: float = 0.0
    r_up_max: float = 0.0
    r_dn_max: float = 0.0
    x0: int = 0                   # commitment state before period 1

    @property
    def active(self) -> bool:
        return self.gp_max > 0.0


@dataclass(frozen=True)
class BatteryStorage:
    node: int
    p_ch_max: float = 0.0
    p_dch_max: float = 0.0
    e_min: float = 0.0
    e_max: float = 0.0
    e0: float = 0.0
    eta_ch: float = 1.0
    eta_dch: float = 1.0
    h_min: float = 0.0
    h_max: float = 0.0
    c_cycle: float = 0.0
    c_ir: float = 0.0
    c_reserve: float = 0.0

    @property
    def active(self) -> bool:
        return self.p_ch_max > 0.0 or self.p_dch_max > 0.0


@dataclass(frozen=True)
class RenewableSource:
    node: int
    p_max: float = 0.0
    forecast: tuple[float, ...] = ()
    h_min: float = 0.0
    h_max: float = 0.0
    delta_max: float = 0.0
    c_ir: float = 0.0
    c_reserve: float = 0.0
    eps_s: float | None = None    # falls back to uncertainty.eps_s

    @property
    def active(self) -> bool:
        return self.p_max > 0.0


@dataclass(frozen=True)
class FrequencyParams:
    f0: float
    t_db: float
    t_e: float
    t_g: float
    rocof_max: float
    df_max: float


@dataclass(frozen=True)
class TimeHorizon:
    periods: int
    dt_h: float


@dataclass(frozen=True)
class ExchangeParams:
    s_max: float
    price: tuple[float, ...]      # $/p.u.-h once loaded


@dataclass(frozen=True)
class UncertaintyParams:
    sigma_frac: float
    theta: float
    eps_g: float
    eps_b: float
    eps_s: float
    eps_l: float
    eps_v: float
    eps_e: float
    eps_f: float
    nu_l: float = 0.5
    nu_e: float = 0.5


@dataclass(frozen=True)
class MicrogridCase:
    base_mva: float
    nodes: tuple[Node, ...]
    lines: tuple[Line, ...]
    dgs: tuple[DieselGenerator, ...]          # one slot per non-root node
    batteries: tuple[BatteryStorage, ...]
    renewables: tuple[RenewableSource, ...]
    load_p: tuple[tuple[float, ...], ...]     # [non-root slot][period]
    load_q: tuple[tuple[float, ...], ...]
    horizon: TimeHorizon
    freq: FrequencyParams
    exchange: ExchangeParams
    v_min: float
    v_max: float
    cos_phi: float
    m1_load_step: float = 0.0

    @property
    def phi(self) -> float:
        c2 = self.cos_phi ** 2
        return math.sqrt((1.0 - c2) / c2)

    @property
    def non_root_nodes(self) -> tuple[int, ...]:
        return tuple(n.id for n in self.nodes if n.id != 1)

    def active_dgs(self):
        return [(k, d) for k, d in enumerate(self.dgs) if d.active]

    def active_batteries(self):
        return [(k, b) for k, b in enumerate(self.batteries) if b.active]

    def active_renewables(self):
        return [(k, s) for k, s in enumerate(self.renewables) if s.active]

    def res_index(self) -> dict[int, int]:
        """node id -> index into the random-error vector (active RES only)."""
        return {s.node: i for i, (_, s) in enumerate(self.active_renewables())}


# ---------------------------------------------------------------------
# loading

_META_FIELDS = ("base_mva", "f0", "v_min", "v_max", "cos_phi", "period_h")
_FREQ_FIELDS = ("t_db", "t_e", "t_g", "rocof_max", "df_max")
_UNC_FIELDS = ("sigma_frac", "theta", "eps_g", "eps_b", "eps_s", "eps_l",
               "eps_v", "eps_e", "eps_f")


def _need(section: dict, key: str, where: str):
    if key not in section:
        raise SchemaError(f"missing field {where}.{key}")
    return section[key]


def loads_case(text: str) -> MicrogridCase:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"malformed case file: {exc}") from None
    for sec in ("meta", "nodes", "lines", "dg", "bess", "res", "load",
                "freq", "exchange", "uncertainty"):
        if sec not in doc:
            raise SchemaError(f"missing section {sec}")

    meta = doc["meta"]
    for f in _META_FIELDS:
        _need(meta, f, "meta")
    base = float(meta["base_mva"])
    if base <= 0:
        raise SchemaError("meta.base_mva must be positive")

    nodes = tuple(Node(int(_need(n, "id", "nodes[]"))) for n in doc["nodes"])
    node_ids = [n.id for n in nodes]
    lines = tuple(
        Line(int(_need(l, "from", "lines[]")), int(_need(l, "to", "lines[]")),
             float(_need(l, "r", "lines[]")), float(_need(l, "x", "lines[]")),
             float(_need(l, "smax", "lines[]")) / base)
        for l in doc["lines"])

    non_root = sorted(i for i in node_ids if i != 1)
    slot = {nid: k for k, nid in enumerate(non_root)}

    dgs = [DieselGenerator(node=nid) for nid in non_root]
    for d in doc["dg"]:
        nid = int(_need(d, "node", "dg[]"))
        if nid not in slot:
            raise SchemaError(f"dg at unknown/root node {nid}")
        dgs[slot[nid]] = DieselGenerator(
            node=nid,
            gp_max=float(_need(d, "gp_max", "dg[]")) / base,
            gp_min=float(_need(d, "gp_min", "dg[]")) / base,
            gq_max=float(_need(d, "gq_max", "dg[]")) / base,
            gq_min=float(_need(d, "gq_min", "dg[]")) / base,
            inertia=float(_need(d, "h", "dg[]")),
            ramp_up=float(_need(d, "ramp_up", "dg[]")) / base,
            ramp_down=float(_need(d, "ramp_down", "dg[]")) / base,
            startup_ramp=float(_need(d, "startup_ramp", "dg[]")) / base,
            shutdown_ramp=float(_need(d, "shutdown_ramp", "dg[]")) / base,
            t_on=int(_need(d, "t_on", "dg[]")),
            t_off=int(_need(d, "t_off", "dg[]")),
            c_su=float(_need(d, "c_su", "dg[]")),
            c_sd=float(_need(d, "c_sd", "dg[]")),
            c_no=float(_need(d, "c_no", "dg[]")),
            c_energy=float(_need(d, "c_energy", "dg[]")) * base,
            c_reserve=float(_need(d, "c_reserve", "dg[]")) * base,
            r_up_max=float(_need(d, "r_up_max", "dg[]")) / base,
            r_dn_max=float(_need(d, "r_dn_max", "dg[]")) / base,
            x0=int(d.get("x0", 0)),
        )

    batts = [BatteryStorage(node=nid) for nid in non_root]
    for b in doc["bess"]:
        nid = int(_need(b, "node", "bess[]"))
        if nid not in slot:
            raise SchemaError(f"bess at unknown/root node {nid}")
        batts[slot[nid]] = BatteryStorage(
            node=nid,
            p_ch_max=float(_need(b, "p_ch_max", "bess[]")) / base,
            p_dch_max=float(_need(b, "p_dch_max", "bess[]")) / base,
            e_min=float(_need(b, "e_min", "bess[]")) / base,
            e_max=float(_need(b, "e_max", "bess[]")) / base,
            e0=float(_need(b, "e0", "bess[]")) / base,
            eta_ch=float(_need(b, "eta_ch", "bess[]")),
            eta_dch=float(_need(b, "eta_dch", "bess[]")),
            h_min=float(_need(b, "h_min", "bess[]")),
            h_max=float(_need(b, "h_max", "bess[]")),
            c_cycle=float(_need(b, "c_cycle", "bess[]")) * base,
            c_ir=float(_need(b, "c_ir", "bess[]")) * base,
            c_reserve=float(_need(b, "c_reserve", "bess[]")) * base,
        )

    ress = [RenewableSource(node=nid) for nid in non_root]
    for s in doc["res"]:
        nid = int(_need(s, "node", "res[]"))
        if nid not in slot:
            raise SchemaError(f"res at unknown/root node {nid}")
        ress[slot[nid]] = RenewableSource(
            node=nid,
            p_max=float(_need(s, "p_max", "res[]")) / base,
            forecast=tuple(v / base for v in _need(s, "forecast", "res[]")),
            h_min=float(_need(s, "h_min", "res[]")),
            h_max=float(_need(s, "h_max", "res[]")),
            delta_max=float(_need(s, "delta_max", "res[]")),
            c_ir=float(_need(s, "c_ir", "res[]")) * base,
            c_reserve=float(_need(s, "c_reserve", "res[]")) * base,
            eps_s=(float(s["eps_s"]) if "eps_s" in s else None),
        )

    load = doc["load"]
    load_p = tuple(tuple(v / base for v in row) for row in _need(load, "p", "load"))
    load_q = tuple(tuple(v / base for v in row) for row in _need(load, "q", "load"))

    fq = doc["freq"]
    freq = FrequencyParams(float(meta["f0"]),
                           *(float(_need(fq, f, "freq")) for f in _FREQ_FIELDS))
    ex = doc["exchange"]
    exchange = ExchangeParams(
        s_max=float(_need(ex, "s_max", "exchange")) / base,
        price=tuple(v * base for v in _need(ex, "price", "exchange")))

    un = doc["uncertainty"]
    unc = UncertaintyParams(
        *(float(_need(un, f, "uncertainty")) for f in _UNC_FIELDS),
        nu_l=float(un.get("nu_l", 0.5)), nu_e=float(un.get("nu_e", 0.5)))

    periods = len(exchange.price)
    case = MicrogridCase(
        base_mva=base, nodes=nodes, lines=lines, dgs=tuple(dgs),
        batteries=tuple(batts), renewables=tuple(ress),
        load_p=load_p, load_q=load_q,
        horizon=TimeHorizon(periods, float(meta["period_h"])),
        freq=freq, exchange=exchange,
        v_min=float(meta["v_min"]), v_max=float(meta["v_max"]),
        cos_phi=float(meta["cos_phi"]),
        m1_load_step=float(meta.get("m1_load_step", 0.0)) / base,
    )
    diags = validate_case(case, unc)
    if diags:
        raise ValidationError(diags)
    case = replace(case)
    object.__setattr__(case, "_uncertainty", unc)
    return case


def uncertainty_of(case: MicrogridCase) -> UncertaintyParams:
    return getattr(case, "_uncertainty")


def load_case(path) -> MicrogridCase:
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ParseError(f"cannot read case file: {exc}") from None
    return loads_case(text)


# ---------------------------------------------------------------------
# validation

def _is_spanning_tree(node_ids: list[int], lines) -> bool:
    if len(lines) != len(node_ids) - 1:
        return False
    parent = {i: i for i in node_ids}

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for ln in lines:
        if ln.from_node not in parent or ln.to_node not in parent:
            return False
        a, b = find(ln.from_node), find(ln.to_node)
        if a == b:
            return False
        parent[a] = b
    return True


def validate_case(case: MicrogridCase,
                  unc: UncertaintyParams | None = None) -> list[str]:
    """One diagnostic per violated invariant; empty list means valid."""
    d: list[str] = []
    ids = [n.id for n in case.nodes]
    if len(set(ids)) != len(ids):
        d.append("duplicate node ids")
    if 1 not in ids:
        d.append("root node 1 missing")
    if len(ids) > 1 and not _is_spanning_tree(ids, case.lines):
        d.append(f"lines do not form a spanning tree rooted at node 1 "
                 f"(|lines|={len(case.lines)}, |nodes|={len(ids)})")
    non_root = case.non_root_nodes
    for name, devs in (("dg", case.dgs), ("bess", case.batteries),
                       ("res", case.renewables)):
        if tuple(x.node for x in devs) != non_root:
            d.append(f"{name} slots misaligned with non-root nodes")
    T = case.horizon.periods
    if T < 1:
        d.append("horizon must have at least one period")
    if case.horizon.dt_h <= 0:
        d.append("period length must be positive")
    if len(case.exchange.price) != T:
        d.append("exchange price series length != periods")
    for arr, name in ((case.load_p, "load.p"), (case.load_q, "load.q")):
        if len(arr) != len(non_root) or any(len(row) != T for row in arr):
            d.append(f"{name} must be |non-root nodes| x |periods|")

    for k, ln in enumerate(case.lines):
        if ln.smax < 0:
            d.append(f"line {k} ({ln.from_node}-{ln.to_node}): negative capacity")
    for g in case.dgs:
        if g.gp_min > g.gp_max:
            d.append(f"dg@{g.node}: gp_min > gp_max")
        if g.active and (g.t_on < 1 or g.t_off < 1):
            d.append(f"dg@{g.node}: min up/down times must be >= 1")
        if min(g.c_su, g.c_sd, g.c_no, g.c_energy, g.c_reserve) < 0:
            d.append(f"dg@{g.node}: negative cost coefficient")
        if min(g.gp_max, g.gq_max - g.gq_min if g.active else 0.0,
               g.ramp_up, g.ramp_down, g.r_up_max, g.r_dn_max) < 0:
            d.append(f"dg@{g.node}: negative capacity/ramp")
    for b in case.batteries:
        if not b.e_min <= b.e0 <= b.e_max:
            d.append(f"bess@{b.node}: E0 outside [E_min, E_max]")
        if b.h_min > b.h_max:
            d.append(f"bess@{b.node}: H_min > H_max")
        if b.active and not (0 < b.eta_ch <= 1 and 0 < b.eta_dch <= 1):
            d.append(f"bess@{b.node}: efficiencies must be in (0, 1]")
        if min(b.p_ch_max, b.p_dch_max, b.c_cycle, b.c_ir, b.c_reserve) < 0:
            d.append(f"bess@{b.node}: negative capacity/cost")
    for s in case.renewables:
        if not 0 <= s.delta_max <= 1:
            d.append(f"res@{s.node}: delta_max outside [0, 1]")
        if s.h_min > s.h_max:
            d.append(f"res@{s.node}: H_min > H_max")
        if s.active and len(s.forecast) != T:
            d.append(f"res@{s.node}: forecast length != periods")
        if any(v < -1e-12 or v > s.p_max + 1e-12 for v in s.forecast):
            d.append(f"res@{s.node}: forecast outside [0, p_max]")

    f = case.freq
    if not f.t_g > f.t_e > 0:
        d.append(f"frequency delivery times must satisfy T_G > T_E > 0 "
                 f"(got T_G={f.t_g}, T_E={f.t_e})")
    if f.t_db < 0:
        d.append("deadband delay T_DB must be >= 0")
    if f.rocof_max <= 0 or f.df_max <= 0:
        d.append("RoCoF and frequency-deviation limits must be positive")
    if not case.v_min < case.v_max:
        d.append("voltage bounds must satisfy V_min < V_max")
    if not 0 < case.cos_phi <= 1:
        d.append("cos_phi must be in (0, 1]")
    if case.exchange.s_max < 0:
        d.append("substation capacity must be nonnegative")
    if any(p < 0 for p in case.exchange.price):
        d.append("exchange prices must be nonnegative")

    if unc is None:
        unc = getattr(case, "_uncertainty", None)
    if unc is not None:
        for name in ("eps_g", "eps_b", "eps_s", "eps_l", "eps_v",
                     "eps_e", "eps_f"):
            v = getattr(unc, name)
            if not 0 < v < 0.5:
                d.append(f"uncertainty.{name}={v} outside (0, 0.5)")
        if unc.theta < 0:
            d.append("uncertainty.theta must be nonnegative")
        if not 0 < unc.nu_l < 1 or not 0 < unc.nu_e < 1:
            d.append("split weights nu_l, nu_e must be in (0, 1)")
        if unc.sigma_frac < 0:
            d.append("uncertainty.sigma_frac must be nonnegative")
    return d


# ---------------------------------------------------------------------
# per-unit rescaling and serialization

def per_unit_normalize(case: MicrogridCase, base: float) -> MicrogridCase:
    """Re-express the case on a new power base (p.u. powers scale by old/new)."""
    if base <= 0:
        raise ValueError("power base must be positive")
    k = case.base_mva / base        # multiplier for p.u. power quantities
    if k == 1.0:
        return case
    z = 1.0 / k                     # multiplier for impedances and prices
    new = replace(
        case,
        base_mva=base,
        lines=tuple(replace(l, r=l.r * z, x=l.x * z, smax=l.smax * k)
                    for l in case.lines),
        dgs=tuple(replace(
            g, gp_max=g.gp_max * k, gp_min=g.gp_min * k, gq_max=g.gq_max * k,
            gq_min=g.gq_min * k, ramp_up=g.ramp_up * k, ramp_down=g.ramp_down * k,
            startup_ramp=g.startup_ramp * k, shutdown_ramp=g.shutdown_ramp * k,
            c_energy=g.c_energy * z, c_reserve=g.c_reserve * z,
            r_up_max=g.r_up_max * k, r_dn_max=g.r_dn_max * k)
            for g in case.dgs),
        batteries=tuple(replace(
            b, p_ch_max=b.p_ch_max * k, p_dch_max=b.p_dch_max * k,
            e_min=b.e_min * k, e_max=b.e_max * k, e0=b.e0 * k,
            c_cycle=b.c_cycle * z, c_ir=b.c_ir * z, c_reserve=b.c_reserve * z)
            for b in case.batteries),
        renewables=tuple(replace(
            s, p_max=s.p_max * k, forecast=tuple(v * k for v in s.forecast),
            c_ir=s.c_ir * z, c_reserve=s.c_reserve * z)
            for s in case.renewables),
        load_p=tuple(tuple(v * k for v in row) for row in case.load_p),
        load_q=tuple(tuple(v * k for v in row) for row in case.load_q),
        exchange=replace(case.exchange, s_max=case.exchange.s_max * k,
                         price=tuple(v * z for v in case.exchange.price)),
        m1_load_step=case.m1_load_step * k,
    )
    unc = getattr(case, "_uncertainty", None)
    if unc is not None:
        object.__setattr__(new, "_uncertainty", unc)
    return new


def dumps_case(case: MicrogridCase) -> str:
    """Inverse of loads_case (back to MW units on the case's base)."""
    b = case.base_mva
    unc = getattr(case, "_uncertainty", None)
    doc = {
        "meta": {
            "base_mva": b, "f0": case.freq.f0, "v_min": case.v_min,
            "v_max": case.v_max, "cos_phi": case.cos_phi,
            "period_h": case.horizon.dt_h,
            "m1_load_step": case.m1_load_step * b,
        },
        "nodes": [{"id": n.id} for n in case.nodes],
        "lines": [{"from": l.from_node, "to": l.to_node, "r": l.r, "x": l.x,
                   "smax": l.smax * b} for l in case.lines],
        "dg": [{"node": g.node, "gp_max": g.gp_max * b, "gp_min": g.gp_min * b,
                "gq_max": g.gq_max * b, "gq_min": g.gq_min * b, "h": g.inertia,
                "ramp_up": g.ramp_up * b, "ramp_down": g.ramp_down * b,
                "startup_ramp": g.startup_ramp * b,
                "shutdown_ramp": g.shutdown_ramp * b,
                "t_on": g.t_on, "t_off": g.t_off, "c_su": g.c_su,
                "c_sd": g.c_sd, "c_no": g.c_no, "c_energy": g.c_energy / b,
                "c_reserve": g.c_reserve / b, "r_up_max": g.r_up_max * b,
                "r_dn_max": g.r_dn_max * b, "x0": g.x0}
               for g in case.dgs if g.active],
        "bess": [{"node": s.node, "p_ch_max": s.p_ch_max * b,
                  "p_dch_max": s.p_dch_max * b, "e_min": s.e_min * b,
                  "e_max": s.e_max * b, "e0": s.e0 * b, "eta_ch": s.eta_ch,
                  "eta_dch": s.eta_dch, "h_min": s.h_min, "h_max": s.h_max,
                  "c_cycle": s.c_cycle / b, "c_ir": s.c_ir / b,
                  "c_reserve": s.c_reserve / b}
                 for s in case.batteries if s.active],
        "res": [dict({"node": s.node, "p_max": s.p_max * b,
                      "forecast": [v * b for v in s.forecast],
                      "h_min": s.h_min, "h_max": s.h_max,
                      "delta_max": s.delta_max, "c_ir": s.c_ir / b,
                      "c_reserve": s.c_reserve / b},
                     **({"eps_s": s.eps_s} if s.eps_s is not None else {}))
                for s in case.renewables if s.active],
        "load": {"p": [[v * b for v in row] for row in case.load_p],
                 "q": [[v * b for v in row] for row in case.load_q]},
        "freq": {"t_db": case.freq.t_db, "t_e": case.freq.t_e,
                 "t_g": case.freq.t_g, "rocof_max": case.freq.rocof_max,
                 "df_max": case.freq.df_max},
        "exchange": {"s_max": case.exchange.s_max * b,
                     "price": [v / b for v in case.exchange.price]},
        "uncertainty": ({f: getattr(unc, f) for f in
                         (*_UNC_FIELDS, "nu_l", "nu_e")} if unc else {}),
    }
    return json.dumps(doc, indent=1)


def serialize_case(case: MicrogridCase, path) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write(dumps_case(case))
