"""Post-islanding frequency dynamics under ramp-limited primary response.

Model: single-bus swing equation  2 H df/dt = dP(t) - p  where p is the
power deficit at the islanding instant (p.u., positive = generation
shortfall) and H is the aggregate inertia constant in p.u.-s.  Primary
response dP(t) has two ramp channels:

  * inverter-based reserve R_E, linear from 0 to R_E over [0, T_E],
  * governor reserve       R_G, linear from 0 to R_G over [T_DB, T_DB+T_G]
    (T_DB = governor deadband delay).

Direction is handled by sign: an over-frequency event is the same problem
with p < 0 and the down-reserve pair, so everything here takes p >= 0 and
callers flip signs for the upward direction.

`max_freq_deviation` is the closed form for the frequency nadir obtained
by integrating the swing equation up to the zero-crossing of dP(t) - p,
valid when that crossing falls inside [T_E, T_DB + T_G], which is the
regime the scheduling model enforces.  Relative to the exact piecewise
integral it carries an extra governor-deadband term
R_G T_DB^2 / (4 H T_G) in deviation magnitude (it extends the governor
ramp linearly back through the deadband), a deliberate, slightly
conservative simplification in the deadband << delivery-time regime; the
constraint algebra downstream is built on this same form.
`simulate_frequency` is the independent numerical route (exact quadrature
of the piecewise-linear forcing on a breakpoint-aligned grid) used for
cross-checking and out-of-sample validation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "InertiaState", "ReserveBundle", "FrequencyTrajectory",
    "aggregate_inertia", "pfr_power", "rocof", "max_freq_deviation",
    "simulate_frequency", "qss_ok", "write_trajectory", "write_metrics",
]


@dataclass(frozen=True)
class InertiaState:
    """Aggregate inertia H_t (p.u.-s) and its committed-device breakdown."""
    h_total: float
    h_dg: float
    h_bess: float
    h_res: float


@dataclass(frozen=True)
class ReserveBundle:
    """Headroom available to primary response in one direction (p.u.)."""
    r_e: float   # inverter-based (BESS + RES) reserve
    r_g: float   # governor (DG) reserve


@dataclass(frozen=True)
class FrequencyTrajectory:
    t: np.ndarray         # s, from islanding instant
    df: np.ndarray        # Hz deviation, draws x time
    extremum: np.ndarray  # signed extremal deviation per draw, Hz
    rocof: np.ndarray     # initial RoCoF per draw, Hz/s
    qss: np.ndarray       # deviation at full reserve delivery, Hz

    @property
    def nadir(self) -> np.ndarray:
        return np.abs(self.extremum)


def aggregate_inertia(case, x_commit, h_bess, h_res) -> InertiaState:
    """H_t from DG commitments and storage/RES virtual-inertia settings.

    x_commit, h_bess, h_res map slot index -> value for active devices;
    contributions are capacity-weighted and normalized by f0.
    """
    h_g = sum(g.inertia * g.gp_max * x_commit.get(k, 0)
              for k, g in case.active_dgs())
    h_b = sum(h_bess.get(k, 0.0) * b.p_dch_max
              for k, b in case.active_batteries())
    h_s = sum(h_res.get(k, 0.0) * s.p_max
              for k, s in case.active_renewables())
    f0 = case.freq.f0
    return InertiaState((h_g + h_b + h_s) / f0, h_g / f0, h_b / f0, h_s / f0)


def pfr_power(t, res: ReserveBundle, fp) -> np.ndarray:
    """Delivered primary response dP(t), vectorized over t."""
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValueError("time must be nonnegative")
    ibr = res.r_e * np.clip(t / fp.t_e, 0.0, 1.0)
    gov = res.r_g * np.clip((t - fp.t_db) / fp.t_g, 0.0, 1.0)
    return ibr + gov


def rocof(p_imb, h_total):
    """Initial rate of change of frequency, Hz/s (f0-normalized H in h_total)."""
    if h_total <= 0:
        raise ValueError("unstable system: aggregate inertia is zero")
    return -np.asarray(p_imb, dtype=float) / (2.0 * h_total)


def max_freq_deviation(p_imb, res: ReserveBundle, h_total, fp):
    """Closed-form nadir deviation (Hz, negative) and validity flag.

    Valid when the response-deficit zero crossing t* = T_DB +
    (p - R_E) T_G / R_G lies in [T_E, T_DB + T_G]; outside that window the
    closed form is not the true extremum and the flag is False.
    """
    if h_total <= 0:
        raise ValueError("aggregate inertia must be positive")
    if res.r_g <= 0:
        raise ValueError("governor reserve must be positive (R_G/T_G slope)")
    p = np.asarray(p_imb, dtype=float)
    re_, rg = res.r_e, res.r_g
    with np.errstate(divide="ignore", invalid="ignore"):
        t_star = fp.t_db + (p - re_) * fp.t_g / rg
        df = (-((p - re_ + rg * fp.t_db / fp.t_g) ** 2)
              / (2.0 * rg / fp.t_g) - re_ * fp.t_e / 2.0) / (2.0 * h_total)
    valid = (t_star >= fp.t_e) & (t_star <= fp.t_db + fp.t_g) & (rg > 0)
    if p.ndim == 0:
        return float(df), bool(valid)
    return df, valid


def qss_ok(p_imb, res: ReserveBundle, tol=1e-9):
    """Quasi-steady-state recovery: total reserve covers the imbalance."""
    return np.asarray(p_imb) <= res.r_e + res.r_g + tol


def _grid(fp, t_end, dt):
    """Uniform-step grid whose breakpoints {T_E, T_DB, T_DB+T_G} are nodes."""
    brk = sorted({0.0, fp.t_e, fp.t_db, fp.t_db + fp.t_g, t_end})
    pieces = [np.array([0.0])]
    for a, b in zip(brk, brk[1:]):
        if b > t_end + 1e-15 or b <= a:
            continue
        n = max(1, int(np.ceil((b - a) / dt)))
        pieces.append(np.linspace(a, b, n + 1)[1:])
    return np.concatenate(pieces)


def simulate_frequency(p_imb, res: ReserveBundle, h_total, fp,
                       t_end=None, dt=1e-3) -> FrequencyTrajectory:
    """Numerically integrate the swing equation; vectorized over draws.

    The forcing dP(t) - p is piecewise linear in t and the swing equation
    has no frequency feedback, so trapezoidal cumulative integration on a
    breakpoint-aligned grid is exact up to roundoff; dt only controls the
    resolution at which the extremum is read off.

    The extremum is the signed deviation in the direction of the event
    (min for a deficit, max for a surplus) — without damping the model is
    only meaningful up to primary-response saturation, so the post-recovery
    drift is not treated as a deviation.
    """
    if h_total <= 0:
        raise ValueError("unstable system: aggregate inertia is zero")
    if dt <= 0 or dt > min(fp.t_e, fp.t_g) / 4.0:
        raise ValueError(f"step dt={dt} too coarse for delivery times "
                         f"T_E={fp.t_e}, T_G={fp.t_g}")
    p = np.atleast_1d(np.asarray(p_imb, dtype=float))
    t_sat = fp.t_db + fp.t_g
    if t_end is None:
        t_end = t_sat + 2.0
    elif t_end < t_sat:
        raise ValueError("horizon must reach full reserve delivery T_G+T_DB")
    t = _grid(fp, t_end, dt)
    forcing = pfr_power(t, res, fp)[None, :] - p[:, None]   # draws x time
    seg = 0.5 * (forcing[:, 1:] + forcing[:, :-1]) * np.diff(t)[None, :]
    df = np.concatenate([np.zeros((p.size, 1)), np.cumsum(seg, axis=1)],
                        axis=1) / (2.0 * h_total)
    extremum = np.where(p >= 0, df.min(axis=1), df.max(axis=1))
    k_sat = int(np.searchsorted(t, t_sat))
    r0 = rocof(p, h_total) * np.ones(p.size)
    return FrequencyTrajectory(t=t, df=df, extremum=extremum, rocof=r0,
                               qss=df[:, min(k_sat, t.size - 1)].copy())


def write_trajectory(traj: FrequencyTrajectory, path, draw: int = 0) -> None:
    """Export one draw's deviation trace as `tau_s, delta_f_hz`."""
    with open(path, "w", newline="\n") as fh:
        fh.write("tau_s,delta_f_hz\n")
        for tau, df in zip(traj.t, traj.df[draw]):
            fh.write(f"{tau:.9g},{df:.9g}\n")


def write_metrics(traj: FrequencyTrajectory, path) -> None:
    """Export per-draw scalar metrics as `rocof_hzps, mfd_hz, qss_hz`."""
    with open(path, "w", newline="\n") as fh:
        fh.write("rocof_hzps,mfd_hz,qss_hz\n")
        for r, m, q in zip(traj.rocof, traj.nadir, traj.qss):
            fh.write(f"{r:.9g},{m:.9g},{q:.9g}\n")
