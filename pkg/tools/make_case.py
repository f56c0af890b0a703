"""Generate the shipped 33-node desk case (case33_desk.json).

Radial 33-node feeder with three diesel units, two storage units, and two
renewable plants over 24 hours.  Load/price/forecast profiles are shaped
so the benchmark suite exhibits the qualitative behaviors of interest:
expensive evening peak (diesel commitment), cheap night valley with high
wind (export hours, deloading incentive), and enough reserve/inertia
capacity that the full model stays feasible but not slack.

All powers in MW/MVAr/MWh, impedances in per-unit on base_mva, prices in
$/MWh.  Run from the repository root:  python3 tools/make_case.py
"""

import json
import os

BASE = 1.0          # MVA
V_KV = 12.66
Z_BASE = V_KV ** 2 / BASE        # ohm

# classic 33-node feeder branch data: (from, to, R_ohm, X_ohm)
BRANCHES = [
    (1, 2, 0.0922, 0.0470), (2, 3, 0.4930, 0.2511), (3, 4, 0.3660, 0.1864),
    (4, 5, 0.3811, 0.1941), (5, 6, 0.8190, 0.7070), (6, 7, 0.1872, 0.6188),
    (7, 8, 0.7114, 0.2351), (8, 9, 1.0300, 0.7400), (9, 10, 1.0440, 0.7400),
    (10, 11, 0.1966, 0.0650), (11, 12, 0.3744, 0.1238),
    (12, 13, 1.4680, 1.1550), (13, 14, 0.5416, 0.7129),
    (14, 15, 0.5910, 0.5260), (15, 16, 0.7463, 0.5450),
    (16, 17, 1.2890, 1.7210), (17, 18, 0.7320, 0.5740),
    (2, 19, 0.1640, 0.1565), (19, 20, 1.5042, 1.3554),
    (20, 21, 0.4095, 0.4784), (21, 22, 0.7089, 0.9373),
    (3, 23, 0.4512, 0.3083), (23, 24, 0.8980, 0.7091),
    (24, 25, 0.8960, 0.7011), (6, 26, 0.2030, 0.1034),
    (26, 27, 0.2842, 0.1447), (27, 28, 1.0590, 0.9337),
    (28, 29, 0.8042, 0.7006), (29, 30, 0.5075, 0.2585),
    (30, 31, 0.9744, 0.9630), (31, 32, 0.3105, 0.3619),
    (32, 33, 0.3410, 0.5302),
]

# nominal connected load per node (kW, kvar), feeder total 3715 kW
NODE_LOAD = {
    2: (100, 60), 3: (90, 40), 4: (120, 80), 5: (60, 30), 6: (60, 20),
    7: (200, 100), 8: (200, 100), 9: (60, 20), 10: (60, 20), 11: (45, 30),
    12: (60, 35), 13: (60, 35), 14: (120, 80), 15: (60, 10), 16: (60, 20),
    17: (60, 20), 18: (90, 40), 19: (90, 40), 20: (90, 40), 21: (90, 40),
    22: (90, 40), 23: (90, 50), 24: (420, 200), 25: (420, 200),
    26: (60, 25), 27: (60, 25), 28: (60, 20), 29: (120, 70), 30: (200, 600),
    31: (150, 70), 32: (210, 100), 33: (60, 40),
}

# hourly demand multiplier: night valley, midday shoulder, evening peak
LOAD_PROFILE = [0.52, 0.48, 0.46, 0.46, 0.50, 0.58, 0.68, 0.78, 0.84, 0.86,
                0.88, 0.90, 0.88, 0.86, 0.84, 0.86, 0.92, 1.00, 0.98, 0.94,
                0.86, 0.76, 0.66, 0.58]

# grid tariff, $/MWh: cheap night, expensive evening
PRICE = [46, 44, 43, 43, 45, 52, 68, 88, 96, 98, 100, 104, 102, 98, 94,
         98, 112, 132, 128, 118, 100, 82, 64, 52]

# photovoltaic shape (strictly positive floor keeps the error covariance
# well-conditioned in dark hours)
PV_SHAPE = [0.02, 0.02, 0.02, 0.02, 0.03, 0.08, 0.22, 0.42, 0.62, 0.78,
            0.90, 0.96, 0.98, 0.94, 0.84, 0.68, 0.48, 0.26, 0.10, 0.03,
            0.02, 0.02, 0.02, 0.02]

# wind shape: strong at night, sagging through the afternoon
WIND_SHAPE = [0.86, 0.90, 0.92, 0.90, 0.84, 0.78, 0.66, 0.55, 0.46, 0.40,
              0.36, 0.34, 0.33, 0.35, 0.38, 0.44, 0.50, 0.55, 0.60, 0.66,
              0.72, 0.78, 0.82, 0.85]

PV_MAX = 1.2     # MW
WIND_MAX = 1.0


def build() -> dict:
    lines = [{"from": f, "to": t, "r": r / Z_BASE, "x": x / Z_BASE,
              "smax": 4.5}
             for f, t, r, x in BRANCHES]
    load_p = []
    load_q = []
    for nid in range(2, 34):
        p0, q0 = NODE_LOAD[nid]
        load_p.append([round(p0 / 1000.0 * m, 6) for m in LOAD_PROFILE])
        load_q.append([round(q0 / 1000.0 * m, 6) for m in LOAD_PROFILE])

    dg = [
        {"node": 4, "gp_max": 1.5, "gp_min": 0.10, "gq_max": 1.0,
         "gq_min": -0.6, "h": 6.0, "ramp_up": 1.0, "ramp_down": 1.0,
         "startup_ramp": 1.2, "shutdown_ramp": 1.2, "t_on": 2, "t_off": 2,
         "c_su": 20.0, "c_sd": 8.0, "c_no": 4.0, "c_energy": 92.0,
         "c_reserve": 5.0, "r_up_max": 1.2, "r_dn_max": 1.2, "x0": 1},
        {"node": 15, "gp_max": 1.0, "gp_min": 0.08, "gq_max": 0.8,
         "gq_min": -0.5, "h": 5.0, "ramp_up": 0.8, "ramp_down": 0.8,
         "startup_ramp": 1.0, "shutdown_ramp": 1.0, "t_on": 2, "t_off": 2,
         "c_su": 16.0, "c_sd": 6.0, "c_no": 3.5, "c_energy": 104.0,
         "c_reserve": 5.5, "r_up_max": 0.8, "r_dn_max": 0.8, "x0": 0},
        {"node": 30, "gp_max": 0.8, "gp_min": 0.06, "gq_max": 0.7,
         "gq_min": -0.4, "h": 4.0, "ramp_up": 0.7, "ramp_down": 0.7,
         "startup_ramp": 0.8, "shutdown_ramp": 0.8, "t_on": 2, "t_off": 2,
         "c_su": 14.0, "c_sd": 5.0, "c_no": 3.0, "c_energy": 118.0,
         "c_reserve": 6.0, "r_up_max": 0.8, "r_dn_max": 0.8, "x0": 0},
    ]
    bess = [
        {"node": 8, "p_ch_max": 0.8, "p_dch_max": 0.8, "e_min": 1.4,
         "e_max": 1.8, "e0": 1.6, "eta_ch": 0.95, "eta_dch": 0.95,
         "h_min": 0.0, "h_max": 10.0, "c_cycle": 1.0, "c_ir": 1.5,
         "c_reserve": 3.0},
        {"node": 25, "p_ch_max": 0.6, "p_dch_max": 0.6, "e_min": 1.05,
         "e_max": 1.35, "e0": 1.2, "eta_ch": 0.95, "eta_dch": 0.95,
         "h_min": 0.0, "h_max": 10.0, "c_cycle": 1.0, "c_ir": 1.5,
         "c_reserve": 3.0},
    ]
    res = [
        {"node": 14, "p_max": PV_MAX,
         "forecast": [round(PV_MAX * s, 6) for s in PV_SHAPE],
         "h_min": 0.0, "h_max": 8.0, "delta_max": 0.10,
         "c_ir": 1.5, "c_reserve": 2.5},
        {"node": 31, "p_max": WIND_MAX,
         "forecast": [round(WIND_MAX * s, 6) for s in WIND_SHAPE],
         "h_min": 0.0, "h_max": 8.0, "delta_max": 0.10,
         "c_ir": 1.5, "c_reserve": 2.5},
    ]

    return {
        "meta": {"base_mva": BASE, "f0": 50.0, "v_min": 0.95, "v_max": 1.05,
                 "cos_phi": 0.95, "period_h": 1.0, "m1_load_step": 0.30},
        "nodes": [{"id": i} for i in range(1, 34)],
        "lines": lines,
        "dg": dg,
        "bess": bess,
        "res": res,
        "load": {"p": load_p, "q": load_q},
        "freq": {"t_db": 0.2, "t_e": 1.0, "t_g": 8.0, "rocof_max": 0.5,
                 "df_max": 0.5},
        "exchange": {"s_max": 4.0, "price": [float(p) for p in PRICE]},
        "uncertainty": {"sigma_frac": 0.05, "theta": 0.01,
                        "eps_g": 0.05, "eps_b": 0.05, "eps_s": 0.05,
                        "eps_l": 0.05, "eps_v": 0.05, "eps_e": 0.05,
                        "eps_f": 0.05, "nu_l": 0.5, "nu_e": 0.5},
    }


if __name__ == "__main__":
    doc = build()
    out = os.path.join(os.path.dirname(__file__), "..", "src", "mgsched",
                       "data", "case33_desk.json")
    with open(os.path.abspath(out), "w", newline="\n") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")
    print("wrote", os.path.abspath(out))
