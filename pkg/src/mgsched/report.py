"""Deterministic CSV tables and SVG panels for benchmark reports.

Every artifact begins with a `#` header echoing the resolved run
configuration, so any file can be traced back to the exact invocation
that produced it.  SVGs are hand-assembled polyline/histogram panels —
no plotting dependency, byte-stable output.
"""

from __future__ import annotations

import numpy as np

from .validate import EVP_FAMILIES, BenchmarkReport

__all__ = ["emit_report", "write_csv", "svg_series", "svg_hist"]


def _fmt(v) -> str:
    if isinstance(v, float):
        return f"{v:.9g}"
    return str(v)


def _header(config: dict) -> str:
    items = " ".join(f"{k}={config[k]}" for k in sorted(config))
    return f"# config: {items}\n" if config else ""


def write_csv(path, columns, rows, config=None) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write(_header(config or {}))
        fh.write(",".join(columns) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


# ---------------------------------------------------------------------
# SVG panels

_W, _H, _PAD = 640, 360, 48
_COLORS = ("#1f6fb2", "#c9452c", "#3a873a", "#8654a1", "#b08b2e",
           "#478a8f")


def _scale(vals, lo, hi, out_lo, out_hi):
    span = hi - lo if hi > lo else 1.0
    return [(out_lo + (v - lo) / span * (out_hi - out_lo)) for v in vals]


def _frame(title, xlab, ylab, xlo, xhi, ylo, yhi):
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" '
        f'height="{_H}" viewBox="0 0 {_W} {_H}">',
        f'<rect width="{_W}" height="{_H}" fill="white"/>',
        f'<rect x="{_PAD}" y="{_PAD}" width="{_W - 2 * _PAD}" '
        f'height="{_H -2 * _PAD}" fill="none" stroke="#444"/>',
        f'<text x="{_W // 2}" y="20" text-anchor="middle" '
        f'font-family="sans-serif" font-size="14">{title}</text>',
        f'<text x="{_W // 2}" y="{_H - 8}" text-anchor="middle" '
        f'font-family="sans-serif" font-size="12">{xlab}</text>',
        f'<text x="14" y="{_H // 2}" text-anchor="middle" '
        f'font-family="sans-serif" font-size="12" '
        f'transform="rotate(-90 14 {_H // 2})">{ylab}</text>',
        f'<text x="{_PAD}" y="{_H - _PAD + 16}" font-family="sans-serif" '
        f'font-size="10">{xlo:.4g}</text>',
        f'<text x="{_W - _PAD}" y="{_H - _PAD + 16}" text-anchor="end" '
        f'font-family="sans-serif" font-size="10">{xhi:.4g}</text>',
        f'<text x="{_PAD - 4}" y="{_H - _PAD}" text-anchor="end" '
        f'font-family="sans-serif" font-size="10">{ylo:.4g}</text>',
        f'<text x="{_PAD - 4}" y="{_PAD + 10}" text-anchor="end" '
        f'font-family="sans-serif" font-size="10">{yhi:.4g}</text>',
    ]
    return parts


def svg_series(path, series: dict, title: str, xlab: str, ylab: str,
               config=None) -> None:
    """One polyline per named series over a shared integer x-axis."""
    ys = [np.asarray(v, dtype=float) for v in series.values()]
    if ys:
        ylo = min(float(y.min()) for y in ys)
        yhi = max(float(y.max()) for y in ys)
        xhi = max(len(y) for y in ys) - 1
    else:
        ylo, yhi, xhi = 0.0, 1.0, 1
    if yhi <= ylo:
        yhi = ylo + 1.0
    parts = _frame(title, xlab, ylab, 0, max(xhi, 1), ylo, yhi)
    if config:
        parts.insert(1, f"<!-- config: "
                        f"{' '.join(f'{k}={config[k]}' for k in sorted(config))} -->")
    for i, (name, y) in enumerate(series.items()):
        y = np.asarray(y, dtype=float)
        xs = _scale(range(len(y)), 0, max(xhi, 1), _PAD, _W - _PAD)
        yv = _scale(y, ylo, yhi, _H - _PAD, _PAD)
        pts = " ".join(f"{x:.2f},{v:.2f}" for x, v in zip(xs, yv))
        color = _COLORS[i % len(_COLORS)]
        parts.append(f'<polyline points="{pts}" fill="none" '
                     f'stroke="{color}" stroke-width="1.5"/>')
        parts.append(f'<text x="{_W - _PAD - 4}" y="{_PAD + 14 + 14 * i}" '
                     f'text-anchor="end" font-family="sans-serif" '
                     f'font-size="11" fill="{color}">{name}</text>')
    parts.append("</svg>")
    with open(path, "w", newline="\n") as fh:
        fh.write("\n".join(parts) + "\n")


def svg_hist(path, values, title: str, xlab: str, bins: int = 40,
             marker: float | None = None, config=None) -> None:
    """Histogram panel with an optional vertical limit marker."""
    vals = np.asarray(values, dtype=float)
    vals = vals[np.isfinite(vals)]
    if vals.size == 0:
        vals = np.zeros(1)
    lo, hi = float(vals.min()), float(vals.max())
    if marker is not None:
        lo, hi = min(lo, marker), max(hi, marker)
    if hi <= lo:
        hi = lo + 1.0
    counts, edges = np.histogram(vals, bins=bins, range=(lo, hi))
    top = max(int(counts.max()), 1)
    parts = _frame(title, xlab, "count", lo, hi, 0, top)
    if config:
        parts.insert(1, f"<!-- config: "
                        f"{' '.join(f'{k}={config[k]}' for k in sorted(config))} -->")
    for c, e0, e1 in zip(counts, edges[:-1], edges[1:]):
        if c == 0:
            continue
        x0 = _scale([e0], lo, hi, _PAD, _W - _PAD)[0]
        x1 = _scale([e1], lo, hi, _PAD, _W - _PAD)[0]
        y = _scale([c], 0, top, _H - _PAD, _PAD)[0]
        parts.append(f'<rect x="{x0:.2f}" y="{y:.2f}" '
                     f'width="{max(x1 - x0, 0.5):.2f}" '
                     f'height="{_H - _PAD - y:.2f}" fill="#1f6fb2"/>')
    if marker is not None:
        xm = _scale([marker], lo, hi, _PAD, _W - _PAD)[0]
        parts.append(f'<line x1="{xm:.2f}" y1="{_PAD}" x2="{xm:.2f}" '
                     f'y2="{_H - _PAD}" stroke="#c9452c" '
                     f'stroke-dasharray="4 3"/>')
    parts.append("</svg>")
    with open(path, "w", newline="\n") as fh:
        fh.write("\n".join(parts) + "\n")


# ---------------------------------------------------------------------

def emit_report(rep: BenchmarkReport, out_dir, config: dict | None = None
                ) -> list[str]:
    """Write the benchmark tables and figure panels; returns file names."""
    import os
    os.makedirs(out_dir, exist_ok=True)
    config = config or {}
    written = []

    def path(name):
        written.append(name)
        return os.path.join(out_dir, name)

    # costs table (variant comparison + deloading suite)
    groups = []
    for run in list(rep.variants.values()) + list(rep.deloading.values()):
        if run.schedule is not None:
            groups = sorted(run.schedule.cost_breakdown)
            break
    rows = []
    for label, run in list(rep.variants.items()) + [
            (f"deloading:{k}", r) for k, r in rep.deloading.items()]:
        if run.schedule is None:
            rows.append([label, run.status] + [""] * (1 + len(groups)))
        else:
            rows.append([label, run.status, run.objective]
                        + [run.schedule.cost_breakdown[g] for g in groups])
    write_csv(path("costs.csv"), ["variant", "status", "total"] + groups,
              rows, config)

    # EVP table, both aggregation conventions
    rows = []
    for label, evp in rep.evp.items():
        for f in EVP_FAMILIES:
            rows.append([label, f, evp.per_constraint[f], evp.per_sample[f]])
        rows.append([label, "aggregate", evp.aggregate_per_constraint,
                     evp.aggregate_per_sample])
    write_csv(path("evp.csv"),
              ["variant", "family", "rate_pct", "sample_rate_pct"],
              rows, config)

    # frequency metrics, long format
    rows = []
    for label, fm in rep.freq.items():
        T, n = fm.rocof.shape
        for t in range(T):
            for k in range(n):
                rows.append([label, t, k, fm.rocof[t, k], fm.mfd_replay[t, k]])
    write_csv(path("freq_metrics.csv"),
              ["variant", "hour", "sample", "rocof_hzps", "mfd_hz"],
              rows, config)

    rows = []
    for label, gaps in rep.gaps.items():
        for r, g in enumerate(gaps):
            rows.append([label, r, g])
    write_csv(path("gap.csv"), ["variant", "run", "eps_gap"], rows, config)

    for label, (lo, nom, hi) in rep.exchange_env.items():
        svg_series(path(f"exchange_{label}.svg"),
                   {"min": lo, "nominal": nom, "max": hi},
                   f"Power exchange envelope ({label})",
                   "hour", "p.u.", config)
    if rep.reserve_series:
        svg_series(path("reserves.svg"),
                   {k: v for k, v in rep.reserve_series.items()},
                   "Total upward primary reserve", "hour", "p.u.", config)
    for label, fm in rep.freq.items():
        svg_hist(path(f"rocof_{label}.svg"), np.abs(fm.rocof).ravel(),
                 f"Post-islanding |RoCoF| ({label})", "Hz/s",
                 marker=float(config.get("rocof_max", 0.5)), config=config)
        svg_hist(path(f"mfd_{label}.svg"), fm.mfd_replay.ravel(),
                 f"Post-islanding frequency nadir ({label})", "Hz",
                 marker=float(config.get("df_max", 0.5)), config=config)
    return written
