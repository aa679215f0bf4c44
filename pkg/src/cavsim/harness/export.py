"""Run artifact export: trajectory CSV, metrics JSON, and hand-rolled SVG
plots (no plotting dependency)."""

from __future__ import annotations

import csv
import json
import math
import os

import numpy as np

from .metrics import Metrics
from .scenario import ScenarioConfig, TrajectoryLog, provenance

CSV_COLUMNS = ["t_s", "x_m", "y_m", "psi_rad", "beta_rad", "r_radps", "V_mps",
               "delta_f_rad", "e_y_m", "gamma", "min_obs_dist_m", "qp_status"]


def _fmt(value):
    if isinstance(value, str):
        return value
    v = float(value)
    if math.isinf(v):
        return "inf"
    return f"{v:.9g}"


def write_trajectory_csv(log: TrajectoryLog, path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_COLUMNS)
        for row in log.rows:
            writer.writerow([_fmt(row[c]) for c in CSV_COLUMNS])


def read_trajectory_csv(path):
    rows = []
    with open(path, newline="") as fh:
        for raw in csv.DictReader(fh):
            row = {}
            for key, val in raw.items():
                row[key] = val if key == "qp_status" else float(val)
            rows.append(row)
    return rows


def write_metrics_json(metrics: Metrics, config: ScenarioConfig, path):
    payload = metrics.to_dict()
    payload["ttz_events"] = [
        {"t": ev.t, "actor": ev.actor, "ttz_vehicle": ev.ttz_vehicle,
         "ttz_vru": ev.ttz_vru, "band": ev.band}
        for ev in metrics.ttz_events]
    payload["provenance"] = provenance(config)
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True, default=str)
        fh.write("\n")


def polyline_svg(series, path, title="", width=800, height=400, margin=40):
    """Write one or more (label, xs, ys) series as an SVG line plot."""
    xs_all = np.concatenate([np.asarray(s[1], dtype=float) for s in series])
    ys_all = np.concatenate([np.asarray(s[2], dtype=float) for s in series])
    finite = np.isfinite(xs_all) & np.isfinite(ys_all)
    if not np.any(finite):
        raise ValueError("nothing finite to plot")
    x_lo, x_hi = float(xs_all[finite].min()), float(xs_all[finite].max())
    y_lo, y_hi = float(ys_all[finite].min()), float(ys_all[finite].max())
    x_span = (x_hi - x_lo) or 1.0
    y_span = (y_hi - y_lo) or 1.0
    colors = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"]

    def sx(x):
        return margin + (x - x_lo) / x_span * (width - 2 * margin)

    def sy(y):
        return height - margin - (y - y_lo) / y_span * (height - 2 * margin)

    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
             f'height="{height}" viewBox="0 0 {width} {height}">',
             f'<rect width="{width}" height="{height}" fill="white"/>',
             f'<text x="{width / 2}" y="20" text-anchor="middle" '
             f'font-family="sans-serif" font-size="14">{title}</text>']
    parts.append(f'<line x1="{margin}" y1="{height - margin}" x2="{width - margin}" '
                 f'y2="{height - margin}" stroke="black"/>')
    parts.append(f'<line x1="{margin}" y1="{margin}" x2="{margin}" '
                 f'y2="{height - margin}" stroke="black"/>')
    for k, (label, xs, ys) in enumerate(series):
        xs = np.asarray(xs, dtype=float)
        ys = np.asarray(ys, dtype=float)
        ok = np.isfinite(xs) & np.isfinite(ys)
        pts = " ".join(f"{sx(x):.2f},{sy(y):.2f}" for x, y in zip(xs[ok], ys[ok]))
        color = colors[k % len(colors)]
        parts.append(f'<polyline points="{pts}" fill="none" stroke="{color}" '
                     'stroke-width="1.5"/>')
        parts.append(f'<text x="{width - margin}" y="{margin + 15 * k}" '
                     f'text-anchor="end" font-family="sans-serif" font-size="12" '
                     f'fill="{color}">{label}</text>')
    parts.append("</svg>")
    with open(path, "w") as fh:
        fh.write("\n".join(parts))


def export_run(log: TrajectoryLog, metrics: Metrics, config: ScenarioConfig,
               out_dir, plots=True):
    """Write trajectory CSV, metrics JSON, and standard plots; returns the
    list of written paths."""
    os.makedirs(out_dir, exist_ok=True)
    written = []
    csv_path = os.path.join(out_dir, "trajectory.csv")
    write_trajectory_csv(log, csv_path)
    written.append(csv_path)
    json_path = os.path.join(out_dir, "metrics.json")
    write_metrics_json(metrics, config, json_path)
    written.append(json_path)
    if plots and log.rows:
        t = [row["t_s"] for row in log.rows]
        xy = ("trajectory", [row["x_m"] for row in log.rows],
              [row["y_m"] for row in log.rows])
        plot_specs = [
            ("path_vs_trajectory.svg", [xy], "path vs trajectory"),
            ("e_y_vs_t.svg", [("e_y", t, [row["e_y_m"] for row in log.rows])],
             "lateral error"),
            ("steering_vs_t.svg",
             [("delta_f", t, [row["delta_f_rad"] for row in log.rows])],
             "steering command"),
        ]
        dists = [row["min_obs_dist_m"] for row in log.rows]
        if any(math.isfinite(d) for d in dists):
            plot_specs.append(("distance_vs_t.svg",
                               [("min distance", t, dists)],
                               "obstacle distance"))
        for fname, series, title in plot_specs:
            p = os.path.join(out_dir, fname)
            polyline_svg(series, p, title=title)
            written.append(p)
    return written
