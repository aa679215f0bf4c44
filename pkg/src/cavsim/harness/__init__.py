"""Scenario definitions, multi-rate simulation loop, delay injection, metrics,
and run artifact export."""

import os

from .metrics import (ConflictZone, Metrics, TtzEvent, band_fraction,
                      compute_ttz, min_distance, ttz_series, TTZ_BANDS)
from .scenario import (DelayLine, ScenarioConfig, ScenarioError, TrajectoryLog,
                       build_path, compute_metrics, provenance, run_scenario,
                       DT_PHYS, DT_CTRL, DT_DECISION, PHYS_PER_CTRL,
                       CTRL_PER_DECISION, SCHEMA_VERSION)
from .export import (CSV_COLUMNS, export_run, polyline_svg,
                     read_trajectory_csv, write_metrics_json,
                     write_trajectory_csv)

_SCENARIO_DIR = os.path.join(os.path.dirname(__file__), "scenarios")


def bundled_scenario_path(name):
    """Path of a scenario shipped with the package (name without .json)."""
    path = os.path.join(_SCENARIO_DIR, f"{name}.json")
    if not os.path.exists(path):
        available = sorted(f[:-5] for f in os.listdir(_SCENARIO_DIR)
                           if f.endswith(".json"))
        raise ScenarioError(f"no bundled scenario '{name}'; available: {available}")
    return path


__all__ = [
    "ConflictZone", "Metrics", "TtzEvent", "band_fraction", "compute_ttz",
    "min_distance", "ttz_series", "TTZ_BANDS",
    "DelayLine", "ScenarioConfig", "ScenarioError", "TrajectoryLog",
    "build_path", "compute_metrics", "provenance", "run_scenario",
    "DT_PHYS", "DT_CTRL", "DT_DECISION", "PHYS_PER_CTRL", "CTRL_PER_DECISION",
    "SCHEMA_VERSION", "CSV_COLUMNS", "export_run", "polyline_svg",
    "read_trajectory_csv", "write_metrics_json", "write_trajectory_csv",
    "bundled_scenario_path",
]
