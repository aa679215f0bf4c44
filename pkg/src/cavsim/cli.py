"""Command-line entry point: scenario runs, gain-region sweeps, agent
training/evaluation, and plot regeneration."""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np


def _cmd_run(args):
    from .harness import (ScenarioConfig, ScenarioError, bundled_scenario_path,
                          export_run, run_scenario)
    path = args.scenario
    if not os.path.exists(path) and not path.endswith(".json"):
        path = bundled_scenario_path(path)
    config = ScenarioConfig.from_json(path)
    if args.seed is not None:
        config.seed = args.seed
    if args.duration is not None:
        config.duration = args.duration
    out_dir = args.out or config.out_dir or f"runs/{config.name}"
    log, metrics = run_scenario(config)
    written = export_run(log, metrics, config, out_dir)
    print(f"wrote {len(written)} artifacts to {out_dir}")
    print(f"rms_e_y={metrics.rms_e_y:.4f} m  max|e_y|={metrics.max_abs_e_y:.4f} m  "
          f"collision={metrics.collision}")
    return 0


def _cmd_sweep(args):
    from .cdob import (DStabilitySpec, admissible_gain_region,
                       export_gain_region)
    from .vehicle_models import VehicleParams
    spec = DStabilitySpec(min_damping=args.min_damping,
                          min_decay=args.min_decay,
                          max_natural_freq=args.max_wn)
    grid = np.linspace(args.gain_min, args.gain_max, args.gain_steps)
    result = admissible_gain_region(VehicleParams(), args.V, spec,
                                    grid, grid, grid)
    out = args.out or f"gain_region_V{args.V:g}.csv"
    export_gain_region(result, out)
    if result.minimal_triple is None:
        print(f"no admissible triple; {result.diagnostics}")
        return 1
    g = result.minimal_triple
    print(f"{len(result.admissible)} admissible triples; minimal: "
          f"kp={g.k_p:g} ki={g.k_i:g} kd={g.k_d:g} -> {out}")
    return 0


def _cmd_train(args):
    from .drl import (save_checkpoint, train_grid_agent, train_highway_agent,
                      write_training_log)
    out = args.out or f"train_{args.env}"
    os.makedirs(out, exist_ok=True)
    if args.env == "grid":
        net, records = train_grid_agent(
            max_steps=args.steps, seed=args.seed,
            log_path=os.path.join(out, "training_log.csv"))
    else:
        net, records = train_highway_agent(
            episodes=args.episodes, seed=args.seed,
            log_path=os.path.join(out, "training_log.csv"))
    save_checkpoint(net, os.path.join(out, "checkpoint.vqn"))
    last = records[-1]
    print(f"trained {len(records)} episodes; last reward "
          f"{last['total_reward']:.2f}; artifacts in {out}")
    return 0


def _cmd_eval(args):
    from .drl import evaluate_grid, evaluate_highway, load_checkpoint
    net = load_checkpoint(args.checkpoint)
    if args.env == "grid":
        rate = evaluate_grid(net, episodes=args.episodes)
    else:
        rate = evaluate_highway(net, episodes=args.episodes, seed=args.seed or 1)
    print(f"success rate: {rate:.3f} over {args.episodes} episodes")
    return 0


def _cmd_plot(args):
    from .harness import polyline_svg, read_trajectory_csv
    csv_path = os.path.join(args.run_dir, "trajectory.csv")
    rows = read_trajectory_csv(csv_path)
    if not rows:
        print("empty trajectory", file=sys.stderr)
        return 1
    t = [r["t_s"] for r in rows]
    polyline_svg([("trajectory", [r["x_m"] for r in rows],
                   [r["y_m"] for r in rows])],
                 os.path.join(args.run_dir, "path_vs_trajectory.svg"),
                 title="path vs trajectory")
    polyline_svg([("e_y", t, [r["e_y_m"] for r in rows])],
                 os.path.join(args.run_dir, "e_y_vs_t.svg"),
                 title="lateral error")
    polyline_svg([("delta_f", t, [r["delta_f_rad"] for r in rows])],
                 os.path.join(args.run_dir, "steering_vs_t.svg"),
                 title="steering command")
    print(f"plots regenerated in {args.run_dir}")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="cavsim",
        description="Hierarchical collision-avoidance control simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a scenario JSON (or bundled name)")
    p_run.add_argument("scenario")
    p_run.add_argument("--seed", type=int)
    p_run.add_argument("--out")
    p_run.add_argument("--duration", type=float)
    p_run.set_defaults(func=_cmd_run)

    p_sweep = sub.add_parser("sweep", help="PID gain-region sweep")
    p_sweep.add_argument("what", choices=["gains"])
    p_sweep.add_argument("--V", type=float, default=5.0)
    p_sweep.add_argument("--min-damping", type=float, default=0.5)
    p_sweep.add_argument("--min-decay", type=float, default=0.5)
    # The plant's fast lateral pole sits near -50 rad/s at highway speeds, so
    # a useful sweep needs a cap well above the type default of 20.
    p_sweep.add_argument("--max-wn", type=float, default=500.0)
    p_sweep.add_argument("--gain-min", type=float, default=0.0)
    p_sweep.add_argument("--gain-max", type=float, default=1.0)
    p_sweep.add_argument("--gain-steps", type=int, default=11)
    p_sweep.add_argument("--out")
    p_sweep.set_defaults(func=_cmd_sweep)

    p_train = sub.add_parser("train", help="train a value-based agent")
    p_train.add_argument("env", choices=["grid", "highway"])
    p_train.add_argument("--episodes", type=int, default=900)
    p_train.add_argument("--steps", type=int, default=50_000)
    p_train.add_argument("--seed", type=int, default=0)
    p_train.add_argument("--out")
    p_train.set_defaults(func=_cmd_train)

    p_eval = sub.add_parser("eval", help="evaluate a checkpoint")
    p_eval.add_argument("checkpoint")
    p_eval.add_argument("--env", choices=["grid", "highway"], default="highway")
    p_eval.add_argument("--episodes", type=int, default=100)
    p_eval.add_argument("--seed", type=int)
    p_eval.set_defaults(func=_cmd_eval)

    p_plot = sub.add_parser("plot", help="regenerate plots for a run directory")
    p_plot.add_argument("run_dir")
    p_plot.set_defaults(func=_cmd_plot)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
