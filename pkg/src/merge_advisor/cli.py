"""Command-line entry point: ``merge-advisor <command> ...``."""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np

from . import experiments, trajio, wavelet
from .guidance import command_log_rows
from .roadmodel import virtual_position
from .sim import CollisionError, ScenarioConfig, SimResult, Simulation, run_scenario


def _write_rows(path, rows) -> None:
    with open(path, "w", newline="") as fh:
        csv.writer(fh, lineterminator="\n").writerows(rows)


def _load_sweep_spec(ref: str, seeds) -> experiments.SweepSpec:
    if ref in experiments.PRESETS:
        spec = experiments.PRESETS[ref]()
    else:
        spec = experiments.SweepSpec.load(ref)
    if seeds is not None:
        spec = dataclasses.replace(spec, seeds=seeds)
    return spec


def cmd_sweep(args) -> int:
    spec = _load_sweep_spec(args.spec, args.seeds)
    total = len(spec.cells()) * spec.seeds

    def progress(done, n):
        if not args.quiet and (done == n or done % max(1, n // 20) == 0):
            print(f"\r{spec.name}: {done}/{n} seed pairs", end="", file=sys.stderr, flush=True)

    print(f"{spec.name}: {len(spec.cells())} cells x {spec.seeds} seeds = {total} pairs",
          file=sys.stderr)
    table = experiments.run_sweep(spec, jobs=args.jobs, progress=progress)
    if not args.quiet:
        print(file=sys.stderr)
    paths = experiments.emit_outputs(table, args.out, stem=args.stem or spec.name)
    with open(Path(args.out) / f"{args.stem or spec.name}_spec.json", "w") as fh:
        json.dump(spec.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    for row in experiments.summary_rows(table):
        print(",".join(row))
    for key, path in paths.items():
        print(f"wrote {key}: {path}", file=sys.stderr)
    failed = [row for row in table if row.failed]
    for row in failed:
        for err in row.errors:
            print(f"FAILED cell {row.cell}: {err}", file=sys.stderr)
    return 1 if failed else 0


def _trajectory_records(sim: Simulation):
    records = []
    g = sim.geom
    for vid in sorted(sim.trajectories):
        samples = sim.trajectories[vid]
        times = tuple(s[0] for s in samples)
        # ramp samples in mainline coordinates so a merge is continuous
        pos = tuple(s[2] if s[1] == "main" else virtual_position(s[2], g) for s in samples)
        spd = tuple(s[3] for s in samples)
        records.append(trajio.TrajectoryRecord(vid, times, pos, spd))
    return records


def cmd_simulate(args) -> int:
    cfg = ScenarioConfig.load(args.config) if args.config else ScenarioConfig()
    cfg = cfg.replace(seed=args.seed)
    if args.trajectories:
        cfg = cfg.replace(record_trajectories=True)
    replay = trajio.read_trajectory_csv(args.replay) if args.replay else None
    try:
        if args.command_log or args.trajectories:
            if replay is None and cfg.replay_path:
                replay = trajio.read_trajectory_csv(cfg.replay_path)
            sim = Simulation(cfg, replay)
            result = sim.run()
            if args.command_log:
                _write_rows(args.command_log, command_log_rows(sim.command_log))
            if args.trajectories:
                with open(args.trajectories, "w", newline="") as fh:
                    trajio.write_trajectory_csv(_trajectory_records(sim), fh)
        else:
            result = run_scenario(cfg, replay, engine=args.engine)
    except CollisionError as exc:
        print(f"collision: {exc}", file=sys.stderr)
        for event in exc.events[-10:]:
            print(f"  {event}", file=sys.stderr)
        return 3
    writer = csv.writer(sys.stdout, lineterminator="\n")
    writer.writerow(SimResult.CSV_FIELDS)
    writer.writerow(result.csv_row())
    if args.json:
        with open(args.json, "w") as fh:
            fh.write(result.to_json())
            fh.write("\n")
    return 0


def cmd_denoise(args) -> int:
    cfg = wavelet.WaveletPipelineConfig.build(args.basis, args.levels, args.alpha, args.rule)
    records = trajio.read_trajectory_csv(args.input)
    out = []
    for rec in records:
        if len(rec) < 2 ** cfg.levels:
            print(f"vehicle {rec.vehicle_id}: {len(rec)} samples, need at least "
                  f"{2 ** cfg.levels} for {cfg.levels} levels", file=sys.stderr)
            return 2
        clean = rec.with_positions(wavelet.denoise(rec.positions, cfg))
        out.append(dataclasses.replace(clean, speeds=None))
    with open(args.output, "w", newline="") as fh:
        trajio.write_trajectory_csv(out, fh)
    return 0


def cmd_noise(args) -> int:
    records = trajio.read_trajectory_csv(args.input)
    out = []
    for i, rec in enumerate(records):
        spec = trajio.NoiseSpec(args.sigma, args.impulse_prob, args.impulse_magnitude,
                                seed=args.seed + i)
        out.append(trajio.inject_noise(rec, spec))
    with open(args.output, "w", newline="") as fh:
        trajio.write_trajectory_csv(out, fh)
    return 0


def cmd_metrics(args) -> int:
    truth = {r.vehicle_id: r for r in trajio.read_trajectory_csv(args.truth)}
    test = {r.vehicle_id: r for r in trajio.read_trajectory_csv(args.test)}
    missing = sorted(set(truth) ^ set(test))
    if missing:
        print(f"vehicle ids differ between files: {missing}", file=sys.stderr)
        return 2
    writer = csv.writer(sys.stdout, lineterminator="\n")
    writer.writerow(["vehicle_id", "samples", "rmse_m"])
    values = []
    for vid in sorted(truth):
        e = trajio.rmse(test[vid], truth[vid])
        values.append(e)
        writer.writerow([vid, len(truth[vid]), f"{e:.9g}"])
    if values:
        writer.writerow(["mean", sum(len(r) for r in truth.values()), f"{np.mean(values):.9g}"])
    return 0


def cmd_truth(args) -> int:
    records = [trajio.synthetic_truth(args.seed + i, args.samples, args.interval, f"v{i + 1:03d}")
               for i in range(args.count)]
    with open(args.output, "w", newline="") as fh:
        trajio.write_trajectory_csv(records, fh)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="merge-advisor",
        description="On-ramp merging speed guidance: simulation sweeps and trajectory denoising.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sweep", help="run a paired baseline/guidance sweep")
    p.add_argument("--spec", required=True,
                   help=f"sweep JSON file or preset ({', '.join(experiments.PRESETS)})")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--jobs", type=int, default=1, help="worker processes")
    p.add_argument("--seeds", type=int, default=None,
                   help=f"seed count (default: spec value, else ${experiments.SEEDS_ENV}, "
                        f"else {experiments.DEFAULT_SEEDS})")
    p.add_argument("--stem", default=None, help="output file stem (default: spec name)")
    p.add_argument("--quiet", action="store_true")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("simulate", help="run one scenario and print its result row")
    p.add_argument("--config", default=None, help="scenario JSON file (default scenario if omitted)")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--replay", default=None, help="mainline trajectory CSV to replay")
    p.add_argument("--json", default=None, help="write the full result as JSON")
    p.add_argument("--command-log", default=None, help="write the per-tick guidance commands as CSV")
    p.add_argument("--trajectories", default=None, help="write 1 Hz trajectories as CSV")
    p.add_argument("--engine", choices=("auto", "reference", "compiled"), default="auto")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("denoise", help="wavelet-denoise every trajectory in a CSV")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", dest="output", required=True)
    p.add_argument("--levels", type=int, default=3)
    p.add_argument("--alpha", type=float, default=0.5)
    p.add_argument("--basis", default="db3")
    p.add_argument("--rule", choices=wavelet.RULES, default=wavelet.RULE_SQRT_FINEST)
    p.set_defaults(func=cmd_denoise)

    p = sub.add_parser("noise", help="add synthetic measurement noise to trajectories")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", dest="output", required=True)
    p.add_argument("--sigma", type=float, default=1.0, help="Gaussian noise std [m]")
    p.add_argument("--impulse-prob", type=float, default=0.0)
    p.add_argument("--impulse-magnitude", type=float, default=0.0, help="[m]")
    p.add_argument("--seed", type=int, default=0, help="record i uses seed + i")
    p.set_defaults(func=cmd_noise)

    p = sub.add_parser("metrics", help="per-vehicle position RMSE between two trajectory files")
    p.add_argument("--truth", required=True)
    p.add_argument("--test", required=True)
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("truth", help="generate smooth IDM reference trajectories")
    p.add_argument("--out", dest="output", required=True)
    p.add_argument("--count", type=int, default=10)
    p.add_argument("--samples", type=int, default=256)
    p.add_argument("--interval", type=float, default=1.0, help="[s]")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_truth)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (trajio.TrajectoryFormatError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
