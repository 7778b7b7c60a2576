"""Paired baseline/guidance sweeps, fuel-saving statistics and report files.

Every cell of a sweep runs the same seed list twice, guidance off and on,
and the saving of each seed pair is ``1 - treated / baseline``. Cells are
aggregated by ``(cell index, seed)`` so the table does not depend on the
order in which runs finish.
"""

from __future__ import annotations

import csv
import dataclasses
import itertools
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np

from .sim import CollisionError, ScenarioConfig, run_scenario

SEEDS_ENV = "MERGE_ADVISOR_SEEDS"
DEFAULT_SEEDS = 100

AXES = ("ramp_flow", "mainline_flow", "r2_length", "cooperative", "check_follower",
        "r2_entry_speed", "r3_length")
AXIS_UNITS = {
    "ramp_flow": "veh/hr/ln",
    "mainline_flow": "veh/hr/ln",
    "r2_length": "m",
    "r3_length": "m",
    "r2_entry_speed": "m/s",
}


def default_seed_count() -> int:
    raw = os.environ.get(SEEDS_ENV)
    if raw is None or raw.strip() == "":
        return DEFAULT_SEEDS
    n = int(raw)
    if n < 1:
        raise ValueError(f"{SEEDS_ENV} must be a positive integer, got {raw!r}")
    return n


def fuel_saving(baseline: float, treated: float) -> float:
    """Relative fuel saving of the treated run against its baseline."""
    if not baseline > 0:
        raise ValueError(f"baseline fuel must be positive, got {baseline}")
    return 1.0 - treated / baseline


def apply_axis(cfg: ScenarioConfig, name: str, value) -> ScenarioConfig:
    if name == "r2_length":
        return cfg.replace(geometry=dataclasses.replace(cfg.geometry, len_r2=float(value)))
    if name == "r3_length":
        return cfg.replace(geometry=dataclasses.replace(cfg.geometry, len_r3=float(value)))
    if name in ("cooperative", "check_follower"):
        return cfg.replace(**{name: bool(value)})
    if name in AXES:
        return cfg.replace(**{name: float(value)})
    raise ValueError(f"unknown sweep axis {name!r}; known axes: {AXES}")


@dataclass(frozen=True)
class SweepSpec:
    axes: Dict[str, tuple]
    seeds: int = field(default_factory=default_seed_count)
    base: ScenarioConfig = field(default_factory=ScenarioConfig)
    name: str = "sweep"

    def __post_init__(self):
        if self.seeds < 1:
            raise ValueError("seeds must be >= 1")
        for axis, values in self.axes.items():
            if axis not in AXES:
                raise ValueError(f"unknown sweep axis {axis!r}; known axes: {AXES}")
            if len(values) == 0:
                raise ValueError(f"axis {axis!r} has no values")

    def cells(self) -> List[Dict[str, object]]:
        names = list(self.axes)
        return [dict(zip(names, combo)) for combo in itertools.product(*self.axes.values())]

    def config_for(self, cell: Dict[str, object], seed: int, guidance: bool) -> ScenarioConfig:
        cfg = self.base
        for name, value in cell.items():
            cfg = apply_axis(cfg, name, value)
        return cfg.replace(seed=seed, guidance_enabled=guidance)

    def to_dict(self) -> dict:
        return {"name": self.name, "seeds": self.seeds,
                "axes": {k: list(v) for k, v in self.axes.items()},
                "base": self.base.to_dict()}

    @classmethod
    def from_dict(cls, d: dict) -> "SweepSpec":
        unknown = set(d) - {"name", "seeds", "axes", "base"}
        if unknown:
            raise ValueError(f"unknown sweep spec keys: {sorted(unknown)}")
        kw = {"axes": {k: tuple(v) for k, v in d["axes"].items()}}
        if "seeds" in d and d["seeds"] is not None:
            kw["seeds"] = int(d["seeds"])
        if "base" in d:
            kw["base"] = ScenarioConfig.from_dict(d["base"])
        if "name" in d:
            kw["name"] = str(d["name"])
        return cls(**kw)

    @classmethod
    def load(cls, path) -> "SweepSpec":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def ramp_flow_sweep(seeds: Optional[int] = None) -> SweepSpec:
    """Saving against ramp flow at mainline 2000 veh/hr/ln, both lane-change modes."""
    return SweepSpec(
        name="ramp_flow",
        axes={"cooperative": (False, True),
              "ramp_flow": tuple(float(q) for q in range(100, 801, 100))},
        seeds=default_seed_count() if seeds is None else seeds,
        base=ScenarioConfig(mainline_flow=2000.0),
    )


def mainline_flow_sweep(seeds: Optional[int] = None) -> SweepSpec:
    """Saving against mainline flow at ramp 200 veh/hr/ln, R2 of 100 m and 50 m."""
    return SweepSpec(
        name="mainline_flow",
        axes={"r2_length": (100.0, 50.0),
              "mainline_flow": (400.0, 800.0, 1200.0, 1600.0, 2000.0, 2400.0, 2800.0, 3000.0)},
        seeds=default_seed_count() if seeds is None else seeds,
        base=ScenarioConfig(ramp_flow=200.0),
    )


PRESETS = {"ramp-flow": ramp_flow_sweep, "mainline-flow": mainline_flow_sweep}


@dataclass(frozen=True)
class PairOutcome:
    """Baseline and treatment summary for one seed of one cell."""

    cell_index: int
    seed: int
    baseline_fuel: float = float("nan")
    treated_fuel: float = float("nan")
    baseline_merges: int = 0
    treated_merges: int = 0
    baseline_failures: int = 0
    treated_failures: int = 0
    baseline_backlog: int = 0
    treated_backlog: int = 0
    error: str = ""

    @property
    def saving(self) -> float:
        return fuel_saving(self.baseline_fuel, self.treated_fuel)


def run_pair(spec: SweepSpec, cell_index: int, seed: int) -> PairOutcome:
    cell = spec.cells()[cell_index]
    try:
        base = run_scenario(spec.config_for(cell, seed, guidance=False))
        treat = run_scenario(spec.config_for(cell, seed, guidance=True))
    except CollisionError as exc:
        return PairOutcome(cell_index, seed, error=f"seed {seed}: {exc}")
    last = lambda r: r.ramp_backlog[-1] if r.ramp_backlog else 0  # noqa: E731
    return PairOutcome(
        cell_index, seed,
        baseline_fuel=base.total_fuel, treated_fuel=treat.total_fuel,
        baseline_merges=base.merge_count, treated_merges=treat.merge_count,
        baseline_failures=base.merge_failures, treated_failures=treat.merge_failures,
        baseline_backlog=last(base), treated_backlog=last(treat),
    )


def _run_pair_task(args):
    return run_pair(*args)


@dataclass
class SweepRow:
    cell: Dict[str, object]
    pairs: List[PairOutcome]

    @property
    def failed(self) -> bool:
        return any(p.error for p in self.pairs)

    @property
    def errors(self) -> List[str]:
        return [p.error for p in self.pairs if p.error]

    @property
    def savings(self) -> np.ndarray:
        return np.array([p.saving for p in self.pairs if not p.error])

    @property
    def mean_saving(self) -> float:
        s = self.savings
        return float(np.mean(s)) if s.size else float("nan")

    def saving_percentile(self, q: float) -> float:
        s = self.savings
        return float(np.percentile(s, q)) if s.size else float("nan")

    def mean_of(self, attr: str) -> float:
        vals = [getattr(p, attr) for p in self.pairs if not p.error]
        return float(np.mean(vals)) if vals else float("nan")


def run_sweep(spec: SweepSpec, jobs: int = 1, order: Optional[Sequence[int]] = None,
              progress: Optional[Callable[[int, int], None]] = None) -> List[SweepRow]:
    """Run every (cell, seed) pair and aggregate into one row per cell.

    ``order`` permutes the cell execution order; the returned table is the
    same for any order and any ``jobs``.
    """
    cells = spec.cells()
    cell_order = list(range(len(cells))) if order is None else list(order)
    if sorted(cell_order) != list(range(len(cells))):
        raise ValueError("order must be a permutation of the cell indices")
    tasks = [(spec, c, seed) for c in cell_order for seed in range(spec.seeds)]
    outcomes: Dict[tuple, PairOutcome] = {}
    if jobs <= 1:
        for k, task in enumerate(tasks, start=1):
            out = _run_pair_task(task)
            outcomes[(out.cell_index, out.seed)] = out
            if progress:
                progress(k, len(tasks))
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            chunk = max(1, len(tasks) // (jobs * 8))
            for k, out in enumerate(pool.map(_run_pair_task, tasks, chunksize=chunk), start=1):
                outcomes[(out.cell_index, out.seed)] = out
                if progress:
                    progress(k, len(tasks))
    return [SweepRow(cell=cells[c], pairs=[outcomes[(c, s)] for s in range(spec.seeds)])
            for c in range(len(cells))]


# ------------------------------------------------------------------ output
SUMMARY_FIELDS = ("seeds", "mean_saving", "p05_saving", "p95_saving", "mean_baseline_fuel_l",
                  "mean_treated_fuel_l", "mean_baseline_merges", "mean_treated_merges",
                  "mean_baseline_failures", "mean_treated_failures",
                  "mean_baseline_backlog", "mean_treated_backlog", "failed")
RUN_FIELDS = ("seed", "baseline_fuel_l", "treated_fuel_l", "saving", "baseline_merges",
              "treated_merges", "baseline_failures", "treated_failures", "baseline_backlog",
              "treated_backlog", "error")


def _fmt(x) -> str:
    if isinstance(x, bool):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    return "nan" if math.isnan(x) else f"{x:.9g}"


def summary_rows(table: Sequence[SweepRow]) -> List[list]:
    axes = list(table[0].cell)
    rows = [axes + list(SUMMARY_FIELDS)]
    for row in table:
        rows.append([_fmt(row.cell[a]) for a in axes] + [
            _fmt(len(row.pairs)), _fmt(row.mean_saving), _fmt(row.saving_percentile(5)),
            _fmt(row.saving_percentile(95)), _fmt(row.mean_of("baseline_fuel")),
            _fmt(row.mean_of("treated_fuel")), _fmt(row.mean_of("baseline_merges")),
            _fmt(row.mean_of("treated_merges")), _fmt(row.mean_of("baseline_failures")),
            _fmt(row.mean_of("treated_failures")), _fmt(row.mean_of("baseline_backlog")),
            _fmt(row.mean_of("treated_backlog")), _fmt(row.failed),
        ])
    return rows


def run_rows(table: Sequence[SweepRow]) -> List[list]:
    axes = list(table[0].cell)
    rows = [axes + list(RUN_FIELDS)]
    for row in table:
        for p in row.pairs:
            saving = float("nan") if p.error else p.saving
            rows.append([_fmt(row.cell[a]) for a in axes] + [
                _fmt(p.seed), _fmt(p.baseline_fuel), _fmt(p.treated_fuel), _fmt(saving),
                _fmt(p.baseline_merges), _fmt(p.treated_merges), _fmt(p.baseline_failures),
                _fmt(p.treated_failures), _fmt(p.baseline_backlog), _fmt(p.treated_backlog),
                p.error,
            ])
    return rows


def _write_csv(path: Path, rows: List[list]) -> None:
    with open(path, "w", newline="") as fh:
        csv.writer(fh, lineterminator="\n").writerows(rows)


def plot_axis(table: Sequence[SweepRow]) -> str:
    """The x axis of the plot: the numeric axis with the most values, else the first axis."""
    axes = list(table[0].cell)
    if not axes:
        raise ValueError("the sweep has no axis to plot against")
    counts = {a: len({r.cell[a] for r in table}) for a in axes}
    numeric = [a for a in axes if a in AXIS_UNITS] or axes[:1]
    return max(numeric, key=lambda a: (counts[a], -axes.index(a)))


def emit_outputs(table: Sequence[SweepRow], out_dir, stem: str = "sweep") -> Dict[str, Path]:
    """Write ``<stem>.csv`` (one row per cell), ``<stem>_runs.csv`` (one row per seed)
    and ``<stem>.svg`` (mean saving with the 5-95 % band against the swept axis)."""
    if not table:
        raise ValueError("cannot emit an empty table")
    from .plotting import plot_sweep

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {"summary": out / f"{stem}.csv", "runs": out / f"{stem}_runs.csv",
             "plot": out / f"{stem}.svg"}
    _write_csv(paths["summary"], summary_rows(table))
    _write_csv(paths["runs"], run_rows(table))
    plot_sweep(table, plot_axis(table), paths["plot"])
    return paths
