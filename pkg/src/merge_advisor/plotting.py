"""SVG line plots of sweep results, byte-stable across runs."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

AXIS_LABELS = {
    "ramp_flow": "ramp flow (veh/hr/ln)",
    "mainline_flow": "mainline flow (veh/hr/ln)",
    "r2_length": "R2 length (m)",
    "r3_length": "R3 length (m)",
    "r2_entry_speed": "R2 entry speed (m/s)",
}

STYLE = {
    "font.family": "sans-serif",
    "font.sans-serif": ["DejaVu Sans"],
    "font.size": 9,
    "axes.labelsize": 10,
    "legend.fontsize": 8,
    "lines.linewidth": 1.4,
    "lines.markersize": 4,
    "figure.figsize": (5.0, 3.2),
    "svg.hashsalt": "merge-advisor",
    "svg.fonttype": "path",
}


def _series_label(cell: dict, x_axis: str) -> str:
    parts = []
    for k, v in cell.items():
        if k == x_axis:
            continue
        if isinstance(v, bool):
            parts.append(k.replace("_", " ") if v else f"non-{k.replace('_', ' ')}")
        else:
            parts.append(f"{k.replace('_', ' ')} = {v:g}")
    return ", ".join(parts) or "guidance"


def plot_sweep(table, x_axis: str, path) -> None:
    series = {}
    for row in table:
        label = _series_label(row.cell, x_axis)
        series.setdefault(label, []).append(row)
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        for label, rows in series.items():
            rows = sorted(rows, key=lambda r: r.cell[x_axis])
            x = np.array([float(r.cell[x_axis]) for r in rows])
            mean = np.array([r.mean_saving for r in rows])
            lo = np.array([r.saving_percentile(5) for r in rows])
            hi = np.array([r.saving_percentile(95) for r in rows])
            line, = ax.plot(x, mean, marker="o", label=label)
            ax.fill_between(x, lo, hi, color=line.get_color(), alpha=0.18, linewidth=0)
        ax.axhline(0.0, color="0.5", linewidth=0.6)
        ax.set_xlabel(AXIS_LABELS.get(x_axis, x_axis))
        ax.set_ylabel("fuel saving (fraction)")
        ax.legend(frameon=False)
        fig.tight_layout()
        fig.savefig(path, format="svg", metadata={"Date": None, "Creator": None})
        plt.close(fig)
