"""
VQO Lab - Report Service
Turns a result store into plot-ready CSV series (success rate and mean
evaluations with 95% CI columns), overlap histograms and hardness tables,
with an optional static SVG line plot per series file.
"""

import csv
import logging
import re
from pathlib import Path
from typing import Dict, List, NamedTuple, Optional, Sequence, Tuple, Union

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from models import AggregateResult, InstanceResult
from services.bench import (
    BOOTSTRAP_RESAMPLES,
    CELL_KEYS,
    aggregate,
    bin_by_hardness,
    overlap_histogram,
    spearman_by_bin,
)
from services.errors import ReportPresetError
from services.qubo import density

logger = logging.getLogger(__name__)

METRICS = {
    "success": ("success_rate", "success_lo", "success_hi"),
    "evaluations": ("evaluations_mean", "evaluations_lo", "evaluations_hi"),
}


class SeriesLayout(NamedTuple):
    """x axis, keys that split output files, keys that identify a line."""
    x: str
    files: Tuple[str, ...]
    lines: Tuple[str, ...]


LAYOUTS: Dict[str, SeriesLayout] = {
    "fig2-desk": SeriesLayout("n", ("ansatz",), ("optimizer",)),
    "fig3-desk": SeriesLayout("n", ("ansatz",), ("optimizer",)),
    "fig5-desk": SeriesLayout("density", ("ansatz",), ("n", "cost_label")),
    "fig6-desk": SeriesLayout("density", (), ("ansatz",)),
    "fig7-desk": SeriesLayout("layers", ("edge_count",), ("entanglement",)),
    "fig8-desk": SeriesLayout("density", ("mode",), ("ansatz",)),
    "fig9-desk": SeriesLayout("d_h", (), ("ansatz",)),
    "fig10-desk": SeriesLayout("d_h", (), ("ansatz",)),
    "hardness": SeriesLayout("d_h", ("mode",), ("ansatz",)),
}

HISTOGRAM_PRESETS = ("fig4-desk", "overlap-histogram")
TABLE_PRESETS = ("table1-desk",)
REPORT_PRESETS = tuple(LAYOUTS) + HISTOGRAM_PRESETS + TABLE_PRESETS


# ---------------------------------------------------------------------------
# Helpers
# ---------------------------------------------------------------------------

def _slug(value) -> str:
    return re.sub(r"[^A-Za-z0-9.]+", "-", str(value)).strip("-").lower()


def _write_csv(path: Path, rows: List[Dict], columns: Sequence[str]) -> Path:
    with path.open("w", encoding="utf-8", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=list(columns), extrasaction="ignore", lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow(row)
    return path


def _require(results: Sequence[InstanceResult], column: str, preset: str) -> None:
    if not results:
        raise ReportPresetError(f"preset '{preset}' needs at least one result.")
    if column == "d_h" and any(r.d_h is None for r in results):
        raise ReportPresetError(f"preset '{preset}' needs d_h on every result.")


def _series_rows(
    aggregates: Sequence[AggregateResult],
    layout: SeriesLayout,
    metric: str,
) -> List[Dict]:
    y, lo, hi = METRICS[metric]
    rows = []
    for a in aggregates:
        if a.empty:
            continue
        row = {k: a.group[k] for k in layout.lines}
        row.update({
            layout.x: a.group[layout.x],
            "y": getattr(a, y),
            "y_lo": getattr(a, lo),
            "y_hi": getattr(a, hi),
            "count": a.count,
        })
        rows.append(row)
    rows.sort(key=lambda r: (tuple(str(r[k]) for k in layout.lines), r[layout.x]))
    return rows


def _share_product_origin(members: Sequence[AggregateResult], layout: SeriesLayout) -> List[AggregateResult]:
    """
    On a layers axis, the layer-0 product point is the common start of every
    entangled line: it is copied into each of them and its own line dropped.
    """
    if layout.x != "layers":
        return list(members)
    origins = [a for a in members if a.group["layers"] == 0]
    deep = [a for a in members if a.group["layers"] != 0]
    lines = list(dict.fromkeys(tuple(a.group[k] for k in layout.lines) for a in deep))
    if not origins or not lines:
        return list(members)
    shared = [
        o.model_copy(update={"group": {**o.group, **dict(zip(layout.lines, line))}})
        for line in lines
        for o in origins
    ]
    return deep + shared


def plot_series(rows: List[Dict], layout: SeriesLayout, metric: str, path: Path) -> Path:
    """Static SVG: one line per series with a shaded CI band."""
    fig, ax = plt.subplots(figsize=(8, 5))
    lines: Dict[Tuple, List[Dict]] = {}
    for row in rows:
        lines.setdefault(tuple(row[k] for k in layout.lines), []).append(row)
    for key, points in lines.items():
        xs = [p[layout.x] for p in points]
        label = ", ".join(f"{k}={v}" for k, v in zip(layout.lines, key))
        ax.plot(xs, [p["y"] for p in points], marker="o", label=label)
        ax.fill_between(xs, [p["y_lo"] for p in points], [p["y_hi"] for p in points], alpha=0.2)
    ax.set_xlabel(layout.x)
    ax.set_ylabel(METRICS[metric][0])
    ax.grid(True, alpha=0.3)
    if lines:
        ax.legend(fontsize="small")
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)
    return path


# ---------------------------------------------------------------------------
# Presets
# ---------------------------------------------------------------------------

def series_report(
    results: Sequence[InstanceResult],
    preset: str,
    out_dir: Path,
    svg: bool = False,
    resamples: int = BOOTSTRAP_RESAMPLES,
    seed: int = 0,
) -> List[Path]:
    """Writes `<preset>_<metric>[_<split>].csv` per metric and file split."""
    layout = LAYOUTS[preset]
    _require(results, layout.x, preset)
    keys = tuple(dict.fromkeys((*layout.files, *layout.lines, layout.x)))
    aggregates = aggregate(results, keys=keys, resamples=resamples, seed=seed)

    split: Dict[Tuple, List[AggregateResult]] = {}
    for a in aggregates:
        split.setdefault(tuple(a.group[k] for k in layout.files), []).append(a)
    split = {key: _share_product_origin(members, layout) for key, members in split.items()}

    written: List[Path] = []
    columns = [*layout.lines, layout.x, "y", "y_lo", "y_hi", "count"]
    for file_key, members in split.items():
        suffix = "".join(f"_{_slug(v)}" for v in file_key)
        for metric in METRICS:
            rows = _series_rows(members, layout, metric)
            path = _write_csv(out_dir / f"{preset}_{metric}{suffix}.csv", rows, columns)
            written.append(path)
            if svg:
                written.append(plot_series(rows, layout, metric, path.with_suffix(".svg")))

    if layout.x == "d_h":
        for a_key, members in split.items():
            for line in {tuple(a.group[k] for k in layout.lines) for a in members}:
                subset = [a for a in members if tuple(a.group[k] for k in layout.lines) == line]
                rho, _ = spearman_by_bin(subset, x_key="d_h")
                logger.info("Spearman(d_H, success) for %s %s: %.3f", a_key, line, rho)
    return written


def histogram_report(results: Sequence[InstanceResult], preset: str, out_dir: Path) -> List[Path]:
    """Ten-bin overlap distribution per cell."""
    _require(results, "overlap", preset)
    keys = ("n", "edge_count", "ansatz", "cost_label", "mode", "optimizer")
    rows = overlap_histogram(results, bins=10, keys=keys)
    columns = [*keys, "bin_lo", "bin_hi", "count", "fraction"]
    return [_write_csv(out_dir / f"{preset}_overlap.csv", rows, columns)]


def table_report(
    results: Sequence[InstanceResult],
    preset: str,
    out_dir: Path,
    resamples: int = BOOTSTRAP_RESAMPLES,
    seed: int = 0,
) -> List[Path]:
    """Success and evaluations per (mode, ansatz) across hardness bins A/B/C."""
    _require(results, "d_h", preset)
    keys = ("mode", "ansatz")
    aggregates = bin_by_hardness(results, keys=keys, resamples=resamples, seed=seed)
    rows = []
    for a in aggregates:
        row = {**a.group, "count": a.count, "empty": a.empty}
        for metric, (y, lo, hi) in METRICS.items():
            row.update({metric: getattr(a, y), f"{metric}_lo": getattr(a, lo), f"{metric}_hi": getattr(a, hi)})
        rows.append(row)
    columns = [
        *keys, "hardness_bin", "d_h_range", "count", "empty",
        "success", "success_lo", "success_hi",
        "evaluations", "evaluations_lo", "evaluations_hi",
    ]
    return [_write_csv(out_dir / f"{preset}_table.csv", rows, columns)]


def build_report(
    results: Sequence[InstanceResult],
    preset: str,
    out_dir: Union[str, Path],
    svg: bool = False,
    resamples: int = BOOTSTRAP_RESAMPLES,
    seed: int = 0,
) -> List[Path]:
    """
    Emits the data files of one report preset.

    Raises:
        ReportPresetError: unknown preset or results missing a needed column.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if preset in LAYOUTS:
        paths = series_report(results, preset, out, svg=svg, resamples=resamples, seed=seed)
    elif preset in HISTOGRAM_PRESETS:
        paths = histogram_report(results, preset, out)
    elif preset in TABLE_PRESETS:
        paths = table_report(results, preset, out, resamples=resamples, seed=seed)
    else:
        raise ReportPresetError(f"unknown report preset '{preset}'; choose from {', '.join(REPORT_PRESETS)}")
    logger.info("Report '%s': wrote %d file(s) to %s.", preset, len(paths), out)
    return paths


# ---------------------------------------------------------------------------
# Console summary
# ---------------------------------------------------------------------------

def summary_table(aggregates: Sequence[AggregateResult], keys: Sequence[str] = CELL_KEYS) -> str:
    """Fixed-width table: one line per group with success and evaluations CIs."""
    header = [*keys, "count", "success [95% CI]", "evaluations [95% CI]"]
    body = []
    for a in aggregates:
        cells = [str(a.group.get(k, "")) for k in keys] + [str(a.count)]
        if a.empty:
            cells += ["(empty)", "(empty)"]
        else:
            cells += [
                f"{a.success_rate:.3f} [{a.success_lo:.3f}, {a.success_hi:.3f}]",
                f"{a.evaluations_mean:.1f} [{a.evaluations_lo:.1f}, {a.evaluations_hi:.1f}]",
            ]
        body.append(cells)
    widths = [max(len(row[i]) for row in [header, *body]) for i in range(len(header))]
    lines = ["  ".join(cell.ljust(w) for cell, w in zip(row, widths)).rstrip() for row in [header, *body]]
    return "\n".join(lines)


def hardness_rows(reports, instances, dh_min: Optional[float] = None, dh_max: Optional[float] = None) -> List[Dict]:
    """(seed, density, ground energy, degeneracies, d_H) rows, filtered to [dh_min, dh_max]."""
    rows = []
    for inst, report in zip(instances, reports):
        d_h = report.min_hamming_distance
        if dh_min is not None and d_h < dh_min:
            continue
        if dh_max is not None and d_h > dh_max:
            continue
        rows.append({
            "seed": inst.seed,
            "n": inst.n,
            "edge_count": inst.edge_count,
            "density": float(density(inst)) if inst.n > 1 else 0.0,
            "ground_energy": report.ground_energy,
            "ground_degeneracy": len(report.ground_manifold),
            "first_excited_energy": report.first_excited_energy,
            "first_excited_degeneracy": len(report.first_excited_manifold),
            "d_h": d_h,
        })
    return rows
