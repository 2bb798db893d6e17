"""
VQO Lab - Benchmark Service
Runs experiment sweeps over instance ensembles, scores each run against the
exact ground manifold, aggregates success rates and evaluation counts with
bootstrap confidence intervals, and persists the result store.

Determinism contract: an (ExperimentSpec, master_seed) pair fixes every
number in the store. Seeds come from a counter-based mix, each task owns its
generator, and the collector restores (cell, instance) order no matter how
the worker pool schedules tasks.
"""

import bisect
import csv
import hashlib
import json
import logging
import os
import time
from concurrent.futures import ProcessPoolExecutor, as_completed
from functools import lru_cache
from itertools import product
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import stats

from models import (
    AggregateResult,
    BatchResult,
    EntanglementKind,
    ExperimentCell,
    ExperimentSpec,
    FailureRecord,
    GraphKind,
    InstanceResult,
    QuboInstance,
    SpectrumReport,
)
from services.cost import cost_label, make_cost_function, overlap_with_ground, success
from services.errors import InstanceRunError
from services.optim import minimize
from services.qubo import brute_force_spectrum, density, edges_for_density, generate_instance
from services.simulator import build_ansatz, init_params

logger = logging.getLogger(__name__)

# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------

DEFAULT_WORKERS = int(os.getenv("VQO_WORKERS", "1"))
BOOTSTRAP_RESAMPLES = int(os.getenv("VQO_BOOTSTRAP_RESAMPLES", "10000"))
MIN_RESAMPLES = 1000
CONFIDENCE_LEVEL = 0.95

# Half-open hardness bins: A = [0, 0.35), B = [0.35, 0.75), C = [0.75, 1].
HARDNESS_EDGES: Tuple[float, ...] = (0.35, 0.75)

CELL_KEYS: Tuple[str, ...] = (
    "n", "edge_count", "graph_kind", "ansatz", "cost_label", "rho", "mode", "optimizer",
)

CSV_COLUMNS: Tuple[str, ...] = (
    "cell_index", "instance_index", "n", "edge_count", "graph_kind", "ansatz",
    "entanglement", "layers", "rho", "cost_label", "mode", "optimizer",
    "instance_seed", "solver_seed", "density", "d_h", "beta", "success",
    "overlap", "evaluations", "final_cost", "terminated_by", "wall_time",
)

_MASK64 = (1 << 64) - 1


# ---------------------------------------------------------------------------
# Seeds
# ---------------------------------------------------------------------------

def _splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def _tag_hash(tag: str) -> int:
    return int.from_bytes(hashlib.blake2b(tag.encode("utf-8"), digest_size=8).digest(), "little")


def mix_seed(master_seed: int, tag: str, cell_index: int, instance_index: int) -> int:
    """
    Counter-based 64-bit seed. Each stage XORs in one coordinate and applies
    the SplitMix64 finalizer (a bijection on 64-bit words), so distinct
    instance indices under the same (master, tag, cell) never collide.
    """
    state = _splitmix64(master_seed & _MASK64)
    state = _splitmix64(state ^ _tag_hash(tag))
    state = _splitmix64(state ^ (cell_index & _MASK64))
    return _splitmix64(state ^ (instance_index & _MASK64))


# ---------------------------------------------------------------------------
# Cells
# ---------------------------------------------------------------------------

def _edge_counts_for(spec: ExperimentSpec, n: int) -> List[int]:
    if spec.edge_counts is not None:
        return list(spec.edge_counts)
    counts = []
    for target in spec.densities:
        edges = edges_for_density(n, target)
        realized = 2 * edges / (n * (n - 1))
        if abs(realized - target) > 1e-12:
            logger.info(
                "Density %.4f is not realizable for n=%d; using %d edges (density %.4f).",
                target, n, edges, realized,
            )
        counts.append(edges)
    return counts


def instance_groups(spec: ExperimentSpec) -> List[Tuple[int, int]]:
    """Ordered (n, edge_count) pairs; instances are shared by all cells of a group."""
    groups: List[Tuple[int, int]] = []
    for n in spec.n_qubits:
        for edges in _edge_counts_for(spec, n):
            if (n, edges) not in groups:
                groups.append((n, edges))
    return groups


def _optimizers_for(spec: ExperimentSpec, mode) -> List:
    if mode != "exact" and spec.shot_optimizers is not None:
        return list(spec.shot_optimizers)
    return list(spec.optimizers)


def cells(spec: ExperimentSpec) -> List[ExperimentCell]:
    """
    Cartesian product of the sweep lists. Layer count 0 always means the
    product state, so it yields a single cell regardless of the entanglement
    list, and 'none' is skipped for L > 0.
    """
    resolved: List[ExperimentCell] = []
    for (n, edges), layers in product(instance_groups(spec), spec.layers):
        kinds = [EntanglementKind.NONE] if layers == 0 else [
            k for k in spec.entanglements if k != EntanglementKind.NONE
        ]
        for kind, rho, mode in product(kinds, spec.rho, spec.evaluation_modes):
            for optimizer in _optimizers_for(spec, mode):
                resolved.append(ExperimentCell(
                    index=len(resolved),
                    n=n,
                    edge_count=edges,
                    graph_kind=spec.graph_kind,
                    entanglement=kind,
                    layers=layers,
                    rho=rho,
                    shots=None if mode == "exact" else int(mode),
                    optimizer=optimizer,
                    beta=spec.beta,
                    perturbation=spec.perturbation,
                    init_mode=spec.init_mode,
                ))
    return resolved


# ---------------------------------------------------------------------------
# Single run
# ---------------------------------------------------------------------------

@lru_cache(maxsize=512)
def _prepared(n: int, edge_count: int, kind: GraphKind, seed: int) -> Tuple[QuboInstance, SpectrumReport]:
    inst = generate_instance(n, edge_count, kind, seed)
    return inst, brute_force_spectrum(inst)


def run_instance(
    inst: QuboInstance,
    cell: ExperimentCell,
    seed: int,
    report: Optional[SpectrumReport] = None,
    instance_index: int = 0,
) -> InstanceResult:
    """
    One full variational run: ansatz, initial angles, optimizer against the
    configured cost, and the ground-manifold overlap of the best state.

    Raises:
        InstanceRunError: any failure, tagged with the instance seed.
    """
    started = time.perf_counter()
    try:
        report = report if report is not None else brute_force_spectrum(inst)
        rng = np.random.default_rng(seed)
        spec = build_ansatz(inst, cell.entanglement, cell.layers, rng=rng)
        params0 = init_params(spec, cell.perturbation, cell.init_mode, rng=rng)
        cost = make_cost_function(inst, spec, cell.cost_config, rng=rng)
        trace = minimize(cost, params0, cell.optimizer, rng=rng, shots=cell.shots)
        overlap = min(1.0, overlap_with_ground(cost.state(np.asarray(trace.best_params)), report))

        return InstanceResult(
            cell_index=cell.index,
            instance_index=instance_index,
            n=inst.n,
            edge_count=inst.edge_count,
            graph_kind=inst.graph_kind,
            ansatz=spec.label,
            entanglement=spec.entanglement,
            layers=spec.layers,
            rho=cell.rho,
            cost_label=cost_label(cell.rho),
            mode=cell.mode_label,
            optimizer=cell.optimizer.kind,
            instance_seed=inst.seed,
            solver_seed=seed,
            density=float(density(inst)) if inst.n >= 2 else 0.0,
            d_h=report.min_hamming_distance,
            beta=cell.beta,
            success=success(overlap, cell.beta),
            overlap=overlap,
            evaluations=trace.evaluations,
            final_cost=trace.best_cost,
            terminated_by=trace.terminated_by,
            wall_time=time.perf_counter() - started,
        )
    except Exception as exc:
        raise InstanceRunError(inst.seed, exc) from exc


Task = Tuple[ExperimentCell, int, int, int]


def _run_task(task: Task) -> Union[InstanceResult, FailureRecord]:
    cell, instance_index, instance_seed, solver_seed = task
    try:
        try:
            inst, report = _prepared(cell.n, cell.edge_count, cell.graph_kind, instance_seed)
        except Exception as exc:
            raise InstanceRunError(instance_seed, exc) from exc
        return run_instance(inst, cell, solver_seed, report=report, instance_index=instance_index)
    except InstanceRunError as exc:
        return FailureRecord(
            cell_index=cell.index,
            instance_index=instance_index,
            instance_seed=instance_seed,
            error_type=type(exc.cause).__name__,
            message=str(exc),
        )


# ---------------------------------------------------------------------------
# Batch
# ---------------------------------------------------------------------------

def batch_tasks(spec: ExperimentSpec) -> List[Task]:
    """
    (cell, instance index, instance seed, solver seed) for every run.
    Instance seeds depend only on the (n, edge_count) group, so cells that
    differ in solver settings see the same instances.
    """
    groups = instance_groups(spec)
    tasks: List[Task] = []
    for cell in cells(spec):
        group = groups.index((cell.n, cell.edge_count))
        for i in range(spec.n_instances):
            tasks.append((
                cell,
                i,
                mix_seed(spec.master_seed, f"{spec.name}/instance", group, i),
                mix_seed(spec.master_seed, f"{spec.name}/solver", cell.index, i),
            ))

    instance_seeds = {(groups.index((c.n, c.edge_count)), i): s for c, i, s, _ in tasks}
    solver_seeds = [t[3] for t in tasks]
    assert len(set(instance_seeds.values())) == len(instance_seeds), "instance seed collision"
    assert len(set(solver_seeds)) == len(solver_seeds), "solver seed collision"
    return tasks


def run_batch(spec: ExperimentSpec, workers: int = DEFAULT_WORKERS) -> BatchResult:
    """
    Executes every (cell, instance) task. Failures are quarantined as
    FailureRecords and never abort the batch. Output is ordered by
    (cell index, instance index) independently of the worker count.
    """
    tasks = batch_tasks(spec)
    logger.info(
        "Batch '%s': %d cells x %d instances = %d runs on %d worker(s).",
        spec.name, len(tasks) // max(spec.n_instances, 1), spec.n_instances, len(tasks), workers,
    )
    started = time.perf_counter()
    outcomes: Dict[Tuple[int, int], Union[InstanceResult, FailureRecord]] = {}

    if workers <= 1:
        for task in tasks:
            outcomes[(task[0].index, task[1])] = _run_task(task)
    else:
        try:
            with ProcessPoolExecutor(max_workers=workers) as executor:
                futures = {executor.submit(_run_task, task): (task[0].index, task[1]) for task in tasks}
                for future in as_completed(futures):
                    outcomes[futures[future]] = future.result()
        except (PermissionError, OSError) as exc:
            logger.warning("Process pool unavailable (%s); running serially.", exc)
            for task in tasks:
                outcomes[(task[0].index, task[1])] = _run_task(task)

    results: List[InstanceResult] = []
    failures: List[FailureRecord] = []
    for key in sorted(outcomes):
        outcome = outcomes[key]
        if isinstance(outcome, FailureRecord):
            logger.warning("Quarantined run cell=%d instance=%d: %s", key[0], key[1], outcome.message)
            failures.append(outcome)
        else:
            results.append(outcome)

    logger.info(
        "Batch '%s' finished in %.1fs: %d results, %d failures.",
        spec.name, time.perf_counter() - started, len(results), len(failures),
    )
    return BatchResult(spec=spec, results=results, failures=failures)


# ---------------------------------------------------------------------------
# Statistics
# ---------------------------------------------------------------------------

def bootstrap_ci(
    values: Sequence[float],
    level: float = CONFIDENCE_LEVEL,
    resamples: int = BOOTSTRAP_RESAMPLES,
    rng: Optional[np.random.Generator] = None,
) -> Tuple[float, float, float]:
    """
    Percentile bootstrap of the mean: (lo, point, hi).

    Raises:
        ValueError: fewer than 2 values or fewer than 1000 resamples.
    """
    arr = np.asarray(values, dtype=np.float64)
    if arr.size < 2:
        raise ValueError(f"bootstrap needs at least 2 values, got {arr.size}")
    if resamples < MIN_RESAMPLES:
        raise ValueError(f"bootstrap needs at least {MIN_RESAMPLES} resamples, got {resamples}")
    rng = rng if rng is not None else np.random.default_rng(0)

    point = float(arr.mean())
    idx = rng.integers(0, arr.size, size=(resamples, arr.size))
    means = arr[idx].mean(axis=1)
    tail = (1.0 - level) / 2.0
    lo = float(np.quantile(means, tail))
    hi = float(np.quantile(means, 1.0 - tail))
    return min(lo, point), point, max(hi, point)


def _key_value(value):
    return value.value if hasattr(value, "value") else value


def _group_of(result: InstanceResult, keys: Sequence[str]) -> Tuple:
    return tuple(_key_value(getattr(result, k)) for k in keys)


def _summarize(
    group: Dict,
    members: Sequence[InstanceResult],
    resamples: int,
    seed: int,
) -> AggregateResult:
    if not members:
        return AggregateResult(group=group, count=0, empty=True)
    successes = [r.success for r in members]
    evaluations = [r.evaluations for r in members]
    if len(members) == 1:
        s_lo = s = s_hi = float(successes[0])
        e_lo = e = e_hi = float(evaluations[0])
    else:
        rng = np.random.default_rng(seed)
        s_lo, s, s_hi = bootstrap_ci(successes, resamples=resamples, rng=rng)
        e_lo, e, e_hi = bootstrap_ci(evaluations, resamples=resamples, rng=rng)
    return AggregateResult(
        group=group,
        count=len(members),
        success_rate=s, success_lo=s_lo, success_hi=s_hi,
        evaluations_mean=e, evaluations_lo=e_lo, evaluations_hi=e_hi,
    )


def aggregate(
    results: Iterable[InstanceResult],
    keys: Sequence[str] = CELL_KEYS,
    resamples: int = BOOTSTRAP_RESAMPLES,
    seed: int = 0,
) -> List[AggregateResult]:
    """Groups results by `keys` (first-seen order) and summarizes each group."""
    grouped: Dict[Tuple, List[InstanceResult]] = {}
    for r in results:
        grouped.setdefault(_group_of(r, keys), []).append(r)
    return [
        _summarize(dict(zip(keys, key)), members, resamples, mix_seed(seed, "aggregate", k, 0))
        for k, (key, members) in enumerate(grouped.items())
    ]


def hardness_bin(d_h: float, edges: Sequence[float] = HARDNESS_EDGES) -> str:
    return chr(ord("A") + bisect.bisect_right(list(edges), d_h))


def _bin_range(index: int, edges: Sequence[float]) -> str:
    bounds = [0.0, *edges, 1.0]
    closing = "]" if index == len(edges) else ")"
    return f"[{bounds[index]:g}, {bounds[index + 1]:g}{closing}"


def bin_by_hardness(
    results: Iterable[InstanceResult],
    edges: Sequence[float] = HARDNESS_EDGES,
    keys: Sequence[str] = (),
    resamples: int = BOOTSTRAP_RESAMPLES,
    seed: int = 0,
) -> List[AggregateResult]:
    """
    Aggregates per hardness bin (and optionally per `keys` group). Every bin
    is reported for every group; bins with no results carry `empty=True`.
    """
    results = list(results)
    if any(r.d_h is None for r in results):
        raise ValueError("every result needs d_h to be binned by hardness")

    labels = [chr(ord("A") + k) for k in range(len(edges) + 1)]
    grouped: Dict[Tuple, Dict[str, List[InstanceResult]]] = {}
    for r in results:
        bins = grouped.setdefault(_group_of(r, keys), {label: [] for label in labels})
        bins[hardness_bin(r.d_h, edges)].append(r)

    aggregates: List[AggregateResult] = []
    for key, bins in grouped.items():
        for k, label in enumerate(labels):
            group = {**dict(zip(keys, key)), "hardness_bin": label, "d_h_range": _bin_range(k, edges)}
            aggregates.append(
                _summarize(group, bins[label], resamples, mix_seed(seed, "hardness", len(aggregates), 0))
            )
    return aggregates


def overlap_histogram(
    results: Iterable[InstanceResult],
    bins: int = 10,
    keys: Sequence[str] = CELL_KEYS,
) -> List[Dict]:
    """Distribution of final overlaps in `bins` equal bins over [0, 1] per group."""
    grouped: Dict[Tuple, np.ndarray] = {}
    for r in results:
        counts = grouped.setdefault(_group_of(r, keys), np.zeros(bins, dtype=np.int64))
        counts[min(int(r.overlap * bins), bins - 1)] += 1

    rows: List[Dict] = []
    for key, counts in grouped.items():
        total = int(counts.sum())
        for b in range(bins):
            rows.append({
                **dict(zip(keys, key)),
                "bin_lo": b / bins,
                "bin_hi": (b + 1) / bins,
                "count": int(counts[b]),
                "fraction": counts[b] / total,
            })
    return rows


def spearman_by_bin(aggregates: Sequence[AggregateResult], x_key: str = "d_h") -> Tuple[float, float]:
    """Rank correlation of a numeric group key with the success rate (empty groups skipped)."""
    points = [(a.group[x_key], a.success_rate) for a in aggregates if not a.empty]
    if len(points) < 2:
        return float("nan"), float("nan")
    xs, ys = zip(*points)
    result = stats.spearmanr(xs, ys)
    return float(result.statistic), float(result.pvalue)


# ---------------------------------------------------------------------------
# Result store
# ---------------------------------------------------------------------------

def _csv_row(r: InstanceResult) -> Dict:
    row = r.model_dump(mode="json")
    row["wall_time"] = f"{r.wall_time:.6f}"
    return row


def write_store(
    batch: BatchResult,
    out_dir: Union[str, Path],
    aggregates: Optional[List[AggregateResult]] = None,
) -> List[Path]:
    """
    Writes results.ndjson (deterministic fields only), wall_time.csv,
    results.csv, aggregates.json, failures.json and spec.resolved.json.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    aggregates = aggregates if aggregates is not None else aggregate(batch.results, seed=batch.spec.master_seed)

    paths = {
        "results": out / "results.ndjson",
        "wall_time": out / "wall_time.csv",
        "csv": out / "results.csv",
        "aggregates": out / "aggregates.json",
        "failures": out / "failures.json",
        "spec": out / "spec.resolved.json",
    }

    with paths["results"].open("w", encoding="utf-8") as f:
        for r in batch.results:
            f.write(r.model_dump_json() + "\n")

    with paths["wall_time"].open("w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["cell_index", "instance_index", "wall_time"])
        for r in batch.results:
            writer.writerow([r.cell_index, r.instance_index, f"{r.wall_time:.6f}"])

    with paths["csv"].open("w", encoding="utf-8", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=list(CSV_COLUMNS), extrasaction="ignore", lineterminator="\n")
        writer.writeheader()
        for r in batch.results:
            writer.writerow(_csv_row(r))

    paths["aggregates"].write_text(
        json.dumps([a.model_dump(mode="json") for a in aggregates], indent=2) + "\n", encoding="utf-8"
    )
    paths["failures"].write_text(
        json.dumps([f.model_dump(mode="json") for f in batch.failures], indent=2) + "\n", encoding="utf-8"
    )
    paths["spec"].write_text(batch.spec.model_dump_json(indent=2) + "\n", encoding="utf-8")

    logger.info("Wrote result store (%d results) to %s.", len(batch.results), out)
    return list(paths.values())


def read_results(store: Union[str, Path]) -> List[InstanceResult]:
    """Loads results.ndjson from a store directory (or the file itself)."""
    path = Path(store)
    if path.is_dir():
        path = path / "results.ndjson"
    with path.open(encoding="utf-8") as f:
        return [InstanceResult.model_validate_json(line) for line in f if line.strip()]


def read_spec(store: Union[str, Path]) -> ExperimentSpec:
    return ExperimentSpec.model_validate_json((Path(store) / "spec.resolved.json").read_text(encoding="utf-8"))
