"""
VQO Lab - Command-line Entry Point

Run with:
    python main.py gen --n 12 --edges 17 --count 5 --seed 7 --out instances/
    python main.py solve instances/instance_000.json --layers 1 --ansatz linear --rho 0.1
    python main.py bench --preset fig5-desk --out runs/fig5 --workers 8
    python main.py hardness instances/*.json --dh-min 0.8
    python main.py report runs/fig5 --preset fig5-desk --out runs/fig5/report --svg

Subcommands:
    gen       random QUBO instances + manifest
    solve     one variational optimization on one instance
    bench     experiment sweep from a preset or a JSON/TOML spec file
    hardness  exact spectrum and ground/first-excited Hamming distance per instance
    report    plot-ready CSV series (and optional SVG) from a result store

Exit codes: 0 success, 1 error, 2 usage error, 3 solve finished but missed the
success cut-off.
"""

import argparse
import csv
import json
import logging
import os
import sys
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

from dotenv import load_dotenv

# ---------------------------------------------------------------------------
# Bootstrap
# ---------------------------------------------------------------------------

# Service modules read their tunables at import time.
load_dotenv()

import numpy as np  # noqa: E402
from pydantic import ValidationError  # noqa: E402

from models import (  # noqa: E402
    CliConfig,
    CostConfig,
    EntanglementKind,
    EvaluationMode,
    ExperimentSpec,
    GraphKind,
    OptimizerConfig,
    OptimizerKind,
)
from services.bench import DEFAULT_WORKERS, aggregate, mix_seed, run_batch, write_store, read_results, read_spec  # noqa: E402
from services.cost import cost_label, make_cost_function, overlap_with_ground, repetition_bound, success  # noqa: E402
from services.errors import SpecValidationError, VqoError  # noqa: E402
from services.optim import minimize, trace_to_json  # noqa: E402
from services.presets import PRESETS, preset  # noqa: E402
from services.qubo import (  # noqa: E402
    brute_force_spectrum,
    density,
    edges_for_density,
    generate_instance,
    load_instance,
    save_instance,
)
from services.report import REPORT_PRESETS, build_report, hardness_rows, summary_table  # noqa: E402
from services.simulator import ProductState, build_ansatz, init_params  # noqa: E402

LOG_FORMAT = "%(asctime)s | %(levelname)-8s | %(name)s | %(message)s"
logger = logging.getLogger("vqolab.main")

# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------

APP_VERSION = "1.0.0"
DEFAULT_LOG_LEVEL = os.getenv("VQO_LOG_LEVEL", "WARNING").upper()
EXIT_OK, EXIT_ERROR, EXIT_UNSUCCESSFUL = 0, 1, 3
TOP_BITSTRINGS = 3


def configure_logging(verbosity: int, quiet: bool = False) -> None:
    if quiet:
        level = logging.ERROR
    elif verbosity >= 2:
        level = logging.DEBUG
    elif verbosity == 1:
        level = logging.INFO
    else:
        level = getattr(logging, DEFAULT_LOG_LEVEL, logging.WARNING)
    logging.basicConfig(level=level, format=LOG_FORMAT, datefmt="%Y-%m-%dT%H:%M:%S", stream=sys.stderr, force=True)


# ---------------------------------------------------------------------------
# Shared helpers
# ---------------------------------------------------------------------------

def _bitstring(index: int, n: int) -> str:
    """Variable 0 first."""
    return format(index, f"0{n}b")[::-1]


def _resolve_edges(n: int, edges: Optional[int], target: Optional[float]) -> int:
    if edges is not None:
        return edges
    if target is None:
        raise ValueError("give either --edges or --density")
    resolved = edges_for_density(n, target)
    max_edges = n * (n - 1) // 2
    print(f"density {target} -> {resolved} edges (nearest realizable: {resolved}/{max_edges})")
    return resolved


def _parse_value(raw: str) -> Any:
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        return raw


def apply_override(document: Dict[str, Any], key: str, raw: str) -> None:
    """Sets a dotted key (list indices allowed) in a raw spec document."""
    parts = key.strip().split(".")
    target: Any = document
    for part in parts[:-1]:
        if isinstance(target, list):
            target = target[int(part)]
        else:
            target = target.setdefault(part, {})
    last = parts[-1]
    if isinstance(target, list):
        target[int(last)] = _parse_value(raw)
    else:
        target[last] = _parse_value(raw)


def load_spec_document(path: Path) -> Dict[str, Any]:
    text = path.read_text(encoding="utf-8")
    if path.suffix.lower() == ".toml":
        return tomllib.loads(text)
    return json.loads(text)


def resolve_experiment(
    spec_file: Optional[str],
    preset_name: Optional[str],
    overrides: Sequence[str],
    instances: Optional[int] = None,
    master_seed: Optional[int] = None,
) -> ExperimentSpec:
    """
    Builds the raw spec document, applies --set overrides, then validates.

    Raises:
        SpecValidationError: the document violates the ExperimentSpec schema.
    """
    if spec_file:
        document = load_spec_document(Path(spec_file))
    else:
        document = preset(preset_name).model_dump(mode="json")
    if instances is not None:
        document["n_instances"] = instances
    if master_seed is not None:
        document["master_seed"] = master_seed
    for item in overrides:
        key, raw = item.split("=", 1)
        apply_override(document, key, raw)
    try:
        return ExperimentSpec.model_validate(document)
    except ValidationError as exc:
        first = exc.errors()[0]
        location = ".".join(str(p) for p in first["loc"]) or "<root>"
        raise SpecValidationError(f"spec invalid at '{location}': {first['msg']}") from exc


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def cmd_gen(args: argparse.Namespace, config: CliConfig) -> int:
    edges = _resolve_edges(args.n, args.edges, args.density)
    out = Path(config.output_path)
    out.mkdir(parents=True, exist_ok=True)

    manifest = []
    for k in range(args.count):
        seed = mix_seed(config.master_seed, "gen", 0, k)
        inst = generate_instance(args.n, edges, args.kind, seed)
        path = save_instance(inst, out / f"instance_{k:03d}.json")
        manifest.append({
            "file": path.name,
            "seed": seed,
            "n": inst.n,
            "edge_count": inst.edge_count,
            "density": float(density(inst)) if inst.n > 1 else 0.0,
        })
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    logger.info("Generated %d instance(s) in %s.", args.count, out)
    print(f"wrote {args.count} instance(s) and manifest.json to {out}")
    return EXIT_OK


def cmd_solve(args: argparse.Namespace, config: CliConfig) -> int:
    inst = load_instance(config.input_paths[0])
    report = brute_force_spectrum(inst)
    rng = np.random.default_rng(config.master_seed)

    kind = args.ansatz or (EntanglementKind.NONE if args.layers == 0 else EntanglementKind.LINEAR)
    spec = build_ansatz(inst, kind, args.layers, rng=rng)
    params0 = init_params(spec, args.perturbation)
    if args.shots is None:
        cfg = CostConfig(rho=args.rho)
    else:
        cfg = CostConfig(rho=args.rho, mode=EvaluationMode.SHOTS, shots=args.shots)
    opt = OptimizerConfig(kind=args.optimizer, max_iterations=args.max_iterations)
    cost = make_cost_function(inst, spec, cfg, rng=rng)
    trace = minimize(cost, params0, opt, rng=rng, shots=args.shots)

    state = cost.state(np.asarray(trace.best_params))
    overlap = min(1.0, overlap_with_ground(state, report))
    solved = success(overlap, args.beta)

    if isinstance(state, ProductState):
        best = [int(np.dot(state.p_one > 0.5, 1 << np.arange(inst.n)))]
    else:
        probs = state.probabilities()
        best = [int(i) for i in np.argsort(-probs, kind="stable")[:TOP_BITSTRINGS]]

    print(f"algorithm      : {cost_label(args.rho)} (rho={args.rho})")
    print(f"ansatz         : {spec.label}")
    print(f"mode           : {cfg.mode.value}" + (f" ({args.shots} shots)" if args.shots else ""))
    print(f"optimizer      : {opt.kind.value} ({trace.terminated_by.value})")
    print(f"best bitstrings: {', '.join(_bitstring(b, inst.n) for b in best)}")
    print(f"ground energy  : {report.ground_energy} (degeneracy {len(report.ground_manifold)})")
    print(f"final cost     : {trace.best_cost:.6f}")
    print(f"overlap        : {overlap:.6f} (beta={args.beta}, success={solved})")
    print(f"P(hit in 100)  : >= {repetition_bound(overlap, 100):.5f}")
    print(f"evaluations    : {trace.evaluations}")

    if args.trace:
        Path(args.trace).write_text(trace_to_json(trace, opt, args.downsample), encoding="utf-8")
    if args.dump_state and not isinstance(state, ProductState):
        state.dump(args.dump_state)
    elif args.dump_state:
        state.to_statevector().dump(args.dump_state)
    return EXIT_OK if solved else EXIT_UNSUCCESSFUL


def cmd_bench(args: argparse.Namespace, config: CliConfig) -> int:
    spec = resolve_experiment(config.spec_file, args.preset, config.overrides, args.instances, args.master_seed)
    batch = run_batch(spec, workers=config.workers)
    aggregates = aggregate(batch.results, seed=spec.master_seed)
    write_store(batch, config.output_path, aggregates)

    print(summary_table(aggregates))
    print(f"\n{len(batch.results)} result(s), {len(batch.failures)} failure(s); store: {config.output_path}")
    return EXIT_OK


def cmd_hardness(args: argparse.Namespace, config: CliConfig) -> int:
    if config.input_paths:
        instances = [load_instance(p) for p in config.input_paths]
    else:
        edges = _resolve_edges(args.n, args.edges, args.density)
        instances = [
            generate_instance(args.n, edges, args.kind, mix_seed(config.master_seed, "gen", 0, k))
            for k in range(args.count)
        ]
    reports = [brute_force_spectrum(inst, workers=config.workers) for inst in instances]
    rows = hardness_rows(reports, instances, dh_min=args.dh_min, dh_max=args.dh_max)

    columns = list(rows[0]) if rows else [
        "seed", "n", "edge_count", "density", "ground_energy", "ground_degeneracy",
        "first_excited_energy", "first_excited_degeneracy", "d_h",
    ]
    if config.output_path:
        handle = open(config.output_path, "w", encoding="utf-8", newline="")
    else:
        handle = sys.stdout
    try:
        writer = csv.DictWriter(handle, fieldnames=columns, lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)
    finally:
        if config.output_path:
            handle.close()
    return EXIT_OK


def cmd_report(args: argparse.Namespace, config: CliConfig) -> int:
    store = Path(config.input_paths[0])
    results = read_results(store)
    seed = read_spec(store).master_seed if (store / "spec.resolved.json").exists() else 0
    out = config.output_path or str(store / "report")
    paths = build_report(results, args.preset, out, svg=args.svg, seed=seed)
    for path in paths:
        print(path)
    return EXIT_OK


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

def _add_instance_source(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--n", type=int, default=12, help="Number of variables")
    size = parser.add_mutually_exclusive_group()
    size.add_argument("--edges", type=int, help="Exact edge count")
    size.add_argument("--density", type=float, help="Target density, rounded to the nearest edge count")
    parser.add_argument("--kind", choices=[k.value for k in GraphKind], default=GraphKind.UNIFORM_RANDOM.value)
    parser.add_argument("--count", type=int, default=1, help="Number of instances")
    parser.add_argument("--seed", type=int, default=0, help="Master seed for instance generation")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="vqolab", description="Variational QUBO optimization laboratory.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {APP_VERSION}")
    parser.add_argument("-v", "--verbose", action="count", default=0, help="-v: INFO, -vv: DEBUG")
    parser.add_argument("-q", "--quiet", action="store_true", help="Errors only")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    gen = sub.add_parser("gen", help="Generate random QUBO instances")
    _add_instance_source(gen)
    gen.add_argument("--out", required=True, help="Output directory")
    gen.set_defaults(func=cmd_gen)

    solve = sub.add_parser("solve", help="Run one variational optimization")
    solve.add_argument("instance", help="Instance JSON file")
    solve.add_argument("--ansatz", choices=[k.value for k in EntanglementKind], default=None,
                       help="Entangler layout (default: none for L=0, linear otherwise)")
    solve.add_argument("--layers", type=int, default=0)
    solve.add_argument("--rho", type=float, default=0.1, help="CVaR fraction; 1.0 is plain VQE")
    solve.add_argument("--shots", type=int, default=None, help="Shots per evaluation; omit for the exact mode")
    solve.add_argument("--optimizer", choices=[k.value for k in OptimizerKind], default=OptimizerKind.QUASI_NEWTON.value)
    solve.add_argument("--max-iterations", type=int, default=1000)
    solve.add_argument("--perturbation", type=float, default=1e-2)
    solve.add_argument("--beta", type=float, default=0.1, help="Success cut-off on the ground overlap")
    solve.add_argument("--seed", type=int, default=0)
    solve.add_argument("--trace", help="Write the optimizer trace JSON here")
    solve.add_argument("--downsample", type=int, default=None, help="Keep every k-th trace entry")
    solve.add_argument("--dump-state", help="Write final amplitudes as little-endian float64")
    solve.set_defaults(func=cmd_solve)

    bench = sub.add_parser("bench", help="Run an experiment sweep")
    source = bench.add_mutually_exclusive_group(required=True)
    source.add_argument("--spec", help="Experiment spec file (.json or .toml)")
    source.add_argument("--preset", choices=list(PRESETS))
    bench.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="Override a spec field")
    bench.add_argument("--instances", type=int, default=None, help="Override n_instances")
    bench.add_argument("--master-seed", type=int, default=None)
    bench.add_argument("--workers", type=int, default=DEFAULT_WORKERS)
    bench.add_argument("--out", required=True, help="Result store directory")
    bench.set_defaults(func=cmd_bench)

    hardness = sub.add_parser("hardness", help="Hamming-distance hardness table")
    hardness.add_argument("instances", nargs="*", help="Instance JSON files (else generate)")
    _add_instance_source(hardness)
    hardness.add_argument("--dh-min", type=float, default=None)
    hardness.add_argument("--dh-max", type=float, default=None)
    hardness.add_argument("--workers", type=int, default=1, help="Threads per enumeration")
    hardness.add_argument("--out", default=None, help="CSV path (default: stdout)")
    hardness.set_defaults(func=cmd_hardness)

    report = sub.add_parser("report", help="Plot-ready data from a result store")
    report.add_argument("store", help="Result store directory")
    report.add_argument("--preset", choices=list(REPORT_PRESETS), required=True)
    report.add_argument("--out", default=None, help="Output directory (default: <store>/report)")
    report.add_argument("--svg", action="store_true", help="Also write SVG line plots")
    report.set_defaults(func=cmd_report)
    return parser


def _cli_config(args: argparse.Namespace) -> CliConfig:
    inputs: List[str] = []
    for name in ("instance", "store"):
        if getattr(args, name, None):
            inputs.append(getattr(args, name))
    if args.subcommand == "hardness":
        inputs.extend(args.instances)
    return CliConfig(
        subcommand=args.subcommand,
        input_paths=inputs,
        output_path=getattr(args, "out", None),
        spec_file=getattr(args, "spec", None),
        overrides=getattr(args, "set", []),
        master_seed=getattr(args, "master_seed", None) or getattr(args, "seed", 0) or 0,
        workers=getattr(args, "workers", 1),
        verbosity=args.verbose,
    )


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------

def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging(args.verbose, args.quiet)
    try:
        config = _cli_config(args)
        logger.debug("Resolved invocation: %s", config.model_dump())
        return args.func(args, config)
    except ValidationError as exc:
        first = exc.errors()[0]
        print(f"error: invalid input: {first['msg']}", file=sys.stderr)
    except (VqoError, KeyError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
    except Exception:
        logger.error("Unexpected failure.", exc_info=True)
    return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
