"""
VQO Lab - Experiment Presets
Desk-scale experiment definitions (N <= 12, 100-200 instances per cell).

Exact-mode cells use the quasi-Newton optimizer and shot-based cells use
SPSA, unless a preset compares optimizers explicitly.
"""

import logging
from typing import Callable, Dict, List, Optional

from models import (
    EntanglementKind,
    ExperimentSpec,
    GraphKind,
    OptimizerConfig,
    OptimizerKind,
)

logger = logging.getLogger(__name__)

DESK_INSTANCES = 100
HARDNESS_INSTANCES = 15     # per regular-graph degree; 10 degrees -> 150 per cell

# Densities 0.045 / 0.258 / 0.894 resolve to 3 / 17 / 59 edges at N = 12.
REFERENCE_DENSITIES = [0.045, 0.258, 0.894]
DENSITY_SWEEP = [0.045, 0.15, 0.258, 0.5, 0.7, 0.894]

# d-regular graphs on 12 vertices have 6d edges.
REGULAR_EDGE_COUNTS = [6 * degree for degree in range(1, 11)]

SPSA = OptimizerConfig(kind=OptimizerKind.SPSA)
NELDER_MEAD = OptimizerConfig(kind=OptimizerKind.NELDER_MEAD)
QUASI_NEWTON = OptimizerConfig(kind=OptimizerKind.QUASI_NEWTON)

ALL_ENTANGLEMENTS = [EntanglementKind.LINEAR, EntanglementKind.COMPATIBLE, EntanglementKind.RANDOM]


def _optimizer_comparison(name: str, modes: List, instances: int, seed: int) -> ExperimentSpec:
    return ExperimentSpec(
        name=name,
        n_qubits=[6, 9, 12],
        densities=[0.258],
        n_instances=instances,
        entanglements=[EntanglementKind.LINEAR],
        layers=[0, 1],
        rho=[1.0],
        evaluation_modes=modes,
        optimizers=[SPSA, NELDER_MEAD, QUASI_NEWTON],
        master_seed=seed,
    )


def fig2_desk(instances: int = DESK_INSTANCES, seed: int = 0) -> ExperimentSpec:
    """Optimizer comparison vs problem size, exact wave function."""
    return _optimizer_comparison("fig2-desk", ["exact"], instances, seed)


def fig3_desk(instances: int = DESK_INSTANCES, seed: int = 0) -> ExperimentSpec:
    """Optimizer comparison vs problem size, 9000 shots per evaluation."""
    return _optimizer_comparison("fig3-desk", [9000], instances, seed)


def fig4_desk(instances: int = DESK_INSTANCES, seed: int = 0) -> ExperimentSpec:
    """Final-overlap distributions: VQE vs CVaR, product vs L=3, three densities."""
    return ExperimentSpec(
        name="fig4-desk",
        n_qubits=[12],
        densities=REFERENCE_DENSITIES,
        n_instances=instances,
        entanglements=[EntanglementKind.LINEAR],
        layers=[0, 3],
        rho=[1.0, 0.1],
        optimizers=[QUASI_NEWTON],
        master_seed=seed,
    )


def fig5_desk(instances: int = DESK_INSTANCES, seed: int = 0) -> ExperimentSpec:
    """VQE vs CVaR-VQE over density for N in {6, 9, 12}, product and L=3 linear."""
    return ExperimentSpec(
        name="fig5-desk",
        n_qubits=[6, 9, 12],
        densities=REFERENCE_DENSITIES,
        n_instances=instances,
        entanglements=[EntanglementKind.LINEAR],
        layers=[0, 3],
        rho=[1.0, 0.1],
        optimizers=[QUASI_NEWTON],
        master_seed=seed,
    )


def fig6_desk(instances: int = DESK_INSTANCES, seed: int = 0) -> ExperimentSpec:
    """Entanglement structures at L in {0, 1} over a density sweep, exact."""
    return ExperimentSpec(
        name="fig6-desk",
        n_qubits=[12],
        densities=DENSITY_SWEEP,
        n_instances=instances,
        entanglements=ALL_ENTANGLEMENTS,
        layers=[0, 1],
        rho=[0.1],
        optimizers=[QUASI_NEWTON],
        master_seed=seed,
    )


def fig7_desk(instances: int = DESK_INSTANCES, seed: int = 0) -> ExperimentSpec:
    """Success and evaluations vs number of layers at densities 0.258 and 0.894."""
    return ExperimentSpec(
        name="fig7-desk",
        n_qubits=[12],
        densities=[0.258, 0.894],
        n_instances=instances,
        entanglements=ALL_ENTANGLEMENTS,
        layers=[0, 1, 2, 3],
        rho=[0.1],
        optimizers=[QUASI_NEWTON],
        master_seed=seed,
    )


def fig8_desk(instances: int = DESK_INSTANCES, seed: int = 0) -> ExperimentSpec:
    """Finite sampling: 3000 / 9000 shots vs density, with the exact reference."""
    return ExperimentSpec(
        name="fig8-desk",
        n_qubits=[12],
        densities=REFERENCE_DENSITIES,
        n_instances=instances,
        entanglements=ALL_ENTANGLEMENTS,
        layers=[0, 1],
        rho=[0.1],
        evaluation_modes=[3000, 9000, "exact"],
        optimizers=[QUASI_NEWTON],
        shot_optimizers=[SPSA],
        master_seed=seed,
    )


def _hardness(name: str, modes: List, instances: int, seed: int) -> ExperimentSpec:
    return ExperimentSpec(
        name=name,
        n_qubits=[12],
        graph_kind=GraphKind.REGULAR,
        edge_counts=REGULAR_EDGE_COUNTS,
        n_instances=instances,
        entanglements=[EntanglementKind.COMPATIBLE],
        layers=[0, 1],
        rho=[0.1],
        evaluation_modes=modes,
        optimizers=[QUASI_NEWTON],
        shot_optimizers=[SPSA],
        master_seed=seed,
    )


def fig9_desk(instances: int = HARDNESS_INSTANCES, seed: int = 0) -> ExperimentSpec:
    """Success vs ground/first-excited Hamming distance on regular graphs, exact."""
    return _hardness("fig9-desk", ["exact"], instances, seed)


def fig10_desk(instances: int = HARDNESS_INSTANCES, seed: int = 0) -> ExperimentSpec:
    """Hardness profile with 9000 shots."""
    return _hardness("fig10-desk", [9000], instances, seed)


def table1_desk(instances: int = HARDNESS_INSTANCES, seed: int = 0) -> ExperimentSpec:
    """Product vs entangled across hardness bins A/B/C for 3000, 9000 shots and exact."""
    return _hardness("table1-desk", [3000, 9000, "exact"], instances, seed)


PRESETS: Dict[str, Callable[..., ExperimentSpec]] = {
    "fig2-desk": fig2_desk,
    "fig3-desk": fig3_desk,
    "fig4-desk": fig4_desk,
    "fig5-desk": fig5_desk,
    "fig6-desk": fig6_desk,
    "fig7-desk": fig7_desk,
    "fig8-desk": fig8_desk,
    "fig9-desk": fig9_desk,
    "fig10-desk": fig10_desk,
    "table1-desk": table1_desk,
}


def preset(name: str, instances: Optional[int] = None, seed: int = 0) -> ExperimentSpec:
    """Looks up a preset by name; `instances` overrides its default count."""
    try:
        builder = PRESETS[name]
    except KeyError:
        raise KeyError(f"unknown preset '{name}'; choose from {', '.join(PRESETS)}") from None
    spec = builder(seed=seed) if instances is None else builder(instances=instances, seed=seed)
    logger.debug("Preset %s resolved to %d instance(s) per cell.", name, spec.n_instances)
    return spec
