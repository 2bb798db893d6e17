"""
VQO Lab - Cost Service
VQE and CVaR-VQE objectives from exact state distributions or finite shot
batches, plus the ground-state overlap used to score a run.
"""

import logging
import math
from typing import Optional, Union

import numpy as np

from models import (
    AnsatzSpec,
    CostConfig,
    EnergyDistribution,
    EvaluationMode,
    QuboInstance,
    ShotBatch,
    SpectrumReport,
)
from services.errors import DimensionMismatchError, EmptyDistributionError
from services.qubo import energy_table, pattern_energies
from services.simulator import Circuit, ProductState, StateVector

logger = logging.getLogger(__name__)

State = Union[StateVector, ProductState]


# ---------------------------------------------------------------------------
# Distributions
# ---------------------------------------------------------------------------

def energy_distribution(probabilities: np.ndarray, energies: np.ndarray) -> EnergyDistribution:
    """Merges equal-energy bitstrings into one ascending (energy, mass) list."""
    probabilities = np.asarray(probabilities, dtype=np.float64)
    energies = np.asarray(energies, dtype=np.int64)
    if probabilities.shape != energies.shape:
        raise DimensionMismatchError(
            f"{probabilities.size} probabilities for {energies.size} energies."
        )
    levels, inverse = np.unique(energies, return_inverse=True)
    mass = np.bincount(inverse, weights=probabilities, minlength=levels.size)
    keep = mass > 0.0
    return EnergyDistribution(
        energies=levels[keep].tolist(),
        probabilities=mass[keep].tolist(),
    )


def _cvar(levels: np.ndarray, mass: np.ndarray, rho: float) -> float:
    # Whole atoms below the rho-quantile count fully, the boundary atom fractionally.
    before = np.cumsum(mass) - mass
    taken = np.clip(rho - before, 0.0, mass)
    return float(np.dot(taken, levels) / rho)


def exact_cost(dist: EnergyDistribution, rho: float) -> float:
    """
    Conditional value at risk of the lower tail: the mean energy of the
    lowest rho probability mass. rho = 1 gives the plain expectation.

    Raises:
        EmptyDistributionError: the distribution has no entries.
    """
    if not dist.energies:
        raise EmptyDistributionError("cannot evaluate a cost on an empty distribution.")
    if not 0.0 < rho <= 1.0:
        raise ValueError(f"rho must lie in (0, 1], got {rho}")
    if rho == 1.0:
        return float(np.dot(dist.probabilities, dist.energies))
    return _cvar(
        np.asarray(dist.energies, dtype=np.float64),
        np.asarray(dist.probabilities, dtype=np.float64),
        rho,
    )


def tail_size(rho: float, shots: int) -> int:
    """m = max(1, floor(rho * K)), robust to float noise in the product."""
    return max(1, math.floor(rho * shots + 1e-9))


def _sampled_from_levels(levels: np.ndarray, counts: np.ndarray, rho: float) -> float:
    order = np.argsort(levels, kind="stable")
    levels, counts = levels[order], counts[order]
    m = tail_size(rho, int(counts.sum()))
    before = np.cumsum(counts) - counts
    taken = np.clip(m - before, 0, counts)
    return float(np.dot(taken, levels) / m)


def sampled_cost(batch: ShotBatch, inst: QuboInstance, rho: float) -> float:
    """
    Mean of the lowest m = max(1, floor(rho K)) of the K sampled energies.

    Raises:
        EmptyDistributionError: the batch holds no shots.
    """
    if batch.total < 1:
        raise EmptyDistributionError("cannot evaluate a cost on an empty shot batch.")
    if batch.n != inst.n:
        raise DimensionMismatchError(f"batch has {batch.n} qubits, instance has {inst.n}.")
    keys = np.fromiter(batch.counts.keys(), dtype=np.int64, count=len(batch.counts))
    counts = np.fromiter(batch.counts.values(), dtype=np.int64, count=len(batch.counts))
    return _sampled_from_levels(pattern_energies(inst, keys).astype(np.float64), counts, rho)


# ---------------------------------------------------------------------------
# Success scoring
# ---------------------------------------------------------------------------

def overlap_with_ground(state: State, report: SpectrumReport) -> float:
    """Total probability of the ground manifold."""
    if state.n != report.n:
        raise DimensionMismatchError(f"state has {state.n} qubits, spectrum has {report.n}.")
    manifold = np.asarray(report.ground_manifold, dtype=np.int64)
    if isinstance(state, ProductState):
        bits = (manifold[:, None] >> np.arange(state.n)) & 1
        factors = np.where(bits == 1, state.sin, state.cos)
        return float(np.sum(np.prod(factors * factors, axis=1)))
    return float(state.probabilities()[manifold].sum())


def success(overlap: float, beta: float = 0.1) -> int:
    """1 when the ground-manifold probability reaches the cut-off (inclusive)."""
    return int(overlap >= beta)


def repetition_bound(beta: float, k: int) -> float:
    """Lower bound on seeing a ground state in k measurements of a successful run."""
    return 1.0 - (1.0 - beta) ** k


def cost_label(rho: float) -> str:
    return "VQE" if rho == 1.0 else "CVaR-VQE"


# ---------------------------------------------------------------------------
# Black-box objective
# ---------------------------------------------------------------------------

class CostFunction:
    """
    Flat parameter array -> scalar objective for one (instance, ansatz, cost)
    triple. Product ansatze stay in the O(N) representation; exact mode
    reuses one precomputed energy table for every evaluation.
    """

    def __init__(
        self,
        inst: QuboInstance,
        spec: AnsatzSpec,
        cfg: CostConfig,
        rng: Optional[np.random.Generator] = None,
        energies: Optional[np.ndarray] = None,
    ):
        if spec.n != inst.n:
            raise DimensionMismatchError(f"ansatz has {spec.n} qubits, instance has {inst.n}.")
        if cfg.mode == EvaluationMode.SHOTS and rng is None:
            raise ValueError("shots mode needs a generator")
        self.inst = inst
        self.spec = spec
        self.cfg = cfg
        self.rng = rng
        self.circuit = Circuit(spec) if spec.layers else None

        if cfg.mode == EvaluationMode.EXACT:
            table = energy_table(inst) if energies is None else energies
            self._levels, self._inverse = np.unique(table, return_inverse=True)
            self._levels = self._levels.astype(np.float64)

    def state(self, flat: np.ndarray) -> State:
        theta = np.asarray(flat, dtype=np.float64)
        if self.circuit is None:
            return ProductState(theta)
        return self.circuit.evolve(theta)

    def distribution(self, flat: np.ndarray) -> EnergyDistribution:
        probs = self.state(flat).probabilities()
        return energy_distribution(probs, energy_table(self.inst))

    def __call__(self, flat: np.ndarray) -> float:
        state = self.state(flat)
        rho = self.cfg.rho
        if self.cfg.mode == EvaluationMode.EXACT:
            mass = np.bincount(self._inverse, weights=state.probabilities(), minlength=self._levels.size)
            if rho == 1.0:
                return float(np.dot(mass, self._levels))
            return _cvar(self._levels, mass, rho)
        return sampled_cost(state.sample(self.cfg.shots, self.rng), self.inst, rho)


def make_cost_function(
    inst: QuboInstance,
    spec: AnsatzSpec,
    cfg: CostConfig,
    rng: Optional[np.random.Generator] = None,
    energies: Optional[np.ndarray] = None,
) -> CostFunction:
    logger.debug(
        "Cost function: %s rho=%.3f mode=%s ansatz=%s.",
        cost_label(cfg.rho), cfg.rho, cfg.mode.value, spec.label,
    )
    return CostFunction(inst, spec, cfg, rng=rng, energies=energies)
