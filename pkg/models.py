"""
VQO Lab - Pydantic Data Models
Defines the schemas for QUBO instances, their exact spectra, variational
circuits, cost settings, optimizer traces and benchmark results, together
with the JSON file formats they are persisted in.
"""

from enum import Enum
from typing import Dict, List, Optional, Tuple, Union

import numpy as np
from pydantic import (
    BaseModel,
    ConfigDict,
    Field,
    computed_field,
    field_serializer,
    field_validator,
    model_validator,
)

# Exhaustive enumeration of 2^n bitstrings is the reference oracle for every
# experiment, so no instance may exceed this many variables.
MAX_VARIABLES = 30


# =============================================================================
# Phase 1: Problem Models (QUBO / Ising / exact spectrum)
# =============================================================================

class GraphKind(str, Enum):
    """
    Random graph family an instance was drawn from.

    Using `str` as a mixin makes the enum serialize to its value
    ("regular", "uniform-random") in JSON files and CSV columns.
    """
    REGULAR = "regular"
    UNIFORM_RANDOM = "uniform-random"


class QuboInstance(BaseModel):
    """
    A QUBO problem on an undirected graph with integer edge weights.

    An edge (i, j, w) sets Q_ij = Q_ji = w; the diagonal is zero. The energy
    of a bitstring is the full double sum x^T Q x, so every edge whose two
    endpoints are set contributes 2w.
    """
    model_config = ConfigDict(frozen=True)

    n: int = Field(
        ...,
        ge=1,
        le=MAX_VARIABLES,
        description="Number of binary variables (graph vertices).",
    )
    graph_kind: GraphKind = Field(
        ...,
        description="Graph family the edge set was sampled from.",
    )
    seed: int = Field(
        ...,
        ge=0,
        lt=2**64,
        description="64-bit token that regenerates this exact instance.",
    )
    edges: List[Tuple[int, int, int]] = Field(
        default_factory=list,
        description="Edges as (i, j, w) with i < j and w != 0, sorted lexicographically.",
        examples=[[[0, 1, 3], [0, 2, -5], [1, 3, 7]]],
    )

    @field_validator("edges")
    @classmethod
    def sort_edges(cls, v: List[Tuple[int, int, int]]) -> List[Tuple[int, int, int]]:
        return sorted((int(i), int(j), int(w)) for i, j, w in v)

    @model_validator(mode="after")
    def validate_edges(self) -> "QuboInstance":
        seen = set()
        for i, j, w in self.edges:
            if not 0 <= i < j < self.n:
                raise ValueError(f"edge ({i}, {j}) must satisfy 0 <= i < j < n={self.n}")
            if w == 0:
                raise ValueError(f"edge ({i}, {j}) has zero weight; zero weights delete edges")
            if (i, j) in seen:
                raise ValueError(f"duplicate edge ({i}, {j})")
            seen.add((i, j))
        return self

    @property
    def edge_count(self) -> int:
        return len(self.edges)

    @property
    def weights(self) -> np.ndarray:
        """Dense symmetric N x N integer matrix Q."""
        q = np.zeros((self.n, self.n), dtype=np.int64)
        for i, j, w in self.edges:
            q[i, j] = w
            q[j, i] = w
        return q


class IsingModel(BaseModel):
    """
    Spin form of a QUBO instance, aligned so that minimizing it minimizes the
    QUBO energy: offset + sum_{i<j} J_ij s_i s_j + sum_i h_i s_i with s = 2x - 1.
    """
    model_config = ConfigDict(frozen=True)

    n: int = Field(..., ge=1, le=MAX_VARIABLES)
    j: List[Tuple[int, int, float]] = Field(
        default_factory=list,
        description="Upper-triangular couplings (i, j, J_ij) with i < j; half-integers.",
    )
    h: List[float] = Field(..., description="Local fields h_i; half-integers.")
    offset: float = Field(..., description="Constant energy shift.")

    @model_validator(mode="after")
    def validate_shape(self) -> "IsingModel":
        if len(self.h) != self.n:
            raise ValueError(f"h has length {len(self.h)}, expected n={self.n}")
        return self


class SpectrumReport(BaseModel):
    """
    The two lowest distinct energy levels of an instance, found by exhaustive
    enumeration, together with the minimum Hamming distance between them.

    Manifolds are stored as integer bit patterns (bit k = variable k) in
    ascending order and serialized as lowercase hex strings.
    """
    model_config = ConfigDict(frozen=True)

    n: int = Field(..., ge=1, le=MAX_VARIABLES)
    ground_energy: int
    ground_manifold: List[int] = Field(..., min_length=1)
    first_excited_energy: int
    first_excited_manifold: List[int] = Field(..., min_length=1)
    min_hamming_bits: int = Field(
        ...,
        ge=1,
        description="Minimum number of differing bits between the two manifolds.",
    )

    @field_validator("ground_manifold", "first_excited_manifold", mode="before")
    @classmethod
    def parse_hex_patterns(cls, v):
        return sorted(int(x, 16) if isinstance(x, str) else int(x) for x in v)

    @field_serializer("ground_manifold", "first_excited_manifold", when_used="json")
    def serialize_hex_patterns(self, v: List[int]) -> List[str]:
        return [format(x, "x") for x in v]

    @model_validator(mode="after")
    def validate_levels(self) -> "SpectrumReport":
        if not self.ground_energy < self.first_excited_energy:
            raise ValueError("ground energy must be strictly below the first excited energy")
        if set(self.ground_manifold) & set(self.first_excited_manifold):
            raise ValueError("ground and first-excited manifolds must be disjoint")
        if self.min_hamming_bits > self.n:
            raise ValueError("min_hamming_bits cannot exceed n")
        return self

    @computed_field  # type: ignore[prop-decorator]
    @property
    def min_hamming_distance(self) -> float:
        """Normalized distance in (0, 1]; always a multiple of 1/n."""
        return self.min_hamming_bits / self.n


# =============================================================================
# Phase 2: Circuit Models (ansatz structure, angles, measurement records)
# =============================================================================

class EntanglementKind(str, Enum):
    """Which qubit pairs receive controlled-Z gates in each entangling layer."""
    LINEAR = "linear"
    COMPATIBLE = "compatible"
    RANDOM = "random"
    NONE = "none"


class AnsatzSpec(BaseModel):
    """
    Circuit topology: L entangling layers interleaved with L+1 rotation layers.
    The pairs are frozen at construction, including randomly drawn ones.
    """
    model_config = ConfigDict(frozen=True)

    n: int = Field(..., ge=1, le=MAX_VARIABLES)
    layers: int = Field(..., ge=0)
    entanglement: EntanglementKind
    entangler_pairs: List[List[Tuple[int, int]]] = Field(
        default_factory=list,
        description="For each entangling layer, the ordered list of CZ pairs.",
    )
    seed: Optional[int] = Field(
        default=None,
        description="Token used only to draw the random entanglement structure.",
    )

    @model_validator(mode="after")
    def validate_structure(self) -> "AnsatzSpec":
        if (self.entanglement == EntanglementKind.NONE) != (self.layers == 0):
            raise ValueError("entanglement 'none' is used exactly when layers == 0")
        if len(self.entangler_pairs) != self.layers:
            raise ValueError(
                f"expected {self.layers} entangling layers, got {len(self.entangler_pairs)}"
            )
        for layer in self.entangler_pairs:
            for i, j in layer:
                if i == j or not (0 <= i < self.n and 0 <= j < self.n):
                    raise ValueError(f"invalid entangler pair ({i}, {j}) for n={self.n}")
        if self.entanglement == EntanglementKind.LINEAR:
            chain = [(q, q + 1) for q in range(self.n - 1)]
            if any(list(map(tuple, layer)) != chain for layer in self.entangler_pairs):
                raise ValueError("linear entanglement must pair (q, q+1) for every q")
        return self

    @property
    def n_params(self) -> int:
        return self.n * (self.layers + 1)

    @property
    def label(self) -> str:
        """Short name used in result tables: 'product' or '<kind>-L<layers>'."""
        if self.layers == 0:
            return "product"
        return f"{self.entanglement.value}-L{self.layers}"


class ParameterVector(BaseModel):
    """
    Rotation angles theta[q][l] in radians, q in 0..N-1, l in 0..L.
    For L = 0 this is the product-state angle list.
    """
    model_config = ConfigDict(frozen=True)

    theta: List[List[float]] = Field(..., min_length=1)

    @field_validator("theta")
    @classmethod
    def validate_rectangular(cls, v: List[List[float]]) -> List[List[float]]:
        width = len(v[0])
        if width == 0 or any(len(row) != width for row in v):
            raise ValueError("theta must be a non-empty N x (L+1) matrix")
        return v

    @property
    def n(self) -> int:
        return len(self.theta)

    @property
    def layers(self) -> int:
        return len(self.theta[0]) - 1

    def to_array(self) -> np.ndarray:
        return np.asarray(self.theta, dtype=np.float64)

    def flat(self) -> np.ndarray:
        return self.to_array().reshape(-1)

    @classmethod
    def from_array(cls, arr: np.ndarray) -> "ParameterVector":
        return cls(theta=np.asarray(arr, dtype=np.float64).tolist())

    @classmethod
    def from_flat(cls, flat, n: int, layers: int) -> "ParameterVector":
        return cls.from_array(np.asarray(flat, dtype=np.float64).reshape(n, layers + 1))


class ShotBatch(BaseModel):
    """Outcome counts of K computational-basis measurements of all qubits."""
    model_config = ConfigDict(frozen=True)

    n: int = Field(..., ge=1, le=MAX_VARIABLES)
    counts: Dict[int, int] = Field(
        ...,
        description="Bit pattern (bit k = qubit k) -> number of occurrences.",
    )
    total: int = Field(..., ge=0)

    @model_validator(mode="after")
    def validate_counts(self) -> "ShotBatch":
        if sum(self.counts.values()) != self.total:
            raise ValueError("counts must sum to total")
        limit = 1 << self.n
        if any(not 0 <= k < limit for k in self.counts):
            raise ValueError(f"bit pattern outside the {self.n}-qubit register")
        if any(c < 0 for c in self.counts.values()):
            raise ValueError("counts must be non-negative")
        return self


# =============================================================================
# Phase 3: Cost and Optimizer Models
# =============================================================================

class EvaluationMode(str, Enum):
    EXACT = "exact"
    SHOTS = "shots"


class CostConfig(BaseModel):
    """
    Objective settings. rho = 1 is the plain energy expectation (VQE);
    rho < 1 averages only the lowest rho fraction of outcomes (CVaR-VQE).
    """
    model_config = ConfigDict(frozen=True)

    rho: float = Field(default=0.1, gt=0.0, le=1.0)
    mode: EvaluationMode = Field(default=EvaluationMode.EXACT)
    shots: Optional[int] = Field(default=None, ge=1)

    @model_validator(mode="after")
    def validate_mode(self) -> "CostConfig":
        if self.mode == EvaluationMode.SHOTS and self.shots is None:
            raise ValueError("shots mode requires a shot count K >= 1")
        if self.mode == EvaluationMode.EXACT and self.shots is not None:
            raise ValueError("exact mode does not take a shot count")
        return self

    @property
    def label(self) -> str:
        return "VQE" if self.rho == 1.0 else "CVaR-VQE"


class EnergyDistribution(BaseModel):
    """Distinct energies in ascending order with their total probabilities."""
    model_config = ConfigDict(frozen=True)

    energies: List[int] = Field(default_factory=list)
    probabilities: List[float] = Field(default_factory=list)

    @model_validator(mode="after")
    def validate_distribution(self) -> "EnergyDistribution":
        if len(self.energies) != len(self.probabilities):
            raise ValueError("energies and probabilities must have equal length")
        if any(b <= a for a, b in zip(self.energies, self.energies[1:])):
            raise ValueError("energies must be strictly increasing (merge equal levels)")
        if any(p < 0 for p in self.probabilities):
            raise ValueError("probabilities must be non-negative")
        if self.probabilities and abs(sum(self.probabilities) - 1.0) > 1e-10:
            raise ValueError("probabilities must sum to 1")
        return self


class OptimizerKind(str, Enum):
    SPSA = "spsa"
    NELDER_MEAD = "nelder-mead"
    QUASI_NEWTON = "quasi-newton"


class TerminationReason(str, Enum):
    CONVERGED = "converged"
    MAX_ITERATIONS = "max_iterations"


# ftol defaults when the config leaves it unset: the shot-noise floor is far
# above the exact-mode one.
EXACT_FTOL = 1e-6
SHOTS_FTOL = 1e-2


class OptimizerConfig(BaseModel):
    """Classical optimizer settings shared by all three methods."""
    model_config = ConfigDict(frozen=True)

    kind: OptimizerKind = Field(default=OptimizerKind.SPSA)
    max_iterations: int = Field(default=1000, ge=1)
    ftol: Optional[float] = Field(
        default=None,
        gt=0.0,
        description="Cost-change tolerance. Unset resolves to 1e-6 (exact) or 1e-2 (shots).",
    )
    patience: int = Field(default=5, ge=1)

    # --- SPSA -------------------------------------------------------------
    spsa_a: Optional[float] = Field(default=None, gt=0.0, description="Unset: calibrated on the first step.")
    spsa_c: float = Field(default=0.1, gt=0.0)
    spsa_alpha: float = Field(default=0.602, gt=0.0)
    spsa_gamma: float = Field(default=0.101, gt=0.0)
    spsa_stability: Optional[float] = Field(default=None, ge=0.0, description="A; unset: 0.1 * max_iterations.")
    spsa_target_step: float = Field(default=0.1, gt=0.0)
    spsa_smoothing: int = Field(default=10, ge=1, description="Moving-average window of the cost estimate.")

    # --- Nelder-Mead -------------------------------------------------------
    simplex_step: float = Field(default=0.05, gt=0.0)

    # --- quasi-Newton ------------------------------------------------------
    fd_step: float = Field(default=1e-6, gt=0.0)
    gtol: float = Field(default=1e-6, gt=0.0)
    armijo_c1: float = Field(default=1e-4, gt=0.0, lt=1.0)
    max_halvings: int = Field(default=40, ge=1)

    def resolved_ftol(self, shots: Optional[int] = None) -> float:
        if self.ftol is not None:
            return self.ftol
        return EXACT_FTOL if shots is None else SHOTS_FTOL


class OptimizationTrace(BaseModel):
    """Outcome of one optimizer run, with exact evaluation accounting."""

    best_params: List[float]
    best_cost: float
    evaluations: int = Field(..., ge=0)
    iterations: int = Field(..., ge=0)
    cost_history: List[float] = Field(default_factory=list)
    terminated_by: TerminationReason


# =============================================================================
# Phase 4: Benchmark Models
# =============================================================================

ShotSetting = Union[int, str]


class ExperimentSpec(BaseModel):
    """
    A reproducible sweep: every combination of the list-valued fields is a
    cell, and each cell runs `n_instances` fresh instances.
    """
    model_config = ConfigDict(frozen=True, extra="forbid")

    name: str = Field(default="custom", min_length=1, description="Experiment tag mixed into every seed.")
    n_qubits: List[int] = Field(default=[12], min_length=1)
    graph_kind: GraphKind = Field(default=GraphKind.UNIFORM_RANDOM)
    edge_counts: Optional[List[int]] = Field(default=None, min_length=1)
    densities: Optional[List[float]] = Field(default=None, min_length=1)
    n_instances: int = Field(default=100, ge=1)
    entanglements: List[EntanglementKind] = Field(default=[EntanglementKind.NONE], min_length=1)
    layers: List[int] = Field(default=[0], min_length=1)
    rho: List[float] = Field(default=[0.1], min_length=1)
    evaluation_modes: List[ShotSetting] = Field(
        default=["exact"],
        min_length=1,
        description="'exact' or a shot count K per entry.",
    )
    optimizers: List[OptimizerConfig] = Field(default_factory=lambda: [OptimizerConfig()], min_length=1)
    shot_optimizers: Optional[List[OptimizerConfig]] = Field(
        default=None,
        min_length=1,
        description="Optimizers for shot-based modes; unset: the same list as exact mode.",
    )
    beta: float = Field(default=0.1, gt=0.0, lt=1.0)
    perturbation: float = Field(default=1e-2, ge=0.0)
    init_mode: str = Field(default="constant", pattern="^(constant|uniform)$")
    master_seed: int = Field(default=0, ge=0, lt=2**64)

    @field_validator("n_qubits")
    @classmethod
    def validate_sizes(cls, v: List[int]) -> List[int]:
        if any(not 2 <= n <= MAX_VARIABLES for n in v):
            raise ValueError(f"n_qubits entries must lie in [2, {MAX_VARIABLES}]")
        return v

    @field_validator("rho")
    @classmethod
    def validate_rho(cls, v: List[float]) -> List[float]:
        if any(not 0.0 < r <= 1.0 for r in v):
            raise ValueError("rho entries must lie in (0, 1]")
        return v

    @field_validator("layers")
    @classmethod
    def validate_layers(cls, v: List[int]) -> List[int]:
        if any(layer < 0 for layer in v):
            raise ValueError("layers entries must be >= 0")
        return v

    @field_validator("evaluation_modes")
    @classmethod
    def validate_modes(cls, v: List[ShotSetting]) -> List[ShotSetting]:
        for mode in v:
            if isinstance(mode, str) and mode != "exact":
                raise ValueError(f"evaluation mode must be 'exact' or a shot count, got '{mode}'")
            if isinstance(mode, int) and mode < 1:
                raise ValueError("shot counts must be >= 1")
        return v

    @model_validator(mode="after")
    def validate_density_source(self) -> "ExperimentSpec":
        if (self.edge_counts is None) == (self.densities is None):
            raise ValueError("exactly one of edge_counts or densities must be given")
        if self.densities is not None and any(not 0.0 <= d <= 1.0 for d in self.densities):
            raise ValueError("densities must lie in [0, 1]")
        return self


class ExperimentCell(BaseModel):
    """One fully resolved configuration of an ExperimentSpec."""
    model_config = ConfigDict(frozen=True)

    index: int = Field(..., ge=0)
    n: int
    edge_count: int
    graph_kind: GraphKind
    entanglement: EntanglementKind
    layers: int
    rho: float
    shots: Optional[int] = None
    optimizer: OptimizerConfig
    beta: float
    perturbation: float
    init_mode: str = "constant"

    @property
    def ansatz_label(self) -> str:
        return "product" if self.layers == 0 else f"{self.entanglement.value}-L{self.layers}"

    @property
    def cost_config(self) -> CostConfig:
        if self.shots is None:
            return CostConfig(rho=self.rho)
        return CostConfig(rho=self.rho, mode=EvaluationMode.SHOTS, shots=self.shots)

    @property
    def mode_label(self) -> str:
        return "exact" if self.shots is None else f"shots-{self.shots}"


class InstanceResult(BaseModel):
    """Everything recorded for one (cell, instance) run."""
    model_config = ConfigDict(frozen=True)

    cell_index: int
    instance_index: int
    n: int
    edge_count: int
    graph_kind: GraphKind
    ansatz: str
    entanglement: EntanglementKind
    layers: int
    rho: float
    cost_label: str
    mode: str
    optimizer: OptimizerKind
    instance_seed: int
    solver_seed: int
    density: float
    d_h: Optional[float] = Field(default=None, description="Present iff the spectrum oracle ran.")
    beta: float
    success: int = Field(..., ge=0, le=1)
    overlap: float = Field(..., ge=0.0)
    evaluations: int = Field(..., ge=0)
    final_cost: float
    terminated_by: TerminationReason
    wall_time: float = Field(default=0.0, exclude=True, description="Seconds; kept out of deterministic dumps.")

    @model_validator(mode="after")
    def validate_success(self) -> "InstanceResult":
        if self.success != int(self.overlap >= self.beta):
            raise ValueError("success must equal (overlap >= beta)")
        return self


class FailureRecord(BaseModel):
    """A quarantined instance that raised instead of producing a result."""
    model_config = ConfigDict(frozen=True)

    cell_index: int
    instance_index: int
    instance_seed: int
    error_type: str
    message: str


class AggregateResult(BaseModel):
    """Success rate and mean evaluations of one group, with 95% bootstrap CIs."""
    model_config = ConfigDict(frozen=True)

    group: Dict[str, Union[str, int, float, None]]
    count: int = Field(..., ge=0)
    empty: bool = Field(default=False, description="True when no result fell into this group.")
    success_rate: Optional[float] = None
    success_lo: Optional[float] = None
    success_hi: Optional[float] = None
    evaluations_mean: Optional[float] = None
    evaluations_lo: Optional[float] = None
    evaluations_hi: Optional[float] = None

    @model_validator(mode="after")
    def validate_interval(self) -> "AggregateResult":
        if self.empty:
            if self.count != 0:
                raise ValueError("an empty group must have count 0")
            return self
        for lo, point, hi in (
            (self.success_lo, self.success_rate, self.success_hi),
            (self.evaluations_lo, self.evaluations_mean, self.evaluations_hi),
        ):
            if lo is None or point is None or hi is None or not lo <= point <= hi:
                raise ValueError("confidence interval must satisfy lo <= point <= hi")
        return self


class BatchResult(BaseModel):
    """The merged, order-restored output of one run_batch call."""

    spec: ExperimentSpec
    results: List[InstanceResult] = Field(default_factory=list)
    failures: List[FailureRecord] = Field(default_factory=list)


# =============================================================================
# Phase 5: Command-line Model
# =============================================================================

class CliConfig(BaseModel):
    """Resolved command-line invocation, validated before any work starts."""

    subcommand: str = Field(..., pattern="^(gen|solve|bench|hardness|report)$")
    input_paths: List[str] = Field(default_factory=list)
    output_path: Optional[str] = None
    spec_file: Optional[str] = None
    overrides: List[str] = Field(default_factory=list)
    master_seed: int = Field(default=0, ge=0, lt=2**64)
    workers: int = Field(default=1, ge=1)
    verbosity: int = Field(default=0, ge=0)

    @field_validator("overrides")
    @classmethod
    def validate_overrides(cls, v: List[str]) -> List[str]:
        for item in v:
            if "=" not in item or not item.split("=", 1)[0].strip():
                raise ValueError(f"override '{item}' must look like key=value")
        return v
