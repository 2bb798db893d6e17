"""
VQO Lab - Circuit Simulator
Real-amplitude statevector simulation of the layered RY/CZ ansatz, plus an
O(N) separable path for product states.

Qubit q is bit q of the amplitude index (qubit 0 is the least-significant
bit). Every gate in the ansatz is real-orthogonal, so amplitudes are stored
as float64.
"""

import logging
import math
from pathlib import Path
from typing import List, Optional, Sequence, Union

import numpy as np

from models import (
    AnsatzSpec,
    EntanglementKind,
    ParameterVector,
    QuboInstance,
    ShotBatch,
)
from services.errors import (
    DimensionMismatchError,
    InvalidAnsatzError,
    QubitIndexError,
    UnnormalizedStateError,
)

logger = logging.getLogger(__name__)

NORM_TOLERANCE = 1e-6
DEFAULT_PERTURBATION = 1e-2


# ---------------------------------------------------------------------------
# States
# ---------------------------------------------------------------------------

class StateVector:
    """
    Mutable register of 2^n real amplitudes. Owned by one evolution at a
    time; gates update it in place.
    """

    def __init__(self, n: int, amplitudes: Optional[np.ndarray] = None):
        self.n = n
        if amplitudes is None:
            amplitudes = np.zeros(1 << n, dtype=np.float64)
            amplitudes[0] = 1.0
        elif amplitudes.shape != (1 << n,):
            raise DimensionMismatchError(
                f"expected {1 << n} amplitudes for n={n}, got shape {amplitudes.shape}"
            )
        self.amplitudes = np.ascontiguousarray(amplitudes, dtype=np.float64)

    @classmethod
    def basis(cls, n: int, index: int) -> "StateVector":
        state = cls(n)
        state.amplitudes[0] = 0.0
        state.amplitudes[index] = 1.0
        return state

    def norm_squared(self) -> float:
        return float(np.dot(self.amplitudes, self.amplitudes))

    def probabilities(self) -> np.ndarray:
        return self.amplitudes * self.amplitudes

    def copy(self) -> "StateVector":
        return StateVector(self.n, self.amplitudes.copy())

    def dump(self, path: Union[str, Path]) -> Path:
        """Writes the amplitudes as a flat little-endian float64 array."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        self.amplitudes.astype("<f8").tofile(path)
        logger.debug("Dumped %d amplitudes to %s.", self.amplitudes.size, path)
        return path

    def sample(self, shots: int, rng: np.random.Generator) -> ShotBatch:
        if shots < 1:
            raise ValueError(f"shots must be >= 1, got {shots}")
        probs = self.probabilities()
        total = probs.sum()
        if abs(total - 1.0) > NORM_TOLERANCE:
            raise UnnormalizedStateError(f"state norm^2 is {total:.12f}, not 1.")
        counts = rng.multinomial(shots, probs / total)
        hits = np.flatnonzero(counts)
        return ShotBatch(
            n=self.n,
            counts={int(k): int(counts[k]) for k in hits},
            total=shots,
        )


class ProductState:
    """
    Separable state prod_q (cos t_q |0> + sin t_q |1>), stored as two
    length-n arrays.
    """

    def __init__(self, angles: Sequence[float]):
        theta = np.asarray(angles, dtype=np.float64).reshape(-1)
        self.n = theta.size
        self.cos = np.cos(theta)
        self.sin = np.sin(theta)

    @property
    def p_one(self) -> np.ndarray:
        return self.sin * self.sin

    def probability(self, index: int) -> float:
        bits = (index >> np.arange(self.n)) & 1
        factors = np.where(bits == 1, self.sin, self.cos)
        return float(np.prod(factors * factors))

    def amplitudes(self) -> np.ndarray:
        amps = np.ones(1, dtype=np.float64)
        for q in range(self.n):
            amps = np.kron(np.array([self.cos[q], self.sin[q]]), amps)
        return amps

    def probabilities(self) -> np.ndarray:
        amps = self.amplitudes()
        return amps * amps

    def to_statevector(self) -> StateVector:
        return StateVector(self.n, self.amplitudes())

    def sample(self, shots: int, rng: np.random.Generator) -> ShotBatch:
        """Qubit-wise Bernoulli draws; never materializes 2^n numbers."""
        if shots < 1:
            raise ValueError(f"shots must be >= 1, got {shots}")
        bits = rng.random((shots, self.n)) < self.p_one
        patterns = bits.astype(np.int64) @ (np.int64(1) << np.arange(self.n, dtype=np.int64))
        keys, counts = np.unique(patterns, return_counts=True)
        return ShotBatch(
            n=self.n,
            counts={int(k): int(c) for k, c in zip(keys, counts)},
            total=shots,
        )


def product_state(params: Union[ParameterVector, Sequence[float]]) -> ProductState:
    if isinstance(params, ParameterVector):
        if params.layers != 0:
            raise DimensionMismatchError("product_state needs a single rotation layer (L=0).")
        return ProductState(params.to_array()[:, 0])
    return ProductState(params)


def sample(
    state: Union[StateVector, ProductState],
    shots: int,
    rng: np.random.Generator,
) -> ShotBatch:
    """K independent computational-basis measurements of every qubit."""
    return state.sample(shots, rng)


# ---------------------------------------------------------------------------
# Gates
# ---------------------------------------------------------------------------

def _check_qubit(state: StateVector, qubit: int) -> None:
    if not 0 <= qubit < state.n:
        raise QubitIndexError(f"qubit {qubit} outside a {state.n}-qubit register.")


def apply_ry(state: StateVector, qubit: int, angle: float) -> StateVector:
    """
    Rotates one qubit in place: |0> -> cos(a)|0> + sin(a)|1>,
    |1> -> -sin(a)|0> + cos(a)|1>.
    """
    _check_qubit(state, qubit)
    c, s = math.cos(angle), math.sin(angle)
    view = state.amplitudes.reshape(-1, 2, 1 << qubit)
    a0 = view[:, 0, :].copy()
    a1 = view[:, 1, :]
    view[:, 0, :] = c * a0 - s * a1
    view[:, 1, :] = s * a0 + c * a1
    return state


def apply_cz(state: StateVector, i: int, j: int) -> StateVector:
    """Negates every amplitude whose bits i and j are both set."""
    _check_qubit(state, i)
    _check_qubit(state, j)
    if i == j:
        raise QubitIndexError(f"CZ needs two distinct qubits, got ({i}, {j}).")
    lo, hi = min(i, j), max(i, j)
    view = state.amplitudes.reshape(-1, 2, 1 << (hi - lo - 1), 2, 1 << lo)
    view[:, 1, :, 1, :] *= -1.0
    return state


def entangler_phases(n: int, pairs: Sequence[Sequence[int]]) -> np.ndarray:
    """Diagonal (+1/-1) of one entangling layer; CZ gates commute."""
    idx = np.arange(1 << n, dtype=np.int64)
    parity = np.zeros(1 << n, dtype=np.int64)
    for i, j in pairs:
        parity ^= (idx >> i) & (idx >> j) & 1
    return 1.0 - 2.0 * parity


# ---------------------------------------------------------------------------
# Ansatz construction
# ---------------------------------------------------------------------------

def build_ansatz(
    inst: QuboInstance,
    entanglement: Union[EntanglementKind, str],
    layers: int,
    rng: Optional[np.random.Generator] = None,
    seed: Optional[int] = None,
) -> AnsatzSpec:
    """
    Builds the entangler layout for an instance.

    Args:
        inst:         The QUBO instance (its edge set drives 'compatible' and
                      the pair count of 'random').
        entanglement: linear | compatible | random | none.
        layers:       Number of entangling layers L (0 only with 'none').
        rng:          Generator for 'random' pairs; created from `seed` when omitted.
        seed:         Recorded on the spec as the structure token.

    Raises:
        InvalidAnsatzError: impossible combination of kind, layers and graph.
    """
    kind = EntanglementKind(entanglement)
    if layers < 0:
        raise InvalidAnsatzError(f"layers must be >= 0, got {layers}")
    if (kind == EntanglementKind.NONE) != (layers == 0):
        raise InvalidAnsatzError(
            f"entanglement '{kind.value}' with {layers} layers: 'none' is used exactly when L = 0."
        )
    if kind == EntanglementKind.COMPATIBLE and inst.edge_count == 0:
        raise InvalidAnsatzError("compatible entanglement needs at least one edge.")

    n = inst.n
    if kind == EntanglementKind.LINEAR:
        pairs: List[List[tuple]] = [[(q, q + 1) for q in range(n - 1)] for _ in range(layers)]
    elif kind == EntanglementKind.COMPATIBLE:
        pairs = [[(i, j) for i, j, _ in inst.edges] for _ in range(layers)]
    elif kind == EntanglementKind.RANDOM:
        if rng is None:
            if seed is None:
                raise InvalidAnsatzError("random entanglement needs a generator or a seed.")
            rng = np.random.default_rng(seed)
        if inst.edge_count == 0:
            logger.warning("Random entanglement on an edgeless graph: layers hold no CZ gates.")
        pairs = [_random_pairs(n, inst.edge_count, rng) for _ in range(layers)]
    else:
        pairs = []

    return AnsatzSpec(n=n, layers=layers, entanglement=kind, entangler_pairs=pairs, seed=seed)


def _random_pairs(n: int, count: int, rng: np.random.Generator) -> List[tuple]:
    all_pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]
    picks = rng.choice(len(all_pairs), size=count, replace=False) if count else []
    return sorted(all_pairs[int(k)] for k in picks)


def init_params(
    spec: AnsatzSpec,
    perturbation: float = DEFAULT_PERTURBATION,
    mode: str = "constant",
    rng: Optional[np.random.Generator] = None,
) -> ParameterVector:
    """
    Starting point near the uniform superposition: first-layer angles are
    pi/4, later layers get `perturbation` ('constant') or a uniform draw from
    [0, 2 * perturbation] ('uniform').
    """
    if perturbation < 0:
        raise ValueError(f"perturbation must be >= 0, got {perturbation}")
    theta = np.empty((spec.n, spec.layers + 1), dtype=np.float64)
    theta[:, 0] = math.pi / 4
    if spec.layers:
        if mode == "constant":
            theta[:, 1:] = perturbation
        elif mode == "uniform":
            if rng is None:
                raise ValueError("uniform initialization needs a generator")
            theta[:, 1:] = rng.uniform(0.0, 2.0 * perturbation, size=(spec.n, spec.layers))
        else:
            raise ValueError(f"unknown init mode '{mode}'")
    return ParameterVector.from_array(theta)


# ---------------------------------------------------------------------------
# Evolution
# ---------------------------------------------------------------------------

class Circuit:
    """
    An AnsatzSpec with its entangling layers precomputed as diagonal phase
    vectors, so repeated evolutions inside an optimizer pay for the CZ
    structure once.
    """

    def __init__(self, spec: AnsatzSpec):
        self.spec = spec
        self._phases = [entangler_phases(spec.n, layer) for layer in spec.entangler_pairs]

    def evolve(self, params: Union[ParameterVector, np.ndarray]) -> StateVector:
        theta = params.to_array() if isinstance(params, ParameterVector) else np.asarray(params)
        expected = (self.spec.n, self.spec.layers + 1)
        if theta.shape != expected:
            if theta.size == self.spec.n_params:
                theta = theta.reshape(expected)
            else:
                raise DimensionMismatchError(
                    f"parameter shape {theta.shape} does not match ansatz {expected}."
                )

        state = StateVector(self.spec.n)
        self._rotate(state, theta[:, 0])
        for layer, phases in enumerate(self._phases, start=1):
            state.amplitudes *= phases
            self._rotate(state, theta[:, layer])
        return state

    @staticmethod
    def _rotate(state: StateVector, angles: np.ndarray) -> None:
        for q, angle in enumerate(angles):
            if angle != 0.0:
                apply_ry(state, q, float(angle))


def evolve(spec: AnsatzSpec, params: ParameterVector) -> StateVector:
    """|psi(theta)> from |0...0>: rotation layer 0, then (CZ layer, rotation layer) x L."""
    if params.n != spec.n or params.layers != spec.layers:
        raise DimensionMismatchError(
            f"parameters are {params.n}x{params.layers + 1}, ansatz needs {spec.n}x{spec.layers + 1}."
        )
    return Circuit(spec).evolve(params)
