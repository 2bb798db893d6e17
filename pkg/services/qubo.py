"""
VQO Lab - QUBO Service
Generates QUBO instances on random graphs, rewrites them in Ising form, and
analyzes them exactly by enumerating every bitstring.

Bit convention used everywhere: bit k of an integer pattern is variable k
(variable 0 is the least-significant bit), and manifolds are ordered as
unsigned integers.
"""

import json
import logging
import math
import os
from collections import defaultdict
from concurrent.futures import ThreadPoolExecutor
from fractions import Fraction
from functools import partial
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Set, Tuple, Union

import numpy as np

from models import MAX_VARIABLES, GraphKind, IsingModel, QuboInstance, SpectrumReport
from services.errors import (
    DegenerateSpectrumError,
    DimensionMismatchError,
    EdgeCountError,
    InfeasibleGraphError,
    OracleCapError,
)

logger = logging.getLogger(__name__)

# ---------------------------------------------------------------------------
# Constants
# ---------------------------------------------------------------------------

ORACLE_CAP = min(int(os.getenv("VQO_ORACLE_CAP", str(MAX_VARIABLES))), MAX_VARIABLES)
WEIGHT_BOUND = 10
MAX_REGULAR_RESTARTS = 10_000

CHUNK_BITS = 20             # 2^20 bitstrings per enumeration chunk
HAMMING_BLOCK = 1 << 22     # max pair count materialized per xor block

# Set-bit count of every byte value.
_POPCOUNT8 = np.array([bin(b).count("1") for b in range(256)], dtype=np.uint8)

Edge = Tuple[int, int]
Bits = Union[Sequence[int], np.ndarray]


# ---------------------------------------------------------------------------
# Graph generation
# ---------------------------------------------------------------------------

def generate_graph(
    n: int,
    edge_count: int,
    kind: Union[GraphKind, str],
    rng: np.random.Generator,
) -> List[Edge]:
    """
    Samples an unweighted simple graph with exactly `edge_count` edges.

    Args:
        n:          Number of vertices.
        edge_count: Number of edges, 0 <= edge_count <= n(n-1)/2.
        kind:       'regular' (every vertex has degree 2*edge_count/n) or
                    'uniform-random' (uniform sample of the edge set).
        rng:        Seeded numpy generator; the only source of randomness.

    Returns:
        Sorted list of (i, j) pairs with i < j.

    Raises:
        EdgeCountError:       edge_count out of range.
        InfeasibleGraphError: no d-regular graph matches the request.
    """
    max_edges = n * (n - 1) // 2
    if not 0 <= edge_count <= max_edges:
        raise EdgeCountError(
            f"edge_count={edge_count} outside [0, {max_edges}] for n={n}."
        )

    if GraphKind(kind) == GraphKind.REGULAR:
        return _regular_graph(n, edge_count, rng)

    all_pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]
    picks = rng.choice(max_edges, size=edge_count, replace=False) if edge_count else []
    return sorted(all_pairs[int(k)] for k in picks)


def _regular_graph(n: int, edge_count: int, rng: np.random.Generator) -> List[Edge]:
    if (2 * edge_count) % n != 0:
        raise InfeasibleGraphError(
            f"{edge_count} edges on {n} vertices give a non-integer degree "
            f"{2 * edge_count / n:.3f}; a regular graph needs 2*edges/n integral."
        )
    degree = 2 * edge_count // n
    if degree >= n or (n * degree) % 2:
        raise InfeasibleGraphError(f"no {degree}-regular graph on {n} vertices.")
    if degree == 0:
        return []

    # Dense degrees almost never pair cleanly; sample the sparse complement.
    complement = degree > (n - 1) // 2
    target = n - 1 - degree if complement else degree
    edges: Set[Edge] = _pairing_model(n, target, rng) if target else set()
    if complement:
        full = {(i, j) for i in range(n) for j in range(i + 1, n)}
        edges = full - edges
    return sorted(edges)


def _pairing_model(n: int, degree: int, rng: np.random.Generator) -> Set[Edge]:
    for _ in range(MAX_REGULAR_RESTARTS):
        edges = _try_pairing(n, degree, rng)
        if edges is not None:
            return edges
    raise InfeasibleGraphError(
        f"pairing model failed {MAX_REGULAR_RESTARTS} times for a "
        f"{degree}-regular graph on {n} vertices."
    )


def _try_pairing(n: int, degree: int, rng: np.random.Generator) -> Optional[Set[Edge]]:
    """
    One pass of the configuration model: shuffle n*degree stubs and pair
    them in order. Any self-loop or repeated pair discards the whole pass.
    """
    edges: Set[Edge] = set()
    stubs = list(range(n)) * degree
    rng.shuffle(stubs)
    it = iter(stubs)
    for s1, s2 in zip(it, it):
        if s1 > s2:
            s1, s2 = s2, s1
        if s1 == s2 or (s1, s2) in edges:
            return None
        edges.add((s1, s2))
    return edges


# ---------------------------------------------------------------------------
# Instances
# ---------------------------------------------------------------------------

def assign_weights(
    edges: Sequence[Edge],
    rng: np.random.Generator,
    *,
    n: int,
    graph_kind: Union[GraphKind, str] = GraphKind.UNIFORM_RANDOM,
    seed: int = 0,
) -> QuboInstance:
    """
    Draws an integer weight uniformly from [-10, 10] for every edge, redrawing
    zeros so that no edge silently disappears.
    """
    weights = rng.integers(-WEIGHT_BOUND, WEIGHT_BOUND + 1, size=len(edges))
    zeros = np.flatnonzero(weights == 0)
    while zeros.size:
        weights[zeros] = rng.integers(-WEIGHT_BOUND, WEIGHT_BOUND + 1, size=zeros.size)
        zeros = zeros[weights[zeros] == 0]

    return QuboInstance(
        n=n,
        graph_kind=GraphKind(graph_kind),
        seed=seed,
        edges=[(int(i), int(j), int(w)) for (i, j), w in zip(edges, weights)],
    )


def generate_instance(
    n: int,
    edge_count: int,
    kind: Union[GraphKind, str],
    seed: int,
) -> QuboInstance:
    """Graph + weights from a single seeded stream; the seed alone reproduces it."""
    rng = np.random.default_rng(seed)
    edges = generate_graph(n, edge_count, kind, rng)
    inst = assign_weights(edges, rng, n=n, graph_kind=kind, seed=seed)
    logger.debug("Generated instance seed=%d n=%d edges=%d kind=%s.", seed, n, edge_count, GraphKind(kind).value)
    return inst


def scale_weights(inst: QuboInstance, factor: int) -> QuboInstance:
    """Multiplies every weight by a positive integer."""
    if factor < 1:
        raise ValueError(f"scale factor must be a positive integer, got {factor}")
    return inst.model_copy(
        update={"edges": [(i, j, w * factor) for i, j, w in inst.edges]}
    )


def density(inst: QuboInstance) -> Fraction:
    """Fraction of the n(n-1)/2 possible edges that are present."""
    if inst.n < 2:
        raise EdgeCountError(f"density is undefined for n={inst.n} < 2.")
    return Fraction(2 * inst.edge_count, inst.n * (inst.n - 1))


def edges_for_density(n: int, target: float) -> int:
    """Nearest realizable edge count for a real-valued density (ties round up)."""
    max_edges = n * (n - 1) // 2
    if not 0.0 <= target <= 1.0:
        raise EdgeCountError(f"density {target} outside [0, 1].")
    return min(max_edges, int(math.floor(target * max_edges + 0.5)))


# ---------------------------------------------------------------------------
# Energies
# ---------------------------------------------------------------------------

def bits_to_index(bits: Bits) -> int:
    return sum(int(b) << k for k, b in enumerate(bits))


def index_to_bits(index: int, n: int) -> List[int]:
    return [(index >> k) & 1 for k in range(n)]


def _as_bits(x: Bits, n: int) -> np.ndarray:
    bits = np.asarray(x, dtype=np.int64).reshape(-1)
    if bits.size != n:
        raise DimensionMismatchError(f"bitstring has length {bits.size}, expected {n}.")
    if np.any((bits != 0) & (bits != 1)):
        raise ValueError("bitstring entries must be 0 or 1.")
    return bits


def qubo_energy(inst: QuboInstance, x: Bits) -> int:
    """E(x) = sum_{i,j} x_i Q_ij x_j (full double sum)."""
    bits = _as_bits(x, inst.n)
    return int(bits @ inst.weights @ bits)


def to_ising(inst: QuboInstance) -> IsingModel:
    """
    Rewrites E(x) with s = 2x - 1 as offset + sum_{i<j} J_ij s_i s_j + sum_i h_i s_i,
    where J_ij = Q_ij / 2, h_i = (sum_j Q_ij) / 2 and offset = (sum_ij Q_ij) / 4.
    """
    q = inst.weights
    return IsingModel(
        n=inst.n,
        j=[(i, j, w / 2) for i, j, w in inst.edges],
        h=(q.sum(axis=1) / 2).tolist(),
        offset=float(q.sum()) / 4,
    )


def ising_energy(model: IsingModel, x: Bits) -> float:
    spins = 2 * _as_bits(x, model.n) - 1
    coupling = sum(jij * spins[i] * spins[j] for i, j, jij in model.j)
    return float(model.offset + coupling + float(np.dot(model.h, spins)))


def _edge_arrays(inst: QuboInstance) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    if not inst.edges:
        empty = np.zeros(0, dtype=np.int64)
        return empty, empty, empty
    arr = np.asarray(inst.edges, dtype=np.int64)
    return arr[:, 0], arr[:, 1], arr[:, 2]


def _chunk_energies(edge_arrays, start: int, stop: int) -> np.ndarray:
    return _indexed_energies(edge_arrays, np.arange(start, stop, dtype=np.int64))


def _indexed_energies(edge_arrays, idx: np.ndarray) -> np.ndarray:
    ii, jj, ww = edge_arrays
    energies = np.zeros(idx.shape, dtype=np.int64)
    for i, j, w in zip(ii, jj, ww):
        energies += (2 * w) * ((idx >> i) & (idx >> j) & 1)
    return energies


def energy_table(inst: QuboInstance) -> np.ndarray:
    """Energies of all 2^n bitstrings, indexed by bit pattern."""
    if inst.n > ORACLE_CAP:
        raise OracleCapError(f"n={inst.n} exceeds the enumeration cap {ORACLE_CAP}.")
    return _chunk_energies(_edge_arrays(inst), 0, 1 << inst.n)


def pattern_energies(inst: QuboInstance, patterns) -> np.ndarray:
    """Energies of selected bit patterns (integers, bit k = variable k)."""
    idx = np.asarray(patterns, dtype=np.int64)
    if idx.size and (idx.min() < 0 or idx.max() >= (1 << inst.n)):
        raise DimensionMismatchError(f"bit pattern outside the {inst.n}-variable range.")
    return _indexed_energies(_edge_arrays(inst), idx)


# ---------------------------------------------------------------------------
# Exact spectrum and hardness
# ---------------------------------------------------------------------------

def hamming_distance(a: int, b: int, n: int) -> float:
    """Normalized Hamming distance between two n-bit patterns."""
    return bin(a ^ b).count("1") / n


def brute_force_spectrum(
    inst: QuboInstance,
    cap: Optional[int] = None,
    workers: int = 1,
) -> SpectrumReport:
    """
    Enumerates all 2^n bitstrings and returns the ground and first-excited
    levels with their complete manifolds and the minimum Hamming distance
    between them.

    The range is scanned in fixed chunks; with `workers` > 1 the chunks run on
    a thread pool. Each chunk reports its own two lowest levels, which always
    contain the global two lowest, so the merge is order-independent.

    Raises:
        OracleCapError:          n exceeds the cap.
        DegenerateSpectrumError: every bitstring has the same energy.
    """
    limit = ORACLE_CAP if cap is None else min(cap, MAX_VARIABLES)
    if inst.n > limit:
        raise OracleCapError(
            f"n={inst.n} exceeds the enumeration cap {limit}; 2^{inst.n} bitstrings is infeasible."
        )

    total = 1 << inst.n
    chunk = 1 << min(inst.n, CHUNK_BITS)
    bounds = [(start, min(start + chunk, total)) for start in range(0, total, chunk)]
    scan = partial(_scan_chunk, _edge_arrays(inst))

    if workers > 1 and len(bounds) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            partials = list(pool.map(scan, bounds))
    else:
        partials = [scan(b) for b in bounds]

    levels = _merge_levels(partials)
    if len(levels) < 2:
        raise DegenerateSpectrumError(
            f"instance seed={inst.seed} has a single energy level "
            f"({levels[0][0]}); the first excited level is undefined."
        )

    (e0, ground), (e1, excited) = levels
    report = SpectrumReport(
        n=inst.n,
        ground_energy=e0,
        ground_manifold=ground.tolist(),
        first_excited_energy=e1,
        first_excited_manifold=excited.tolist(),
        min_hamming_bits=_min_hamming_bits(ground, excited),
    )
    logger.debug(
        "Spectrum seed=%d: E0=%d (x%d), E1=%d (x%d), d_H=%.3f.",
        inst.seed, e0, ground.size, e1, excited.size, report.min_hamming_distance,
    )
    return report


def _scan_chunk(edge_arrays, bounds: Tuple[int, int]) -> List[Tuple[int, np.ndarray]]:
    start, stop = bounds
    energies = _chunk_energies(edge_arrays, start, stop)
    e0 = int(energies.min())
    levels = [(e0, start + np.flatnonzero(energies == e0))]
    above = energies[energies > e0]
    if above.size:
        e1 = int(above.min())
        levels.append((e1, start + np.flatnonzero(energies == e1)))
    return levels


def _merge_levels(partials) -> List[Tuple[int, np.ndarray]]:
    by_energy: Dict[int, List[np.ndarray]] = defaultdict(list)
    for levels in partials:
        for energy, members in levels:
            by_energy[energy].append(members)
    lowest = sorted(by_energy)[:2]
    return [(e, np.sort(np.concatenate(by_energy[e]))) for e in lowest]


def popcount(words: np.ndarray) -> np.ndarray:
    """Set bits per uint64 word, via a byte lookup table."""
    words = np.ascontiguousarray(words, dtype=np.uint64)
    return _POPCOUNT8[words.view(np.uint8)].reshape(*words.shape, 8).sum(axis=-1, dtype=np.int64)


def _min_hamming_bits(ground: np.ndarray, excited: np.ndarray) -> int:
    g = ground.astype(np.uint64)
    f = excited.astype(np.uint64)
    block = max(1, HAMMING_BLOCK // f.size)
    best = 64
    for start in range(0, g.size, block):
        xor = np.bitwise_xor.outer(g[start:start + block], f)
        best = min(best, int(popcount(xor).min()))
        if best == 1:
            break
    return best


# ---------------------------------------------------------------------------
# File formats
# ---------------------------------------------------------------------------

def instance_to_json(inst: QuboInstance) -> str:
    """Canonical instance document: {n, graph_kind, seed, edges}, edges sorted."""
    payload = {
        "n": inst.n,
        "graph_kind": inst.graph_kind.value,
        "seed": inst.seed,
        "edges": [[i, j, w] for i, j, w in inst.edges],
    }
    return json.dumps(payload, indent=2) + "\n"


def instance_from_json(text: str) -> QuboInstance:
    return QuboInstance.model_validate_json(text)


def save_instance(inst: QuboInstance, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(instance_to_json(inst), encoding="utf-8")
    return path


def load_instance(path: Union[str, Path]) -> QuboInstance:
    return instance_from_json(Path(path).read_text(encoding="utf-8"))


def spectrum_to_json(report: SpectrumReport) -> str:
    return report.model_dump_json(indent=2) + "\n"
