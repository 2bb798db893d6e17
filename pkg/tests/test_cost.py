import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import services.cost as cost
from models import CostConfig, EnergyDistribution, EvaluationMode, QuboInstance, ShotBatch
from services.errors import DimensionMismatchError, EmptyDistributionError
from services.qubo import brute_force_spectrum, energy_table, generate_instance
from services.simulator import StateVector, build_ansatz, init_params, product_state

TWO_ATOMS = EnergyDistribution(energies=[-4, 2], probabilities=[0.5, 0.5])


def _random_distribution(rng: np.random.Generator, size: int = 8) -> EnergyDistribution:
    energies = np.sort(rng.choice(np.arange(-60, 61), size=size, replace=False))
    probs = rng.dirichlet(np.ones(size))
    return EnergyDistribution(energies=energies.tolist(), probabilities=(probs / probs.sum()).tolist())


# --- exact CVaR -------------------------------------------------------------------

def test_exact_cost_two_atoms() -> None:
    assert cost.exact_cost(TWO_ATOMS, 0.25) == pytest.approx(-4.0)
    assert cost.exact_cost(TWO_ATOMS, 0.75) == pytest.approx(-2.0)
    assert cost.exact_cost(TWO_ATOMS, 1.0) == pytest.approx(-1.0)


def test_exact_cost_full_mass_is_the_mean() -> None:
    rng = np.random.default_rng(0)
    for _ in range(50):
        dist = _random_distribution(rng)
        assert cost.exact_cost(dist, 1.0) == pytest.approx(float(np.dot(dist.energies, dist.probabilities)))


def test_exact_cost_monotone_and_bounded_in_rho() -> None:
    rng = np.random.default_rng(1)
    rhos = np.linspace(0.01, 1.0, 60)
    for _ in range(100):
        dist = _random_distribution(rng)
        values = [cost.exact_cost(dist, float(rho)) for rho in rhos]
        assert all(b >= a - 1e-9 for a, b in zip(values, values[1:]))
        assert all(min(dist.energies) - 1e-9 <= v <= max(dist.energies) + 1e-9 for v in values)


def test_exact_cost_small_rho_reaches_lowest_supported_energy() -> None:
    rng = np.random.default_rng(2)
    for _ in range(20):
        dist = _random_distribution(rng)
        assert cost.exact_cost(dist, 1e-9) == pytest.approx(dist.energies[0])


@st.composite
def _distributions(draw) -> EnergyDistribution:
    energies = sorted(draw(st.lists(st.integers(-60, 60), min_size=1, max_size=8, unique=True)))
    weights = np.array(draw(st.lists(st.floats(0.01, 1.0), min_size=len(energies), max_size=len(energies))))
    return EnergyDistribution(energies=energies, probabilities=(weights / weights.sum()).tolist())


@settings(max_examples=100, deadline=None)
@given(_distributions(), st.integers(-100, 100), st.floats(0.01, 1.0))
def test_exact_cost_translation_equivariance(dist: EnergyDistribution, shift: int, rho: float) -> None:
    shifted = EnergyDistribution(energies=[e + shift for e in dist.energies], probabilities=dist.probabilities)

    assert cost.exact_cost(shifted, rho) == pytest.approx(cost.exact_cost(dist, rho) + shift, abs=1e-9)


def test_equal_energies_are_merged() -> None:
    probs = np.array([0.1, 0.2, 0.3, 0.4])
    energies = np.array([5, -3, 5, 0])
    dist = cost.energy_distribution(probs, energies)
    permuted = cost.energy_distribution(probs[[2, 1, 0, 3]], energies[[2, 1, 0, 3]])

    assert dist.energies == [-3, 0, 5]
    assert dist.probabilities == pytest.approx([0.2, 0.4, 0.4])
    assert cost.exact_cost(dist, 0.3) == cost.exact_cost(permuted, 0.3)


def test_zero_mass_levels_are_dropped() -> None:
    dist = cost.energy_distribution(np.array([0.0, 1.0]), np.array([-8, 3]))

    assert dist.energies == [3]
    assert cost.exact_cost(dist, 0.1) == pytest.approx(3.0)


def test_empty_distribution_is_rejected() -> None:
    with pytest.raises(EmptyDistributionError):
        cost.exact_cost(EnergyDistribution(), 0.5)


# --- sampled CVaR ------------------------------------------------------------------

def test_sampled_tail_by_hand() -> None:
    assert cost._sampled_from_levels(np.array([7.0]), np.array([10]), 0.3) == 7.0
    assert cost._sampled_from_levels(np.array([3.0, 1.0, 4.0, 2.0]), np.ones(4, dtype=np.int64), 0.5) == 1.5
    assert cost._sampled_from_levels(np.array([3.0, 1.0, 4.0, 2.0]), np.ones(4, dtype=np.int64), 1.0) == 2.5


def test_tail_size_keeps_at_least_one_shot() -> None:
    assert cost.tail_size(0.1, 5) == 1
    assert cost.tail_size(0.1, 9000) == 900
    assert cost.tail_size(0.3, 10) == 3


def test_sampled_cost_on_fixture(qubo_n4: QuboInstance) -> None:
    batch = ShotBatch(n=4, counts={13: 1, 5: 1, 0: 2}, total=4)

    assert cost.sampled_cost(batch, qubo_n4, 0.5) == pytest.approx(-12.0)
    assert cost.sampled_cost(batch, qubo_n4, 1.0) == pytest.approx(-6.0)


def test_sampled_cost_errors(qubo_n4: QuboInstance) -> None:
    with pytest.raises(EmptyDistributionError):
        cost.sampled_cost(ShotBatch(n=4, counts={}, total=0), qubo_n4, 0.5)
    with pytest.raises(DimensionMismatchError):
        cost.sampled_cost(ShotBatch(n=2, counts={3: 1}, total=1), qubo_n4, 0.5)


def test_sampled_cost_approaches_exact_cost() -> None:
    inst = generate_instance(6, 8, "uniform-random", 21)
    spec = build_ansatz(inst, "none", 0)
    angles = np.random.default_rng(0).uniform(0.0, math.pi / 2, size=6)

    exact = cost.CostFunction(inst, spec, CostConfig(rho=0.5))(angles)
    errors = []
    for shots in (1_000, 100_000):
        fn = cost.CostFunction(
            inst, spec, CostConfig(rho=0.5, mode=EvaluationMode.SHOTS, shots=shots), rng=np.random.default_rng(1)
        )
        errors.append(np.mean([abs(fn(angles) - exact) for _ in range(20)]))
    assert errors[1] < errors[0]
    assert errors[1] < 0.2



def test_sampled_cost_error_shrinks_like_inverse_root_shots() -> None:
    inst = generate_instance(8, 12, "uniform-random", 33)
    spec = build_ansatz(inst, "linear", 1)
    angles = init_params(spec, 0.3, mode="uniform", rng=np.random.default_rng(4)).flat()

    exact = cost.CostFunction(inst, spec, CostConfig(rho=0.1))(angles)
    shots = np.array([1_000, 10_000, 100_000])
    errors = []
    for k in shots:
        fn = cost.CostFunction(
            inst, spec, CostConfig(rho=0.1, mode=EvaluationMode.SHOTS, shots=int(k)), rng=np.random.default_rng(int(k))
        )
        errors.append(np.mean([abs(fn(angles) - exact) for _ in range(50)]))

    slope = np.polyfit(np.log10(shots), np.log10(errors), 1)[0]
    assert -0.65 <= slope <= -0.35

# --- overlap and success --------------------------------------------------------------

def test_overlap_of_ground_basis_state(qubo_n4: QuboInstance) -> None:
    report = brute_force_spectrum(qubo_n4)

    assert cost.overlap_with_ground(StateVector.basis(4, 13), report) == 1.0
    assert cost.overlap_with_ground(StateVector.basis(4, 5), report) == 0.0


def test_overlap_of_uniform_superposition() -> None:
    inst = generate_instance(12, 17, "uniform-random", 8)
    report = brute_force_spectrum(inst)
    uniform = product_state([math.pi / 4] * 12)
    expected = len(report.ground_manifold) / 4096

    assert cost.overlap_with_ground(uniform, report) == pytest.approx(expected, abs=1e-15)
    assert cost.overlap_with_ground(uniform.to_statevector(), report) == pytest.approx(expected, abs=1e-15)


def test_overlap_matches_indicator_dot_product(qubo_n4: QuboInstance) -> None:
    report = brute_force_spectrum(qubo_n4)
    spec = build_ansatz(qubo_n4, "linear", 2)
    theta = np.random.default_rng(5).uniform(-1.0, 1.0, size=spec.n_params)
    state = cost.CostFunction(qubo_n4, spec, CostConfig()).state(theta)
    indicator = np.zeros(16)
    indicator[report.ground_manifold] = 1.0

    assert cost.overlap_with_ground(state, report) == pytest.approx(float(state.probabilities() @ indicator))


def test_success_cut_off_is_inclusive() -> None:
    assert cost.success(0.1, 0.1) == 1
    assert cost.success(0.0999, 0.1) == 0
    assert cost.success(0.0) == 0


def test_repetition_bound() -> None:
    assert cost.repetition_bound(0.1, 100) == pytest.approx(0.99997, abs=1e-5)


def test_cost_labels() -> None:
    assert cost.cost_label(1.0) == "VQE"
    assert cost.cost_label(0.1) == "CVaR-VQE"


# --- black-box objective -------------------------------------------------------------

def test_cost_function_matches_distribution(qubo_n4: QuboInstance) -> None:
    spec = build_ansatz(qubo_n4, "compatible", 1)
    flat = init_params(spec, 0.3).flat()
    for rho in (0.05, 0.1, 0.5, 1.0):
        fn = cost.make_cost_function(qubo_n4, spec, CostConfig(rho=rho))
        assert fn(flat) == pytest.approx(cost.exact_cost(fn.distribution(flat), rho), abs=1e-12)


def test_cost_function_accepts_precomputed_energies(qubo_n4: QuboInstance) -> None:
    spec = build_ansatz(qubo_n4, "none", 0)
    flat = np.full(4, 0.4)
    plain = cost.CostFunction(qubo_n4, spec, CostConfig(rho=0.2))
    shared = cost.CostFunction(qubo_n4, spec, CostConfig(rho=0.2), energies=energy_table(qubo_n4))

    assert plain(flat) == shared(flat)


def test_cost_function_needs_generator_for_shots(qubo_n4: QuboInstance) -> None:
    spec = build_ansatz(qubo_n4, "none", 0)
    with pytest.raises(ValueError):
        cost.CostFunction(qubo_n4, spec, CostConfig(mode=EvaluationMode.SHOTS, shots=100))
