import json

import numpy as np
import pytest

import services.optim as optim
from models import OptimizationTrace, OptimizerConfig, OptimizerKind, TerminationReason
from services.errors import NonFiniteCostError

SPSA = OptimizerConfig(kind=OptimizerKind.SPSA, max_iterations=500, spsa_a=0.3, spsa_c=0.01)
NELDER_MEAD = OptimizerConfig(kind=OptimizerKind.NELDER_MEAD, max_iterations=2000, ftol=1e-10)
QUASI_NEWTON = OptimizerConfig(kind=OptimizerKind.QUASI_NEWTON, max_iterations=2000, ftol=1e-14)


def _bowl(x: np.ndarray) -> float:
    return float(np.sum(np.asarray(x) ** 2))


def _shifted_bowl(x: np.ndarray) -> float:
    return float((x[0] - 1.0) ** 2 + (x[1] + 2.0) ** 2)


def _rosenbrock(x: np.ndarray) -> float:
    return float(100.0 * (x[1] - x[0] ** 2) ** 2 + (1.0 - x[0]) ** 2)


class _Calls:
    def __init__(self, fn):
        self.fn = fn
        self.count = 0

    def __call__(self, x):
        self.count += 1
        return self.fn(x)


def _run(cfg: OptimizerConfig, fn, x0, seed: int = 0) -> OptimizationTrace:
    return optim.minimize(fn, np.asarray(x0, dtype=float), cfg, rng=np.random.default_rng(seed))


# --- bookkeeping ---------------------------------------------------------------------

def test_counting_cost_tracks_best_point() -> None:
    counted = optim.CountingCost(_bowl)
    counted(np.array([2.0]))
    counted(np.array([-1.0]))
    counted(np.array([3.0]))

    assert counted.evaluations == 3
    assert counted.best_cost == 1.0
    assert counted.best_params.tolist() == [-1.0]


@pytest.mark.parametrize("cfg", [SPSA, NELDER_MEAD, QUASI_NEWTON], ids=lambda c: c.kind.value)
def test_non_finite_cost_is_rejected(cfg: OptimizerConfig) -> None:
    with pytest.raises(NonFiniteCostError):
        _run(cfg, lambda x: float("nan"), [0.1, 0.2])


@pytest.mark.parametrize("cfg", [SPSA, NELDER_MEAD, QUASI_NEWTON], ids=lambda c: c.kind.value)
def test_evaluation_count_matches_external_counter(cfg: OptimizerConfig) -> None:
    rng = np.random.default_rng(7)
    for seed in range(100):
        calls = _Calls(_bowl)
        x0 = rng.uniform(-1.0, 1.0, size=4)
        trace = _run(cfg.model_copy(update={"max_iterations": 30}), calls, x0, seed)

        assert trace.evaluations == calls.count
        assert trace.best_cost <= _bowl(x0)


def test_spsa_spends_two_evaluations_per_iteration() -> None:
    trace = _run(SPSA.model_copy(update={"max_iterations": 40}), _bowl, [0.5] * 6)

    assert trace.evaluations == 1 + 2 * trace.iterations
    assert len(trace.cost_history) == trace.iterations


def test_minimize_needs_generator_for_spsa() -> None:
    with pytest.raises(ValueError):
        optim.minimize(_bowl, np.zeros(2), SPSA)


# --- SPSA ------------------------------------------------------------------------------

def test_spsa_quadratic_bowl() -> None:
    rng = np.random.default_rng(0)
    solved = 0
    for seed in range(100):
        trace = _run(SPSA, _bowl, rng.uniform(-1.0, 1.0, size=10), seed)
        solved += trace.best_cost < 1e-2
    assert solved >= 95


def test_spsa_is_deterministic_under_seed() -> None:
    a = _run(SPSA, _bowl, [0.3, -0.7, 0.2], seed=11)
    b = _run(SPSA, _bowl, [0.3, -0.7, 0.2], seed=11)

    assert a.cost_history == b.cost_history
    assert a.best_params == b.best_params


def test_spsa_calibrated_gain_is_scale_free() -> None:
    cfg = OptimizerConfig(kind=OptimizerKind.SPSA, max_iterations=200, ftol=1e-9)
    base = _run(cfg, _bowl, [0.4, -0.3, 0.8], seed=3)
    scaled = _run(cfg.model_copy(update={"ftol": 7e-9}), lambda x: 7.0 * _bowl(x), [0.4, -0.3, 0.8], seed=3)

    assert scaled.evaluations == base.evaluations
    assert np.allclose(scaled.cost_history, 7.0 * np.asarray(base.cost_history), rtol=1e-6, atol=1e-12)


def test_spsa_stops_on_flat_cost() -> None:
    trace = _run(SPSA, lambda x: 1.0, [0.1, 0.2, 0.3])

    assert trace.terminated_by == TerminationReason.CONVERGED
    assert trace.iterations < SPSA.max_iterations


# --- Nelder-Mead ---------------------------------------------------------------------------

def test_nelder_mead_two_parameter_quadratic() -> None:
    trace = _run(NELDER_MEAD.model_copy(update={"ftol": 1e-8}), _shifted_bowl, [0.0, 0.0])

    assert trace.best_cost < 1e-6
    assert np.allclose(trace.best_params, [1.0, -2.0], atol=1e-3)
    assert trace.evaluations < 250
    assert trace.terminated_by == TerminationReason.CONVERGED


def test_nelder_mead_constant_cost_stops_after_initial_simplex() -> None:
    trace = _run(NELDER_MEAD, lambda x: 3.0, np.zeros(5))

    assert trace.evaluations == 6
    assert trace.terminated_by == TerminationReason.CONVERGED


def test_nelder_mead_decisions_are_scale_free() -> None:
    base = _run(NELDER_MEAD, _rosenbrock, [-1.2, 1.0])
    scaled = _run(NELDER_MEAD.model_copy(update={"ftol": 5e-10}), lambda x: 5.0 * _rosenbrock(x), [-1.2, 1.0])

    assert scaled.evaluations == base.evaluations
    assert scaled.best_params == base.best_params


# --- quasi-Newton -----------------------------------------------------------------------------

def test_finite_difference_gradient() -> None:
    gradient = optim.finite_difference_gradient(_bowl, np.ones(5), 1e-6)

    assert np.allclose(gradient, 2.0, atol=1e-4)


def test_quasi_newton_rosenbrock() -> None:
    trace = _run(QUASI_NEWTON, _rosenbrock, [-1.2, 1.0])

    assert trace.best_cost < 1e-8
    assert np.allclose(trace.best_params, [1.0, 1.0], atol=1e-3)
    assert trace.terminated_by == TerminationReason.CONVERGED


def test_quasi_newton_quadratic_is_fast() -> None:
    trace = _run(QUASI_NEWTON, _shifted_bowl, [0.0, 0.0])

    assert trace.best_cost < 1e-10
    assert trace.evaluations < 100


# --- serialization --------------------------------------------------------------------------

def test_trace_json_downsampling_keeps_last_entry() -> None:
    trace = OptimizationTrace(
        best_params=[0.0],
        best_cost=0.0,
        evaluations=23,
        iterations=11,
        cost_history=[float(k) for k in range(11, 0, -1)],
        terminated_by=TerminationReason.MAX_ITERATIONS,
    )
    document = json.loads(optim.trace_to_json(trace, SPSA, downsample=3))

    assert document["cost_history"] == [11.0, 8.0, 5.0, 2.0, 1.0]
    assert document["config"]["kind"] == "spsa"
    assert document["terminated_by"] == "max_iterations"
    assert json.loads(optim.trace_to_json(trace, SPSA))["cost_history"] == trace.cost_history
