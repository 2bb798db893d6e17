"""
VQO Lab - Optimizer Service
Classical optimizers over a black-box cost: SPSA (stochastic, two
evaluations per step), Nelder-Mead (simplex, via scipy) and a BFGS-style
quasi-Newton method with finite-difference gradients.

Every optimizer calls the cost through CountingCost, so the reported
evaluation count is the true number of calls.
"""

import json
import logging
import math
from collections import deque
from typing import Callable, List, Optional, Union

import numpy as np
from scipy.optimize import minimize as scipy_minimize

from models import (
    OptimizationTrace,
    OptimizerConfig,
    OptimizerKind,
    ParameterVector,
    TerminationReason,
)
from services.errors import NonFiniteCostError

logger = logging.getLogger(__name__)

Cost = Callable[[np.ndarray], float]
Params = Union[ParameterVector, np.ndarray, List[float]]

CURVATURE_FLOOR = 1e-12


# ---------------------------------------------------------------------------
# Bookkeeping
# ---------------------------------------------------------------------------

class CountingCost:
    """Wraps a cost: counts calls, remembers the best point, rejects NaN/inf."""

    def __init__(self, fn: Cost):
        self.fn = fn
        self.evaluations = 0
        self.best_cost = math.inf
        self.best_params: Optional[np.ndarray] = None

    def __call__(self, x: np.ndarray) -> float:
        value = float(self.fn(x))
        self.evaluations += 1
        if not math.isfinite(value):
            raise NonFiniteCostError(f"cost returned {value} at evaluation {self.evaluations}.")
        if value < self.best_cost:
            self.best_cost = value
            self.best_params = np.array(x, dtype=np.float64, copy=True)
        return value

    def trace(
        self,
        iterations: int,
        history: List[float],
        terminated_by: TerminationReason,
    ) -> OptimizationTrace:
        return OptimizationTrace(
            best_params=self.best_params.tolist(),
            best_cost=self.best_cost,
            evaluations=self.evaluations,
            iterations=iterations,
            cost_history=history,
            terminated_by=terminated_by,
        )


class _Patience:
    """Counts consecutive cost changes below ftol."""

    def __init__(self, ftol: float, patience: int):
        self.ftol = ftol
        self.patience = patience
        self.streak = 0

    def update(self, change: float) -> bool:
        self.streak = self.streak + 1 if abs(change) < self.ftol else 0
        return self.streak >= self.patience


def _flat(params0: Params) -> np.ndarray:
    if isinstance(params0, ParameterVector):
        return params0.flat()
    return np.asarray(params0, dtype=np.float64).reshape(-1).copy()


# ---------------------------------------------------------------------------
# SPSA
# ---------------------------------------------------------------------------

def spsa(
    cost: Cost,
    params0: Params,
    cfg: OptimizerConfig,
    rng: np.random.Generator,
    ftol: Optional[float] = None,
) -> OptimizationTrace:
    """
    Simultaneous-perturbation stochastic approximation.

    Gains follow a_k = a / (k + 1 + A)^alpha and c_k = c / (k + 1)^gamma. When
    `spsa_a` is unset, a is chosen on the first iteration so that the largest
    coordinate of the first step equals `spsa_target_step`. Convergence is
    declared when a moving average of the (f+ + f-)/2 estimates changes by
    less than ftol for `patience` consecutive iterations.

    Evaluations: one at params0 plus two per iteration, so 1 + 2 * iterations
    rather than the textbook 2 * iterations. The extra call bounds best_cost
    by cost(params0).
    """
    counted = CountingCost(cost)
    theta = _flat(params0)
    counted(theta)

    tol = ftol if ftol is not None else cfg.resolved_ftol()
    stability = cfg.spsa_stability if cfg.spsa_stability is not None else 0.1 * cfg.max_iterations
    a = cfg.spsa_a
    window: deque = deque(maxlen=cfg.spsa_smoothing)
    patience = _Patience(tol, cfg.patience)
    previous_average: Optional[float] = None
    history: List[float] = []
    reason = TerminationReason.MAX_ITERATIONS

    for k in range(cfg.max_iterations):
        ck = cfg.spsa_c / (k + 1) ** cfg.spsa_gamma
        delta = rng.choice(np.array([-1.0, 1.0]), size=theta.size)
        f_plus = counted(theta + ck * delta)
        f_minus = counted(theta - ck * delta)
        gradient = (f_plus - f_minus) / (2.0 * ck * delta)

        if a is None:
            magnitude = float(np.max(np.abs(gradient)))
            a = cfg.spsa_target_step * (1 + stability) ** cfg.spsa_alpha
            if magnitude > 0.0:
                a /= magnitude
            logger.debug("SPSA calibrated a=%.4g from |g0|_inf=%.4g.", a, magnitude)

        ak = a / (k + 1 + stability) ** cfg.spsa_alpha
        theta = theta - ak * gradient
        history.append(counted.best_cost)

        window.append(0.5 * (f_plus + f_minus))
        average = float(np.mean(window))
        if previous_average is not None and patience.update(average - previous_average):
            reason = TerminationReason.CONVERGED
            break
        previous_average = average

    return counted.trace(len(history), history, reason)


# ---------------------------------------------------------------------------
# Nelder-Mead
# ---------------------------------------------------------------------------

def nelder_mead(
    cost: Cost,
    params0: Params,
    cfg: OptimizerConfig,
    ftol: Optional[float] = None,
) -> OptimizationTrace:
    """
    Downhill simplex with reflection 1, expansion 2, contraction 0.5 and
    shrink 0.5 (scipy's standard coefficients). The initial simplex is params0
    plus one `simplex_step` offset per coordinate; the run stops when the
    spread of simplex costs drops below ftol.
    """
    counted = CountingCost(cost)
    x0 = _flat(params0)
    simplex = np.vstack([x0, x0 + cfg.simplex_step * np.eye(x0.size)])
    history: List[float] = []

    result = scipy_minimize(
        counted,
        x0,
        method="Nelder-Mead",
        callback=lambda _xk: history.append(counted.best_cost),
        options={
            "initial_simplex": simplex,
            "fatol": ftol if ftol is not None else cfg.resolved_ftol(),
            "xatol": math.inf,
            "maxiter": cfg.max_iterations,
            "adaptive": False,
        },
    )
    reason = TerminationReason.CONVERGED if result.status == 0 else TerminationReason.MAX_ITERATIONS
    return counted.trace(int(result.nit), history, reason)


# ---------------------------------------------------------------------------
# Quasi-Newton
# ---------------------------------------------------------------------------

def finite_difference_gradient(cost: Cost, x: np.ndarray, step: float) -> np.ndarray:
    """Central differences, 2d evaluations."""
    gradient = np.empty_like(x)
    for i in range(x.size):
        shift = np.zeros_like(x)
        shift[i] = step
        gradient[i] = (cost(x + shift) - cost(x - shift)) / (2.0 * step)
    return gradient


def quasi_newton(
    cost: Cost,
    params0: Params,
    cfg: OptimizerConfig,
    ftol: Optional[float] = None,
) -> OptimizationTrace:
    """
    BFGS inverse-Hessian updates with central finite-difference gradients and
    an Armijo backtracking line search (halving).

    Stops on |grad|_inf < gtol, on `patience` consecutive cost changes below
    ftol, or when the line search exhausts `max_halvings` (the point is then
    reported as converged).
    """
    counted = CountingCost(cost)
    x = _flat(params0)
    f = counted(x)
    g = finite_difference_gradient(counted, x, cfg.fd_step)
    inverse_hessian = np.eye(x.size)
    patience = _Patience(ftol if ftol is not None else cfg.resolved_ftol(), cfg.patience)
    history: List[float] = []
    reason = TerminationReason.MAX_ITERATIONS
    first_update = True

    for _ in range(cfg.max_iterations):
        if float(np.max(np.abs(g), initial=0.0)) < cfg.gtol:
            reason = TerminationReason.CONVERGED
            break

        direction = -inverse_hessian @ g
        slope = float(g @ direction)
        if slope >= 0.0:
            inverse_hessian = np.eye(x.size)
            direction = -g
            slope = float(g @ direction)

        step = 1.0
        f_new = counted(x + direction)
        halvings = 0
        while f_new > f + cfg.armijo_c1 * step * slope and halvings < cfg.max_halvings:
            step *= 0.5
            halvings += 1
            f_new = counted(x + step * direction)
        if f_new > f + cfg.armijo_c1 * step * slope:
            history.append(counted.best_cost)
            logger.debug("Line search failed after %d halvings; stopping.", cfg.max_halvings)
            reason = TerminationReason.CONVERGED
            break

        x_new = x + step * direction
        g_new = finite_difference_gradient(counted, x_new, cfg.fd_step)
        s, y = x_new - x, g_new - g
        sy = float(s @ y)
        if sy > CURVATURE_FLOOR:
            if first_update:
                inverse_hessian = np.eye(x.size) * (sy / float(y @ y))
                first_update = False
            rho = 1.0 / sy
            left = np.eye(x.size) - rho * np.outer(s, y)
            inverse_hessian = left @ inverse_hessian @ left.T + rho * np.outer(s, s)

        change = f_new - f
        x, f, g = x_new, f_new, g_new
        history.append(counted.best_cost)
        if patience.update(change):
            reason = TerminationReason.CONVERGED
            break

    return counted.trace(len(history), history, reason)


# ---------------------------------------------------------------------------
# Dispatch and serialization
# ---------------------------------------------------------------------------

def minimize(
    cost: Cost,
    params0: Params,
    cfg: OptimizerConfig,
    rng: Optional[np.random.Generator] = None,
    shots: Optional[int] = None,
) -> OptimizationTrace:
    """Runs the optimizer named by `cfg.kind`; ftol defaults depend on `shots`."""
    ftol = cfg.resolved_ftol(shots)
    if cfg.kind == OptimizerKind.SPSA:
        if rng is None:
            raise ValueError("SPSA needs a generator")
        return spsa(cost, params0, cfg, rng, ftol=ftol)
    if cfg.kind == OptimizerKind.NELDER_MEAD:
        return nelder_mead(cost, params0, cfg, ftol=ftol)
    return quasi_newton(cost, params0, cfg, ftol=ftol)


def trace_to_json(
    trace: OptimizationTrace,
    cfg: OptimizerConfig,
    downsample: Optional[int] = None,
) -> str:
    """Trace document; `downsample` keeps every k-th history entry plus the last."""
    history = trace.cost_history
    if downsample and downsample > 1 and history:
        kept = history[::downsample]
        if (len(history) - 1) % downsample:
            kept.append(history[-1])
        history = kept
    payload = {
        "config": cfg.model_dump(mode="json"),
        "evaluations": trace.evaluations,
        "iterations": trace.iterations,
        "terminated_by": trace.terminated_by.value,
        "best_cost": trace.best_cost,
        "cost_history": history,
        "best_params": trace.best_params,
    }
    return json.dumps(payload, indent=2) + "\n"
