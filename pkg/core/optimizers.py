"""
optimizers.py — Derivative-free box-constrained minimisers.

pso_optimize  synchronous global-best particle swarm (constriction defaults)
refine_local  coordinate pattern search with step halving, never worsens

Objective failures (exceptions, NaN) are scored as `failure_cost` so a bad
candidate never aborts a search.
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from config.settings import settings
from core.errors import ConfigurationError

logger = logging.getLogger(__name__)

Objective = Callable[[np.ndarray], float]


@dataclass
class PsoSettings:
    swarm_size: int = settings.PSO_SWARM_SIZE
    iterations: int = settings.PSO_ITERATIONS
    inertia: float = settings.PSO_INERTIA
    cognitive: float = settings.PSO_COGNITIVE
    social: float = settings.PSO_SOCIAL
    velocity_clamp: float = settings.PSO_VELOCITY_CLAMP   # fraction of each coordinate range
    seed: int = 0
    failure_cost: float = settings.PENALTY_SIGMA
    threads: int = 1

    def __post_init__(self):
        if self.swarm_size < 2:
            raise ConfigurationError("swarm_size must be >= 2")
        if self.iterations < 1:
            raise ConfigurationError("iterations must be >= 1")
        if not self.velocity_clamp > 0:
            raise ConfigurationError("velocity_clamp must be > 0")

    def to_dict(self) -> dict:
        return {
            "swarm_size": self.swarm_size,
            "iterations": self.iterations,
            "inertia": self.inertia,
            "cognitive": self.cognitive,
            "social": self.social,
            "velocity_clamp": self.velocity_clamp,
            "seed": self.seed,
        }


@dataclass
class PsoResult:
    best_point: np.ndarray
    best_cost: float
    trace: np.ndarray           # global-best cost after init and after each iteration
    evaluations: int


@dataclass
class RefineResult:
    point: np.ndarray
    cost: float
    start_cost: float
    evaluations: int
    history: list = field(default_factory=list)


def as_bounds(bounds) -> np.ndarray:
    b = np.atleast_2d(np.asarray(bounds, dtype=float))
    if b.shape[1] != 2 or np.any(~np.isfinite(b)) or np.any(b[:, 1] <= b[:, 0]):
        raise ConfigurationError(f"bounds must be finite (lower, upper) rows with upper > lower, got {b.tolist()}")
    return b


def safe_cost(objective: Objective, z: np.ndarray, failure_cost: float) -> float:
    try:
        cost = float(objective(z))
    except Exception as e:
        logger.warning(f"objective failed at {np.round(z, 6).tolist()}: {e}")
        return failure_cost
    return failure_cost if np.isnan(cost) else cost


def _evaluate_swarm(objective: Objective, positions: np.ndarray, failure_cost: float,
                    pool: Optional[ThreadPoolExecutor]) -> np.ndarray:
    if pool is None:
        return np.array([safe_cost(objective, z, failure_cost) for z in positions])
    return np.array(list(pool.map(lambda z: safe_cost(objective, z, failure_cost), positions)))


def pso_optimize(objective: Objective, bounds, config: Optional[PsoSettings] = None,
                 initial_positions: Optional[np.ndarray] = None,
                 initial_velocities: Optional[np.ndarray] = None) -> PsoResult:
    """
    Global-best PSO. Velocities are clamped to velocity_clamp · range, positions
    to the box. The global best is updated once per iteration in particle order,
    so results do not depend on the thread count.
    """
    config = config or PsoSettings()
    b = as_bounds(bounds)
    lo, hi = b[:, 0], b[:, 1]
    span = hi - lo
    vmax = config.velocity_clamp * span
    S, d = config.swarm_size, len(b)
    rng = np.random.default_rng(config.seed)

    x = rng.uniform(lo, hi, (S, d)) if initial_positions is None else np.clip(
        np.asarray(initial_positions, dtype=float).reshape(S, d), lo, hi)
    v = rng.uniform(-vmax, vmax, (S, d)) if initial_velocities is None else np.clip(
        np.asarray(initial_velocities, dtype=float).reshape(S, d), -vmax, vmax)

    pool = ThreadPoolExecutor(max_workers=config.threads) if config.threads > 1 else None
    try:
        cost = _evaluate_swarm(objective, x, config.failure_cost, pool)
        p_best, p_cost = x.copy(), cost.copy()
        g = int(np.argmin(p_cost))
        g_best, g_cost = p_best[g].copy(), float(p_cost[g])
        trace = [g_cost]
        for it in range(config.iterations):
            r1 = rng.random((S, d))
            r2 = rng.random((S, d))
            v = (config.inertia * v
                 + config.cognitive * r1 * (p_best - x)
                 + config.social * r2 * (g_best - x))
            v = np.clip(v, -vmax, vmax)
            x = np.clip(x + v, lo, hi)
            cost = _evaluate_swarm(objective, x, config.failure_cost, pool)
            better = cost < p_cost
            p_best[better] = x[better]
            p_cost[better] = cost[better]
            g = int(np.argmin(p_cost))
            if p_cost[g] < g_cost:
                g_best, g_cost = p_best[g].copy(), float(p_cost[g])
            trace.append(g_cost)
            logger.debug(f"PSO iteration {it + 1}: best {g_cost:.6g}")
    finally:
        if pool is not None:
            pool.shutdown()
    return PsoResult(g_best, g_cost, np.array(trace), S * (config.iterations + 1))


def refine_local(objective: Objective, bounds, start: np.ndarray, initial_step: float = 0.1,
                 min_step: float = 1e-6, max_evaluations: int = 5000,
                 failure_cost: float = settings.PENALTY_SIGMA) -> RefineResult:
    """
    Bound-constrained coordinate pattern search from `start`.

    Steps start at initial_step · range and halve whenever no poll improves;
    a move is accepted only on strict improvement.
    """
    b = as_bounds(bounds)
    lo, hi = b[:, 0], b[:, 1]
    x = np.clip(np.asarray(start, dtype=float), lo, hi)
    fx = safe_cost(objective, x, failure_cost)
    start_cost = fx
    step = initial_step * (hi - lo)
    floor = min_step * (hi - lo)
    evaluations = 1
    history = [fx]
    while np.any(step > floor) and evaluations < max_evaluations:
        improved = False
        for i in range(len(x)):
            for direction in (+1.0, -1.0):
                if evaluations >= max_evaluations:
                    break
                y = x.copy()
                y[i] = np.clip(x[i] + direction * step[i], lo[i], hi[i])
                if y[i] == x[i]:
                    continue
                fy = safe_cost(objective, y, failure_cost)
                evaluations += 1
                if fy < fx:
                    x, fx = y, fy
                    improved = True
                    break
            if evaluations >= max_evaluations:
                break
        history.append(fx)
        if not improved:
            step = step / 2.0
    return RefineResult(x, fx, start_cost, evaluations, history)
