"""
placement.py — Sensor-set objectives, exhaustive oracle and the PSO + refine pipeline.

A placement of r sensors is scored as the Monte Carlo mean over K runs of
j(Σ_k W_k), the metric of the summed per-sensor Gramians of each run. Loci
closer than d_allowed score the proximity penalty σ instead. The optimisers
search a feasibility-ranked score (log10 Ĵ for feasible placements, fixed
ceilings above any finite log10 for singular and infeasible ones), so σ never
has to outrank the Gramian scale of a plant. Per-sensor
Gramians come from a GramianSource, which keeps one noise realisation per
run for every candidate (common random numbers), so the objective is a
deterministic function of the loci.
"""
import logging
import math
import threading
from dataclasses import dataclass, field, replace
from itertools import combinations
from typing import List, Optional, Protocol, Sequence, Tuple, Union

import numpy as np
from scipy.spatial.distance import cdist, pdist

from config.settings import settings
from core.errors import BudgetExceededError, ConfigurationError, InfeasiblePlacementError, OutOfBoundsError
from core.gramian import GramianSample
from core.metrics import METRIC_NAMES, metric_values, summarize_values
from core.optimizers import PsoSettings, as_bounds, pso_optimize, refine_local

logger = logging.getLogger(__name__)

# log10 of the largest float is ~308.3
SINGULAR_SCORE = 400.0
INFEASIBLE_SCORE = 500.0
FAILURE_SCORE = 1000.0


class GramianSource(Protocol):
    runs: int
    m: int

    def gramians_at(self, loci: np.ndarray) -> np.ndarray:
        """Per-run, per-locus Gramians, shape (K, n_loci, m, m)."""
        ...


class TabulatedGramianSource:
    """Precomputed Gramians on a finite candidate set; loci map to their nearest node."""

    def __init__(self, nodes: np.ndarray, gramians: np.ndarray):
        nodes = np.atleast_2d(np.asarray(nodes, dtype=float))
        gramians = np.asarray(gramians, dtype=float)
        if gramians.ndim != 4 or gramians.shape[1] != len(nodes) or gramians.shape[2] != gramians.shape[3]:
            raise ConfigurationError(
                f"tabulated Gramians must be (K, {len(nodes)}, m, m), got {gramians.shape}")
        self.nodes = nodes
        self.gramians = gramians

    @classmethod
    def from_source(cls, source: GramianSource, nodes: np.ndarray) -> "TabulatedGramianSource":
        return cls(nodes, source.gramians_at(nodes))

    @property
    def runs(self) -> int:
        return self.gramians.shape[0]

    @property
    def m(self) -> int:
        return self.gramians.shape[2]

    def node_indices(self, loci: np.ndarray) -> np.ndarray:
        return np.argmin(cdist(np.atleast_2d(loci), self.nodes), axis=1)

    def gramians_at(self, loci: np.ndarray) -> np.ndarray:
        return self.gramians[:, self.node_indices(loci)]


@dataclass
class PlacementProblem:
    r: int
    bounds: Tuple[Tuple[float, float], Tuple[float, float]]    # ((x_lo, x_hi), (y_lo, y_hi)), cm
    d_allowed: float = 0.1                                      # cm
    sigma: float = settings.PENALTY_SIGMA
    K: int = 40
    metric: str = "nu"
    w_nu: float = 0.0
    seed: int = 0
    candidates: Optional[np.ndarray] = None                     # (p, 2) discrete mode
    pso: PsoSettings = field(default_factory=PsoSettings)
    refine: bool = True

    def __post_init__(self):
        if self.r < 1:
            raise ConfigurationError(f"r must be >= 1, got {self.r}")
        if self.K < 1:
            raise ConfigurationError(f"K must be >= 1, got {self.K}")
        if self.metric not in METRIC_NAMES:
            raise ConfigurationError(f"unknown metric '{self.metric}'")
        if self.w_nu < 0 or self.d_allowed < 0:
            raise ConfigurationError("w_nu and d_allowed must be >= 0")
        self.bounds = tuple(tuple(float(v) for v in pair) for pair in as_bounds(self.bounds))
        if len(self.bounds) != 2:
            raise ConfigurationError("placement bounds are ((x_lo, x_hi), (y_lo, y_hi))")
        if self.candidates is not None:
            self.candidates = np.atleast_2d(np.asarray(self.candidates, dtype=float))
            if len(self.candidates) < self.r:
                raise ConfigurationError(f"{len(self.candidates)} candidates cannot hold r={self.r} sensors")
        self.pso = replace(self.pso, seed=self.seed, failure_cost=FAILURE_SCORE)

    def search_bounds(self) -> np.ndarray:
        return np.tile(np.asarray(self.bounds), (self.r, 1))

    def to_dict(self) -> dict:
        return {
            "r": self.r,
            "bounds": [list(b) for b in self.bounds],
            "d_allowed": self.d_allowed,
            "sigma": self.sigma,
            "K": self.K,
            "metric": self.metric,
            "w_nu": self.w_nu,
            "seed": self.seed,
            "discrete": self.candidates is not None,
            "pso": self.pso.to_dict(),
            "refine": self.refine,
        }


# ══════════════════════════════════════════════════════════════
# OBJECTIVE
# ══════════════════════════════════════════════════════════════

def aggregate_gramian(gramians: Sequence[Union[np.ndarray, GramianSample]], gamma: Sequence) -> GramianSample:
    """Σ γ_k W_k over the selected sensors."""
    if len(gramians) != len(gamma):
        raise ConfigurationError(f"{len(gramians)} Gramians but {len(gamma)} activation flags")
    mats = [g.matrix if isinstance(g, GramianSample) else np.asarray(g, dtype=float) for g in gramians]
    if len({m.shape for m in mats}) != 1:
        raise ConfigurationError("Gramians to aggregate must share their dimension")
    total = np.zeros_like(mats[0])
    for flag, mat in zip(gamma, mats):
        if flag:
            total = total + mat
    first = gramians[0]
    if isinstance(first, GramianSample):
        return GramianSample(total, first.epsilon, first.perturbed_indices, first.run_index,
                             first.master_seed, first.stream_ids, first.integrator,
                             first.t_perturb, first.t1)
    return GramianSample(total, float("nan"), tuple(range(total.shape[0])))


def min_pairwise_distance(loci: np.ndarray) -> float:
    loci = np.atleast_2d(loci)
    return float(np.min(pdist(loci))) if len(loci) > 1 else float("inf")


def sort_loci(loci: np.ndarray) -> np.ndarray:
    """Lexicographic (x, then y) order."""
    loci = np.atleast_2d(loci)
    return loci[np.lexsort((loci[:, 1], loci[:, 0]))]


def snap_to_candidates(loci: np.ndarray, candidates: np.ndarray) -> np.ndarray:
    return candidates[np.argmin(cdist(np.atleast_2d(loci), candidates), axis=1)]


def _as_loci(loci, problem: PlacementProblem) -> np.ndarray:
    loci = np.asarray(loci, dtype=float).reshape(-1, 2)
    if len(loci) != problem.r:
        raise ConfigurationError(f"expected {problem.r} loci, got {len(loci)}")
    (x_lo, x_hi), (y_lo, y_hi) = problem.bounds
    tol = 1e-9
    inside = ((loci[:, 0] >= x_lo - tol) & (loci[:, 0] <= x_hi + tol)
              & (loci[:, 1] >= y_lo - tol) & (loci[:, 1] <= y_hi + tol))
    if not np.all(inside):
        raise OutOfBoundsError(f"loci outside the search box: {loci[~inside].tolist()}")
    if problem.candidates is not None:
        loci = snap_to_candidates(loci, problem.candidates)
    return loci


def placement_cost(loci: np.ndarray, problem: PlacementProblem, source: GramianSource) -> Tuple[float, bool]:
    """(Ĵ, feasible); infeasible placements cost σ."""
    loci = _as_loci(loci, problem)
    if min_pairwise_distance(loci) < problem.d_allowed:
        return problem.sigma, False
    if source.runs < problem.K:
        raise ConfigurationError(f"source holds {source.runs} runs, problem needs K={problem.K}")
    per_sensor = source.gramians_at(sort_loci(loci))[:problem.K]      # (K, r, m, m)
    totals = np.sum(per_sensor, axis=1)
    values = metric_values(totals, problem.metric, problem.w_nu)
    return summarize_values(values).mean, True


def evaluate_placement(loci, problem: PlacementProblem, source: GramianSource) -> float:
    """Ĵ for r loci, or σ when two sensors sit closer than d_allowed."""
    return placement_cost(loci, problem, source)[0]


def search_score(cost: float, feasible: bool, shortfall: float = 0.0) -> float:
    """
    Feasibility-ranked score the optimisers minimise.

    Feasible placements score log10 Ĵ (below 309), singular ones
    SINGULAR_SCORE, and infeasible ones INFEASIBLE_SCORE plus the relative
    spacing shortfall in [0, 1]. Every infeasible placement therefore ranks
    behind every feasible one whatever σ and the Gramian scale are, and the
    order among feasible placements is the order of Ĵ.
    """
    if not feasible:
        return INFEASIBLE_SCORE + min(max(shortfall, 0.0), 1.0)
    if not np.isfinite(cost):
        return SINGULAR_SCORE
    return float(np.log10(max(cost, np.finfo(float).tiny)))


def score_to_cost(score: float, sigma: float) -> float:
    if score >= INFEASIBLE_SCORE:
        return sigma
    if score >= SINGULAR_SCORE:
        return float("inf")
    return float(10.0 ** score)


class PlacementObjective:
    """Flat-vector search score for the optimisers; records the worst feasible cost seen."""

    def __init__(self, problem: PlacementProblem, source: GramianSource):
        self.problem = problem
        self.source = source
        self.evaluations = 0
        self.penalised = 0
        self.max_feasible = -np.inf
        self._lock = threading.Lock()

    def __call__(self, z: np.ndarray) -> float:
        cost, feasible = placement_cost(z, self.problem, self.source)
        shortfall = 0.0
        if not feasible:
            d_min = min_pairwise_distance(_as_loci(z, self.problem))
            shortfall = (self.problem.d_allowed - d_min) / self.problem.d_allowed
        with self._lock:
            self.evaluations += 1
            if not feasible:
                self.penalised += 1
            elif np.isfinite(cost):
                self.max_feasible = max(self.max_feasible, cost)
        return search_score(cost, feasible, shortfall)


# ══════════════════════════════════════════════════════════════
# SEARCH
# ══════════════════════════════════════════════════════════════

@dataclass
class ExhaustiveResult:
    indices: Tuple[int, ...]
    cost: float
    evaluated: int


def exhaustive_select(candidate_gramians: np.ndarray, r: int, metric: str = "nu", w_nu: float = 0.0,
                      budget: int = None) -> ExhaustiveResult:
    """
    Brute-force optimum over all r-subsets of p candidates.

    candidate_gramians is (p, K, m, m): per candidate, per run. Ties keep the
    lexicographically smallest index set.
    """
    budget = settings.EXHAUSTIVE_BUDGET if budget is None else budget
    G = np.asarray(candidate_gramians, dtype=float)
    if G.ndim != 4:
        raise ConfigurationError(f"candidate Gramians must be (p, K, m, m), got {G.shape}")
    p = G.shape[0]
    if not 1 <= r <= p:
        raise ConfigurationError(f"need 1 <= r <= p, got r={r}, p={p}")
    total = math.comb(p, r)
    if total > budget:
        raise BudgetExceededError(f"C({p}, {r}) = {total} subsets exceeds the budget of {budget}")
    best_idx, best_cost = None, None
    for combo in combinations(range(p), r):
        values = metric_values(np.sum(G[list(combo)], axis=0), metric, w_nu)
        cost = summarize_values(values).mean
        if best_cost is None or cost < best_cost:
            best_idx, best_cost = combo, cost
    return ExhaustiveResult(tuple(best_idx), float(best_cost), total)


def greedy_select(candidate_gramians: np.ndarray, r: int, metric: str = "nu",
                  w_nu: float = 0.0) -> ExhaustiveResult:
    """Forward selection: add the candidate that lowers the mean cost most, r times."""
    G = np.asarray(candidate_gramians, dtype=float)
    if G.ndim != 4:
        raise ConfigurationError(f"candidate Gramians must be (p, K, m, m), got {G.shape}")
    p = G.shape[0]
    if not 1 <= r <= p:
        raise ConfigurationError(f"need 1 <= r <= p, got r={r}, p={p}")
    chosen: List[int] = []
    total = np.zeros(G.shape[1:])
    cost, evaluated = float("inf"), 0
    for _ in range(r):
        best_k, best_cost = None, None
        for k in range(p):
            if k in chosen:
                continue
            c = summarize_values(metric_values(total + G[k], metric, w_nu)).mean
            evaluated += 1
            if best_cost is None or c < best_cost:
                best_k, best_cost = k, c
        chosen.append(best_k)
        total = total + G[best_k]
        cost = best_cost
    return ExhaustiveResult(tuple(sorted(chosen)), float(cost), evaluated)


@dataclass
class PlacementResult:
    loci: np.ndarray
    cost: float
    pso_cost: float
    pso_trace: np.ndarray
    refine_evaluations: int
    evaluations: int
    penalised: int
    max_feasible_cost: float
    penalty_dominates: bool
    per_locus_costs: List[float]

    def to_dict(self) -> dict:
        return {
            "loci": self.loci.tolist(),
            "cost": self.cost,
            "pso_cost": self.pso_cost,
            "refine_evaluations": self.refine_evaluations,
            "evaluations": self.evaluations,
            "penalised": self.penalised,
            "max_feasible_cost": self.max_feasible_cost,
            "penalty_dominates": self.penalty_dominates,
            "per_locus_costs": list(self.per_locus_costs),
        }


def place_sensors(problem: PlacementProblem, source: GramianSource) -> PlacementResult:
    """
    PSO over the 2r loci coordinates, then pattern-search refinement.

    Both stages minimise the search score; the reported costs are Ĵ. Raises
    InfeasiblePlacementError when the best placement found still violates
    d_allowed.
    """
    objective = PlacementObjective(problem, source)
    bounds = problem.search_bounds()
    logger.info(f"placement: r={problem.r}, metric={problem.metric}, w_nu={problem.w_nu}, K={problem.K}")
    pso = pso_optimize(objective, bounds, problem.pso)
    point, refine_evals = pso.best_point, 0
    if problem.refine:
        refined = refine_local(objective, bounds, pso.best_point, failure_cost=FAILURE_SCORE)
        point, refine_evals = refined.point, refined.evaluations
    loci = sort_loci(_as_loci(point, problem))
    d_min = min_pairwise_distance(loci)
    if d_min < problem.d_allowed:
        raise InfeasiblePlacementError(
            f"best placement found keeps sensors {d_min:.4g} cm apart, below d_allowed={problem.d_allowed:g} cm")
    pso_cost = evaluate_placement(pso.best_point, problem, source)
    cost = evaluate_placement(loci, problem, source)
    trace = np.array([score_to_cost(s, problem.sigma) for s in pso.trace])

    metric_of = lambda W: float(summarize_values(metric_values(W, problem.metric, problem.w_nu)).mean)
    per_locus = [metric_of(source.gramians_at(locus[None, :])[:problem.K, 0]) for locus in loci]

    max_feasible = float(objective.max_feasible) if np.isfinite(objective.max_feasible) else None
    dominates = max_feasible is None or max_feasible < problem.sigma
    if not dominates:
        logger.warning(f"penalty sigma={problem.sigma:g} is below a feasible cost ({max_feasible:.4g}); "
                       f"infeasible placements still rank last in the search")
    return PlacementResult(
        loci=loci,
        cost=float(cost),
        pso_cost=float(pso_cost),
        pso_trace=trace,
        refine_evaluations=refine_evals,
        evaluations=objective.evaluations,
        penalised=objective.penalised,
        max_feasible_cost=max_feasible,
        penalty_dominates=dominates,
        per_locus_costs=per_locus,
    )
