"""
gramian.py — Empirical observability Gramians from ±ε perturbation runs.

Deterministic and stochastic samples are assembled the same way: Φ(t) holds
the output differences y⁺ⁱ − y⁻ⁱ as columns and W = (1/4ε²) ∫ ΦᵀΦ dt by the
trapezoidal rule on the simulation grid, so every W is symmetric PSD by
construction. Linear-system oracles (observability matrix, discrete and
continuous finite-horizon Gramians, numerical rank) live here too.
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.integrate import trapezoid
from scipy.linalg import expm

from config.settings import settings
from core.errors import ConfigurationError
from core.noise import NoiseSpec
from core.simulator import DynamicalSystem, InputSignal, TrajectoryBatch, integrate_batch, step_count

logger = logging.getLogger(__name__)


# ══════════════════════════════════════════════════════════════
# TYPES
# ══════════════════════════════════════════════════════════════

@dataclass
class PerturbationPlan:
    """
    ±ε initial-condition (or mid-run) perturbations of a subset of states.

    The system runs unperturbed until t_perturb, is kicked there, and the
    Gramian integrates outputs over [t_perturb, t_perturb + t1].
    """
    epsilon: float
    perturbed_indices: Tuple[int, ...]
    t1: float
    dt: float
    x0: np.ndarray
    input: Optional[InputSignal] = None
    t_perturb: float = 0.0

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ConfigurationError(f"epsilon must be > 0, got {self.epsilon}")
        idx = tuple(int(i) for i in self.perturbed_indices)
        if not idx:
            raise ConfigurationError("perturbed_indices must not be empty")
        if len(set(idx)) != len(idx):
            raise ConfigurationError(f"perturbed_indices has duplicates: {idx}")
        if self.t_perturb < 0:
            raise ConfigurationError("t_perturb must be >= 0")
        self.perturbed_indices = idx
        self.x0 = np.asarray(self.x0, dtype=float)
        step_count(self.t1, self.dt)
        if self.t_perturb > 0:
            step_count(self.t_perturb, self.dt)

    @property
    def m(self) -> int:
        return len(self.perturbed_indices)

    @property
    def perturb_step(self) -> int:
        return step_count(self.t_perturb, self.dt) if self.t_perturb > 0 else 0

    @property
    def window_steps(self) -> int:
        return step_count(self.t1, self.dt)

    @property
    def horizon(self) -> float:
        return self.t_perturb + self.t1

    def check(self, system: DynamicalSystem):
        if self.x0.shape != (system.n_states,):
            raise ConfigurationError(
                f"x0 has shape {self.x0.shape}, {system.name} has {system.n_states} states")
        bad = [i for i in self.perturbed_indices if not 0 <= i < system.n_states]
        if bad:
            raise ConfigurationError(f"perturbed indices {bad} out of range for {system.name}")

    def labels(self) -> List[str]:
        return [f"{'+' if s > 0 else '-'}eps on x[{i}]" for i in self.perturbed_indices for s in (+1, -1)]


@dataclass
class GramianSample:
    """One symmetric PSD empirical Gramian plus the bookkeeping that produced it."""
    matrix: np.ndarray
    epsilon: float
    perturbed_indices: Tuple[int, ...]
    run_index: int = 0
    master_seed: Optional[int] = None
    stream_ids: Tuple[Tuple[int, int, int], ...] = field(default_factory=tuple)
    integrator: str = "rk4"
    t_perturb: float = 0.0
    t1: float = 0.0

    def __post_init__(self):
        w = np.asarray(self.matrix, dtype=float)
        if w.ndim != 2 or w.shape[0] != w.shape[1]:
            raise ConfigurationError(f"Gramian must be square, got shape {w.shape}")
        self.matrix = 0.5 * (w + w.T)

    @property
    def m(self) -> int:
        return self.matrix.shape[0]

    def to_dict(self) -> dict:
        return {
            "m": self.m,
            "epsilon": self.epsilon,
            "perturbed_indices": list(self.perturbed_indices),
            "run_index": self.run_index,
            "master_seed": self.master_seed,
            "stream_ids": [list(s) for s in self.stream_ids],
            "integrator": self.integrator,
            "t_perturb": self.t_perturb,
            "t1": self.t1,
        }


# ══════════════════════════════════════════════════════════════
# ASSEMBLY
# ══════════════════════════════════════════════════════════════

def gramian_from_outputs(y_plus: np.ndarray, y_minus: np.ndarray, times: np.ndarray,
                         epsilon: float) -> np.ndarray:
    """
    W = (1/4ε²) ∫ ΦᵀΦ dt for outputs shaped (T, ..., m, p).

    Leading batch axes between time and m are carried through, giving
    (..., m, m). Time rows holding any non-finite output (encoder warm-up)
    are left out of the quadrature.
    """
    phi = np.asarray(y_plus, dtype=float) - np.asarray(y_minus, dtype=float)
    ready = np.all(np.isfinite(phi.reshape(phi.shape[0], -1)), axis=1)
    if ready.sum() < 2:
        raise ConfigurationError("Gramian window holds fewer than two ready output samples")
    phi = phi[ready]
    integrand = np.einsum("t...ip,t...jp->t...ij", phi, phi)
    w = trapezoid(integrand, x=np.asarray(times)[ready], axis=0) / (4.0 * epsilon ** 2)
    return 0.5 * (w + np.swapaxes(w, -1, -2))


def perturbation_stack(plan: PerturbationPlan, n_states: int) -> np.ndarray:
    """(2m, n) offsets ordered (+e_i0, −e_i0, +e_i1, …) scaled by ε."""
    deltas = np.zeros((2 * plan.m, n_states))
    for k, i in enumerate(plan.perturbed_indices):
        deltas[2 * k, i] = plan.epsilon
        deltas[2 * k + 1, i] = -plan.epsilon
    return deltas


def run_streams(noise: NoiseSpec, plan: PerturbationPlan, run_index: int) -> List[NoiseSpec]:
    """Independent noise streams for the 2m runs of one sample, keyed (run, i, sign)."""
    return [noise.for_stream(run_index, i, s) for i in plan.perturbed_indices for s in (+1, -1)]


def perturbation_batch(system: DynamicalSystem, plan: PerturbationPlan,
                       run_indices: Sequence[int] = (0,), noise: Optional[NoiseSpec] = None,
                       method: str = "rk4") -> TrajectoryBatch:
    """
    Full-horizon trajectories for the 2m perturbed runs of each listed run index,
    ordered run-major then (+e_i0, −e_i0, +e_i1, …). Without noise, or with a
    zero covariance, the deterministic `method` path is taken.
    """
    plan.check(system)
    runs = len(run_indices)
    deltas = np.tile(perturbation_stack(plan, system.n_states), (runs, 1))
    labels = [f"run {r} {label}" for r in run_indices for label in plan.labels()]
    noises = None
    if noise is not None and not noise.is_zero:
        noises = [s for r in run_indices for s in run_streams(noise, plan, r)]
    if plan.perturb_step == 0:
        x0s = plan.x0[None, :] + deltas
        kick = None
    else:
        x0s = np.tile(plan.x0, (deltas.shape[0], 1))
        kick = (plan.perturb_step, deltas)
    return integrate_batch(system, x0s, plan.input, plan.horizon, plan.dt, noises=noises,
                           method=method, kick=kick, labels=labels)


def split_window(plan: PerturbationPlan, times: np.ndarray, outputs: np.ndarray, runs: int):
    """Window [t_perturb, t_perturb + t1] of (T, 2m·runs, p) outputs as (times, y⁺, y⁻), y (T_w, runs, m, p)."""
    lo = plan.perturb_step
    hi = lo + plan.window_steps + 1
    y = outputs[lo:hi].reshape(hi - lo, runs, plan.m, 2, outputs.shape[-1])
    return times[lo:hi], y[:, :, :, 0, :], y[:, :, :, 1, :]


def empirical_gramian(system: DynamicalSystem, plan: PerturbationPlan,
                      method: str = "rk4") -> GramianSample:
    """Deterministic empirical Gramian from 2m noise-free simulations."""
    batch = perturbation_batch(system, plan, (0,), None, method)
    times, y_plus, y_minus = split_window(plan, batch.times, batch.outputs, 1)
    w = gramian_from_outputs(y_plus[:, 0], y_minus[:, 0], times, plan.epsilon)
    return GramianSample(w, plan.epsilon, plan.perturbed_indices, integrator=batch.method,
                         t_perturb=plan.t_perturb, t1=plan.t1)


def _stochastic_block(system: DynamicalSystem, plan: PerturbationPlan, noise: NoiseSpec,
                      run_indices: Sequence[int]) -> List[GramianSample]:
    # zero noise takes the RK4 path so it matches empirical_gramian exactly
    batch = perturbation_batch(system, plan, run_indices, noise)
    times, y_plus, y_minus = split_window(plan, batch.times, batch.outputs, len(run_indices))
    w = gramian_from_outputs(y_plus, y_minus, times, plan.epsilon)
    return [
        GramianSample(w[k], plan.epsilon, plan.perturbed_indices, run_index=r,
                      master_seed=noise.master_seed,
                      stream_ids=tuple(s.stream_id for s in run_streams(noise, plan, r)),
                      integrator=batch.method, t_perturb=plan.t_perturb, t1=plan.t1)
        for k, r in enumerate(run_indices)
    ]


def stochastic_gramian_sample(system: DynamicalSystem, plan: PerturbationPlan, noise: NoiseSpec,
                              run_index: int) -> GramianSample:
    """One stochastic empirical Gramian; each ±i run draws its own stream."""
    if noise.n_noise != system.n_noise:
        raise ConfigurationError(
            f"noise has {noise.n_noise} channels, {system.name} expects {system.n_noise}")
    return _stochastic_block(system, plan, noise, [run_index])[0]


def stochastic_gramian_campaign(system: DynamicalSystem, plan: PerturbationPlan, noise: NoiseSpec,
                                runs: int, first_run: int = 0, chunk_runs: int = 8,
                                threads: int = 1) -> List[GramianSample]:
    """
    K stochastic samples with run indices first_run … first_run + K − 1.

    Runs are integrated in vectorised chunks, optionally on a thread pool;
    results come back in run order whatever the thread count.
    """
    if runs < 1:
        raise ConfigurationError(f"campaign needs at least one run, got {runs}")
    if noise.n_noise != system.n_noise:
        raise ConfigurationError(
            f"noise has {noise.n_noise} channels, {system.name} expects {system.n_noise}")
    indices = list(range(first_run, first_run + runs))
    chunks = [indices[i:i + max(1, chunk_runs)] for i in range(0, runs, max(1, chunk_runs))]
    logger.info(f"{system.name}: {runs} stochastic Gramians (m={plan.m}, {len(chunks)} chunks)")
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            blocks = list(pool.map(lambda c: _stochastic_block(system, plan, noise, c), chunks))
    else:
        blocks = [_stochastic_block(system, plan, noise, c) for c in chunks]
    return [s for block in blocks for s in block]


# ══════════════════════════════════════════════════════════════
# LINEAR ORACLES
# ══════════════════════════════════════════════════════════════

def _check_pair(A: np.ndarray, C: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    A = np.atleast_2d(np.asarray(A, dtype=float))
    C = np.atleast_2d(np.asarray(C, dtype=float))
    if A.shape[0] != A.shape[1]:
        raise ConfigurationError(f"A must be square, got {A.shape}")
    if C.shape[1] != A.shape[0]:
        raise ConfigurationError(f"C has {C.shape[1]} columns, A is {A.shape[0]}x{A.shape[0]}")
    return A, C


def observability_matrix(A, C, T: int) -> np.ndarray:
    """Stacked [C; CA; …; CA^(T−1)]."""
    A, C = _check_pair(A, C)
    if T < 1:
        raise ConfigurationError("horizon T must be >= 1")
    blocks, block = [], C
    for _ in range(T):
        blocks.append(block)
        block = block @ A
    return np.vstack(blocks)


def linear_gramian(A, C, T: int) -> np.ndarray:
    """Discrete finite-horizon Gramian Σ_{t<T} (Aᵀ)ᵗ CᵀC Aᵗ."""
    O = observability_matrix(A, C, T)
    w = O.T @ O
    return 0.5 * (w + w.T)


def finite_horizon_gramian(A, C, t1: float) -> np.ndarray:
    """∫₀^t1 e^{Aᵀt} CᵀC e^{At} dt by the block-exponential (Van Loan) construction."""
    A, C = _check_pair(A, C)
    if not t1 > 0:
        raise ConfigurationError("t1 must be > 0")
    n = A.shape[0]
    block = np.zeros((2 * n, 2 * n))
    block[:n, :n] = -A.T
    block[:n, n:] = C.T @ C
    block[n:, n:] = A
    F = expm(block * t1)
    w = F[n:, n:].T @ F[:n, n:]
    return 0.5 * (w + w.T)


def numerical_rank(M, tol: float = None) -> int:
    """Singular values above tol · σ_max; 0 for the zero matrix."""
    tol = settings.RANK_TOL if tol is None else tol
    if not tol > 0:
        raise ConfigurationError("rank tolerance must be > 0")
    s = np.linalg.svd(np.atleast_2d(np.asarray(M, dtype=float)), compute_uv=False)
    if s.size == 0 or s[0] == 0.0:
        return 0
    return int(np.sum(s > tol * s[0]))


