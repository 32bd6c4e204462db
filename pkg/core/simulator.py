"""
simulator.py — Fixed-step integration of control systems with additive process noise.

Deterministic paths use classical RK4 (or explicit Euler on request); noisy
paths use Euler–Maruyama with increments drawn from counter-based streams
(core.noise), so a trajectory is fully determined by (x0, input, seed, stream).

Everything is batched: a stack of B initial states is marched together and
the drift is evaluated on (B, n_states) arrays.
"""
import logging
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from core.errors import ConfigurationError, IntegrationDivergedError
from core.noise import NoiseSpec, sample_noise

logger = logging.getLogger(__name__)

InputSignal = Callable[[float], np.ndarray]
Drift = Callable[[np.ndarray, np.ndarray, float], np.ndarray]
OutputMap = Callable[[np.ndarray, float], np.ndarray]
BatchOutput = Callable[[np.ndarray, np.ndarray], np.ndarray]

METHODS = ("rk4", "euler")


# ══════════════════════════════════════════════════════════════
# INPUT SIGNALS
# ══════════════════════════════════════════════════════════════

def constant_input(value, n_inputs: Optional[int] = None) -> InputSignal:
    """u(t) = value for all t."""
    u = np.atleast_1d(np.asarray(value, dtype=float))
    if n_inputs is not None and u.size != n_inputs:
        u = np.full(n_inputs, float(u[0])) if u.size == 1 else u
    u.setflags(write=False)
    return lambda t: u


@dataclass(frozen=True)
class ZeroOrderHold:
    """Tabulated input held constant between breakpoints."""
    times: np.ndarray
    values: np.ndarray   # (len(times), n_inputs)

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        values = np.asarray(self.values, dtype=float)
        if values.ndim == 1:
            values = values[:, None]
        if times.ndim != 1 or len(times) != len(values) or len(times) == 0:
            raise ConfigurationError("zero-order hold needs one value row per breakpoint")
        if np.any(np.diff(times) <= 0):
            raise ConfigurationError("zero-order hold breakpoints must be strictly increasing")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", values)

    def __call__(self, t: float) -> np.ndarray:
        idx = int(np.searchsorted(self.times, t, side="right")) - 1
        return self.values[min(max(idx, 0), len(self.times) - 1)]


# ══════════════════════════════════════════════════════════════
# SYSTEM AND TRAJECTORY TYPES
# ══════════════════════════════════════════════════════════════

@dataclass
class DynamicalSystem:
    """
    x' = drift(x, u, t) + G w,   y = output_map(window, t).

    drift must be pure. When `vectorized` is True it is called with (B, n_states)
    state stacks and must broadcast; otherwise it is applied row by row.
    output_map receives the state history window covering the last
    `output_delay` seconds (last row = current state); `batch_output`, when
    given, computes the same outputs for a whole (T, B, n_states) history in
    one call and must stay causal within that window.
    """
    n_states: int
    n_inputs: int
    n_outputs: int
    drift: Drift
    noise_map: np.ndarray
    output_map: OutputMap
    output_delay: float = 0.0
    batch_output: Optional[BatchOutput] = None
    vectorized: bool = True
    name: str = "system"
    state_names: Tuple[str, ...] = ()

    def __post_init__(self):
        if self.n_states <= 0 or self.n_outputs <= 0 or self.n_inputs < 0:
            raise ConfigurationError(f"{self.name}: invalid dimensions")
        g = np.atleast_2d(np.asarray(self.noise_map, dtype=float))
        if g.shape[0] != self.n_states:
            raise ConfigurationError(
                f"{self.name}: noise_map has {g.shape[0]} rows, expected {self.n_states}")
        self.noise_map = g
        if self.output_delay < 0:
            raise ConfigurationError(f"{self.name}: output_delay must be >= 0")
        if not self.state_names:
            self.state_names = tuple(f"x{i + 1}" for i in range(self.n_states))

    @property
    def n_noise(self) -> int:
        return self.noise_map.shape[1]

    def evaluate_drift(self, x: np.ndarray, u: np.ndarray, t: float) -> np.ndarray:
        if self.vectorized or x.ndim == 1:
            return np.asarray(self.drift(x, u, t), dtype=float)
        return np.stack([np.asarray(self.drift(row, u, t), dtype=float) for row in x])

    def observe(self, times: np.ndarray, states: np.ndarray, dt: float) -> np.ndarray:
        """Outputs for a (T, B, n_states) history, shape (T, B, n_outputs)."""
        if self.batch_output is not None:
            return np.asarray(self.batch_output(times, states), dtype=float)
        width = int(round(self.output_delay / dt)) + 1
        T, B, _ = states.shape
        out = np.empty((T, B, self.n_outputs))
        for k in range(T):
            lo = max(0, k - width + 1)
            for b in range(B):
                out[k, b] = self.output_map(states[lo:k + 1, b, :], times[k])
        return out


@dataclass
class Trajectory:
    """Time-stamped state and output sequences on a uniform grid."""
    times: np.ndarray
    states: np.ndarray
    outputs: np.ndarray
    dt: float
    method: str = "rk4"

    def __post_init__(self):
        if not (len(self.times) == len(self.states) == len(self.outputs)):
            raise ConfigurationError("trajectory arrays must share their length")

    @property
    def final_state(self) -> np.ndarray:
        return self.states[-1]

    def to_frame(self, state_names: Sequence[str] = ()) -> pd.DataFrame:
        names = list(state_names) or [f"x{i + 1}" for i in range(self.states.shape[1])]
        frame = pd.DataFrame(self.states, columns=names)
        for j in range(self.outputs.shape[1]):
            frame[f"y{j + 1}"] = self.outputs[:, j]
        frame.insert(0, "t", self.times)
        return frame


@dataclass
class TrajectoryBatch:
    """B trajectories on a shared grid: states (T, B, n), outputs (T, B, p)."""
    times: np.ndarray
    states: np.ndarray
    outputs: np.ndarray
    dt: float
    method: str = "rk4"
    labels: Tuple[str, ...] = field(default_factory=tuple)

    @property
    def size(self) -> int:
        return self.states.shape[1]

    def trajectory(self, b: int) -> Trajectory:
        return Trajectory(self.times, self.states[:, b, :], self.outputs[:, b, :], self.dt, self.method)


# ══════════════════════════════════════════════════════════════
# STEPPING
# ══════════════════════════════════════════════════════════════

def step_count(t1: float, dt: float) -> int:
    """Number of dt steps in [0, t1]; t1/dt must be an integer within tolerance."""
    if not (t1 > 0 and dt > 0):
        raise ConfigurationError(f"need t1 > 0 and dt > 0, got t1={t1}, dt={dt}")
    steps = int(round(t1 / dt))
    if steps < 1 or abs(steps * dt - t1) > 1e-9 * max(1.0, abs(t1)):
        raise ConfigurationError(f"t1={t1} is not an integer multiple of dt={dt}")
    return steps


def time_grid(steps: int, dt: float) -> np.ndarray:
    return dt * np.arange(steps + 1, dtype=float)


def _check_finite(x: np.ndarray, step: int, labels: Optional[Sequence[str]]):
    if not np.all(np.isfinite(x)):
        bad = int(np.flatnonzero(~np.all(np.isfinite(x), axis=-1))[0])
        raise IntegrationDivergedError(step, labels[bad] if labels else f"trajectory #{bad}")


def march(system: DynamicalSystem, x0: np.ndarray, u: InputSignal, dt: float, steps: int,
          method: str = "rk4", increments: Optional[np.ndarray] = None,
          kick: Optional[Tuple[int, np.ndarray]] = None,
          labels: Optional[Sequence[str]] = None) -> np.ndarray:
    """
    Advance a (B, n) stack of states over `steps` fixed steps.

    increments: optional (B, steps, n) additive stochastic increments, added after
    the drift update of each step. kick: optional (step index, (B, n) offset)
    applied to the stored state at that index before stepping on.
    Returns states of shape (steps + 1, B, n).
    """
    if method not in METHODS:
        raise ConfigurationError(f"unknown integration method '{method}'")
    x = np.array(x0, dtype=float, copy=True)
    B, n = x.shape
    states = np.empty((steps + 1, B, n))
    kick_step, kick_delta = kick if kick is not None else (-1, None)
    if kick_step == 0:
        x = x + kick_delta
    _check_finite(x, 0, labels)
    states[0] = x
    f = system.evaluate_drift
    for k in range(steps):
        t = k * dt
        if method == "rk4":
            half = t + 0.5 * dt
            k1 = f(x, u(t), t)
            k2 = f(x + 0.5 * dt * k1, u(half), half)
            k3 = f(x + 0.5 * dt * k2, u(half), half)
            k4 = f(x + dt * k3, u(t + dt), t + dt)
            x = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        else:
            x = x + dt * f(x, u(t), t)
        if increments is not None:
            x = x + increments[:, k, :]
        if k + 1 == kick_step:
            x = x + kick_delta
        _check_finite(x, k + 1, labels)
        states[k + 1] = x
    return states


def noise_increments(system: DynamicalSystem, noises: Sequence[NoiseSpec], steps: int,
                     dt: float) -> np.ndarray:
    """(B, steps, n_states) Euler–Maruyama increments G · sqrt(dt) · w_k, one stream per row."""
    g = system.noise_map
    out = np.empty((len(noises), steps, system.n_states))
    for b, spec in enumerate(noises):
        if spec.n_noise != system.n_noise:
            raise ConfigurationError(
                f"{system.name}: noise has {spec.n_noise} channels, noise_map has {system.n_noise} columns")
        w = sample_noise(spec, steps)
        out[b] = (np.sqrt(dt) * w) @ g.T
    return out


def _as_state(system: DynamicalSystem, x0) -> np.ndarray:
    x = np.asarray(x0, dtype=float)
    if x.shape != (system.n_states,):
        raise ConfigurationError(f"{system.name}: x0 has shape {x.shape}, expected ({system.n_states},)")
    return x


def _default_input(system: DynamicalSystem, u: Optional[InputSignal]) -> InputSignal:
    return u if u is not None else constant_input(np.zeros(system.n_inputs))


def integrate_batch(system: DynamicalSystem, x0s: np.ndarray, u: Optional[InputSignal],
                    t1: float, dt: float, noises: Optional[Sequence[NoiseSpec]] = None,
                    method: str = "rk4", kick: Optional[Tuple[int, np.ndarray]] = None,
                    labels: Optional[Sequence[str]] = None) -> TrajectoryBatch:
    """
    Integrate a stack of initial states. With `noises` (one NoiseSpec per row)
    the step is Euler–Maruyama; otherwise `method` selects RK4 or Euler.
    """
    steps = step_count(t1, dt)
    x0s = np.atleast_2d(np.asarray(x0s, dtype=float))
    if x0s.shape[1] != system.n_states:
        raise ConfigurationError(f"{system.name}: initial states must have {system.n_states} columns")
    u = _default_input(system, u)
    increments = None
    if noises is not None:
        if len(noises) != x0s.shape[0]:
            raise ConfigurationError("one noise stream per initial state is required")
        increments = noise_increments(system, noises, steps, dt)
        method = "euler"
    states = march(system, x0s, u, dt, steps, method, increments, kick, labels)
    logger.debug("%s: %d trajectories x %d steps", system.name, x0s.shape[0], steps)
    times = time_grid(steps, dt)
    outputs = system.observe(times, states, dt)
    scheme = "euler-maruyama" if noises is not None else method
    return TrajectoryBatch(times, states, outputs, dt, scheme, tuple(labels or ()))


def integrate_deterministic(system: DynamicalSystem, x0, u: Optional[InputSignal], t1: float,
                            dt: float, method: str = "rk4") -> Trajectory:
    """Noise-free fixed-step integration (w = 0)."""
    batch = integrate_batch(system, _as_state(system, x0)[None, :], u, t1, dt, method=method)
    return batch.trajectory(0)


def integrate_stochastic(system: DynamicalSystem, x0, u: Optional[InputSignal], noise: NoiseSpec,
                         t1: float, dt: float) -> Trajectory:
    """Euler–Maruyama integration driven by one reproducible noise stream."""
    batch = integrate_batch(system, _as_state(system, x0)[None, :], u, t1, dt, noises=[noise])
    return batch.trajectory(0)
