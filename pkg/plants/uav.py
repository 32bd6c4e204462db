"""
uav.py — Planar fixed-wing UAV with constant unknown wind.

    x = [x_E, y_N, θ, W_x, W_y]
    ẋ = [V cos θ + W_x, V sin θ + W_y, u, 0, 0] + G w,   y = (x_E, y_N)

Process noise enters the two position channels. With u ≡ 0 and w ≡ 0 the
heading and wind cannot all be told apart from position; noise excites the
missing directions.
"""
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from config.settings import settings
from core.errors import ConfigurationError
from core.noise import NoiseSpec
from core.simulator import DynamicalSystem, InputSignal

STATE_NAMES = ("x_E", "y_N", "theta", "W_x", "W_y")
NOMINAL_X0 = (0.0, 0.0, np.pi / 6, 0.35, -0.15)
NOISE_LEVELS = (0.05, 0.1, 0.2, 0.5, 1.0)
HEADING_AND_WIND = (2, 3, 4)


@dataclass
class UavParams:
    V: float = settings.UAV_SPEED
    u: Optional[InputSignal] = None     # angular velocity, rad/s; None means u ≡ 0
    q_diag: Tuple[float, float] = (0.05, 0.05)

    def __post_init__(self):
        if not self.V > 0:
            raise ConfigurationError(f"UAV speed must be > 0, got {self.V}")
        if len(self.q_diag) != 2:
            raise ConfigurationError("UAV noise covariance has two channels")

    def noise(self, master_seed: int = 0) -> NoiseSpec:
        return NoiseSpec(tuple(self.q_diag), master_seed)


def uav_drift(V: float):
    def drift(x: np.ndarray, u: np.ndarray, t: float) -> np.ndarray:
        theta = x[..., 2]
        dx = np.zeros_like(x)
        dx[..., 0] = V * np.cos(theta) + x[..., 3]
        dx[..., 1] = V * np.sin(theta) + x[..., 4]
        dx[..., 2] = np.asarray(u, dtype=float)[..., 0]
        return dx
    return drift


def uav_jacobian(x: np.ndarray, V: float) -> np.ndarray:
    """∂f/∂x at a single state."""
    theta = x[2]
    J = np.zeros((5, 5))
    J[0, 2] = -V * np.sin(theta)
    J[0, 3] = 1.0
    J[1, 2] = V * np.cos(theta)
    J[1, 4] = 1.0
    return J


def uav_system(params: UavParams = None) -> DynamicalSystem:
    params = params or UavParams()
    G = np.zeros((5, 2))
    G[0, 0] = G[1, 1] = 1.0
    return DynamicalSystem(
        n_states=5,
        n_inputs=1,
        n_outputs=2,
        drift=uav_drift(params.V),
        noise_map=G,
        output_map=lambda window, t: window[-1, :2],
        batch_output=lambda times, states: states[..., :2].copy(),
        name="uav",
        state_names=STATE_NAMES,
    )
