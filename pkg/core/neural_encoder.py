"""
neural_encoder.py — Strain → firing-probability encoder (linear filter + sigmoid).

    STA(τ) = cos(ω_sta(−τ + a)) · exp(−(−τ + a)² / b²),   τ ∈ [0, N]
    ξ(t)   = (1/C_ξ) Σ_τ strain(t − τ) STA(τ) dt
    P(t)   = 1 / (1 + exp(−c(ξ(t) − d)))

The encoder is deterministic and causal: P(t) depends only on strain over
[t − N, t]. Samples before one full window are not ready (NaN in `encode`).
"""
from dataclasses import dataclass
from typing import Optional

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.special import expit

from core.errors import ConfigurationError, EncoderNotReady
from core.simulator import step_count


@dataclass(frozen=True)
class EncoderParams:
    a: float = 5e-3             # s
    b: float = 4e-3             # s
    omega_sta: float = 1000.0   # rad/s
    c: float = 10.0
    d: float = 0.5
    N: float = 40e-3            # s
    C_xi: Optional[float] = None    # None: matched-filter normalization ‖STA‖²·dt

    def __post_init__(self):
        if not (self.b > 0 and self.N > 0 and self.c > 0):
            raise ConfigurationError("encoder needs b > 0, N > 0 and c > 0")
        if self.C_xi is not None and not self.C_xi > 0:
            raise ConfigurationError(f"C_xi must be > 0, got {self.C_xi}")

    def to_dict(self) -> dict:
        return {"a": self.a, "b": self.b, "omega_sta": self.omega_sta, "c": self.c,
                "d": self.d, "N": self.N, "C_xi": self.C_xi}


def sta_kernel(params: EncoderParams, dt: float) -> np.ndarray:
    """Kernel samples at τ = 0, dt, …, N (N/dt + 1 values)."""
    tau = dt * np.arange(step_count(params.N, dt) + 1)
    lag = -tau + params.a
    return np.cos(params.omega_sta * lag) * np.exp(-(lag ** 2) / params.b ** 2)


def normalization(params: EncoderParams, kernel: np.ndarray, dt: float) -> float:
    if params.C_xi is not None:
        return params.C_xi
    return float(np.dot(kernel, kernel) * dt)


def project_stimulus(history: np.ndarray, kernel: np.ndarray, C_xi: float, dt: float) -> float:
    """ξ at the last sample of `history` (oldest first); the last len(kernel) samples are used."""
    history = np.asarray(history, dtype=float)
    need = len(kernel)
    if len(history) < need:
        raise EncoderNotReady(len(history), need)
    recent = history[len(history) - need:][::-1]
    return float(np.dot(recent, kernel) * dt / C_xi)


def nla(xi, params: EncoderParams):
    """Sigmoid activation; strictly inside (0, 1) for finite ξ."""
    return expit(params.c * (np.asarray(xi, dtype=float) - params.d))


@dataclass
class EncodedResponse:
    xi: np.ndarray          # (T, ...) NaN where not ready
    p_fire: np.ndarray      # (T, ...) NaN where not ready
    ready: np.ndarray       # (T,) bool


def filter_stimulus(series: np.ndarray, params: EncoderParams, dt: float,
                    kernel: Optional[np.ndarray] = None) -> np.ndarray:
    """
    ξ for every sample of a series shaped (T, ...); NaN before one full window.
    The filter is linear, so it may be applied to modal amplitudes and
    projected onto strain afterwards.
    """
    series = np.asarray(series, dtype=float)
    kernel = sta_kernel(params, dt) if kernel is None else kernel
    need = len(kernel)
    if series.shape[0] < need:
        raise EncoderNotReady(series.shape[0], need)
    C_xi = normalization(params, kernel, dt)
    windows = sliding_window_view(series, need, axis=0)
    xi = np.full(series.shape, np.nan)
    xi[need - 1:] = np.tensordot(windows, kernel[::-1], axes=([-1], [0])) * (dt / C_xi)
    return xi


def encode(strain: np.ndarray, params: EncoderParams, dt: float,
           kernel: Optional[np.ndarray] = None) -> EncodedResponse:
    """Causal encoding of a strain series (T, ...); trailing axes are encoded independently."""
    xi = filter_stimulus(strain, params, dt, kernel)
    ready = np.all(np.isfinite(xi.reshape(xi.shape[0], -1)), axis=1)
    return EncodedResponse(xi, nla(xi, params), ready)
