"""
noise.py — Reproducible process-noise streams.

Each stream is a Philox (counter-based) generator keyed by the master seed and
a (run, perturbation-index, sign) stream id, so a draw never depends on which
other streams were consumed before it or on which worker consumed them.
"""
from dataclasses import dataclass, replace
from typing import Sequence, Tuple

import numpy as np

from core.errors import ConfigurationError

StreamId = Tuple[int, int, int]

SIGN_CODES = {+1: 0, -1: 1}


@dataclass(frozen=True)
class NoiseSpec:
    """Diagonal process-noise covariance plus the stream it is drawn from."""
    q_diag: Tuple[float, ...]                  # diagonal of Q, per-channel (signal-unit)^2
    master_seed: int = 0
    stream_id: StreamId = (0, 0, 0)

    def __post_init__(self):
        q = tuple(float(v) for v in np.atleast_1d(self.q_diag))
        if not q:
            raise ConfigurationError("noise covariance needs at least one channel")
        if any(v < 0 or not np.isfinite(v) for v in q):
            raise ConfigurationError(f"noise variances must be finite and >= 0, got {q}")
        if not 0 <= int(self.master_seed) < 2 ** 64:
            raise ConfigurationError("master_seed must fit in 64 bits")
        if len(self.stream_id) != 3 or any(int(s) < 0 for s in self.stream_id):
            raise ConfigurationError(f"stream_id must be three non-negative ints, got {self.stream_id}")
        object.__setattr__(self, "q_diag", q)
        object.__setattr__(self, "stream_id", tuple(int(s) for s in self.stream_id))

    @property
    def n_noise(self) -> int:
        return len(self.q_diag)

    @property
    def covariance(self) -> np.ndarray:
        return np.diag(self.q_diag)

    @property
    def is_zero(self) -> bool:
        return all(v == 0.0 for v in self.q_diag)

    def for_stream(self, run: int, index: int, sign: int) -> "NoiseSpec":
        """Same covariance and seed, different stream (sign is +1 or -1)."""
        if sign not in SIGN_CODES:
            raise ConfigurationError(f"sign must be +1 or -1, got {sign}")
        return replace(self, stream_id=(int(run), int(index), SIGN_CODES[sign]))

    def scaled(self, factor: float) -> "NoiseSpec":
        return replace(self, q_diag=tuple(factor * v for v in self.q_diag))

    def to_dict(self) -> dict:
        return {
            "q_diag": list(self.q_diag),
            "master_seed": self.master_seed,
            "stream_id": list(self.stream_id),
        }


def stream_generator(master_seed: int, stream_id: Sequence[int]) -> np.random.Generator:
    """Philox generator for one stream; independent of every other stream id."""
    seq = np.random.SeedSequence(entropy=int(master_seed), spawn_key=tuple(int(s) for s in stream_id))
    return np.random.Generator(np.random.Philox(seq))


def sample_noise(noise: NoiseSpec, steps: int) -> np.ndarray:
    """Zero-mean Gaussian draws, shape (steps, n_noise), channel variances Q_jj."""
    if steps <= 0:
        raise ConfigurationError(f"steps must be positive, got {steps}")
    rng = stream_generator(noise.master_seed, noise.stream_id)
    z = rng.standard_normal((steps, noise.n_noise))
    return z * np.sqrt(np.asarray(noise.q_diag))
