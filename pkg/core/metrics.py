"""
metrics.py — Spectral (un)observability metrics and Monte Carlo aggregation.

All metrics are read off the symmetric eigenvalues of W. W counts as singular
when its smallest eigenvalue is not positive or its smallest |λ| is at most
RANK_TOL · max|λ|, the same cut numerical_rank applies to singular values, so
for a PSD W the determinant root is 0 exactly when the numerical rank is
below m. Singular W gets ν = κ = +inf. Singular Gramians never raise.
The array versions accept stacks (..., m, m) so whole campaigns are scored
in one eigen-solve.
"""
import logging
from dataclasses import dataclass
from typing import Callable, Sequence, Tuple, Union

import numpy as np
from scipy.stats import pearsonr

from config.settings import settings
from core.errors import ConfigurationError
from core.gramian import GramianSample

logger = logging.getLogger(__name__)

MatrixLike = Union[np.ndarray, GramianSample]

METRIC_NAMES = ("nu", "kappa", "inv_det_root", "combined")
CSV_COLUMNS = ("m", "lambda_min", "lambda_max", "nu", "kappa", "det_root", "combined", "w_nu")


def _matrix(W: MatrixLike) -> np.ndarray:
    return W.matrix if isinstance(W, GramianSample) else np.asarray(W, dtype=float)


def spectra(W: np.ndarray, tol: float = None) -> Tuple[np.ndarray, np.ndarray]:
    """Ascending eigenvalues (..., m) and the per-matrix singularity mask (...)."""
    tol = settings.RANK_TOL if tol is None else tol
    lam = np.linalg.eigvalsh(W)
    mags = np.abs(lam)
    cut = tol * np.max(mags, axis=-1)
    return lam, (lam[..., 0] <= 0.0) | (np.min(mags, axis=-1) <= cut)


def nu_values(W: np.ndarray, tol: float = None) -> np.ndarray:
    lam, singular = spectra(W, tol)
    safe = np.where(singular, 1.0, lam[..., 0])
    return np.where(singular, np.inf, 1.0 / safe)


def kappa_values(W: np.ndarray, tol: float = None) -> np.ndarray:
    lam, singular = spectra(W, tol)
    safe = np.where(singular, 1.0, lam[..., 0])
    return np.where(singular, np.inf, lam[..., -1] / safe)


def det_root_values(W: np.ndarray, tol: float = None) -> np.ndarray:
    lam, singular = spectra(W, tol)
    logs = np.log(np.where(singular[..., None], 1.0, np.clip(lam, np.finfo(float).tiny, None)))
    return np.where(singular, 0.0, np.exp(np.mean(logs, axis=-1)))


def metric_values(W: np.ndarray, metric: str, w_nu: float = 0.0, tol: float = None) -> np.ndarray:
    """Vectorised j(W) for metric in METRIC_NAMES."""
    if metric == "nu":
        return nu_values(W, tol)
    if metric == "kappa":
        return kappa_values(W, tol)
    if metric == "inv_det_root":
        d = det_root_values(W, tol)
        return np.where(d > 0, 1.0 / np.where(d > 0, d, 1.0), np.inf)
    if metric == "combined":
        kappa = kappa_values(W, tol)
        if w_nu == 0:
            return kappa
        return kappa + w_nu * nu_values(W, tol)
    raise ConfigurationError(f"unknown metric '{metric}', expected one of {METRIC_NAMES}")


# ══════════════════════════════════════════════════════════════
# SCALAR METRICS
# ══════════════════════════════════════════════════════════════

def unobservability_index(W: MatrixLike) -> float:
    """ν = 1/λ_min; +inf when W is singular."""
    return float(nu_values(_matrix(W)))


def condition_number(W: MatrixLike) -> float:
    """κ = λ_max/λ_min; +inf when singular."""
    return float(kappa_values(_matrix(W)))


def det_root(W: MatrixLike) -> float:
    """(Π λ_i)^(1/m) through the mean log-eigenvalue; 0 when singular."""
    return float(det_root_values(_matrix(W)))


def combined_cost(W: MatrixLike, w_nu: float = 0.0) -> float:
    """κ + w_ν·ν."""
    if w_nu < 0:
        raise ConfigurationError(f"w_nu must be >= 0, got {w_nu}")
    return float(metric_values(_matrix(W), "combined", w_nu))


def metric_function(metric: str, w_nu: float = 0.0) -> Callable[[MatrixLike], float]:
    if metric not in METRIC_NAMES:
        raise ConfigurationError(f"unknown metric '{metric}', expected one of {METRIC_NAMES}")
    return lambda W: float(metric_values(_matrix(W), metric, w_nu))


@dataclass
class MetricReport:
    """Spectral summary of one Gramian."""
    nu: float
    kappa: float
    det_root: float
    combined: float
    lambda_min: float
    lambda_max: float
    m: int
    w_nu: float = 0.0

    def to_row(self) -> dict:
        return {col: getattr(self, col) for col in CSV_COLUMNS}


def metric_report(W: MatrixLike, w_nu: float = 0.0) -> MetricReport:
    mat = _matrix(W)
    lam, _ = spectra(mat)
    return MetricReport(
        nu=unobservability_index(mat),
        kappa=condition_number(mat),
        det_root=det_root(mat),
        combined=combined_cost(mat, w_nu),
        lambda_min=float(lam[0]),
        lambda_max=float(lam[-1]),
        m=mat.shape[0],
        w_nu=w_nu,
    )


# ══════════════════════════════════════════════════════════════
# MONTE CARLO
# ══════════════════════════════════════════════════════════════

@dataclass
class MonteCarloCost:
    """Ĵ over K samples; raw per-sample values are always kept."""
    mean: float
    median: float
    variance: float
    values: np.ndarray
    n_infinite: int

    @property
    def k(self) -> int:
        return len(self.values)

    def to_dict(self) -> dict:
        return {
            "mean": self.mean,
            "median": self.median,
            "variance": self.variance,
            "n_infinite": self.n_infinite,
            "k": self.k,
        }


def summarize_values(values: Sequence[float]) -> MonteCarloCost:
    vals = np.asarray(values, dtype=float)
    if vals.size == 0:
        raise ConfigurationError("Monte Carlo cost needs at least one sample")
    n_inf = int(np.sum(np.isinf(vals)))
    if n_inf:
        mean = variance = float("inf")
    else:
        mean = float(np.mean(vals))
        variance = float(np.var(vals, ddof=1)) if vals.size > 1 else 0.0
    return MonteCarloCost(mean, float(np.median(vals)), variance, vals, n_inf)


def monte_carlo_cost(samples: Sequence[MatrixLike], j: Callable[[MatrixLike], float]) -> MonteCarloCost:
    """Ĵ = (1/K) Σ j(W_k); one infinite sample makes the mean infinite."""
    if not samples:
        raise ConfigurationError("Monte Carlo cost needs at least one sample")
    dims = {_matrix(s).shape for s in samples}
    if len(dims) != 1:
        raise ConfigurationError(f"samples have mixed dimensions {sorted(dims)}")
    return summarize_values([j(s) for s in samples])


def metric_correlation(nu: Sequence[float], inv_det_root: Sequence[float]) -> Tuple[float, int]:
    """Pearson ρ between ν and 1/det-root over samples where both are finite."""
    a = np.asarray(nu, dtype=float)
    b = np.asarray(inv_det_root, dtype=float)
    keep = np.isfinite(a) & np.isfinite(b)
    excluded = int(np.sum(~keep))
    if excluded:
        logger.warning(f"correlation: {excluded} singular samples excluded")
    if keep.sum() < 3 or np.ptp(a[keep]) == 0 or np.ptp(b[keep]) == 0:
        return float("nan"), excluded
    rho, _ = pearsonr(a[keep], b[keep])
    return float(rho), excluded
