"""
flapping_wing.py — Reduced-order flexible flapping wing (assumed-modes plate).

The wing is a clamped-free rectangular plate flapping about its root hinge
while the body rotates at rate ω. Deflection is expanded in
    bending modes  ψ_i(s, y) ∝ Φ_i(s)        (chordwise uniform)
    torsion modes  ψ_j(s, y) ∝ Φ_j(s) · y    (chordwise linear twist)
with Φ the Euler–Bernoulli clamped-free shapes along the span s. Modes are
mass normalised (M = I) and damped with C = αM + βK.

    x = [φ̇, ω, η, η̇]
    φ̈  = φ̈_cmd(t) + λ (φ̇_cmd(t) − φ̇)
    ω̇  = ω_nom e'(t) + λ (e(t) ω_nom − ω)
    η̈  = −Γ φ̈ − Λ (2 ω φ̇) − C η̇ − K η

Γ projects the flapping base acceleration (load ∝ s) onto the bending modes,
Λ projects the chordwise-antisymmetric rotation coupling (load ∝ s·y, the
local flapping speed times the chord offset) onto the torsion modes. With
quasi_static_loads each family shares its load in static proportion: mode i
of a family gets k_1/k_i of its inertial projection, k_1 being the stiffness
of the family's first mode. Strain then falls off monotonically from root to tip.

Wing coordinates are in cm: root at x = 0, tip at x = −5, chord y ∈ [−1.25, 1.25].
"""
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Tuple, Union

import numpy as np
from scipy.integrate import simpson
from scipy.interpolate import RegularGridInterpolator
from scipy.optimize import brentq

from core.errors import ConfigurationError, OutOfBoundsError
from core.matrix_io import write_matrix
from core.simulator import DynamicalSystem

logger = logging.getLogger(__name__)

CM = 0.01                  # metres per cm
PHI_DOT, OMEGA = 0, 1      # rate-state indices
QUADRATURE_POINTS = 2001


@dataclass
class WingParams:
    width: float = 0.025            # chord, m
    length: float = 0.05            # span, m
    thickness: float = 12.7e-6      # m
    youngs_modulus: float = 0.3e9   # Pa
    poisson: float = 0.35
    density: float = 1180.0         # kg/m³
    alpha: float = 500.0            # 1/s, mass-proportional damping
    beta: float = 0.0               # s, stiffness-proportional damping
    f1: float = 25.0                # Hz
    f2: float = 50.0                # Hz
    flap_amplitude: float = np.pi / 6
    omega_nominal: float = 0.02     # rad/s
    n_bending_modes: int = 4
    n_torsion_modes: int = 2
    q_diag: Tuple[float, float] = (1.0, 1e-4)
    tracking_gain: float = 200.0    # 1/s
    grid_rows: int = 25             # chordwise nodes
    grid_cols: int = 50             # spanwise nodes
    quasi_static_loads: bool = True

    def __post_init__(self):
        positive = ("width", "length", "thickness", "youngs_modulus", "density",
                    "alpha", "f1", "f2", "tracking_gain")
        bad = [name for name in positive if not getattr(self, name) > 0]
        if bad:
            raise ConfigurationError(f"wing parameters must be > 0: {bad}")
        if self.beta < 0 or self.flap_amplitude < 0:
            raise ConfigurationError("beta and flap_amplitude must be >= 0")
        if not 0 <= self.poisson < 0.5:
            raise ConfigurationError(f"poisson ratio out of range: {self.poisson}")
        if self.n_bending_modes < 1 or self.n_torsion_modes < 0:
            raise ConfigurationError("need at least one bending mode")
        if self.n_torsion_modes > self.n_bending_modes:
            raise ConfigurationError("torsion modes reuse bending shapes; n_torsion <= n_bending")
        if self.grid_rows < 2 or self.grid_cols < 2:
            raise ConfigurationError("strain grid needs at least 2 x 2 nodes")

    @property
    def n_modes(self) -> int:
        return self.n_bending_modes + self.n_torsion_modes

    @property
    def n_states(self) -> int:
        return 2 + 2 * self.n_modes

    @property
    def wingbeat_period(self) -> float:
        return 1.0 / self.f1

    @property
    def rigidity(self) -> float:
        return self.youngs_modulus * self.thickness ** 3 / (12.0 * (1.0 - self.poisson ** 2))

    @property
    def areal_density(self) -> float:
        return self.density * self.thickness

    @property
    def x_range_cm(self) -> Tuple[float, float]:
        return -self.length / CM, 0.0

    @property
    def y_range_cm(self) -> Tuple[float, float]:
        half = 0.5 * self.width / CM
        return -half, half


# ══════════════════════════════════════════════════════════════
# PRESCRIBED KINEMATICS
# ══════════════════════════════════════════════════════════════

def ramp_envelope(t, wingbeat_period: float):
    """0 through the first wingbeat, linear ramp over the second, 1 afterwards."""
    return np.clip((np.asarray(t, dtype=float) - wingbeat_period) / wingbeat_period, 0.0, 1.0)


def ramp_envelope_rate(t, wingbeat_period: float):
    t = np.asarray(t, dtype=float)
    inside = (t >= wingbeat_period) & (t < 2.0 * wingbeat_period)
    return np.where(inside, 1.0 / wingbeat_period, 0.0)


def flap_rate_raw(t, params: WingParams):
    w1, w2 = 2 * np.pi * params.f1, 2 * np.pi * params.f2
    return params.flap_amplitude * (w1 * np.cos(w1 * t) + (w2 / 5.0) * np.cos(w2 * t))


def flap_accel_raw(t, params: WingParams):
    w1, w2 = 2 * np.pi * params.f1, 2 * np.pi * params.f2
    return -params.flap_amplitude * (w1 ** 2 * np.sin(w1 * t) + (w2 ** 2 / 5.0) * np.sin(w2 * t))


def flap_rate(t, params: WingParams, enveloped: bool = True):
    """Commanded flapping angular velocity φ̇(t), rad/s."""
    raw = flap_rate_raw(t, params)
    return ramp_envelope(t, params.wingbeat_period) * raw if enveloped else raw


def flap_accel(t, params: WingParams):
    """d/dt of the enveloped flap rate (product rule)."""
    T = params.wingbeat_period
    return (ramp_envelope_rate(t, T) * flap_rate_raw(t, params)
            + ramp_envelope(t, T) * flap_accel_raw(t, params))


# ══════════════════════════════════════════════════════════════
# MODE SHAPES
# ══════════════════════════════════════════════════════════════

def cantilever_roots(count: int) -> np.ndarray:
    """First `count` roots of 1 + cos(x) cosh(x) = 0 (clamped-free βL)."""
    f = lambda x: 1.0 + np.cos(x) * np.cosh(x)
    centres = (2 * np.arange(1, count + 1) - 1) * np.pi / 2
    return np.array([brentq(f, c - 0.5, c + 0.5, xtol=1e-14) for c in centres])


def span_shapes(s: np.ndarray, beta: float, length: float):
    """Clamped-free shape Φ and its first two span derivatives at s (m)."""
    bl = beta * length
    sig = (np.cosh(bl) + np.cos(bl)) / (np.sinh(bl) + np.sin(bl))
    bs = beta * s
    ch, c, sh, sn = np.cosh(bs), np.cos(bs), np.sinh(bs), np.sin(bs)
    phi = ch - c - sig * (sh - sn)
    d1 = beta * (sh + sn - sig * (ch - c))
    d2 = beta ** 2 * (ch + c - sig * (sh + sn))
    return phi, d1, d2


@dataclass
class ModeShapeTable:
    """Mode curvatures ∂²ψ/∂x² sampled on the strain grid."""
    x_cm: np.ndarray            # (nx,) ascending, tip → root
    y_cm: np.ndarray            # (ny,)
    curvature: np.ndarray       # (n_modes, ny, nx), 1/m² per unit modal amplitude
    thickness: float
    kinds: Tuple[str, ...]

    def __post_init__(self):
        self._interp = RegularGridInterpolator(
            (self.y_cm, self.x_cm), np.moveaxis(self.curvature, 0, -1), method="linear")

    @property
    def n_modes(self) -> int:
        return self.curvature.shape[0]

    @property
    def grid_shape(self) -> Tuple[int, int]:
        return self.curvature.shape[1:]

    def nodes(self) -> np.ndarray:
        """All grid nodes as (ny·nx, 2) (x, y) pairs, row-major over (y, x)."""
        yy, xx = np.meshgrid(self.y_cm, self.x_cm, indexing="ij")
        return np.column_stack([xx.ravel(), yy.ravel()])

    def check_loci(self, loci: np.ndarray, tol: float = 1e-9) -> np.ndarray:
        loci = np.atleast_2d(np.asarray(loci, dtype=float))
        if loci.shape[1] != 2:
            raise ConfigurationError("loci are (x, y) pairs")
        x_ok = (loci[:, 0] >= self.x_cm[0] - tol) & (loci[:, 0] <= self.x_cm[-1] + tol)
        y_ok = (loci[:, 1] >= self.y_cm[0] - tol) & (loci[:, 1] <= self.y_cm[-1] + tol)
        if not np.all(x_ok & y_ok):
            bad = loci[~(x_ok & y_ok)][0]
            raise OutOfBoundsError(f"locus ({bad[0]:.4g}, {bad[1]:.4g}) cm lies outside the wing")
        lo = np.array([self.x_cm[0], self.y_cm[0]])
        hi = np.array([self.x_cm[-1], self.y_cm[-1]])
        return np.clip(loci, lo, hi)

    def curvature_at(self, loci: np.ndarray) -> np.ndarray:
        """Bilinear mode curvatures at loci, shape (n_loci, n_modes)."""
        loci = self.check_loci(loci)
        return self._interp(loci[:, ::-1])

    def strain_weights(self, loci: np.ndarray) -> np.ndarray:
        """(n_modes, n_loci) map from η to surface strain."""
        return -0.5 * self.thickness * self.curvature_at(loci).T

    def export(self, path: Union[str, Path], provenance: Optional[dict] = None) -> Path:
        return write_matrix(path, self.curvature, {
            "x_cm": self.x_cm.tolist(),
            "y_cm": self.y_cm.tolist(),
            "thickness": self.thickness,
            "kinds": list(self.kinds),
        }, provenance)


def strain_at(eta: np.ndarray, loci: np.ndarray, table: ModeShapeTable) -> np.ndarray:
    """
    Surface strain ε_xx = −(h/2) Σ η_i ∂²ψ_i/∂x² at loci.

    eta is a modal history (T, ..., n_modes); the result is (T, ..., n_loci).
    """
    return np.asarray(eta, dtype=float) @ table.strain_weights(loci)


def strain_field(eta: np.ndarray, table: ModeShapeTable) -> np.ndarray:
    """Strain on every grid node, (..., ny, nx)."""
    return -0.5 * table.thickness * np.tensordot(np.asarray(eta, dtype=float), table.curvature, axes=([-1], [0]))


# ══════════════════════════════════════════════════════════════
# ASSEMBLY
# ══════════════════════════════════════════════════════════════

@dataclass
class WingAssembly:
    params: WingParams
    system: DynamicalSystem
    table: ModeShapeTable
    M: np.ndarray
    K: np.ndarray
    C: np.ndarray
    gamma: np.ndarray           # flapping participation per mode
    lam: np.ndarray             # rotation-coupling participation per mode
    frequencies_hz: np.ndarray

    @property
    def n_modes(self) -> int:
        return self.params.n_modes

    def eta(self, states: np.ndarray) -> np.ndarray:
        return states[..., 2:2 + self.n_modes]

    def modal_energy(self, states: np.ndarray) -> np.ndarray:
        eta = self.eta(states)
        eta_dot = states[..., 2 + self.n_modes:]
        k = np.diag(self.K)
        return 0.5 * np.sum(eta_dot ** 2 + k * eta ** 2, axis=-1)

    def initial_state(self) -> np.ndarray:
        x0 = np.zeros(self.params.n_states)
        x0[OMEGA] = self.params.omega_nominal * float(ramp_envelope(0.0, self.params.wingbeat_period))
        return x0


def _modal_data(params: WingParams):
    n_b, n_t = params.n_bending_modes, params.n_torsion_modes
    L, W = params.length, params.width
    rho_h, D = params.areal_density, params.rigidity
    betas = cantilever_roots(n_b) / L
    s = np.linspace(0.0, L, QUADRATURE_POINTS)
    chord_moment = W ** 3 / 12.0

    stiffness, gamma, lam, scales, kinds = [], [], [], [], []
    for i in range(n_b):
        phi, d1, d2 = span_shapes(s, betas[i], L)
        phi2 = simpson(phi ** 2, x=s)
        scale = 1.0 / np.sqrt(rho_h * W * phi2)
        stiffness.append(D / rho_h * simpson(d2 ** 2, x=s) / phi2)
        gamma.append(rho_h * W * scale * simpson(phi * s, x=s))
        lam.append(0.0)
        scales.append(scale)
        kinds.append("bending")
    for j in range(n_t):
        phi, d1, d2 = span_shapes(s, betas[j], L)
        phi2 = simpson(phi ** 2, x=s)
        scale = 1.0 / np.sqrt(rho_h * phi2 * chord_moment)
        twist = 24.0 * (1.0 - params.poisson) / W ** 2 * simpson(d1 ** 2, x=s) / phi2
        stiffness.append(D / rho_h * (simpson(d2 ** 2, x=s) / phi2 + twist))
        gamma.append(0.0)
        lam.append(rho_h * scale * chord_moment * simpson(phi * s, x=s))
        scales.append(scale)
        kinds.append("torsion")
    stiffness, gamma, lam = np.array(stiffness), np.array(gamma), np.array(lam)
    if params.quasi_static_loads:
        gamma[:n_b] *= stiffness[0] / stiffness[:n_b]
        if n_t:
            lam[n_b:] *= stiffness[n_b] / stiffness[n_b:]
    return betas, stiffness, gamma, lam, np.array(scales), tuple(kinds)


def _mode_table(params: WingParams, betas, scales, kinds) -> ModeShapeTable:
    x_lo, x_hi = params.x_range_cm
    y_lo, y_hi = params.y_range_cm
    x_cm = np.linspace(x_lo, x_hi, params.grid_cols)
    y_cm = np.linspace(y_lo, y_hi, params.grid_rows)
    s = np.clip(-x_cm * CM, 0.0, params.length)
    y_m = y_cm * CM
    curv = np.empty((params.n_modes, len(y_cm), len(x_cm)))
    for k, kind in enumerate(kinds):
        beta = betas[k if kind == "bending" else k - params.n_bending_modes]
        _, _, d2 = span_shapes(s, beta, params.length)
        chord = np.ones_like(y_m) if kind == "bending" else y_m
        curv[k] = scales[k] * np.outer(chord, d2)
    return ModeShapeTable(x_cm, y_cm, curv, params.thickness, kinds)


def wing_drift(params: WingParams, k_diag: np.ndarray, c_diag: np.ndarray,
               gamma: np.ndarray, lam: np.ndarray):
    n = params.n_modes
    T_wb = params.wingbeat_period
    gain = params.tracking_gain

    def drift(x: np.ndarray, u: np.ndarray, t: float) -> np.ndarray:
        phi_dot = x[..., PHI_DOT]
        omega = x[..., OMEGA]
        eta = x[..., 2:2 + n]
        eta_dot = x[..., 2 + n:]
        env = float(ramp_envelope(t, T_wb))
        phi_dd = flap_accel(t, params) + gain * (env * flap_rate_raw(t, params) - phi_dot)
        omega_d = (params.omega_nominal * float(ramp_envelope_rate(t, T_wb))
                   + gain * (env * params.omega_nominal - omega))
        force = -gamma * phi_dd[..., None] - lam * (2.0 * omega * phi_dot)[..., None]
        dx = np.empty_like(x)
        dx[..., PHI_DOT] = phi_dd
        dx[..., OMEGA] = omega_d
        dx[..., 2:2 + n] = eta_dot
        dx[..., 2 + n:] = force - c_diag * eta_dot - k_diag * eta
        return dx

    return drift


def assemble_wing_system(params: WingParams = None) -> WingAssembly:
    """Modal matrices, mode-shape table and the rate/modal DynamicalSystem (outputs η)."""
    params = params or WingParams()
    betas, k_diag, gamma, lam, scales, kinds = _modal_data(params)
    if not np.all(np.isfinite(k_diag)) or np.any(k_diag <= 0):
        raise ConfigurationError(f"assembled stiffness is not positive definite: {k_diag}")
    n = params.n_modes
    M = np.eye(n)
    K = np.diag(k_diag)
    C = params.alpha * M + params.beta * K
    c_diag = np.diag(C).copy()
    G = np.zeros((params.n_states, 2))
    G[PHI_DOT, 0] = G[OMEGA, 1] = 1.0
    names = ("phi_dot", "omega") + tuple(f"eta{k + 1}" for k in range(n)) + tuple(
        f"eta_dot{k + 1}" for k in range(n))
    system = DynamicalSystem(
        n_states=params.n_states,
        n_inputs=0,
        n_outputs=n,
        drift=wing_drift(params, k_diag, c_diag, gamma, lam),
        noise_map=G,
        output_map=lambda window, t: window[-1, 2:2 + n],
        batch_output=lambda times, states: states[..., 2:2 + n].copy(),
        name="flapping_wing",
        state_names=names,
    )
    table = _mode_table(params, betas, scales, kinds)
    freqs = np.sqrt(k_diag) / (2 * np.pi)
    logger.info(f"wing assembled: {params.n_bending_modes} bending + {params.n_torsion_modes} "
                f"torsion modes, f = {np.round(freqs, 2).tolist()} Hz")
    return WingAssembly(params, system, table, M, K, C, gamma, lam, freqs)
