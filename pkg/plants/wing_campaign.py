"""
wing_campaign.py — Per-sensor stochastic Gramians for the flapping wing.

Each Monte Carlo run integrates the 2m perturbed wing trajectories once
(streams keyed by run, perturbed state and sign, never by sensor locus).
Because strain and the encoder's linear filter are both linear in the modal
amplitudes, the filtered modal histories are cached per run and any set of
loci is scored by projecting them, applying the sigmoid and assembling one
Gramian per locus. Candidate evaluations therefore share their noise
realisations (common random numbers).
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np

from config.settings import settings
from core.errors import ConfigurationError, EncoderNotReady
from core.gramian import PerturbationPlan, gramian_from_outputs, perturbation_batch
from core.neural_encoder import EncoderParams, filter_stimulus, nla, project_stimulus, sta_kernel, normalization
from core.noise import NoiseSpec
from core.simulator import DynamicalSystem
from plants.flapping_wing import OMEGA, PHI_DOT, WingAssembly, strain_at

logger = logging.getLogger(__name__)


@dataclass
class WingSchedule:
    """Simulation schedule: perturb the rate states at t_perturb, observe until `duration`."""
    dt: float = settings.WING_DT
    duration: float = settings.WING_DURATION
    t_perturb: float = settings.WING_PERTURB_TIME
    epsilon: float = settings.WING_EPSILON
    perturbed: Tuple[int, ...] = (PHI_DOT, OMEGA)

    @property
    def window(self) -> float:
        return self.duration - self.t_perturb

    def plan(self, x0: np.ndarray) -> PerturbationPlan:
        if not self.window > 0:
            raise ConfigurationError("wing schedule: duration must exceed t_perturb")
        return PerturbationPlan(self.epsilon, self.perturbed, self.window, self.dt, x0,
                                t_perturb=self.t_perturb)


def sensor_system(assembly: WingAssembly, loci: np.ndarray, encoder: EncoderParams,
                  dt: float) -> DynamicalSystem:
    """The wing with firing probabilities at `loci` as outputs (output delay N)."""
    table = assembly.table
    loci = table.check_loci(loci)
    weights = table.strain_weights(loci)
    kernel = sta_kernel(encoder, dt)
    C_xi = normalization(encoder, kernel, dt)
    n = assembly.n_modes
    base = assembly.system

    def output_map(window: np.ndarray, t: float) -> np.ndarray:
        strain = window[:, 2:2 + n] @ weights
        try:
            xi = [project_stimulus(strain[:, j], kernel, C_xi, dt) for j in range(strain.shape[1])]
        except EncoderNotReady:
            return np.full(len(loci), np.nan)
        return nla(np.array(xi), encoder)

    def batch_output(times: np.ndarray, states: np.ndarray) -> np.ndarray:
        xi = filter_stimulus(strain_at(assembly.eta(states), loci, table), encoder, dt, kernel)
        return nla(xi, encoder)

    return DynamicalSystem(
        n_states=base.n_states,
        n_inputs=base.n_inputs,
        n_outputs=len(loci),
        drift=base.drift,
        noise_map=base.noise_map,
        output_map=output_map,
        output_delay=encoder.N,
        batch_output=batch_output,
        name=f"{base.name}[{len(loci)} sensors]",
        state_names=base.state_names,
    )


class WingGramianSource:
    """K × n_loci stochastic Gramians over the perturbed rate states, any loci."""

    def __init__(self, assembly: WingAssembly, runs: int, noise: Optional[NoiseSpec] = None,
                 encoder: Optional[EncoderParams] = None, schedule: Optional[WingSchedule] = None,
                 threads: int = 1, chunk_runs: int = 8):
        if runs < 1:
            raise ConfigurationError(f"need at least one Monte Carlo run, got {runs}")
        self.assembly = assembly
        self.runs = runs
        self.noise = noise or NoiseSpec(tuple(assembly.params.q_diag))
        self.encoder = encoder or EncoderParams()
        self.schedule = schedule or WingSchedule()
        self.plan = self.schedule.plan(assembly.initial_state())
        self.threads = max(1, threads)
        self.chunk_runs = max(1, chunk_runs)
        self.kernel = sta_kernel(self.encoder, self.schedule.dt)
        if self.schedule.t_perturb < self.encoder.N:
            logger.warning("encoder warm-up overlaps the Gramian window; early samples are skipped")
        self._xi_modal: Optional[np.ndarray] = None     # (T_w, K, 2m, n_modes)
        self._times: Optional[np.ndarray] = None

    @property
    def m(self) -> int:
        return self.plan.m

    @property
    def bounds(self) -> Tuple[Tuple[float, float], Tuple[float, float]]:
        p = self.assembly.params
        return p.x_range_cm, p.y_range_cm

    def _filtered_block(self, run_indices: Sequence[int]) -> np.ndarray:
        batch = perturbation_batch(self.assembly.system, self.plan, run_indices, self.noise)
        xi = filter_stimulus(self.assembly.eta(batch.states), self.encoder, self.plan.dt, self.kernel)
        lo = self.plan.perturb_step
        hi = lo + self.plan.window_steps + 1
        self._times = batch.times[lo:hi]
        return xi[lo:hi].reshape(hi - lo, len(run_indices), 2 * self.m, -1)

    def prepare(self) -> "WingGramianSource":
        """Run (once) every Monte Carlo simulation and cache the filtered modal histories."""
        if self._xi_modal is not None:
            return self
        indices = list(range(self.runs))
        chunks = [indices[i:i + self.chunk_runs] for i in range(0, self.runs, self.chunk_runs)]
        logger.info(f"wing campaign: {self.runs} runs x {2 * self.m} perturbed simulations")
        if self.threads > 1:
            with ThreadPoolExecutor(max_workers=self.threads) as pool:
                blocks = list(pool.map(self._filtered_block, chunks))
        else:
            blocks = [self._filtered_block(c) for c in chunks]
        self._xi_modal = np.concatenate(blocks, axis=1)
        return self

    def gramians_at(self, loci: np.ndarray) -> np.ndarray:
        """Per-run, per-locus Gramians, shape (K, n_loci, m, m)."""
        self.prepare()
        table = self.assembly.table
        weights = -0.5 * table.thickness * table.curvature_at(loci).T    # (n_modes, n_loci)
        p_fire = nla(self._xi_modal @ weights, self.encoder)             # (T_w, K, 2m, L)
        T_w, K, _, L = p_fire.shape
        y = p_fire.reshape(T_w, K, self.m, 2, L)
        y_plus = np.moveaxis(y[:, :, :, 0, :], -1, 2)[..., None]         # (T_w, K, L, m, 1)
        y_minus = np.moveaxis(y[:, :, :, 1, :], -1, 2)[..., None]
        return gramian_from_outputs(y_plus, y_minus, self._times, self.plan.epsilon)


def span_profile(nu_grid: np.ndarray) -> np.ndarray:
    """
    Spanwise ν profile of a (ny, nx) heatmap: the chordwise mean of log10 ν at
    each span station. Non-finite nodes count as the largest finite ν on the
    grid; a grid with no finite node gives +inf everywhere.
    """
    nu_grid = np.asarray(nu_grid, dtype=float)
    finite = np.isfinite(nu_grid)
    if not finite.any():
        return np.full(nu_grid.shape[1], np.inf)
    clipped = np.where(finite, nu_grid, nu_grid[finite].max())
    return np.mean(np.log10(clipped), axis=0)
