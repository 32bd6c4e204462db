"""
End-to-end noise-level trends and Gramian sanity on both plants (slow Monte Carlo).
Run: python -m pytest tests/test_experiments.py -v -m slow
"""
import os
import sys

import numpy as np
import pytest

# Project root on path
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from core.gramian import stochastic_gramian_campaign
from core.noise import NoiseSpec
from plants.flapping_wing import WingParams, assemble_wing_system
from plants.uav import HEADING_AND_WIND, NOISE_LEVELS, UavParams, uav_system
from plants.wing_campaign import WingGramianSource, WingSchedule
from runner.experiments import run_sweep, uav_plan
from runner.schemas import RunSpec

SEEDS = (0, 1, 2)
HEAVY_NU_WEIGHT = 5e8


@pytest.fixture(scope="module")
def sweeps(tmp_path_factory):
    out = tmp_path_factory.mktemp("sweeps")
    return {
        seed: run_sweep(RunSpec(experiment="sweep", seed=seed, runs=100, w_nu_values=[0.0, HEAVY_NU_WEIGHT]),
                        out / f"seed{seed}")
        for seed in SEEDS
    }


@pytest.mark.slow
@pytest.mark.parametrize("seed", SEEDS)
def test_nu_median_and_spread_fall_with_noise(sweeps, seed):
    levels = sweeps[seed]["levels"]
    assert [level["q"] for level in levels] == list(NOISE_LEVELS)
    medians = [level["nu"]["median"] for level in levels]
    assert all(b < a for a, b in zip(medians, medians[1:]))
    assert levels[0]["nu"]["variance"] > levels[-1]["nu"]["variance"]


@pytest.mark.slow
def test_nu_tracks_inverse_det_root_at_low_noise(sweeps):
    low = sweeps[0]["levels"][0]
    assert low["q"] == 0.05
    assert low["rho_nu_inv_det_root"] > 0.5


@pytest.mark.slow
@pytest.mark.parametrize("seed", SEEDS)
def test_heavy_nu_weight_cost_falls_with_noise(sweeps, seed):
    key = f"combined_wnu{HEAVY_NU_WEIGHT:g}"
    levels = sweeps[seed]["levels"]
    assert key == "combined_wnu5e+08"
    assert levels[0][key]["mean"] > levels[-1][key]["mean"]


@pytest.mark.slow
def test_thousand_stochastic_gramians_are_psd():
    system = uav_system(UavParams())
    plan = uav_plan(RunSpec(experiment="sweep", t1=20.0), HEADING_AND_WIND)
    uav = np.stack([s.matrix for s in stochastic_gramian_campaign(system, plan, NoiseSpec((0.5, 0.5), 11), 500)])

    assembly = assemble_wing_system(WingParams(n_bending_modes=2, n_torsion_modes=1, grid_rows=10, grid_cols=10))
    source = WingGramianSource(assembly, runs=5, noise=NoiseSpec(tuple(assembly.params.q_diag), master_seed=12),
                               schedule=WingSchedule(duration=0.1, t_perturb=0.05))
    wing = source.gramians_at(assembly.table.nodes()).reshape(-1, 2, 2)

    for stack in (uav, wing):
        assert len(stack) == 500
        np.testing.assert_array_equal(stack, np.swapaxes(stack, -1, -2))
        lam_min = np.linalg.eigvalsh(stack)[:, 0]
        assert np.all(lam_min >= -1e-10 * np.trace(stack, axis1=-2, axis2=-1))
