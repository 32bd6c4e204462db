"""
UAV wind-estimation plant: drift, Jacobian and system wiring.
Run: python -m pytest tests/test_uav.py -v
"""
import os
import sys

import numpy as np
import pytest

# Project root on path
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from core.errors import ConfigurationError
from core.simulator import constant_input, integrate_deterministic
from plants.uav import NOMINAL_X0, UavParams, uav_drift, uav_jacobian, uav_system


def test_drift_direct_evaluation():
    f = uav_drift(10.0)
    np.testing.assert_allclose(f(np.array([0.0, 0.0, 0.0, 1.0, 2.0]), np.array([0.3]), 0.0),
                               [11.0, 2.0, 0.3, 0.0, 0.0])
    np.testing.assert_allclose(f(np.array([0.0, 0.0, 0.0, 1.0, 2.0]), np.array([0.0]), 0.0),
                               [11.0, 2.0, 0.0, 0.0, 0.0])


def test_heading_north():
    dx = uav_drift(10.0)(np.array([0.0, 0.0, np.pi / 2, 0.0, 0.0]), np.array([0.0]), 0.0)
    assert abs(dx[0]) < 1e-12
    assert dx[1] == pytest.approx(10.0)


def test_wind_states_are_constant():
    rng = np.random.default_rng(3)
    f = uav_drift(12.0)
    states = rng.standard_normal((50, 5))
    dx = f(states, rng.standard_normal(1), 0.0)
    assert np.all(dx[:, 3:] == 0.0)


def test_jacobian_matches_finite_differences():
    rng = np.random.default_rng(4)
    f = uav_drift(10.0)
    u = np.array([0.1])
    h = 1e-6
    for _ in range(10):
        x = rng.standard_normal(5)
        numeric = np.column_stack([(f(x + h * e, u, 0.0) - f(x - h * e, u, 0.0)) / (2 * h) for e in np.eye(5)])
        np.testing.assert_allclose(uav_jacobian(x, 10.0), numeric, rtol=1e-6, atol=1e-6)


def test_system_outputs_position():
    system = uav_system(UavParams(V=10.0))
    assert system.n_noise == 2
    np.testing.assert_array_equal(system.noise_map[:2], np.eye(2))
    traj = integrate_deterministic(system, np.array(NOMINAL_X0), constant_input([0.0]), 1.0, 0.01)
    np.testing.assert_array_equal(traj.outputs, traj.states[:, :2])
    expected_x = 10.0 * np.cos(np.pi / 6) + 0.35
    assert traj.final_state[0] == pytest.approx(expected_x, rel=1e-10)


def test_invalid_speed():
    with pytest.raises(ConfigurationError):
        UavParams(V=0.0)
