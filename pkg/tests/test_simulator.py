"""
Fixed-step integrators: RK4 accuracy, Euler–Maruyama statistics, divergence guard.
Run: python -m pytest tests/test_simulator.py -v
"""
import os
import sys

import numpy as np
import pytest

# Project root on path
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from core.errors import ConfigurationError, IntegrationDivergedError
from core.noise import NoiseSpec
from core.simulator import (DynamicalSystem, ZeroOrderHold, constant_input, integrate_batch,
                            integrate_deterministic, integrate_stochastic, step_count)


def scalar_system(drift) -> DynamicalSystem:
    return DynamicalSystem(
        n_states=1, n_inputs=0, n_outputs=1,
        drift=drift,
        noise_map=np.eye(1),
        output_map=lambda window, t: window[-1],
        batch_output=lambda times, states: states.copy(),
        name="scalar",
    )


def test_constant_solution():
    traj = integrate_deterministic(scalar_system(lambda x, u, t: np.zeros_like(x)), [3.0], None, 1.0, 0.1)
    assert len(traj.times) == 11
    assert np.all(traj.states == 3.0)
    assert np.all(traj.outputs == 3.0)


def test_exponential_decay_rk4():
    traj = integrate_deterministic(scalar_system(lambda x, u, t: -x), [1.0], None, 1.0, 1e-3)
    assert traj.final_state[0] == pytest.approx(np.exp(-1.0), abs=1e-6)
    assert np.allclose(np.diff(traj.times), 1e-3)


def test_rk4_fourth_order_convergence():
    system = scalar_system(lambda x, u, t: -x)
    coarse = abs(integrate_deterministic(system, [1.0], None, 1.0, 0.1).final_state[0] - np.exp(-1.0))
    fine = abs(integrate_deterministic(system, [1.0], None, 1.0, 0.05).final_state[0] - np.exp(-1.0))
    assert coarse / fine >= 12.0


def test_zero_noise_is_explicit_euler():
    system = scalar_system(lambda x, u, t: -2.0 * x + np.sin(t))
    euler = integrate_deterministic(system, [0.7], None, 2.0, 0.01, method="euler")
    noisy = integrate_stochastic(system, [0.7], None, NoiseSpec((0.0,), master_seed=4), 2.0, 0.01)
    np.testing.assert_array_equal(euler.states, noisy.states)
    assert noisy.method == "euler-maruyama"


def test_same_stream_same_trajectory():
    system = scalar_system(lambda x, u, t: -x)
    noise = NoiseSpec((0.3,), master_seed=8, stream_id=(2, 0, 1))
    one = integrate_stochastic(system, [1.0], None, noise, 1.0, 0.01)
    two = integrate_stochastic(system, [1.0], None, noise, 1.0, 0.01)
    np.testing.assert_array_equal(one.states, two.states)


def test_brownian_variance():
    q, t1, runs = 0.5, 1.0, 10_000
    system = scalar_system(lambda x, u, t: np.zeros_like(x))
    base = NoiseSpec((q,), master_seed=13)
    noises = [base.for_stream(r, 0, +1) for r in range(runs)]
    batch = integrate_batch(system, np.zeros((runs, 1)), None, t1, 0.01, noises=noises)
    final = batch.states[-1, :, 0]
    standard_error = q * t1 * np.sqrt(2.0 / (runs - 1))
    assert abs(final.var(ddof=1) - q * t1) < 3 * standard_error


def test_divergence_names_step_and_label():
    system = scalar_system(lambda x, u, t: x ** 3)
    with pytest.raises(IntegrationDivergedError) as info:
        integrate_batch(system, np.array([[0.0], [10.0]]), None, 5.0, 0.1, labels=["calm", "wild"])
    assert info.value.step > 0
    assert info.value.label == "wild"


def test_horizon_must_be_multiple_of_step():
    assert step_count(1.0, 0.1) == 10
    with pytest.raises(ConfigurationError):
        step_count(1.0, 0.3)


def test_zero_order_hold_and_constant_input():
    hold = ZeroOrderHold([0.0, 1.0, 2.0], [1.0, 5.0, -1.0])
    assert hold(0.5)[0] == 1.0
    assert hold(1.0)[0] == 5.0
    assert hold(10.0)[0] == -1.0
    assert constant_input(0.3, 2)(7.0).tolist() == [0.3, 0.3]
    with pytest.raises(ConfigurationError):
        ZeroOrderHold([1.0, 0.0], [0.0, 0.0])


def test_input_drives_state():
    system = DynamicalSystem(
        n_states=1, n_inputs=1, n_outputs=1,
        drift=lambda x, u, t: np.broadcast_to(u, x.shape).copy(),
        noise_map=np.eye(1),
        output_map=lambda window, t: window[-1],
    )
    hold = ZeroOrderHold([0.0, 0.5], [1.0, 0.0])
    traj = integrate_deterministic(system, [0.0], hold, 1.0, 0.01, method="euler")
    assert traj.final_state[0] == pytest.approx(0.5, abs=1e-9)


def test_windowed_output_map():
    system = DynamicalSystem(
        n_states=1, n_inputs=0, n_outputs=1,
        drift=lambda x, u, t: np.ones_like(x),
        noise_map=np.eye(1),
        output_map=lambda window, t: np.array([window[0, 0]]),
        output_delay=0.2,
    )
    traj = integrate_deterministic(system, [0.0], None, 1.0, 0.1)
    # output is the state 0.2 s earlier, clamped at the start
    assert traj.outputs[-1, 0] == pytest.approx(0.8)
    assert traj.outputs[1, 0] == pytest.approx(0.0)


def test_trajectory_frame_columns():
    traj = integrate_deterministic(scalar_system(lambda x, u, t: -x), [1.0], None, 0.5, 0.1)
    frame = traj.to_frame(["x"])
    assert list(frame.columns) == ["t", "x", "y1"]
    assert len(frame) == 6


def test_mismatched_noise_dimension():
    system = scalar_system(lambda x, u, t: -x)
    with pytest.raises(ConfigurationError):
        integrate_stochastic(system, [1.0], None, NoiseSpec((1.0, 1.0)), 1.0, 0.1)
