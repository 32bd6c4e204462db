"""
Noise streams: reproducible, order independent, correct variances.
Run: python -m pytest tests/test_noise.py -v
"""
import os
import sys

import numpy as np
import pytest

# Project root on path
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from core.errors import ConfigurationError
from core.noise import NoiseSpec, sample_noise


def test_zero_covariance_gives_zero_draws():
    draws = sample_noise(NoiseSpec((0.0, 0.0), master_seed=7), 50)
    assert draws.shape == (50, 2)
    assert np.all(draws == 0.0)


def test_channel_variances():
    draws = sample_noise(NoiseSpec((1.0, 1e-4), master_seed=3), 1_000_000)
    var = draws.var(axis=0)
    assert var[0] == pytest.approx(1.0, rel=0.01)
    assert var[1] == pytest.approx(1e-4, rel=0.01)
    assert np.abs(draws.mean(axis=0)).max() < 5e-3


def test_same_stream_is_reproducible():
    spec = NoiseSpec((0.5,), master_seed=11).for_stream(4, 2, -1)
    np.testing.assert_array_equal(sample_noise(spec, 1000), sample_noise(spec, 1000))


def test_stream_does_not_depend_on_draw_order():
    base = NoiseSpec((1.0,), master_seed=5)
    a, b = base.for_stream(0, 1, +1), base.for_stream(0, 1, -1)
    first_a = sample_noise(a, 200)
    sample_noise(b, 10_000)
    np.testing.assert_array_equal(first_a, sample_noise(a, 200))


def test_distinct_streams_are_uncorrelated():
    base = NoiseSpec((1.0,), master_seed=2024)
    a = sample_noise(base.for_stream(0, 0, +1), 400_000)[:, 0]
    b = sample_noise(base.for_stream(0, 0, -1), 400_000)[:, 0]
    c = sample_noise(base.for_stream(1, 0, +1), 400_000)[:, 0]
    assert abs(np.corrcoef(a, b)[0, 1]) < 0.01
    assert abs(np.corrcoef(a, c)[0, 1]) < 0.01


def test_seed_changes_the_draws():
    one = sample_noise(NoiseSpec((1.0,), master_seed=1), 100)
    two = sample_noise(NoiseSpec((1.0,), master_seed=2), 100)
    assert not np.array_equal(one, two)


def test_invalid_specs_rejected():
    with pytest.raises(ConfigurationError):
        NoiseSpec((-1.0,))
    with pytest.raises(ConfigurationError):
        NoiseSpec((1.0,)).for_stream(0, 0, 0)
    with pytest.raises(ConfigurationError):
        sample_noise(NoiseSpec((1.0,)), 0)


def test_scaled_keeps_stream():
    spec = NoiseSpec((0.05, 0.05), master_seed=9, stream_id=(3, 1, 0))
    scaled = spec.scaled(20.0)
    assert scaled.q_diag == pytest.approx((1.0, 1.0))
    assert scaled.stream_id == spec.stream_id
    assert scaled.to_dict()["master_seed"] == 9
