"""
Strain encoder: kernel anchors, projection, activation, causality.
Run: python -m pytest tests/test_neural_encoder.py -v
"""
import os
import sys

import numpy as np
import pytest

# Project root on path
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from core.errors import ConfigurationError, EncoderNotReady
from core.neural_encoder import (EncoderParams, encode, filter_stimulus, nla, normalization,
                                 project_stimulus, sta_kernel)

DT = 5e-4


def test_kernel_samples_and_peak():
    params = EncoderParams()
    kernel = sta_kernel(params, DT)
    assert len(kernel) == 81
    assert kernel[10] == pytest.approx(1.0, abs=1e-12)
    assert kernel[18] == pytest.approx(np.cos(-4.0) * np.exp(-1.0), abs=1e-9)
    assert kernel[18] == pytest.approx(-0.2405, abs=1e-4)
    assert np.argmax(kernel) == 10


def test_wide_kernel_is_pure_cosine():
    params = EncoderParams(b=1e9)
    tau = DT * np.arange(81)
    np.testing.assert_allclose(sta_kernel(params, DT), np.cos(1000.0 * (-tau + 5e-3)), atol=1e-12)


def test_projection():
    params = EncoderParams()
    kernel = sta_kernel(params, DT)
    C_xi = normalization(params, kernel, DT)
    assert C_xi == pytest.approx(np.sum(kernel ** 2) * DT)
    assert project_stimulus(np.zeros(81), kernel, C_xi, DT) == 0.0
    # a history whose most recent sample lines up with kernel lag 0
    assert project_stimulus(kernel[::-1], kernel, C_xi, DT) == pytest.approx(1.0, rel=1e-12)

    rng = np.random.default_rng(0)
    s1, s2 = rng.standard_normal(81), rng.standard_normal(81)
    lhs = project_stimulus(2.5 * s1 + s2, kernel, C_xi, DT)
    rhs = 2.5 * project_stimulus(s1, kernel, C_xi, DT) + project_stimulus(s2, kernel, C_xi, DT)
    assert lhs == pytest.approx(rhs, abs=1e-12)


def test_projection_needs_a_full_window():
    kernel = sta_kernel(EncoderParams(), DT)
    with pytest.raises(EncoderNotReady) as info:
        project_stimulus(np.zeros(40), kernel, 1.0, DT)
    assert info.value.need == 81


def test_activation_anchors():
    params = EncoderParams()
    assert nla(params.d, params) == 0.5
    assert nla(1.0, params) == pytest.approx(0.9933071, abs=1e-6)
    assert nla(-1e6, params) == pytest.approx(0.0, abs=1e-12)
    assert nla(1e6, params) == pytest.approx(1.0)
    values = nla(np.linspace(-3, 3, 101), params)
    assert np.all(np.diff(values) > 0)
    assert np.all((values > 0) & (values < 1))


def test_zero_strain_encoding():
    response = encode(np.zeros(200), EncoderParams(), DT)
    assert not response.ready[:80].any()
    assert response.ready[80:].all()
    assert np.all(np.isnan(response.p_fire[:80]))
    np.testing.assert_allclose(response.p_fire[80:], 1.0 / (1.0 + np.exp(5.0)), rtol=1e-6)


def test_encoding_is_causal():
    params = EncoderParams()
    rng = np.random.default_rng(11)
    base = 1e-3 * rng.standard_normal(400)
    reference = encode(base, params, DT).p_fire
    for _ in range(100):
        k = int(rng.integers(80, 400))
        mutated = base.copy()
        before, after = np.arange(0, k - 80), np.arange(k + 1, 400)
        mutated[before] = rng.standard_normal(len(before))
        mutated[after] = rng.standard_normal(len(after))
        assert encode(mutated, params, DT).p_fire[k] == reference[k]


def test_filter_matches_pointwise_projection():
    params = EncoderParams()
    kernel = sta_kernel(params, DT)
    C_xi = normalization(params, kernel, DT)
    series = np.sin(np.linspace(0.0, 20.0, 300))
    xi = filter_stimulus(series, params, DT)
    for k in (80, 150, 299):
        assert xi[k] == pytest.approx(project_stimulus(series[:k + 1], kernel, C_xi, DT), rel=1e-10, abs=1e-14)


def test_filter_works_on_trailing_axes():
    params = EncoderParams()
    rng = np.random.default_rng(5)
    stack = rng.standard_normal((200, 3, 2))
    xi = filter_stimulus(stack, params, DT)
    assert xi.shape == stack.shape
    np.testing.assert_allclose(xi[:, 1, 0], filter_stimulus(stack[:, 1, 0], params, DT), equal_nan=True)


def test_larger_normalisation_shrinks_xi():
    rng = np.random.default_rng(6)
    series = rng.standard_normal(120)
    base = EncoderParams(C_xi=1.0)
    doubled = EncoderParams(C_xi=2.0)
    np.testing.assert_allclose(filter_stimulus(series, doubled, DT)[80:],
                               0.5 * filter_stimulus(series, base, DT)[80:], rtol=1e-12)


def test_invalid_parameters():
    with pytest.raises(ConfigurationError):
        EncoderParams(b=0.0)
    with pytest.raises(ConfigurationError):
        EncoderParams(C_xi=-1.0)
