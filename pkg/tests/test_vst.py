import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from vstcs.errors import DomainError, ParameterError
from vstcs.noise import NoiseModel
from vstcs.sensing import generate_sensing_matrix
from vstcs.signals import generate_uniform_signal
from vstcs.vst import (
    VstSpec, apply_vst, ks_test, residual_magnitude, residual_statistics, spec_for_model,
)


def test_apply_examples():
    assert apply_vst([0.0], VstSpec.anscombe())[0] == pytest.approx(0.61237, abs=1e-5)
    assert apply_vst([1.0], VstSpec.freeman_tukey())[0] == pytest.approx(2.41421, abs=1e-5)
    y = np.linspace(0, 50, 101)
    np.testing.assert_array_equal(apply_vst(y, VstSpec.gat(0.0)), apply_vst(y, VstSpec.anscombe()))


def test_gat_formula():
    spec = VstSpec.gat(3.0, alpha=2.0, g=1.0)
    y = np.array([0.0, 5.0, 100.0])
    want = np.sqrt(2 * y + 0.375 * 4 + 9 - 2) / 2
    np.testing.assert_allclose(apply_vst(y, spec), want, rtol=1e-15)
    assert spec.d == 9.375 and VstSpec.gat(3.0).offset == 9.375


def test_spec_invariants():
    with pytest.raises(ParameterError):
        VstSpec("bartlett", 0.375)
    with pytest.raises(ParameterError):
        VstSpec("anscombe", 0.0)
    with pytest.raises(ParameterError):
        VstSpec("anscombe", -1.0)
    assert VstSpec.bartlett().c == 0.0
    assert spec_for_model(NoiseModel.poisson_gaussian(5.0)).d == pytest.approx(25.375)


def test_domain_error_names_index():
    with pytest.raises(DomainError, match="index 2"):
        apply_vst([1.0, 0.0, -1.0], VstSpec.anscombe())


def test_residual_examples():
    r = np.array([3.0, 7.0])
    assert residual_magnitude(r, r, VstSpec.anscombe()) == 0.0
    assert residual_magnitude([1, 1], [0, 0], VstSpec.bartlett()) == pytest.approx(math.sqrt(2))
    keep = np.array([True, False])
    assert residual_magnitude([1, 100], [1, 0], VstSpec.anscombe(), keep) == 0.0


@settings(max_examples=100, deadline=None)
@given(a=st.floats(-0.375, 1e9), b=st.floats(-0.375, 1e9))
def test_monotone(a, b):
    if a == b:
        return
    lo, hi = sorted((a, b))
    t = apply_vst([lo, hi], VstSpec.anscombe())
    assert t[0] < t[1] or hi - lo < 1e-12 * max(1, hi)


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**32))
def test_zero_residual_iff_equal(seed):
    gen = np.random.default_rng(seed)
    rates = gen.random(10) * 50
    assert residual_magnitude(rates, rates, VstSpec.anscombe()) == 0.0
    y = rates.copy()
    y[gen.integers(10)] += 1.0
    assert residual_magnitude(y, rates, VstSpec.anscombe()) > 0.0


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**32), scale=st.floats(1e-2, 1e6))
def test_r_squared_midpoint_convex(seed, scale):
    gen = np.random.default_rng(seed)
    phi = generate_sensing_matrix(12, 20, 0.5, seed).phi
    y = gen.poisson(scale, 12).astype(float)
    x1, x2 = gen.random(20) * scale, gen.random(20) * scale
    spec = VstSpec.anscombe()

    def r2(x):
        return residual_magnitude(y, phi @ x, spec) ** 2

    assert r2(0.5 * (x1 + x2)) <= 0.5 * (r2(x1) + r2(x2)) + 1e-9 * max(1.0, r2(x1), r2(x2))


def test_ks_quantile_sample():
    n = 500
    q = stats.norm.ppf((np.arange(1, n + 1) - 0.5) / n)
    assert ks_test(q, 0.0, 1.0).statistic <= 0.5 / n + 1e-12


def test_ks_calibration():
    gen = np.random.default_rng(42)
    rejections = sum(ks_test(gen.standard_normal(2000), 0.0, 1.0).reject_1pct for _ in range(100))
    assert rejections <= 2


def test_ks_detects_uniform():
    u = np.random.default_rng(1).random(2000)
    assert ks_test(u, u.mean(), u.var(ddof=1)).reject_1pct


def test_ks_preconditions():
    with pytest.raises(ParameterError):
        ks_test(np.zeros(5), 0, 1)
    with pytest.raises(DomainError):
        ks_test(np.zeros(20), 0, 0)


def test_residual_statistics_poisson():
    mat = generate_sensing_matrix(500, 1000, 0.5, 0)
    x = generate_uniform_signal(1000, 1e3, 0)
    st_ = residual_statistics(mat, x, NoiseModel.poisson(), VstSpec.anscombe(), 2000, 1)
    assert st_.mean <= math.sqrt(500 / 2) * (1 + 3 / math.sqrt(2000))
    assert 0 <= st_.variance <= 0.5
    assert 0 <= st_.ks_statistic <= 1


def test_residual_statistics_poisson_gaussian():
    mat = generate_sensing_matrix(50, 1000, 0.5, 0)
    x = generate_uniform_signal(1000, 1e3, 0)
    model = NoiseModel.poisson_gaussian(200.0)
    st_ = residual_statistics(mat, x, model, spec_for_model(model), 2000, 2)
    assert st_.variance <= 1.0


def test_residual_statistics_large_rates():
    mat = generate_sensing_matrix(20, 50, 0.5, 0)
    x = generate_uniform_signal(50, 1e12, 0)
    st_ = residual_statistics(mat, x, NoiseModel.poisson(), VstSpec.anscombe(), 400, 0)
    assert st_.mean / math.sqrt(20) <= 1 / math.sqrt(2)
    assert st_.variance < 0.5


def test_residual_statistics_deterministic():
    mat = generate_sensing_matrix(20, 50, 0.5, 0)
    x = generate_uniform_signal(50, 1e3, 0)
    a = residual_statistics(mat, x, NoiseModel.poisson(), VstSpec.anscombe(), 50, 9, keep_samples=True)
    b = residual_statistics(mat, x, NoiseModel.poisson(), VstSpec.anscombe(), 50, 9, keep_samples=True)
    assert a.samples.tobytes() == b.samples.tobytes()
    with pytest.raises(ParameterError):
        residual_statistics(mat, x, NoiseModel.poisson(), VstSpec.anscombe(), 1, 0)
