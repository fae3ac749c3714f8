import math

import numpy as np
import pytest
from scipy import stats

from vstcs.errors import DomainError, ParameterError
from vstcs.noise import (
    MeasurementSet, NoiseModel, read_measurements_csv, sample_measurements, sample_poisson,
    saturation_reject, write_measurements_csv,
)
from vstcs.sensing import generate_sensing_matrix


def test_model_invariants():
    with pytest.raises(ParameterError):
        NoiseModel("poisson", sigma=1.0)
    with pytest.raises(ParameterError):
        NoiseModel.poisson_gaussian(-1.0)
    with pytest.raises(ParameterError):
        NoiseModel.poisson_gaussian(1.0, alpha=0.0)


def test_zero_rate():
    assert np.all(sample_poisson(np.zeros(1000), 0) == 0)


def test_mean_at_rate_four():
    y = sample_poisson(np.full(10**5, 4.0), 11)
    assert abs(y.mean() - 4.0) <= 3 * math.sqrt(4.0 / 1e5)


def test_dispersion_at_large_rate():
    y = sample_poisson(np.full(10**4, 2e6), 12)
    assert 0.97 <= y.var(ddof=1) / y.mean() <= 1.03


def test_supports_large_rates():
    y = sample_poisson(np.array([1e9 / 20]), 0)
    assert abs(y[0] - 5e7) < 10 * math.sqrt(5e7)


@pytest.mark.parametrize("bad", [[-1.0], [np.inf], [np.nan]])
def test_bad_rates(bad):
    with pytest.raises(DomainError):
        sample_poisson(np.array(bad), 0)


@pytest.mark.parametrize("lam", [0.1, 1.0, 10.0, 1e3, 1e6])
def test_first_four_central_moments(lam):
    n = 400_000
    y = sample_poisson(np.full(n, lam), int(lam * 10) + 1).astype(float)
    d = y - lam
    targets = {1: 0.0, 2: lam, 3: lam, 4: lam + 3 * lam * lam}
    for k, target in targets.items():
        if k == 1:
            est = d.mean()
            se = math.sqrt(lam / n)
        else:
            z = d**k
            est = z.mean()
            se = z.std() / math.sqrt(n)
        assert abs(est - target) <= 5 * se, (k, est, target, se)


def test_pure_poisson_measurements_are_counts():
    mat = generate_sensing_matrix(30, 40, 0.5, 0)
    x = np.random.default_rng(0).random(40) * 100
    ms = sample_measurements(mat, x, NoiseModel.poisson(), 5)
    assert np.all(ms.y >= 0) and np.all(ms.y == np.round(ms.y))
    np.testing.assert_allclose(ms.rates, mat.phi @ x)
    zero = sample_measurements(mat, np.zeros(40), NoiseModel.poisson(), 5)
    assert np.all(zero.y == 0)


def test_poisson_gaussian_variance():
    phi = np.ones((10**4, 1))
    ms = sample_measurements(phi, np.array([2000.0]), NoiseModel.poisson_gaussian(200.0), 3)
    assert ms.y.var(ddof=1) == pytest.approx(2000 + 200**2, rel=0.05)


def test_saturation_examples():
    ms = MeasurementSet(np.array([-5.0, 2.0]), np.array([1.0, 1.0]), NoiseModel.poisson(), 0)
    out = saturation_reject(ms, 0.375)
    assert out.rejected_indices == (0,)
    assert out.n_retained == 1 and list(out.retained) == [False, True]
    # recorded, not applied
    assert out.y.tolist() == [-5.0, 2.0]
    mat = generate_sensing_matrix(50, 50, 0.5, 0)
    pure = sample_measurements(mat, np.full(50, 3.0), NoiseModel.poisson(), 1)
    assert saturation_reject(pure, 0.375).rejected_indices == ()


def test_rejection_fraction_matches_gaussian_tail():
    sigma, rate = 200.0, 2000.0
    d = 0.375 + sigma**2
    phi = np.ones((10**6, 1))
    ms = sample_measurements(phi, np.array([rate]), NoiseModel.poisson_gaussian(sigma), 4)
    frac = len(saturation_reject(ms, d).rejected_indices) / 1e6
    assert frac < 1e-4
    # tail oracle: eta < -(gamma + d) is beyond 200 standard deviations
    assert stats.norm.sf((rate + d) / math.sqrt(rate + sigma**2)) < 1e-4


def test_measurements_deterministic():
    mat = generate_sensing_matrix(20, 20, 0.5, 0)
    x = np.full(20, 50.0)
    a = sample_measurements(mat, x, NoiseModel.poisson_gaussian(3.0), 8)
    b = sample_measurements(mat, x, NoiseModel.poisson_gaussian(3.0), 8)
    assert a.y.tobytes() == b.y.tobytes()


def test_csv_roundtrip(tmp_path):
    mat = generate_sensing_matrix(15, 20, 0.5, 0)
    ms = sample_measurements(mat, np.full(20, 0.5), NoiseModel.poisson_gaussian(2.0), 2)
    ms = saturation_reject(ms, 4.375)
    path = tmp_path / "y.csv"
    write_measurements_csv(path, ms)
    back = read_measurements_csv(path, ms.model)
    assert back.y.tobytes() == ms.y.tobytes()
    assert back.rates.tobytes() == ms.rates.tobytes()
    assert back.rejected_indices == ms.rejected_indices
    assert path.read_text().splitlines()[0] == "index,rate,y,rejected"
