import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from vstcs.errors import DimensionError, DomainError, ParameterError
from vstcs.sensing import (
    estimate_ric, flux_check, generate_sensing_matrix, max_measurement_bound, read_matrix,
    write_matrix,
)
from vstcs.signals import make_dct_basis, make_identity_basis


def test_entries_are_zero_or_one_over_n():
    for seed in range(5):
        mat = generate_sensing_matrix(4, 4, 0.5, seed)
        assert set(np.unique(mat.phi)) <= {0.0, 0.25}


def test_one_by_one():
    vals = {float(generate_sensing_matrix(1, 1, 0.5, s).phi[0, 0]) for s in range(40)}
    assert vals == {0.0, 1.0}


def test_column_sums_and_nonzero_fraction():
    mat = generate_sensing_matrix(50, 100, 0.5, 7)
    assert mat.phi.sum(axis=0).max() <= 1.0
    fracs = [np.count_nonzero(generate_sensing_matrix(50, 100, 0.5, s).phi) / 5000 for s in range(100)]
    # binomial standard error of the pooled fraction over 100 * 5000 entries
    se = math.sqrt(0.25 / (100 * 5000))
    assert abs(np.mean(fracs) - 0.5) <= 3 * se


@settings(max_examples=30, deadline=None)
@given(n=st.integers(1, 40), m=st.integers(1, 60), p=st.floats(0.05, 0.95),
       seed=st.integers(0, 2**63))
def test_affine_identity(n, m, p, seed):
    mat = generate_sensing_matrix(n, m, p, seed)
    rebuilt = math.sqrt(p * (1 - p) / n) * mat.tilde + (1 - p) / n
    np.testing.assert_allclose(mat.phi, rebuilt, rtol=0, atol=1e-12)
    assert flux_check(mat).ok
    assert set(np.unique(mat.phi)) <= {0.0, 1.0 / n}


def test_half_gives_plus_minus_one():
    mat = generate_sensing_matrix(16, 30, 0.5, 1)
    np.testing.assert_allclose(np.abs(mat.tilde * 4.0), 1.0, rtol=0, atol=1e-15)
    assert mat.rip_guaranteed


def test_other_p_is_flagged(caplog):
    with caplog.at_level("WARNING"):
        mat = generate_sensing_matrix(5, 5, 0.3, 0)
    assert not mat.rip_guaranteed
    assert "outside" in caplog.text


@pytest.mark.parametrize("p", [0.0, 1.0, -0.2, 1.5])
def test_invalid_p(p):
    with pytest.raises(ParameterError):
        generate_sensing_matrix(4, 4, p, 0)


def test_deterministic():
    a = generate_sensing_matrix(20, 30, 0.5, 123)
    b = generate_sensing_matrix(20, 30, 0.5, 123)
    c = generate_sensing_matrix(20, 30, 0.5, 124)
    assert a.phi.tobytes() == b.phi.tobytes()
    assert a.phi.tobytes() != c.phi.tobytes()


def test_flux_check_cases():
    bad = np.full((3, 3), 0.1)
    bad[1, 1] = -0.1
    assert not flux_check(bad).ok
    full = np.full((4, 2), 0.25)
    rep = flux_check(full)
    assert rep.max_col_sum == 1.0 and rep.ok


def test_max_measurement_spike_and_zero():
    mat = generate_sensing_matrix(10, 20, 0.5, 2)
    x = np.zeros(20)
    assert max_measurement_bound(mat, x) == 0.0
    x[0] = 1e6
    assert max_measurement_bound(mat, x) <= 1e6 / 10
    with pytest.raises(DomainError):
        max_measurement_bound(mat, -x)


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 2**32), n=st.integers(1, 30), m=st.integers(1, 40),
       scale=st.floats(1e-3, 1e9))
def test_flux_bounds_on_random_signals(seed, n, m, scale):
    mat = generate_sensing_matrix(n, m, 0.5, seed)
    x = np.random.default_rng(seed).random(m) * scale
    total = x.sum()
    assert (mat.phi @ x).sum() <= total * (1 + 1e-12)
    assert (mat.phi @ x).max() <= total / n * (1 + 1e-12)


def test_tilde_norm_identity_for_equal_flux_pairs():
    n, m = 12, 20
    mat = generate_sensing_matrix(n, m, 0.5, 9)
    basis = make_dct_basis(m)
    gen = np.random.default_rng(0)
    for _ in range(50):
        x1, x2 = gen.random(m), gen.random(m)
        x2 *= x1.sum() / x2.sum()
        h = basis.matrix.T @ (x1 - x2)
        lhs = np.linalg.norm(mat.tilde @ basis.matrix @ h)
        rhs = 2 * math.sqrt(n) * np.linalg.norm(mat.phi @ basis.matrix @ h)
        assert lhs == pytest.approx(rhs, rel=1e-10, abs=1e-12)


def test_ric_isometry_is_zero():
    q, _ = np.linalg.qr(np.random.default_rng(1).standard_normal((10, 10)))
    est = estimate_ric(q, make_identity_basis(10), 2, mode="exhaustive")
    assert est.delta_lower < 1e-12
    assert est.supports_checked == math.comb(10, 4)


def _brute_ric(b, order):
    delta = 0.0
    for sup in itertools.combinations(range(b.shape[1]), order):
        sv = np.linalg.svd(b[:, sup], compute_uv=False)
        delta = max(delta, sv[0] ** 2 - 1, 1 - sv[-1] ** 2)
    return delta


def test_ric_exhaustive_matches_brute_force():
    mat = generate_sensing_matrix(8, 10, 0.5, 4)
    basis = make_dct_basis(10)
    est = estimate_ric(mat, basis, 2, mode="exhaustive", chunk=37)
    assert est.supports_checked == 210
    assert est.delta_lower == pytest.approx(_brute_ric(mat.tilde @ basis.matrix, 4), rel=1e-10)
    sampled = estimate_ric(mat, basis, 2, mode="sampled", budget=50, seed=3)
    assert sampled.delta_lower <= est.delta_lower + 1e-12
    assert sampled.method == "sampled" and sampled.supports_checked == 50


def test_ric_order_too_large():
    mat = generate_sensing_matrix(4, 10, 0.5, 0)
    with pytest.raises(ParameterError):
        estimate_ric(mat, make_dct_basis(10), 3)


def test_matrix_file_roundtrip(tmp_path):
    mat = generate_sensing_matrix(7, 11, 0.5, 99)
    path = tmp_path / "phi.txt"
    write_matrix(path, mat)
    back = read_matrix(path)
    assert back.phi.tobytes() == mat.phi.tobytes()
    assert back.tilde.tobytes() == mat.tilde.tobytes()
    assert (back.seed, back.p) == (mat.seed, mat.p)


def test_matrix_file_errors(tmp_path):
    path = tmp_path / "bad.txt"
    path.write_text("2 2 0.5 0\n0 1/3\n0 0\n")
    with pytest.raises(DomainError):
        read_matrix(path)
    path.write_text("2 3 0.5 0\n0 1/2\n0 0\n")
    with pytest.raises(DimensionError):
        read_matrix(path)
