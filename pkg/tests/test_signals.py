import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.fft import dctn, idct

from vstcs.errors import DimensionError, ParameterError
from vstcs.signals import (
    assemble_patches, extract_patches, generate_sparse_signal, generate_uniform_signal,
    make_dct2_basis, make_dct_basis, make_identity_basis, read_pgm, read_signal_csv,
    write_pgm, write_signal_csv,
)


def test_dct_small_cases():
    np.testing.assert_allclose(make_dct_basis(1).matrix, [[1.0]], atol=1e-15)
    np.testing.assert_allclose(make_dct_basis(4).matrix[:, 0], 0.5, atol=1e-15)


@pytest.mark.parametrize("m", [2, 8, 33, 100])
def test_dct_orthonormal_and_matches_inverse_transform(m):
    psi = make_dct_basis(m).matrix
    np.testing.assert_allclose(psi.T @ psi, np.eye(m), atol=1e-12)
    # column k is the inverse DCT of the k-th unit coefficient vector
    np.testing.assert_allclose(psi, idct(np.eye(m), norm="ortho", axis=0), atol=1e-12)


def test_dct2_is_kronecker_and_matches_2d_transform():
    b = make_dct2_basis(8)
    assert b.dim == 64 and b.patch_side == 8
    np.testing.assert_allclose(b.matrix.T @ b.matrix, np.eye(64), atol=1e-12)
    patch = np.random.default_rng(0).random((8, 8))
    np.testing.assert_allclose(b.matrix.T @ patch.ravel(), dctn(patch, norm="ortho").ravel(), atol=1e-12)


def test_identity_basis_has_no_dc():
    assert not make_identity_basis(5).has_dc
    with pytest.raises(ParameterError):
        generate_sparse_signal(5, 1, 10.0, make_identity_basis(5), 0)


def test_sparse_signal_examples():
    basis = make_dct_basis(100)
    sig = generate_sparse_signal(100, 10, 1e8, basis, 3)
    coef = basis.matrix.T @ sig.x
    # round-off in the transform leaves ~1e-16 relative residue off the support
    assert np.count_nonzero(np.abs(coef) > 1e-10 * np.abs(coef).max()) <= 11
    assert sig.effective_l0 <= 11
    one = generate_sparse_signal(100, 1, 5.0, basis, 0)
    assert one.x.min() >= 0 and one.x.sum() == pytest.approx(5.0, rel=1e-12)


@pytest.mark.parametrize("s", [0, 100, 150])
def test_sparse_signal_bad_s(s):
    with pytest.raises(ParameterError):
        generate_sparse_signal(100, s, 1.0, make_dct_basis(100), 0)


def test_sparse_signal_dimension_mismatch():
    with pytest.raises(DimensionError):
        generate_sparse_signal(10, 2, 1.0, make_dct_basis(12), 0)


def test_thousand_seeds():
    basis = make_dct_basis(64)
    for seed in range(1000):
        sig = generate_sparse_signal(64, 6, 1e5, basis, seed)
        assert sig.x.min() >= -1e-12 * 1e5
        assert abs(sig.x.sum() - 1e5) / 1e5 < 1e-12


@settings(max_examples=60, deadline=None)
@given(m=st.integers(2, 80), frac=st.floats(0, 1), intensity=st.floats(1e-3, 1e12),
       seed=st.integers(0, 2**63))
def test_sparse_signal_invariants(m, frac, intensity, seed):
    s = 1 + int(frac * (m - 2))
    basis = make_dct_basis(m)
    sig = generate_sparse_signal(m, s, intensity, basis, seed)
    assert sig.x.min() >= -1e-12 * intensity
    assert abs(sig.x.sum() - intensity) <= 1e-9 * intensity
    np.testing.assert_allclose(basis.matrix @ sig.theta, sig.x, rtol=0,
                               atol=1e-10 * np.abs(sig.x).max())
    np.testing.assert_allclose(basis.matrix.T @ sig.x, sig.theta, rtol=0,
                               atol=1e-10 * np.abs(sig.theta).max())
    assert len(sig.support) == s and 0 not in sig.support
    again = generate_sparse_signal(m, s, intensity, basis, seed)
    assert again.x.tobytes() == sig.x.tobytes()


def test_uniform_signal():
    x = generate_uniform_signal(1000, 1e3, 5)
    assert x.min() > 0 and x.sum() == pytest.approx(1e3, rel=1e-12)


def test_patch_counts():
    assert extract_patches(np.zeros((256, 256)), 8, 8).shape == (1024, 64)
    img = np.arange(64.0).reshape(8, 8)
    np.testing.assert_array_equal(extract_patches(img, 8, 8), [img.ravel()])
    assert extract_patches(np.zeros((9, 9)), 8, 1).shape == (4, 64)
    with pytest.raises(ParameterError):
        extract_patches(np.zeros((4, 4)), 8, 8)


def test_assemble_inverts_extract():
    img = np.random.default_rng(2).random((24, 16))
    for stride in (8, 1, 3):
        back = assemble_patches(extract_patches(img, 8, stride), img.shape, 8, stride)
        if stride == 3:
            # corners at 0, 3, ..., leave the last rows/cols of a 16-wide image covered
            cover = assemble_patches(np.ones((len(extract_patches(img, 8, 3)), 64)), img.shape, 8, 3)
            np.testing.assert_allclose(back[cover > 0], img[cover > 0], atol=1e-12)
        else:
            np.testing.assert_allclose(back, img, atol=1e-12)


def test_assemble_constant():
    out = assemble_patches(np.full((9, 16), 3.5), (6, 6), 4, 1)
    np.testing.assert_allclose(out, 3.5)
    with pytest.raises(DimensionError):
        assemble_patches(np.ones((3, 16)), (6, 6), 4, 1)


def test_pgm_roundtrip(tmp_path):
    img8 = np.random.default_rng(0).integers(0, 256, (5, 7)).astype(float)
    write_pgm(tmp_path / "a.pgm", img8, maxval=255)
    np.testing.assert_array_equal(read_pgm(tmp_path / "a.pgm"), img8)
    img16 = np.random.default_rng(1).integers(0, 65536, (6, 3)).astype(float)
    write_pgm(tmp_path / "b.pgm", img16, maxval=65535)
    np.testing.assert_array_equal(read_pgm(tmp_path / "b.pgm"), img16)
    # comments in the header are skipped
    raw = (tmp_path / "a.pgm").read_bytes().replace(b"P5\n", b"P5\n# note\n", 1)
    (tmp_path / "c.pgm").write_bytes(raw)
    np.testing.assert_array_equal(read_pgm(tmp_path / "c.pgm"), img8)


def test_signal_csv_roundtrip(tmp_path):
    x = np.random.default_rng(3).random(17) * 1e7
    write_signal_csv(tmp_path / "x.csv", x)
    assert read_signal_csv(tmp_path / "x.csv").tobytes() == x.tobytes()
