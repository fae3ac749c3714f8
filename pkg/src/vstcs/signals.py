"""Orthonormal bases, synthetic sparse signals and image patches."""

from dataclasses import dataclass, field

import numpy as np
from scipy.fft import dct

from . import rng as _rng
from .errors import DimensionError, DomainError, ParameterError


@dataclass(frozen=True, eq=False)
class OrthoBasis:
    """An ``m x m`` orthonormal basis; columns are the basis vectors."""

    dim: int
    matrix: np.ndarray
    kind: str
    patch_side: int = None

    @property
    def has_dc(self):
        return self.kind in ("dct1d", "dct2d")


def _frozen(a):
    a = np.ascontiguousarray(a, dtype=float)
    a.flags.writeable = False
    return a


def _dct_matrix(m):
    # row k of the orthonormal DCT-II operator is the k-th basis vector
    return dct(np.eye(m), norm="ortho", axis=0).T


def make_dct_basis(m):
    """Orthonormal 1-D DCT-II basis; column 0 is the constant ``1/sqrt(m)``."""
    if int(m) < 1:
        raise ParameterError(f"basis dimension must be positive, got {m}")
    return OrthoBasis(int(m), _frozen(_dct_matrix(int(m))), "dct1d")


def make_dct2_basis(patch_side):
    """2-D DCT basis for row-major vectorised ``patch_side x patch_side`` patches."""
    if int(patch_side) < 1:
        raise ParameterError(f"patch side must be positive, got {patch_side}")
    d = _dct_matrix(int(patch_side))
    return OrthoBasis(int(patch_side) ** 2, _frozen(np.kron(d, d)), "dct2d", int(patch_side))


def make_identity_basis(m):
    return OrthoBasis(int(m), _frozen(np.eye(int(m))), "identity")


@dataclass(frozen=True, eq=False)
class SparseSignal:
    x: np.ndarray
    theta: np.ndarray
    support: tuple
    s: int
    intensity: float
    seed: int = None
    extra: dict = field(default_factory=dict)

    @property
    def effective_l0(self):
        return int(np.count_nonzero(self.theta))


def generate_sparse_signal(m, s, intensity, basis, seed):
    """Non-negative signal that is ``s``-sparse (plus DC) in ``basis``.

    ``s`` non-DC coefficients are chosen uniformly at random and filled with
    ``Unif[0, 1]`` values.  The DC coefficient is then set to the smallest
    value that makes ``min(x) = 0``, and the result is scaled so that
    ``||x||_1 == intensity``.
    """
    m, s = int(m), int(s)
    if basis.dim != m:
        raise DimensionError(f"basis has dimension {basis.dim}, expected {m}")
    if not basis.has_dc:
        raise ParameterError("sparse signal generation needs a basis with a constant column 0")
    if s < 1 or s > m - 1:
        raise ParameterError(f"s must lie in [1, m-1]={1, m - 1} (DC is reserved), got {s}")
    if not intensity > 0:
        raise ParameterError(f"intensity must be positive, got {intensity}")
    gen = _rng.make_rng(seed, _rng.SIGNAL)
    support = np.sort(gen.choice(np.arange(1, m), size=s, replace=False))
    theta = np.zeros(m)
    theta[support] = gen.random(s)
    xs = basis.matrix[:, support] @ theta[support]
    lo = xs.min()
    theta[0] = -lo * np.sqrt(m)  # DC column is constant 1/sqrt(m)
    x = xs - lo
    scale = intensity / x.sum()
    x *= scale
    theta *= scale
    return SparseSignal(x, theta, tuple(int(i) for i in support), s, float(intensity), seed)


def generate_uniform_signal(m, intensity, seed):
    """Dense ``Unif[0, 1]`` signal scaled to ``||x||_1 == intensity``."""
    gen = _rng.make_rng(seed, _rng.SIGNAL)
    x = gen.random(int(m))
    return x * (intensity / x.sum())


# -- patches ---------------------------------------------------------------


def _corners(shape, patch_side, stride):
    h, w = shape
    if patch_side < 1 or stride < 1:
        raise ParameterError("patch_side and stride must be >= 1")
    if patch_side > h or patch_side > w:
        raise ParameterError(f"patch {patch_side} larger than image {h}x{w}")
    rows = range(0, h - patch_side + 1, stride)
    cols = range(0, w - patch_side + 1, stride)
    return [(r, c) for r in rows for c in cols]


def extract_patches(image, patch_side, stride):
    """Row-major list of vectorised patches; partial patches at borders are dropped."""
    image = np.asarray(image, dtype=float)
    corners = _corners(image.shape, int(patch_side), int(stride))
    p = int(patch_side)
    out = np.empty((len(corners), p * p))
    for k, (r, c) in enumerate(corners):
        out[k] = image[r : r + p, c : c + p].ravel()
    return out


def assemble_patches(patches, image_shape, patch_side, stride):
    """Average overlapping patch copies back into an image.

    Pixels covered by no patch (possible only when the stride does not tile
    the image) are set to zero.
    """
    p = int(patch_side)
    corners = _corners(tuple(image_shape), p, int(stride))
    patches = np.asarray(patches, dtype=float)
    if patches.shape != (len(corners), p * p):
        raise DimensionError(
            f"expected {len(corners)} patches of length {p * p}, got {patches.shape}"
        )
    acc = np.zeros(image_shape)
    cnt = np.zeros(image_shape)
    for k, (r, c) in enumerate(corners):
        acc[r : r + p, c : c + p] += patches[k].reshape(p, p)
        cnt[r : r + p, c : c + p] += 1
    return np.divide(acc, cnt, out=np.zeros_like(acc), where=cnt > 0)


# -- file formats ----------------------------------------------------------


def read_pgm(path):
    """Read a binary (P5) PGM with 8- or 16-bit samples."""
    with open(path, "rb") as fh:
        data = fh.read()
    tokens = []
    pos = 0
    while len(tokens) < 4:
        while data[pos : pos + 1].isspace():
            pos += 1
        if data[pos : pos + 1] == b"#":
            while data[pos : pos + 1] not in (b"\n", b""):
                pos += 1
            continue
        start = pos
        while not data[pos : pos + 1].isspace():
            pos += 1
        tokens.append(data[start:pos])
    pos += 1
    if tokens[0] != b"P5":
        raise DomainError(f"{path}: not a binary PGM (magic {tokens[0]!r})")
    w, h, maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
    dtype = np.dtype(">u2") if maxval > 255 else np.uint8
    pix = np.frombuffer(data, dtype=dtype, count=w * h, offset=pos)
    return pix.reshape(h, w).astype(float)


def write_pgm(path, image, maxval=None):
    """Write ``image`` as a binary PGM; values are rounded and clipped.

    With ``maxval=None`` the image is rescaled to the full 16-bit range.
    """
    image = np.asarray(image, dtype=float)
    if maxval is None:
        maxval = 65535
        top = image.max()
        image = image * (maxval / top) if top > 0 else image
    pix = np.clip(np.rint(image), 0, maxval)
    dtype = np.dtype(">u2") if maxval > 255 else np.uint8
    h, w = image.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n{maxval}\n".encode())
        fh.write(pix.astype(dtype).tobytes())


def write_signal_csv(path, x):
    np.savetxt(path, np.asarray(x, dtype=float), fmt="%.17g")


def read_signal_csv(path):
    return np.atleast_1d(np.loadtxt(path, dtype=float, ndmin=1))
