"""Random binary flux-preserving sensing matrices.

A zero-mean matrix ``tilde`` with i.i.d. two-valued entries is built first;
the physical matrix ``phi`` is its affine image

    phi = sqrt(p (1 - p) / N) * tilde + (1 - p) / N

so that every entry of ``phi`` is exactly ``0`` or ``1/N``.  ``phi`` is
non-negative and each of its columns sums to at most one, which is what a
photon-counting device can realise.
"""

import itertools
import logging
import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from . import rng as _rng
from .errors import DimensionError, DomainError, ParameterError

log = logging.getLogger(__name__)

RIC_BUDGET = 10**6


def _frozen(a):
    a = np.ascontiguousarray(a, dtype=float)
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class SensingMatrix:
    n_rows: int
    n_cols: int
    p: float
    tilde: np.ndarray
    phi: np.ndarray
    seed: int

    @property
    def shape(self):
        return (self.n_rows, self.n_cols)

    @property
    def rip_guaranteed(self):
        """Only ``p = 1/2`` carries the random-binary RIP guarantee."""
        return self.p == 0.5


def _tilde_values(p, n_rows):
    lo = -math.sqrt((1.0 - p) / p) / math.sqrt(n_rows)
    hi = math.sqrt(p / (1.0 - p)) / math.sqrt(n_rows)
    return lo, hi


def _from_zero_mask(zero, p, seed):
    n_rows, n_cols = zero.shape
    lo, hi = _tilde_values(p, n_rows)
    tilde = np.where(zero, lo, hi)
    phi = np.where(zero, 0.0, 1.0 / n_rows)
    return SensingMatrix(n_rows, n_cols, float(p), _frozen(tilde), _frozen(phi), int(seed))


def generate_sensing_matrix(n_rows, n_cols, p=0.5, seed=0):
    """Draw an ``n_rows x n_cols`` sensing matrix.

    Parameters
    ----------
    n_rows, n_cols : int
        Number of measurements ``N`` and signal length ``m``.
    p : float
        Probability that an entry of ``phi`` is zero.
    seed : int
        64-bit seed; identical seeds give bit-identical matrices.

    Returns
    -------
    SensingMatrix
    """
    if int(n_rows) < 1 or int(n_cols) < 1:
        raise ParameterError(f"matrix dimensions must be positive, got {n_rows}x{n_cols}")
    if not 0.0 < p < 1.0:
        raise ParameterError(f"p must lie in (0, 1), got {p}")
    if p != 0.5:
        log.warning("p=%g is outside the p=1/2 regime covered by the RIP argument", p)
    gen = _rng.make_rng(seed, _rng.SENSING)
    zero = gen.random((int(n_rows), int(n_cols))) < p
    return _from_zero_mask(zero, p, seed)


@dataclass(frozen=True)
class FluxReport:
    max_col_sum: float
    min_entry: float
    ok: bool


def _phi_array(matrix):
    if isinstance(matrix, SensingMatrix):
        return matrix.phi
    return np.asarray(matrix, dtype=float)


def flux_check(matrix):
    """Check non-negativity and that no column sums above one."""
    phi = _phi_array(matrix)
    max_col_sum = float(phi.sum(axis=0).max())
    min_entry = float(phi.min())
    return FluxReport(max_col_sum, min_entry, bool(min_entry >= 0 and max_col_sum <= 1 + 1e-12))


def max_measurement_bound(matrix, x):
    """Largest noise-free measurement ``max_i (phi x)_i``.

    For a flux-preserving binary matrix this never exceeds ``||x||_1 / N``;
    the bound is asserted.
    """
    phi = _phi_array(matrix)
    x = np.asarray(x, dtype=float)
    if np.any(x < 0):
        raise DomainError("x must be non-negative")
    if x.shape != (phi.shape[1],):
        raise DimensionError(f"x has shape {x.shape}, expected ({phi.shape[1]},)")
    top = float((phi @ x).max()) if x.size else 0.0
    limit = x.sum() / phi.shape[0]
    assert top <= limit + 1e-12 * max(1.0, limit), (top, limit)
    return top


@dataclass(frozen=True)
class RicEstimate:
    order: int
    delta_lower: float
    method: str
    supports_checked: int


def _support_deltas(gram, supports):
    sub = gram[supports[:, :, None], supports[:, None, :]]
    ev = np.linalg.eigvalsh(sub)
    return np.maximum(ev[:, -1] - 1.0, 1.0 - ev[:, 0])


def estimate_ric(matrix, basis, s, mode="auto", budget=RIC_BUDGET, seed=0, chunk=20000):
    """Restricted isometry constant of order ``2s`` for ``tilde @ basis``.

    ``mode='exhaustive'`` visits every support and returns the exact
    constant; ``mode='sampled'`` visits ``budget`` random supports and
    returns a lower bound.  ``mode='auto'`` is exhaustive whenever the
    number of supports fits in ``budget``.
    """
    tilde = matrix.tilde if isinstance(matrix, SensingMatrix) else np.asarray(matrix, float)
    psi = basis.matrix if hasattr(basis, "matrix") else np.asarray(basis, float)
    n_rows, n_cols = tilde.shape
    order = 2 * int(s)
    if s < 1 or order > min(n_rows, n_cols):
        raise ParameterError(f"order 2s={order} exceeds min(N, m)={min(n_rows, n_cols)}")
    total = math.comb(n_cols, order)
    if mode == "auto":
        mode = "exhaustive" if total <= budget else "sampled"
    b = tilde @ psi
    gram = b.T @ b
    delta = 0.0
    if mode == "exhaustive":
        if total > budget:
            raise ParameterError(f"C({n_cols},{order})={total} supports exceed budget {budget}")
        combos = itertools.combinations(range(n_cols), order)
        checked = 0
        while True:
            block = np.array(list(itertools.islice(combos, chunk)), dtype=np.intp)
            if block.size == 0:
                break
            delta = max(delta, float(_support_deltas(gram, block).max()))
            checked += len(block)
        return RicEstimate(order, delta, "exhaustive", checked)
    if mode != "sampled":
        raise ParameterError(f"unknown mode {mode!r}")
    gen = _rng.make_rng(seed, _rng.RIC)
    checked = 0
    while checked < budget:
        n = min(chunk, budget - checked)
        block = np.argsort(gen.random((n, n_cols)), axis=1)[:, :order]
        delta = max(delta, float(_support_deltas(gram, block).max()))
        checked += n
    return RicEstimate(order, delta, "sampled", checked)


def rip_probability_expression(n_rows, delta_2s):
    """The printed success probability ``1 - 2 exp(-N c(1 + delta))``.

    ``c(h) = h^2/4 - h^3/6``.  Reported for reference only; it is not used
    by any check.
    """
    h = 1.0 + delta_2s
    return 1.0 - 2.0 * math.exp(-n_rows * (h * h / 4.0 - h**3 / 6.0))


# -- file format -----------------------------------------------------------
# header "N m p seed", then one line per row of phi with tokens "0" or "1/N".


def write_matrix(path, matrix):
    n = matrix.n_rows
    one = f"1/{n}"
    with open(path, "w") as fh:
        fh.write(f"{matrix.n_rows} {matrix.n_cols} {matrix.p!r} {matrix.seed}\n")
        for row in matrix.phi:
            fh.write(" ".join(one if v else "0" for v in row))
            fh.write("\n")


def read_matrix(path):
    with open(path) as fh:
        header = fh.readline().split()
        if len(header) != 4:
            raise DimensionError(f"{path}: bad header {header!r}")
        n_rows, n_cols, p, seed = int(header[0]), int(header[1]), float(header[2]), int(header[3])
        rows = [line.split() for line in fh if line.strip()]
    if len(rows) != n_rows or any(len(r) != n_cols for r in rows):
        raise DimensionError(f"{path}: body does not match header {n_rows}x{n_cols}")
    one = Fraction(1, n_rows)
    zero = np.empty((n_rows, n_cols), dtype=bool)
    for i, r in enumerate(rows):
        for j, tok in enumerate(r):
            v = Fraction(tok)
            if v == 0:
                zero[i, j] = True
            elif v == one:
                zero[i, j] = False
            else:
                raise DomainError(f"{path}: entry ({i},{j})={tok} is neither 0 nor 1/{n_rows}")
    return _from_zero_mask(zero, p, seed)
