"""Variance-stabilising transforms and residual-magnitude statistics.

The residual magnitude of a measurement vector ``y`` with noise-free rates
``gamma`` is ``R = || T(y) - T(gamma) ||_2`` for a square-root transform
``T``.  Its mean grows like ``sqrt(N)`` while its variance stays roughly
constant, which is what makes a fixed data-fidelity bound usable.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats

from . import rng as _rng
from .errors import DomainError, ParameterError
from .noise import NoiseModel, sample_measurements, saturation_reject

FAMILIES = ("anscombe", "generalized_anscombe", "freeman_tukey", "bartlett")

KS_CRITICAL = {0.01: 1.628, 0.05: 1.358}


@dataclass(frozen=True)
class VstSpec:
    family: str = "anscombe"
    c: float = 0.375
    sigma: float = 0.0
    alpha: float = 1.0
    g: float = 0.0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ParameterError(f"unknown VST family {self.family!r}")
        if self.c < 0:
            raise ParameterError(f"offset c must be >= 0, got {self.c}")
        if self.sigma < 0 or self.alpha <= 0:
            raise ParameterError("sigma must be >= 0 and alpha > 0")
        if (self.family == "bartlett") != (self.c == 0) and self.family in ("anscombe", "bartlett"):
            raise ParameterError("bartlett is exactly the c = 0 square-root transform")

    @classmethod
    def anscombe(cls):
        return cls("anscombe", 0.375)

    @classmethod
    def bartlett(cls):
        return cls("bartlett", 0.0)

    @classmethod
    def freeman_tukey(cls):
        return cls("freeman_tukey", 0.0)

    @classmethod
    def gat(cls, sigma, c=0.375, alpha=1.0, g=0.0):
        return cls("generalized_anscombe", c, sigma, alpha, g)

    @property
    def d(self):
        """Offset under the square root after folding in the Gaussian part."""
        return self.c + self.sigma**2

    @property
    def offset(self):
        """Additive offset the estimators use: ``c``, or ``d`` for the GAT.

        For the GAT this is exact when ``alpha = 1`` and ``g = 0``.
        """
        if self.family == "generalized_anscombe":
            return self.d
        return self.c


def _check_arg(arg):
    bad = np.flatnonzero(arg < 0)
    if bad.size:
        i = int(bad[0])
        raise DomainError(f"negative argument under square root at index {i} ({arg[i]:.6g})")


def apply_vst(y, spec):
    """Apply the transform elementwise to ``y``."""
    y = np.asarray(y, dtype=float)
    if spec.family in ("anscombe", "bartlett"):
        arg = y + spec.c
        _check_arg(arg)
        return np.sqrt(arg)
    if spec.family == "generalized_anscombe":
        a = spec.alpha
        arg = a * y + spec.c * a * a + spec.sigma**2 - a * spec.g
        _check_arg(arg)
        return np.sqrt(arg) / a
    _check_arg(y)
    return np.sqrt(y) + np.sqrt(y + 1.0)


def _reference(rates, spec):
    if spec.family == "generalized_anscombe":
        return spec.alpha * np.asarray(rates, dtype=float) + spec.g
    return np.asarray(rates, dtype=float)


def residual_magnitude(y, rates, spec, retained=None):
    """``|| T(y) - T(E y) ||_2`` over the retained indices."""
    y = np.asarray(y, dtype=float)
    rates = np.asarray(rates, dtype=float)
    if retained is not None:
        y, rates = y[retained], rates[retained]
    diff = apply_vst(y, spec) - apply_vst(_reference(rates, spec), spec)
    return float(math.sqrt(math.fsum(diff * diff)))


@dataclass(frozen=True)
class KsResult:
    statistic: float
    reject_1pct: bool
    reject_5pct: bool


def ks_test(samples, mu, var):
    """Two-sided KS test of ``samples`` against ``Normal(mu, var)``.

    Rejection uses the asymptotic critical values ``K/sqrt(n)``.  When
    ``mu``/``var`` are fitted from the same samples these levels are
    conservative.
    """
    samples = np.asarray(samples, dtype=float)
    if samples.size < 8:
        raise ParameterError(f"need at least 8 samples, got {samples.size}")
    if not var > 0:
        raise DomainError(f"degenerate variance {var}")
    d = float(stats.kstest(samples, "norm", args=(mu, math.sqrt(var))).statistic)
    root_n = math.sqrt(samples.size)
    return KsResult(d, d > KS_CRITICAL[0.01] / root_n, d > KS_CRITICAL[0.05] / root_n)


@dataclass(frozen=True)
class ResidualStats:
    n_trials: int
    mean: float
    variance: float
    ks_statistic: float
    ks_reject_1pct: bool
    sweep_value: float = math.nan
    samples: np.ndarray = None
    n_rejected: int = 0


def residual_samples(phi, x, model, spec, n_trials, seed, reject=True):
    """Residual magnitudes for ``n_trials`` independent measurement draws.

    Trial ``k`` uses its own random stream derived from ``(seed, k)``.
    Returns the samples and the total number of rejected coordinates.
    """
    out = np.empty(int(n_trials))
    rejected = 0
    for k in range(int(n_trials)):
        ms = sample_measurements(phi, x, model, _rng.derive_seed(seed, _rng.TRIAL, k))
        if reject:
            ms = saturation_reject(ms, spec.offset)
        rejected += len(ms.rejected_indices)
        out[k] = residual_magnitude(ms.y, ms.rates, spec, ms.retained)
    return out, rejected


def residual_statistics(matrix, x, model, spec, n_trials, seed, sweep_value=math.nan, keep_samples=False):
    """Monte-Carlo mean, variance and Gaussianity of the residual magnitude."""
    if int(n_trials) < 2:
        raise ParameterError("n_trials must be >= 2")
    r, rejected = residual_samples(matrix, x, model, spec, n_trials, seed)
    mean = math.fsum(r) / r.size
    var = math.fsum((r - mean) ** 2) / (r.size - 1)
    if var > 0 and r.size >= 8:
        ks = ks_test(r, mean, var)
        ks_stat, ks_rej = ks.statistic, ks.reject_1pct
    else:
        ks_stat, ks_rej = math.nan, False
    return ResidualStats(
        int(n_trials), mean, var, ks_stat, ks_rej, float(sweep_value),
        r if keep_samples else None, rejected,
    )


def spec_for_model(model, family=None):
    """Default transform for a noise model: Anscombe or GAT."""
    if model.kind == "poisson" and family in (None, "anscombe"):
        return VstSpec.anscombe()
    if family in (None, "generalized_anscombe"):
        return VstSpec.gat(model.sigma, alpha=model.alpha, g=model.g)
    if family == "bartlett":
        return VstSpec.bartlett()
    if family == "freeman_tukey":
        return VstSpec.freeman_tukey()
    return VstSpec(family)


__all__ = [
    "VstSpec", "apply_vst", "residual_magnitude", "ks_test", "KsResult",
    "ResidualStats", "residual_statistics", "residual_samples", "spec_for_model",
    "NoiseModel",
]
