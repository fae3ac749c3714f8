"""Closed-form residual and reconstruction-error bounds.

Every expression is evaluated exactly as stated, including constants that
disagree with their own derivations.  Where a recomputed alternative
exists it is reported next to the stated value rather than substituted
for it.

Notation: ``gamma = Phi x`` are the noise-free rates, ``c`` the VST offset,
``d = c + sigma^2`` the offset for Poisson-Gaussian data, ``kappa`` the
tail parameter (bounds hold with probability ``1 - kappa^2 / N``) and
``delta_2s`` the restricted isometry constant of order ``2s``.
"""

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import BoundInapplicableError, DomainError, ParameterError

FORMULA_VERSION = "vstcs-bounds/1 (stated constants; derived variants reported alongside)"

# tail constant: square root of the stated variance ceiling for c = 3/8
TAIL_CONSTANT = 3.29
# variance ceiling quoted alongside the closed-form constant expression
STATED_VARIANCE_CONSTANT = 10.85
PG_VARIANCE_FACTOR = 1.25
RIP_LIMIT = math.sqrt(2.0) - 1.0


def _gamma(gamma):
    g = np.atleast_1d(np.asarray(gamma, dtype=float))
    if g.size == 0 or np.any(g < 0) or not np.all(np.isfinite(g)):
        raise DomainError("gamma must be a non-empty vector of finite non-negative rates")
    return g


def _ratio(num, den):
    den = math.fsum(den)
    if not den > 0:
        # every denominator term clipped at zero: the bound is vacuous
        return math.inf
    return math.fsum(num) / den


def _terms(top, g, off):
    # a zero rate gives a deterministic zero count and contributes nothing
    out = np.zeros_like(g)
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        np.divide(top, (g + off) ** 2, out=out, where=g > 0)
    return out


def _denominator(g, off):
    return np.maximum(0.0, _terms(g * (g + off) / 4.0 - g / 8.0, g, off))


def t1_variance_bound(gamma, c, variant="as_printed"):
    """Variance ceiling for the residual magnitude at rates ``gamma``.

    Parameters
    ----------
    gamma : array_like
        Noise-free rates ``Phi x``.
    c : float
        VST offset.
    variant : {"as_printed", "as_derived"}
        ``as_derived`` carries the factor 1/4 on the numerator that the
        moment bound produces; ``as_printed`` omits it.

    Returns
    -------
    float
        ``inf`` when the denominator vanishes (bound vacuous).
    """
    g = _gamma(gamma)
    if c < 0:
        raise ParameterError(f"c must be >= 0, got {c}")
    num = _terms(g * (1.0 + 3.0 * g), g, c)
    if variant == "as_derived":
        num = num / 4.0
    elif variant != "as_printed":
        raise ParameterError(f"unknown variant {variant!r}")
    return _ratio(num, _denominator(g, c))


def t1_variance_constant(c):
    """``8 (1 + c)^2 / (2c + 1)``: the ceiling when every rate is at least one."""
    if c < 0:
        raise ParameterError(f"c must be >= 0, got {c}")
    return 8.0 * (1.0 + c) ** 2 / (2.0 * c + 1.0)


def t3_variance_bound(gamma, c, sigma):
    """Poisson-Gaussian analogue of :func:`t1_variance_bound` with ``d = c + sigma^2``."""
    g = _gamma(gamma)
    if sigma < 0 or c < 0:
        raise ParameterError("sigma and c must be >= 0")
    d = c + sigma * sigma
    num = (g * (1.0 + 3.0 * g) + sigma**4) / (g + d) ** 2 if d > 0 else _terms(g * (1.0 + 3.0 * g), g, d)
    return _ratio(num, _denominator(g, d))


def t3_variance_constant(c, sigma):
    """``v_u = 1.25 * 8 (1 + d)^2 / (2d + 1)``."""
    if sigma < 0 or c < 0:
        raise ParameterError("sigma and c must be >= 0")
    d = c + sigma * sigma
    return PG_VARIANCE_FACTOR * 8.0 * (1.0 + d) ** 2 / (2.0 * d + 1.0)


def mean_bound(n):
    return math.sqrt(n / 2.0)


def tail_probability(n, kappa):
    """``1 - kappa^2 / N`` clipped at zero; zero means the bound is vacuous."""
    return max(0.0, 1.0 - kappa * kappa / n)


def tau(kappa):
    return TAIL_CONSTANT / kappa + 1.0 / math.sqrt(2.0)


def tau_d(kappa, c, sigma):
    return math.sqrt(t3_variance_constant(c, sigma)) / kappa + 1.0 / math.sqrt(2.0)


def epsilon_bound(n, kappa, model="poisson", c=0.375, sigma=0.0):
    """Residual radius holding with probability ``1 - kappa^2/N``.

    Returns ``(theorem_eps, practical_eps)``; the practical value is
    always ``2 sqrt(N)``.
    """
    if n < 1 or not kappa > 0:
        raise ParameterError("need N >= 1 and kappa > 0")
    root = math.sqrt(n)
    if model == "poisson":
        eps = root * tau(kappa)
    elif model == "poisson_gaussian":
        eps = root * tau_d(kappa, c, sigma)
    else:
        raise ParameterError(f"unknown model {model!r}")
    return eps, 2.0 * root


def rip_constants(delta_2s):
    """``(C', C'', C1, C2)``; raises when ``delta_2s >= sqrt(2) - 1``."""
    if delta_2s < 0:
        raise ParameterError(f"delta_2s must be >= 0, got {delta_2s}")
    if not delta_2s < RIP_LIMIT:
        raise BoundInapplicableError(
            f"delta_2s={delta_2s:.4f} is not below sqrt(2)-1={RIP_LIMIT:.4f}; constants undefined"
        )
    den = 1.0 - delta_2s * (math.sqrt(2.0) + 1.0)
    cp = 2.0 * math.sqrt(1.0 + delta_2s) / den
    cpp = 2.0 * math.sqrt(2.0) * delta_2s / den
    return cp, cpp, 2.0 * cp, 2.0 + 2.0 * cpp


def best_s_term(theta, s):
    """Keep the ``s`` largest-magnitude entries of ``theta``; ties go to the lower index."""
    theta = np.asarray(theta, dtype=float)
    out = np.zeros_like(theta)
    if s > 0:
        keep = np.argsort(-np.abs(theta), kind="stable")[: int(s)]
        out[keep] = theta[keep]
    return out


def _tail_term(theta, theta_s, s):
    if theta is None:
        return 0.0
    theta = np.asarray(theta, dtype=float)
    theta_s = best_s_term(theta, s) if theta_s is None else np.asarray(theta_s, dtype=float)
    return math.fsum(np.abs(theta - theta_s)) / math.sqrt(s)


def _rre(n, intensity, s, off, t, delta_2s, theta, theta_s):
    if not intensity > 0 or s < 1 or n < 1:
        raise ParameterError("need I > 0, s >= 1 and N >= 1")
    _, _, c1, c2 = rip_constants(delta_2s)
    first = c1 * math.sqrt(n) * t * math.sqrt(1.0 / intensity + off * n / intensity**2)
    return first + c2 * _tail_term(theta, theta_s, s) / intensity


def t2_rre_bound(n, intensity, s, c, delta_2s, kappa, theta=None, theta_s=None):
    """Bound on ``||theta - theta_star||_2 / I`` for Poisson data.

    ``theta=None`` treats the signal as exactly ``s``-sparse.
    """
    return _rre(n, intensity, s, c, tau(kappa), delta_2s, theta, theta_s)


def t4_rre_bound(n, intensity, s, c, sigma, delta_2s, kappa, theta=None, theta_s=None):
    """Poisson-Gaussian analogue of :func:`t2_rre_bound` (``c -> d``, ``tau -> tau_d``)."""
    d = c + sigma * sigma
    return _rre(n, intensity, s, d, tau_d(kappa, c, sigma), delta_2s, theta, theta_s)


@dataclass
class BoundReport:
    context: dict
    epsilon_theorem: float
    epsilon_practical: float
    mean_bound: float
    var_bound_formula: float
    var_bound_formula_derived: float
    var_bound_constant: float
    var_bound_constant_stated: float
    v_u: float
    C1: float
    C2: float
    rre_bound: float
    tail_probability: float
    vacuous: bool
    formula_version: str = FORMULA_VERSION
    notes: list = field(default_factory=list)

    def to_json(self, **kw):
        def clean(v):
            if isinstance(v, float) and not math.isfinite(v):
                return None if math.isnan(v) else ("inf" if v > 0 else "-inf")
            if isinstance(v, dict):
                return {k: clean(x) for k, x in v.items()}
            if isinstance(v, list):
                return [clean(x) for x in v]
            return v

        return json.dumps(clean(asdict(self)), **kw)


def bound_report(n, intensity=None, s=None, c=0.375, sigma=0.0, kappa=2.5, delta_2s=None,
                 m=None, gamma=None, theta=None, model=None):
    """Evaluate every bound that the given context supports.

    Quantities whose inputs are missing are reported as NaN, and the
    reconstruction bound is NaN (with a note) when ``delta_2s`` does not
    meet the RIP requirement.
    """
    model = model or ("poisson_gaussian" if sigma > 0 else "poisson")
    notes = []
    eps_t, eps_p = epsilon_bound(n, kappa, model, c, sigma)
    pg = model == "poisson_gaussian"
    v_u = t3_variance_constant(c, sigma) if pg else math.nan
    if gamma is not None:
        var_f = t3_variance_bound(gamma, c, sigma) if pg else t1_variance_bound(gamma, c)
        var_fd = math.nan if pg else t1_variance_bound(gamma, c, "as_derived")
    else:
        var_f = var_fd = math.nan
    var_c = v_u if pg else t1_variance_constant(c)
    c1 = c2 = rre = math.nan
    if delta_2s is not None:
        try:
            _, _, c1, c2 = rip_constants(delta_2s)
        except BoundInapplicableError as exc:
            c1 = c2 = math.inf
            notes.append(str(exc))
        else:
            if intensity is not None and s is not None:
                if pg:
                    rre = t4_rre_bound(n, intensity, s, c, sigma, delta_2s, kappa, theta)
                else:
                    rre = t2_rre_bound(n, intensity, s, c, delta_2s, kappa, theta)
    tail = tail_probability(n, kappa)
    if tail == 0.0:
        notes.append("kappa^2 >= N: probability statement is vacuous")
    ctx = {"N": n, "m": m, "I": intensity, "s": s, "c_or_d": c + sigma * sigma if pg else c,
           "sigma": sigma, "kappa": kappa, "delta_2s": delta_2s, "model": model}
    return BoundReport(
        ctx, eps_t, eps_p, mean_bound(n), var_f, var_fd, var_c,
        math.nan if pg else STATED_VARIANCE_CONSTANT, v_u, c1, c2, rre, tail, tail == 0.0,
        notes=notes,
    )
