"""Sparse reconstruction from Poisson / Poisson-Gaussian measurements.

Three estimators share one operator-splitting engine:

* VST-penalised:   min rho ||theta||_1 + ||sqrt(y + c) - sqrt(A theta + c)||^2
* VST-constrained: min ||theta||_1  s.t.  ||sqrt(y + c) - sqrt(A theta + c)||_2 <= eps
* NLL-penalised:   min rho ||theta||_1 + sum((A theta)_i - y_i log((A theta)_i + floor))

all subject to ``Psi theta >= 0``, with ``A = Phi Psi`` and ``Psi``
orthonormal.

Engine
------
ADMM on ``min_theta  f(A theta) + indicator(Psi theta >= 0) + rho ||theta||_1``
with the stacked split ``v = K theta = (A theta, Psi theta, theta)``.  Because
``Psi^T Psi = I`` the theta-update is a fixed linear map
``(A^T A + 2 I)^{-1} K^T`` that does not depend on the penalty parameter, and
each block of the v-update is separable and closed-form:

* data block: a scalar cubic (VST) or quadratic (NLL) per measurement;
* positivity block: projection onto the non-negative orthant;
* sparsity block: soft-thresholding.

The penalty parameter is held fixed and the iteration is over-relaxed.
The loop itself is compiled with numba.  The returned
iterate is ``theta = Psi^T z`` where ``z >= 0`` is the positivity block, so
``x = Psi theta`` is feasible up to rounding.
"""

import csv
import functools
import logging
import math
from dataclasses import dataclass, field, replace

import numba
import numpy as np

from .errors import DimensionError, DomainError, ParameterError
from .signals import OrthoBasis
from .vst import VstSpec

log = logging.getLogger(__name__)

RHO_SWEEP = tuple(10.0**k for k in range(-10, 2))
LOG_RHO_RANGE = (-12.0, 2.0)
NLL_FLOOR = 1e-10


def soft_threshold(v, t):
    """Componentwise ``sign(v) * max(|v| - t, 0)``."""
    if t < 0:
        raise ParameterError(f"threshold must be >= 0, got {t}")
    v = np.asarray(v, dtype=float)
    return np.sign(v) * np.maximum(np.abs(v) - t, 0.0)


@dataclass(frozen=True, eq=False)
class SolverProblem:
    """One reconstruction problem over the retained measurements.

    ``phi`` and ``y`` hold retained rows only; use :func:`make_problem` to
    build a problem from a full measurement vector plus rejected indices.
    """

    phi: np.ndarray
    basis: OrthoBasis
    y: np.ndarray
    offset: float = 0.375
    fidelity: str = "vst"
    rho: float = None
    epsilon: float = None
    spec: VstSpec = None
    max_iter: int = 2000
    tol: float = 1e-6
    nll_floor: float = NLL_FLOOR

    def __post_init__(self):
        if self.fidelity not in ("vst", "poisson_nll"):
            raise ParameterError(f"unknown fidelity {self.fidelity!r}")
        if self.phi.shape != (self.y.size, self.basis.dim):
            raise DimensionError(
                f"phi is {self.phi.shape}, y has {self.y.size} entries, basis dim {self.basis.dim}"
            )
        if self.rho is not None and not self.rho > 0:
            raise ParameterError(f"rho must be > 0, got {self.rho}")
        if self.epsilon is not None and not self.epsilon > 0:
            raise ParameterError(f"epsilon must be > 0, got {self.epsilon}")
        if self.fidelity == "vst" and np.any(self.y + self.offset < 0):
            raise DomainError("y + offset < 0 on a retained row; apply saturation rejection first")
        if self.fidelity == "poisson_nll" and np.any(self.y < 0):
            raise DomainError("the NLL fidelity needs y >= 0; drop negative measurements first")

    @functools.cached_property
    def A(self):
        return self.phi @ self.basis.matrix

    @functools.cached_property
    def _sqrt_b(self):
        return np.sqrt(self.y + self.offset)

    @property
    def n_rows(self):
        return self.y.size


def make_problem(matrix, basis, y, spec=None, fidelity="vst", rho=None, epsilon=None,
                 rejected=(), drop_negative=None, **options):
    """Build a :class:`SolverProblem`, dropping rejected (and, for NLL, negative) rows."""
    phi = matrix.phi if hasattr(matrix, "phi") else np.asarray(matrix, dtype=float)
    y = np.asarray(y, dtype=float)
    if phi.shape[0] != y.size:
        raise DimensionError(f"phi has {phi.shape[0]} rows but y has {y.size} entries")
    keep = np.ones(y.size, dtype=bool)
    keep[list(rejected)] = False
    if drop_negative is None:
        drop_negative = fidelity == "poisson_nll"
    if drop_negative:
        keep &= y >= 0
    spec = spec or VstSpec.anscombe()
    offset = spec.offset if fidelity == "vst" else 0.0
    return SolverProblem(
        np.ascontiguousarray(phi[keep]), basis, y[keep], offset, fidelity, rho, epsilon, spec, **options
    )


@dataclass
class SolverResult:
    theta_star: np.ndarray
    x_star: np.ndarray
    objective: float
    residual: float
    iterations: int
    converged: bool
    infeasible_flag: bool = False
    rho_used: float = None
    homotopy_trace: list = field(default_factory=list)
    trace: list = None


# -- smooth data terms ---------------------------------------------------------


def vst_residual(problem, w):
    """``||sqrt(y + c) - sqrt(w + c)||_2`` for ``w = A theta``."""
    diff = problem._sqrt_b - np.sqrt(np.maximum(w, -problem.offset) + problem.offset)
    return float(math.sqrt(math.fsum(diff * diff)))


def _data_term(problem, w):
    if problem.fidelity == "vst":
        return vst_residual(problem, w) ** 2
    wf = np.maximum(w, 0.0) + problem.nll_floor
    return float(math.fsum(w - problem.y * np.log(wf)))


def objective(problem, theta, rho=None):
    """Penalised objective ``rho ||theta||_1 + data term`` at ``theta``."""
    rho = problem.rho if rho is None else rho
    theta = np.asarray(theta, dtype=float)
    return rho * float(np.abs(theta).sum()) + _data_term(problem, problem.A @ theta)


def vst_fidelity_grad(theta, problem):
    """Gradient of ``||sqrt(y + c) - sqrt(A theta + c)||^2`` w.r.t. theta."""
    w = problem.A @ np.asarray(theta, dtype=float)
    arg = w + problem.offset
    if np.any(arg <= 0):
        raise DomainError("A theta + c must be positive for the VST gradient")
    return problem.A.T @ (1.0 - problem._sqrt_b / np.sqrt(arg))


def nll_fidelity_grad(theta, problem):
    """Gradient of ``sum(A theta - y log(A theta + floor))`` w.r.t. theta."""
    w = problem.A @ np.asarray(theta, dtype=float)
    return problem.A.T @ (1.0 - problem.y / (w + problem.nll_floor))


def _prox_vst(a, mu, sqrt_b, c):
    """Minimise ``(sqrt_b - sqrt(w + c))^2 + mu/2 (w - a)^2`` over ``w >= 0``.

    With ``t = sqrt(w + c)`` the stationarity condition is the cubic
    ``mu t^3 + (1 - mu (a + c)) t - sqrt_b = 0``, which has exactly one
    positive root.  Newton's method started above the root decreases
    monotonically onto it because the cubic is convex for ``t > 0``.
    """
    p = 1.0 - mu * (a + c)
    t = np.cbrt(sqrt_b / mu) + np.sqrt(np.maximum(-p, 0.0) / mu)
    for _ in range(100):
        g = mu * t * t * t + p * t - sqrt_b
        dg = 3.0 * mu * t * t + p
        step = g / dg
        t = t - step
        if not np.any(np.abs(step) > 1e-13 * t):
            break
    return np.maximum(t * t - c, 0.0)


def _prox_nll(a, mu, y, floor):
    """Minimise ``w - y log(w + floor) + mu/2 (w - a)^2`` over ``w >= 0``."""
    b = 1.0 - mu * (a + floor)
    disc = np.sqrt(b * b + 4.0 * mu * y)
    u = np.where(b >= 0, 2.0 * y / np.where(b + disc > 0, b + disc, 1.0), (disc - b) / (2.0 * mu))
    return np.maximum(u - floor, 0.0)


@numba.njit(cache=True)
def _admm_steps(K, G, v, u, mu, rho, relax, steps, n, m, vst, sqrt_b, c, y, floor):
    """Run ``steps`` over-relaxed ADMM iterations; returns (v, u, K q, v_prev)."""
    total = v.size
    kq = np.empty(total)
    v_prev = v.copy()
    thr = rho / mu
    for _ in range(steps):
        kq = K @ (G @ (v - u))
        a = relax * kq + (1.0 - relax) * v + u
        v_prev = v
        v = np.empty(total)
        for i in range(n):
            if vst:
                p = 1.0 - mu * (a[i] + c)
                t = (sqrt_b[i] / mu) ** (1.0 / 3.0)
                if p < 0.0:
                    t += math.sqrt(-p / mu)
                for _k in range(100):
                    step = (mu * t * t * t + p * t - sqrt_b[i]) / (3.0 * mu * t * t + p)
                    t -= step
                    if abs(step) <= 1e-13 * t:
                        break
                w = t * t - c
            else:
                b = 1.0 - mu * (a[i] + floor)
                disc = math.sqrt(b * b + 4.0 * mu * y[i])
                if b >= 0.0:
                    w = 2.0 * y[i] / (b + disc) if b + disc > 0.0 else 0.0
                else:
                    w = (disc - b) / (2.0 * mu)
                w -= floor
            v[i] = w if w > 0.0 else 0.0
        for i in range(n, n + m):
            v[i] = a[i] if a[i] > 0.0 else 0.0
        for i in range(n + m, total):
            if a[i] > thr:
                v[i] = a[i] - thr
            elif a[i] < -thr:
                v[i] = a[i] + thr
            else:
                v[i] = 0.0
        u = a - v
    return v, u, kq, v_prev


class _Engine:
    """ADMM state for one problem; reusable across rho values (warm start).

    The penalty parameter is fixed at the average curvature of the data
    term mapped into coefficient space, which puts the three blocks of
    the split on a common scale.
    """

    relax = 1.6
    balance = False
    balance_every = 100
    balance_factor = 2.0
    balance_ratio = 10.0

    def __init__(self, problem, x0=None):
        self.problem = problem
        a = problem.A
        psi = problem.basis.matrix
        n, m = a.shape
        self.n, self.m = n, m
        self.K = np.ascontiguousarray(np.vstack([a, psi, np.eye(m)]))
        self.G = np.ascontiguousarray(np.linalg.solve(a.T @ a + 2.0 * np.eye(m), self.K.T))
        self.sw = slice(0, n)
        self.sz = slice(n, n + m)
        self.st = slice(n + m, n + 2 * m)
        # feasible start: constant signal matching the measured photon count
        total = float(np.maximum(problem.y, 0.0).sum())
        col = float(problem.phi.sum())
        level = total / col if col > 0 else 0.0
        if x0 is None:
            x0 = np.full(m, level)
        else:
            x0 = np.maximum(np.asarray(x0, dtype=float), 0.0)
            if x0.shape != (m,):
                raise DimensionError(f"x0 has shape {x0.shape}, expected ({m},)")
        theta0 = psi.T @ x0
        self.v = self.K @ theta0
        self.v[self.sz] = x0
        self.u = np.zeros_like(self.v)
        if problem.fidelity == "vst":
            curv = float(np.mean(0.5 / (problem.y + problem.offset)))
        else:
            curv = float(np.mean(1.0 / np.maximum(problem.y, 1.0)))
        self.mu = curv * float(np.sum(a * a)) / m if n else 1.0
        self._y = np.ascontiguousarray(problem.y, dtype=float)
        self._sqrt_b = np.ascontiguousarray(problem._sqrt_b) if problem.fidelity == "vst" else self._y

    def theta(self):
        return self.problem.basis.matrix.T @ self.v[self.sz]

    def run(self, rho, max_iter, tol, check_every=10, obj_tol=None, trace=None):
        p = self.problem
        vst = p.fidelity == "vst"
        prev_obj = None
        converged = False
        it = 0
        while it < max_iter:
            steps = min(check_every, max_iter - it)
            self.v, self.u, kq, v_prev = _admm_steps(
                self.K, self.G, self.v, self.u, self.mu, rho, self.relax, steps,
                self.n, self.m, vst, self._sqrt_b, p.offset, self._y, p.nll_floor,
            )
            it += steps
            v, u = self.v, self.u
            r_norm = float(np.linalg.norm(kq - v))
            r_scale = max(float(np.linalg.norm(kq)), float(np.linalg.norm(v)))
            # dual residual against the size of the scaled dual variable
            s_norm = float(np.linalg.norm(self.K.T @ (v - v_prev)))
            s_scale = float(np.linalg.norm(u))
            if trace is not None or obj_tol is not None:
                theta = self.theta()
                obj = objective(p, theta, rho)
                if trace is not None:
                    trace.append((it, obj, r_norm, self.mu * s_norm,
                                  vst_residual(p, p.A @ theta) if vst else math.nan))
                if obj_tol is not None and prev_obj is not None:
                    if abs(prev_obj - obj) <= obj_tol * max(abs(obj), 1e-300):
                        converged = True
                        break
                prev_obj = obj
            if r_norm <= tol * r_scale and s_norm <= tol * max(s_scale, 1e-300):
                converged = True
                break
            if self.balance and it % self.balance_every == 0:
                self._balance(r_norm / max(r_scale, 1e-300), s_norm / max(s_scale, 1e-300))
        return it, converged

    def _balance(self, r_rel, s_rel):
        # u is the scaled dual, so it moves inversely to mu
        if r_rel > self.balance_ratio * s_rel:
            self.mu *= self.balance_factor
            self.u /= self.balance_factor
        elif s_rel > self.balance_ratio * r_rel:
            self.mu /= self.balance_factor
            self.u *= self.balance_factor


def _smooth_derivs(problem, w):
    """First and second derivative of the data term in ``w``, or None off-domain."""
    if problem.fidelity == "vst":
        arg = w + problem.offset
        if np.any(arg <= 0):
            return None
        root = np.sqrt(arg)
        return 1.0 - problem._sqrt_b / root, 0.5 * problem._sqrt_b / (arg * root)
    wf = w + problem.nll_floor
    if np.any(wf <= 0):
        return None
    return 1.0 - problem.y / wf, problem.y / (wf * wf)


_POLISH_THRESHOLDS = (1e-2, 1e-3, 1e-4, 1e-6)


def _polish(problem, v, n, m, rho, max_newton=50, max_repairs=8):
    """Exact optimum on an active set guessed from the ADMM state, or None.

    The first guess takes the support and signs of the sparsity block and
    the zero pattern of the positivity block; further guesses threshold
    the current coefficients and signal at a few relative levels.  Each
    guess fixes a smooth equality-constrained problem, solved by damped
    Newton.  A result is accepted only if it satisfies the full optimality
    conditions of the original problem, in which case it is the global
    minimiser.
    """
    psi = problem.basis.matrix
    a = problem.A
    t = v[n + m:]
    supp = np.flatnonzero(t)
    if supp.size == 0:
        # theta = 0 is optimal when the data-term gradient there lies in the l1 ball
        d = _smooth_derivs(problem, np.zeros(problem.n_rows))
        if d is not None and np.max(np.abs(a.T @ d[0])) <= rho:
            return np.zeros(m)
    th = psi.T @ v[n:n + m]
    guesses = [(supp, np.sign(t[supp]), np.flatnonzero(v[n:n + m] == 0.0))]
    top_t = float(np.max(np.abs(th)))
    x = v[n:n + m]
    top_x = float(np.max(np.abs(x)))
    rank = np.argsort(-np.abs(th), kind="stable")
    for level in _POLISH_THRESHOLDS:
        s_ = np.flatnonzero(np.abs(th) > level * top_t)
        act = np.flatnonzero(x <= level * top_x)
        guesses.append((s_, np.sign(th[s_]), act))
        # the same guess trimmed to as many coefficients as the rows and
        # active constraints can pin down
        cap = np.sort(rank[:min(s_.size, problem.n_rows + act.size)])
        guesses.append((cap, np.sign(th[cap]), act))
    k = 1
    while k < min(m, problem.n_rows):
        # very sparse guesses for heavily penalised problems
        top = np.sort(rank[:k])
        guesses.append((top, np.sign(th[top]), np.zeros(0, dtype=np.intp)))
        k *= 2
    seen = set()
    for supp, sgn, active in guesses:
        ts = th[supp].copy()
        # a failed check proposes a corrected active set; a few rounds of
        # this primal-dual update usually reach the optimal one
        for _ in range(max_repairs):
            key = (supp.tobytes(), sgn.tobytes(), active.tobytes())
            if key in seen or supp.size == 0 or supp.size - active.size > problem.n_rows:
                break
            seen.add(key)
            theta, repair = _polish_on(problem, supp, sgn, active, ts, rho, max_newton)
            if theta is not None:
                return theta
            if repair is None:
                break
            supp, sgn, active, ts = repair
    return None


def _polish_on(problem, supp, sgn, active, ts, rho, max_newton):
    """Newton on one active set; returns ``(theta, None)`` or ``(None, repaired_guess)``."""
    psi = problem.basis.matrix
    a = problem.A
    m = psi.shape[0]
    a_s = a[:, supp]
    e = psi[np.ix_(active, supp)]
    k = active.size
    lam = np.zeros(k)

    def merit(ts):
        full = np.zeros(m)
        full[supp] = ts
        d = _smooth_derivs(problem, a_s @ ts)
        if d is None:
            return math.inf
        return objective(problem, full, rho)

    ok = False
    for _ in range(max_newton):
        d = _smooth_derivs(problem, a_s @ ts)
        if d is None:
            return None, None
        grad = a_s.T @ d[0] + rho * sgn
        hess = (a_s.T * d[1]) @ a_s
        kkt = np.zeros((supp.size + k, supp.size + k))
        kkt[:supp.size, :supp.size] = hess
        kkt[:supp.size, supp.size:] = -e.T
        kkt[supp.size:, :supp.size] = -e
        rhs = np.concatenate([-(grad - e.T @ lam), e @ ts])
        try:
            step = np.linalg.solve(kkt, rhs)
        except np.linalg.LinAlgError:
            return None, None
        if not np.all(np.isfinite(step)):
            return None, None
        dts, lam_new = step[:supp.size], lam + step[supp.size:]
        base = merit(ts)
        alpha = 1.0
        while alpha > 1e-10:
            cand = ts + alpha * dts
            if merit(cand) <= base + 1e-12 * abs(base) or k:
                break
            alpha *= 0.5
        ts = ts + alpha * dts
        lam = lam + alpha * (lam_new - lam)
        if np.max(np.abs(alpha * dts)) <= 1e-13 * max(1.0, np.max(np.abs(ts))):
            ok = True
            break
    if not ok:
        return None, None
    theta = np.zeros(m)
    theta[supp] = ts
    x = psi @ theta
    scale = max(1.0, float(np.max(np.abs(x))))
    d = _smooth_derivs(problem, a @ theta)
    if d is None:
        return None, None
    g = a.T @ d[0]
    mult = np.zeros(m)
    mult[active] = lam
    g = g - psi.T @ mult
    gtol = 1e-7 * max(rho, float(np.max(np.abs(a.T @ d[0]))), 1e-300)
    off = np.ones(m, dtype=bool)
    off[supp] = False
    if (np.any(sgn * ts < 0) or np.any(x < -1e-9 * scale) or np.any(lam < -gtol)
            or np.any(np.abs(g[off]) > rho + gtol)
            or np.max(np.abs(g[supp] + rho * sgn), initial=0.0) > gtol):
        keep = sgn * ts > 0
        enter = np.flatnonzero(off & (np.abs(g) > rho + gtol))
        new_active = np.union1d(active[lam >= -gtol], np.flatnonzero(x < -1e-9 * scale))
        excess = int(keep.sum()) + enter.size - new_active.size - problem.n_rows
        if excess > 0:
            # make room for entering coefficients by dropping the smallest kept ones
            kept = np.flatnonzero(keep)
            keep[kept[np.argsort(np.abs(ts[kept]), kind="stable")[:excess]]] = False
        new_supp = np.concatenate([supp[keep], enter])
        order = np.argsort(new_supp)
        new_sgn = np.concatenate([sgn[keep], -np.sign(g[enter])])[order]
        new_ts = np.concatenate([ts[keep], np.zeros(enter.size)])[order]
        return None, (new_supp[order], new_sgn, new_active.astype(np.intp), new_ts)
    return theta, None


def _result(engine, rho, iterations, converged, trace=None):
    p = engine.problem
    theta = engine.theta()
    polished = _polish(p, engine.v, engine.n, engine.m, rho)
    if polished is not None and objective(p, polished, rho) <= objective(p, theta, rho):
        theta, converged = polished, True
    w = p.A @ theta
    resid = vst_residual(p, w) if p.fidelity == "vst" else math.nan
    return SolverResult(
        theta, p.basis.matrix @ theta, objective(p, theta, rho), resid,
        iterations, converged, rho_used=rho, trace=trace,
    )


def _continuation(engine, rho, max_iter, tol, obj_tol=None):
    """Warm-start through one-decade steps from the top of the rho range down to ``rho``.

    Returns the iterations spent before the final stage.
    """
    spent = 0
    level = LOG_RHO_RANGE[1]
    target = math.log10(rho)
    while level > target + 1e-9:
        it, _ = engine.run(10.0**level, max_iter, tol, obj_tol=obj_tol)
        spent += it
        level -= 1.0
    return spent


def solve_penalized(problem, engine=None, record_trace=False, x0=None, continuation=True):
    """Solve the penalised VST problem at ``problem.rho``.

    Small penalties are reached by warm-started continuation from
    ``rho = 100`` unless ``continuation`` is False or an ``engine`` (already
    warm) is supplied.  ``x0`` overrides the default constant starting
    signal.  Reaching the iteration cap is not an error: the result carries
    ``converged=False`` and the last iterate.
    """
    if problem.rho is None:
        raise ParameterError("solve_penalized needs rho")
    if problem.fidelity != "vst":
        raise ParameterError("solve_penalized handles the VST fidelity; use solve_poisson_nll")
    spent = 0
    if engine is None:
        engine = _Engine(problem, x0)
        if continuation:
            spent = _continuation(engine, problem.rho, problem.max_iter, problem.tol)
    trace = [] if record_trace else None
    it, conv = engine.run(problem.rho, problem.max_iter, problem.tol, trace=trace)
    return _result(engine, problem.rho, spent + it, conv, trace)


def solve_poisson_nll(problem, engine=None, record_trace=False, max_iter=500, obj_tol=1e-8,
                      continuation=True):
    """Solve the l1-penalised Poisson negative log-likelihood problem.

    ``max_iter`` and ``obj_tol`` govern the final stage; continuation
    stages (see :func:`solve_penalized`) use the same limits.
    """
    if problem.rho is None:
        raise ParameterError("solve_poisson_nll needs rho")
    if problem.fidelity != "poisson_nll":
        problem = replace(problem, fidelity="poisson_nll", offset=0.0)
    spent = 0
    if engine is None:
        engine = _Engine(problem)
        if continuation:
            spent = _continuation(engine, problem.rho, max_iter, problem.tol, obj_tol)
    trace = [] if record_trace else None
    it, conv = engine.run(problem.rho, max_iter, problem.tol, obj_tol=obj_tol, trace=trace)
    return _result(engine, problem.rho, spent + it, conv, trace)


def _snapshot(engine):
    return engine.v.copy(), engine.u.copy(), engine.mu


def _restore(engine, snap):
    engine.v, engine.u, engine.mu = snap[0].copy(), snap[1].copy(), snap[2]


def solve_constrained(problem, rel_gap=0.01, max_steps=60, record_trace=False):
    """min ||theta||_1 s.t. VST residual <= epsilon, via a rho-homotopy.

    The returned ``objective`` is ``||theta||_1``.

    The penalised problem is solved along a descending continuation in
    ``log10 rho`` over ``[-12, 2]`` (one decade per step, warm-started),
    which brackets the largest feasible rho.  The bracket is then refined
    by Illinois regula falsi on ``log(residual / epsilon)`` until the kept
    residual is within ``rel_gap`` of epsilon.  If no rho down to
    ``1e-12`` reaches epsilon the minimal-residual iterate is returned with
    ``infeasible_flag=True``.
    """
    eps = problem.epsilon
    if eps is None:
        raise ParameterError("solve_constrained needs epsilon")
    engine = _Engine(problem)
    trace = []
    lo_end, hi_end = LOG_RHO_RANGE

    def attempt(log_rho, snap):
        if snap is not None:
            _restore(engine, snap)
        rho = 10.0**log_rho
        steps = [] if record_trace else None
        it, conv = engine.run(rho, problem.max_iter, problem.tol, trace=steps)
        res = _result(engine, rho, it, conv, steps)
        trace.append((rho, res.residual, it, res.converged))
        return res, _snapshot(engine)

    res, snap = attempt(hi_end, None)
    if res.residual <= eps:
        res.homotopy_trace = trace
        res.objective = float(np.abs(res.theta_star).sum())
        return res
    hi, f_hi, s_hi = hi_end, math.log(res.residual / eps), snap
    closest = res
    lo = None
    level = hi_end
    while level > lo_end:
        level = max(level - 1.0, lo_end)
        res, snap = attempt(level, s_hi)
        if res.residual <= eps:
            lo, f_lo, s_lo, best = level, math.log(max(res.residual, 1e-300) / eps), snap, res
            break
        if res.residual < closest.residual:
            closest = res
        hi, f_hi, s_hi = level, math.log(res.residual / eps), snap
    if lo is None:
        closest.infeasible_flag = True
        closest.homotopy_trace = trace
        closest.objective = float(np.abs(closest.theta_star).sum())
        return closest
    side = 0
    for _ in range(max_steps):
        if best.residual >= (1.0 - rel_gap) * eps or hi - lo < 1e-9:
            break
        # Illinois-modified regula falsi on log residual vs log rho, kept
        # inside the bracket; falls back to bisection near the ends.
        mid = hi - f_hi * (hi - lo) / (f_hi - f_lo) if f_hi != f_lo else 0.5 * (lo + hi)
        if not lo + 0.05 * (hi - lo) < mid < hi - 0.05 * (hi - lo):
            mid = 0.5 * (lo + hi)
        res, snap = attempt(mid, s_lo)
        f_mid = math.log(max(res.residual, 1e-300) / eps)
        if res.residual <= eps:
            lo, f_lo, s_lo, best = mid, f_mid, snap, res
            if side == -1:
                f_hi *= 0.5
            side = -1
        else:
            hi, f_hi, s_hi = mid, f_mid, snap
            if side == 1:
                f_lo *= 0.5
            side = 1
    best.homotopy_trace = trace
    best.objective = float(np.abs(best.theta_star).sum())
    return best


def solve(problem):
    """Dispatch on the problem's form and fidelity."""
    if problem.fidelity == "poisson_nll":
        return solve_poisson_nll(problem)
    if problem.epsilon is not None:
        return solve_constrained(problem)
    return solve_penalized(problem)


@dataclass
class OmniscientResult:
    best_rho: float
    best_result: SolverResult
    errors: dict


def omniscient_rho(problem_template, true_theta, sweep_set=RHO_SWEEP):
    """Pick the rho in ``sweep_set`` whose solution is closest to ``true_theta``."""
    # descending, so each solve warm-starts from the next larger penalty
    sweep = sorted((float(r) for r in sweep_set), reverse=True)
    if not sweep:
        raise ParameterError("sweep_set must be non-empty")
    true_theta = np.asarray(true_theta, dtype=float)
    errors = {}
    best = None
    engine = None
    for rho in sweep:
        prob = replace(problem_template, rho=rho, epsilon=None)
        if engine is None:
            engine = _Engine(prob)
        if prob.fidelity == "poisson_nll":
            res = solve_poisson_nll(prob, engine=engine)
        else:
            res = solve_penalized(prob, engine=engine)
        err = float(np.linalg.norm(true_theta - res.theta_star))
        errors[rho] = err
        if best is None or err < best[0]:
            best = (err, rho, res)
    return OmniscientResult(best[1], best[2], errors)


def write_trace_csv(path, trace):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["iter", "objective", "primal_res", "dual_res", "residual_vst"])
        for row in trace:
            w.writerow([row[0]] + [repr(float(v)) for v in row[1:]])
