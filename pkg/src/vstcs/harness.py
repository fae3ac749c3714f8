"""Experiment orchestration: residual studies, reconstruction sweeps,
bound-coverage validation and patch-wise image reconstruction.

Every experiment is a list of independent work units evaluated by a
deterministic-order map.  Each unit derives its random streams from
``(seed, unit key)`` only, so results do not depend on scheduling or on
the number of worker processes.
"""

import configparser
import csv
import json
import logging
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import bounds as _bounds
from . import rng as _rng
from . import solvers as _solvers
from .errors import ParameterError, PreconditionError
from .noise import NoiseModel, sample_measurements, saturation_reject
from .sensing import estimate_ric, generate_sensing_matrix
from .signals import (
    assemble_patches, extract_patches, generate_sparse_signal, generate_uniform_signal,
    make_dct2_basis, make_dct_basis, read_pgm, write_pgm,
)
from .vst import VstSpec, residual_statistics, spec_for_model

log = logging.getLogger(__name__)

EXPERIMENTS = ("residual_sweep", "recon_sweep", "bound_validation", "image_recon")
METHODS = ("constrained_vst", "penalized_vst_omniscient", "nll_omniscient", "nll_crossval")
SWEEP_VARIABLES = ("N", "I", "s", "sigma")
OUTPUT_ENV = "VSTCS_OUTPUT_DIR"

DEFAULT_FIXED = {"m": 100, "N": 50, "I": 1e8, "s": 10, "sigma": 0.0, "p": 0.5, "c": 0.375}

# sweep value at which cross-validated rho is picked, per noise model
CROSSVAL_ANCHORS = {
    "poisson": {"I": 1e4, "s": 30, "N": 20},
    "poisson_gaussian": {"I": 1e4, "N": 30, "sigma": 20.0},
}

# unit-key tags kept apart from the stream constants in ``rng``
_KEY_MATRIX, _KEY_SIGNAL, _KEY_NOISE = 11, 12, 13


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    sweep_variable: str
    sweep_values: tuple
    fixed: dict = field(default_factory=lambda: dict(DEFAULT_FIXED))
    methods: tuple = ("constrained_vst",)
    q_signals: int = 20
    n_trials: int = 200
    seed: int = 0
    output_path: str = None
    options: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ParameterError(f"unknown experiment {self.experiment!r}")
        if self.sweep_variable not in SWEEP_VARIABLES:
            raise ParameterError(f"sweep variable must be one of {SWEEP_VARIABLES}")
        vals = tuple(self.sweep_values)
        if not vals:
            raise ParameterError("sweep needs at least one value")
        if any(b <= a for a, b in zip(vals, vals[1:])):
            raise ParameterError(f"sweep values must be strictly increasing: {vals}")
        bad = set(self.methods) - set(METHODS)
        if bad:
            raise ParameterError(f"unknown methods {sorted(bad)}")
        if int(self.q_signals) < 1 or int(self.n_trials) < 1:
            raise ParameterError("q_signals and n_trials must be >= 1")

    def value_params(self, value):
        """Fixed parameters with the sweep variable set to ``value``."""
        params = dict(self.fixed)
        params[self.sweep_variable] = value
        for key in ("m", "N", "s"):
            params[key] = int(params[key])
        return params

    def with_seed(self, seed):
        return replace(self, seed=int(seed))


def _number(text):
    v = float(text)
    return int(v) if v.is_integer() and "e" not in text.lower() and "." not in text else v


def _values(text):
    return tuple(float(t) for t in text.replace(",", " ").split())


def load_config(path, seed=None):
    """Parse an INI-style config file into an :class:`ExperimentConfig`.

    Sections: ``[experiment]`` (type, seed, q_signals, n_trials, methods,
    output), ``[sweep]`` (variable, values), ``[fixed]`` (m, N, I, s, sigma,
    p, c) and an optional free-form ``[options]``.  Unknown keys in the
    first three sections are rejected.
    """
    cp = configparser.ConfigParser()
    cp.optionxform = str
    if not cp.read(path):
        raise ParameterError(f"cannot read config {path}")
    known = {
        "experiment": {"type", "seed", "q_signals", "n_trials", "methods", "output"},
        "sweep": {"variable", "values"},
        "fixed": set(DEFAULT_FIXED),
    }
    for sec, keys in known.items():
        if sec in cp:
            extra = set(cp[sec]) - keys
            if extra:
                raise ParameterError(f"[{sec}]: unknown keys {sorted(extra)}")
    unknown_sections = set(cp.sections()) - set(known) - {"options"}
    if unknown_sections:
        raise ParameterError(f"unknown sections {sorted(unknown_sections)}")
    exp = cp["experiment"] if "experiment" in cp else {}
    fixed = dict(DEFAULT_FIXED)
    if "fixed" in cp:
        fixed.update({k: _number(v) for k, v in cp["fixed"].items()})
    options = {}
    if "options" in cp:
        for k, v in cp["options"].items():
            try:
                options[k] = _number(v)
            except ValueError:
                options[k] = v
    output = exp.get("output")
    if output and not os.path.isabs(output):
        output = os.path.join(os.path.dirname(os.path.abspath(path)), output)
    methods = tuple(t.strip() for t in exp.get("methods", "constrained_vst").split(",") if t.strip())
    return ExperimentConfig(
        experiment=exp.get("type", "recon_sweep"),
        sweep_variable=cp["sweep"]["variable"] if "sweep" in cp else "I",
        sweep_values=_values(cp["sweep"]["values"]) if "sweep" in cp else (fixed["I"],),
        fixed=fixed,
        methods=methods,
        q_signals=int(exp.get("q_signals", 20)),
        n_trials=int(exp.get("n_trials", 200)),
        seed=int(exp.get("seed", 0)) if seed is None else int(seed),
        output_path=output,
        options=options,
    )


def resolve_output(config, default="results"):
    """Output directory: environment override, then config, then ``default``."""
    return os.environ.get(OUTPUT_ENV) or config.output_path or default


def parallel_map(fn, items, threads=1):
    """Ordered map over ``items``; ``threads > 1`` uses worker processes."""
    items = list(items)
    if threads is None:
        threads = os.cpu_count() or 1
    if threads <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ProcessPoolExecutor(max_workers=min(threads, len(items))) as pool:
        return list(pool.map(fn, items, chunksize=max(1, len(items) // (4 * threads))))


def rrmse(x_true, x_hat):
    """``||x_true - x_hat||_2 / ||x_true||_2``."""
    x_true = np.asarray(x_true, dtype=float)
    x_hat = np.asarray(x_hat, dtype=float)
    ref = float(np.linalg.norm(x_true))
    if ref == 0:
        raise ParameterError("RRMSE undefined for a zero true signal")
    return float(np.linalg.norm(x_true - x_hat)) / ref


def noise_setup(sigma, c=0.375, family=None):
    """Noise model and matching transform for a given Gaussian level."""
    model = NoiseModel.poisson() if sigma == 0 else NoiseModel.poisson_gaussian(sigma)
    if family is None:
        if sigma > 0:
            spec = VstSpec.gat(sigma, c=c)
        else:
            spec = VstSpec("anscombe", c) if c > 0 else VstSpec.bartlett()
    else:
        spec = spec_for_model(model, family)
    return model, spec


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


# -- residual studies --------------------------------------------------------

RESIDUAL_HEADER = [
    "sweep_name", "sweep_value", "n_trials", "mean_R", "var_R", "ks_stat", "ks_reject_1pct",
    "mean_bound", "var_bound", "var_bound_derived", "var_bound_constant", "intensity",
    "min_gamma", "n_rejected",
]


def _residual_unit(args):
    config, value = args
    prm = config.value_params(value)
    m, n, sigma = prm["m"], prm["N"], float(prm["sigma"])
    matrix = generate_sensing_matrix(n, m, prm["p"], _rng.derive_seed(config.seed, _KEY_MATRIX))
    x = generate_uniform_signal(m, prm["I"], _rng.derive_seed(config.seed, _KEY_SIGNAL))
    gamma = matrix.phi @ x
    min_rate = config.options.get("min_rate")
    if min_rate is not None and gamma.min() < min_rate:
        # raise the intensity until every noise-free rate reaches min_rate
        x = x * (float(min_rate) / gamma.min())
        gamma = matrix.phi @ x
        while gamma.min() < min_rate:  # absorb rounding in the rescale
            x = x * (1.0 + 1e-12)
            gamma = matrix.phi @ x
    model, spec = noise_setup(sigma, prm["c"], config.options.get("family"))
    st = residual_statistics(matrix, x, model, spec, config.n_trials,
                             _rng.derive_seed(config.seed, _KEY_NOISE))
    if sigma > 0:
        vb = _bounds.t3_variance_bound(gamma, prm["c"], sigma)
        vbd = math.nan
        vc = _bounds.t3_variance_constant(prm["c"], sigma)
    else:
        vb = _bounds.t1_variance_bound(gamma, prm["c"])
        vbd = _bounds.t1_variance_bound(gamma, prm["c"], "as_derived")
        vc = _bounds.t1_variance_constant(prm["c"])
    return [
        config.sweep_variable, float(value), st.n_trials, st.mean, st.variance, st.ks_statistic,
        st.ks_reject_1pct, _bounds.mean_bound(n), vb, vbd, vc, float(x.sum()),
        float(gamma.min()), st.n_rejected,
    ]


def fit_mean_exponent(rows):
    """Least-squares slope of ``log mean_R`` against ``log N`` (reported only)."""
    n = np.log([r["sweep_value"] for r in rows])
    mr = np.log([r["mean_R"] for r in rows])
    return float(np.polyfit(n, mr, 1)[0])


def run_residual_sweep(config, threads=1, write=True):
    """Residual-magnitude statistics and bounds for every sweep value.

    ``Phi`` and the normalised signal stay fixed across the sweep (they
    change shape only when ``N`` is swept); trial ``k`` uses the same noise
    stream at every sweep value.
    """
    if config.sweep_variable == "s":
        raise ParameterError("residual sweeps vary N, I or sigma")
    rows = parallel_map(_residual_unit, [(config, v) for v in config.sweep_values], threads)
    if write:
        out = resolve_output(config)
        os.makedirs(out, exist_ok=True)
        _write_csv(os.path.join(out, "rows.csv"), RESIDUAL_HEADER, rows)
    return [dict(zip(RESIDUAL_HEADER, r)) for r in rows]


# -- reconstruction sweeps ---------------------------------------------------


@dataclass
class ExperimentRow:
    sweep_value: float
    method: str
    median_rrmse: float
    q25: float
    q75: float
    n_converged: int
    n_signals: int
    wall_time_s: float = 0.0


ROW_HEADER = ["sweep_name", "sweep_value", "method", "median_rrmse", "q25", "q75",
              "n_converged", "n_signals"]
SIGNAL_HEADER = ["sweep_name", "sweep_value", "method", "signal", "rrmse", "converged",
                 "rho_used", "residual", "infeasible", "n_rejected"]


def _instance(config, prm, q):
    """Signal, matrix and measurements for signal ``q`` (independent of the sweep value)."""
    m, n, s = prm["m"], prm["N"], prm["s"]
    basis = make_dct_basis(m)
    sig = generate_sparse_signal(m, s, prm["I"], basis, _rng.derive_seed(config.seed, _KEY_SIGNAL, q))
    matrix = generate_sensing_matrix(n, m, prm["p"], _rng.derive_seed(config.seed, _KEY_MATRIX, q))
    model, spec = noise_setup(float(prm["sigma"]), prm["c"], config.options.get("family"))
    ms = sample_measurements(matrix, sig.x, model, _rng.derive_seed(config.seed, _KEY_NOISE, q))
    return basis, sig, matrix, spec, ms


def _solve_method(method, config, basis, sig, matrix, spec, ms, rho=None):
    opts = {"max_iter": int(config.options.get("max_iter", 2000))}
    if method == "constrained_vst":
        ms = saturation_reject(ms, spec.offset)
        n_eps = ms.n_retained if int(config.options.get("recompute_epsilon", 1)) else ms.y.size
        eps = float(config.options.get("epsilon_factor", 2.0)) * math.sqrt(n_eps)
        prob = _solvers.make_problem(matrix, basis, ms.y, spec, epsilon=eps,
                                     rejected=ms.rejected_indices, **opts)
        res = _solvers.solve_constrained(prob)
        return res, len(ms.rejected_indices)
    if method == "penalized_vst_omniscient":
        ms = saturation_reject(ms, spec.offset)
        prob = _solvers.make_problem(matrix, basis, ms.y, spec, rho=1.0,
                                     rejected=ms.rejected_indices, **opts)
        return _solvers.omniscient_rho(prob, sig.theta).best_result, len(ms.rejected_indices)
    nll = _solvers.make_problem(matrix, basis, ms.y, spec, fidelity="poisson_nll", rho=1.0, **opts)
    dropped = ms.y.size - nll.n_rows
    if method == "nll_omniscient":
        return _solvers.omniscient_rho(nll, sig.theta).best_result, dropped
    if method == "nll_crossval":
        return _solvers.solve_poisson_nll(replace(nll, rho=rho)), dropped
    raise ParameterError(f"unknown method {method!r}")


def _recon_unit(args):
    config, value, q, methods, cv_rho = args
    prm = config.value_params(value)
    basis, sig, matrix, spec, ms = _instance(config, prm, q)
    out = []
    for method in methods:
        t0 = time.perf_counter()
        res, nrej = _solve_method(method, config, basis, sig, matrix, spec, ms, cv_rho)
        dt = time.perf_counter() - t0
        out.append((method, rrmse(sig.x, res.x_star), res.converged, res.rho_used,
                    res.residual, res.infeasible_flag, nrej, dt))
    return out


def _anchor_errors(args):
    """Per-rho RRMSE of the NLL estimator for one signal at the anchor value."""
    config, value, q = args
    prm = config.value_params(value)
    basis, sig, matrix, spec, ms = _instance(config, prm, q)
    nll = _solvers.make_problem(matrix, basis, ms.y, spec, fidelity="poisson_nll", rho=1.0,
                                max_iter=int(config.options.get("max_iter", 2000)))
    om = _solvers.omniscient_rho(nll, sig.theta)
    norm = float(np.linalg.norm(sig.x))
    return {rho: err / norm for rho, err in om.errors.items()}


def crossval_rho(config, threads=1):
    """The sweep-set rho with the lowest median RRMSE at the anchor value."""
    model_kind = "poisson" if float(config.fixed.get("sigma", 0)) == 0 else "poisson_gaussian"
    if config.sweep_variable == "sigma":
        model_kind = "poisson_gaussian"
    anchor = config.options.get("crossval_anchor",
                                CROSSVAL_ANCHORS[model_kind].get(config.sweep_variable))
    if anchor is None:
        raise ParameterError(f"no cross-validation anchor for sweep over {config.sweep_variable}")
    errs = parallel_map(_anchor_errors, [(config, anchor, q) for q in range(config.q_signals)], threads)
    medians = {rho: float(np.median([e[rho] for e in errs])) for rho in errs[0]}
    return min(sorted(medians), key=lambda r: medians[r]), float(anchor)


def trend_inversions(medians, direction, band=None):
    """Adjacent pairs that move against ``direction`` (+1 up, -1 down).

    With ``band`` (one value per pair) a move counts only when it exceeds
    the band.
    """
    inv = 0
    for k, (a, b) in enumerate(zip(medians, medians[1:])):
        step = (b - a) * direction
        tol = 0.0 if band is None else band[k]
        if step < -tol:
            inv += 1
    return inv


def run_recon_sweep(config, threads=1, write=True):
    """Median/quartile RRMSE per sweep value and method.

    Signal ``q`` uses the same support, coefficients, matrix seed and noise
    stream at every sweep value.
    """
    methods = tuple(config.methods)
    cv_rho, anchor = (None, None)
    if "nll_crossval" in methods:
        cv_rho, anchor = crossval_rho(config, threads)
    units = [(config, v, q, methods, cv_rho)
             for v in config.sweep_values for q in range(config.q_signals)]
    results = parallel_map(_recon_unit, units, threads)
    rows, per_signal, timings = [], [], []
    for i, v in enumerate(config.sweep_values):
        block = results[i * config.q_signals:(i + 1) * config.q_signals]
        for j, method in enumerate(methods):
            recs = [b[j] for b in block]
            err = np.array([r[1] for r in recs])
            q25, med, q75 = np.percentile(err, [25, 50, 75])
            rows.append(ExperimentRow(float(v), method, float(med), float(q25), float(q75),
                                      int(sum(bool(r[2]) for r in recs)), len(recs),
                                      float(sum(r[7] for r in recs))))
            for q, r in enumerate(recs):
                per_signal.append([config.sweep_variable, float(v), method, q, r[1], r[2],
                                   r[3] if r[3] is not None else math.nan, r[4], r[5], r[6]])
    if write:
        out = resolve_output(config)
        os.makedirs(out, exist_ok=True)
        _write_csv(os.path.join(out, "rows.csv"), ROW_HEADER,
                   [[config.sweep_variable, r.sweep_value, r.method, r.median_rrmse, r.q25,
                     r.q75, r.n_converged, r.n_signals] for r in rows])
        _write_csv(os.path.join(out, "per_signal.csv"), SIGNAL_HEADER, per_signal)
        # wall-clock times vary run to run, so they live apart from rows.csv
        _write_csv(os.path.join(out, "timings.csv"), ["sweep_value", "method", "wall_time_s"],
                   [[r.sweep_value, r.method, r.wall_time_s] for r in rows])
        if cv_rho is not None:
            with open(os.path.join(out, "crossval.json"), "w") as fh:
                json.dump({"anchor": anchor, "rho": cv_rho}, fh, indent=2, sort_keys=True)
    return rows


# -- bound validation --------------------------------------------------------


def _certified_matrix(config, prm, basis):
    """First matrix (over ``matrix_search`` candidate seeds) with a certified RIC."""
    tries = int(config.options.get("matrix_search", 1))
    best = None
    for j in range(max(1, tries)):
        mseed = _rng.derive_seed(config.seed, _KEY_MATRIX, j)
        matrix = generate_sensing_matrix(prm["N"], prm["m"], prm["p"], mseed)
        ric = estimate_ric(matrix, basis, prm["s"], mode="exhaustive",
                           budget=int(config.options.get("ric_budget", 10**7)))
        if best is None or ric.delta_lower < best[1].delta_lower:
            best = (matrix, ric)
        if ric.delta_lower < _bounds.RIP_LIMIT:
            return matrix, ric, j + 1
    return best[0], best[1], max(1, tries)


def _coverage_unit(args):
    config, prm, matrix_seed, k, x, theta, eps, spec_fields, model_fields = args
    matrix = generate_sensing_matrix(prm["N"], prm["m"], prm["p"], matrix_seed)
    basis = make_dct_basis(prm["m"])
    model = NoiseModel(*model_fields)
    spec = VstSpec(*spec_fields)
    ms = sample_measurements(matrix, x, model, _rng.derive_seed(config.seed, _rng.TRIAL, k))
    ms = saturation_reject(ms, spec.offset)
    prob = _solvers.make_problem(matrix, basis, ms.y, spec, epsilon=eps,
                                 rejected=ms.rejected_indices)
    res = _solvers.solve_constrained(prob)
    return float(np.linalg.norm(theta - res.theta_star)) / float(x.sum()), bool(res.converged)


def run_bound_validation(config, threads=1, write=True):
    """Empirical coverage of the reconstruction-error bound.

    The RIC of order ``2s`` of ``tilde @ Psi`` is computed exhaustively and
    must be below ``sqrt(2) - 1``; otherwise :class:`PreconditionError` is
    raised, unless ``options.delta_2s`` supplies a hypothesised value (the
    report then records the source as a hypothesis).
    """
    prm = config.value_params(config.sweep_values[0]) if config.sweep_variable == "I" else dict(config.fixed)
    for key in ("m", "N", "s"):
        prm[key] = int(prm[key])
    kappa = float(config.options.get("kappa", 2.0))
    sigma = float(prm["sigma"])
    basis = make_dct_basis(prm["m"])
    matrix, ric, tried = _certified_matrix(config, prm, basis)
    hypothesis = config.options.get("delta_2s")
    diag = (f"exhaustive delta_{2 * prm['s']}={ric.delta_lower:.4f} over {ric.supports_checked} "
            f"supports (best of {tried} matrices); need < {_bounds.RIP_LIMIT:.4f}")
    if ric.delta_lower >= _bounds.RIP_LIMIT and hypothesis is None:
        raise PreconditionError("RIP precondition unmet, bound not applicable: " + diag)
    delta = ric.delta_lower if ric.delta_lower < _bounds.RIP_LIMIT else float(hypothesis)
    source = "certified" if ric.delta_lower < _bounds.RIP_LIMIT else "hypothesis"
    sig = generate_sparse_signal(prm["m"], prm["s"], prm["I"], basis,
                                 _rng.derive_seed(config.seed, _KEY_SIGNAL))
    x, theta = sig.x, sig.theta
    gamma = matrix.phi @ x
    while gamma.min() < 1.0:
        k = (1.0 + 1e-12) / gamma.min()
        x, theta = x * k, theta * k
        gamma = matrix.phi @ x
    intensity = float(x.sum())
    model, spec = noise_setup(sigma, prm["c"])
    model_kind = "poisson_gaussian" if sigma > 0 else "poisson"
    eps = _bounds.epsilon_bound(prm["N"], kappa, model_kind, prm["c"], sigma)[0]
    if sigma > 0:
        bound = _bounds.t4_rre_bound(prm["N"], intensity, prm["s"], prm["c"], sigma, delta, kappa, theta)
    else:
        bound = _bounds.t2_rre_bound(prm["N"], intensity, prm["s"], prm["c"], delta, kappa, theta)
    units = [(config, prm, matrix.seed, k, x, theta, eps,
              (spec.family, spec.c, spec.sigma, spec.alpha, spec.g),
              (model.kind, model.sigma, model.alpha, model.g)) for k in range(config.n_trials)]
    trials = parallel_map(_coverage_unit, units, threads)
    covered = [e <= bound for e, _ in trials]
    frac = sum(covered) / len(covered)
    p = _bounds.tail_probability(prm["N"], kappa)
    required = p - 3.0 * math.sqrt(p * (1.0 - p) / len(covered))
    report = _bounds.bound_report(prm["N"], intensity, prm["s"], prm["c"], sigma, kappa, delta,
                                  m=prm["m"], gamma=gamma, theta=theta)
    summary = {
        "coverage": frac, "required": required, "passed": frac >= required,
        "vacuous": p == 0.0, "delta_2s": delta, "delta_source": source,
        "ric_diagnostic": diag, "epsilon": eps, "rre_bound": bound, "intensity": intensity,
        "min_gamma": float(gamma.min()), "n_trials": len(covered),
        "max_rre": max(e for e, _ in trials),
    }
    if write:
        out = resolve_output(config)
        os.makedirs(out, exist_ok=True)
        with open(os.path.join(out, "bound_report.json"), "w") as fh:
            json.dump({"report": json.loads(report.to_json()), "validation": summary},
                      fh, indent=2, sort_keys=True)
        _write_csv(os.path.join(out, "per_signal.csv"), ["trial", "rre", "bound", "covered", "converged"],
                   [[k, e, bound, cov, conv] for k, ((e, conv), cov) in enumerate(zip(trials, covered))])
    return summary


# -- image reconstruction ----------------------------------------------------


def _patch_unit(args):
    config, value, idx, patch, n_rows, sigma, c, shared = args
    m = patch.size
    side = int(round(math.sqrt(m)))
    basis = make_dct2_basis(side)
    mseed = _rng.derive_seed(config.seed, _rng.PATCH) if shared else _rng.derive_seed(config.seed, _rng.PATCH, idx)
    matrix = generate_sensing_matrix(n_rows, m, 0.5, mseed)
    model, spec = noise_setup(sigma, c)
    ms = sample_measurements(matrix, patch, model, _rng.derive_seed(config.seed, _KEY_NOISE, idx))
    ms = saturation_reject(ms, spec.offset)
    eps = 2.0 * math.sqrt(ms.n_retained)
    prob = _solvers.make_problem(matrix, basis, ms.y, spec, epsilon=eps, rejected=ms.rejected_indices)
    res = _solvers.solve_constrained(prob)
    return res.x_star, bool(res.converged)


def run_image_recon(config, threads=1, write=True):
    """Patch-wise constrained-VST reconstruction of a PGM image.

    The sweep variable is the total image intensity ``I``.  Options:
    ``image_path``, ``patch_side`` (8), ``n_per_patch`` (32), ``stride``
    (patch_side, i.e. non-overlapping), ``shared_matrix`` (0).
    """
    opts = config.options
    image = read_pgm(opts["image_path"])
    side = int(opts.get("patch_side", 8))
    stride = int(opts.get("stride", side))
    n_rows = int(opts.get("n_per_patch", 32))
    shared = bool(int(opts.get("shared_matrix", 0)))
    sigma = float(config.fixed.get("sigma", 0.0))
    c = float(config.fixed.get("c", 0.375))
    if config.sweep_variable != "I":
        raise ParameterError("image experiments sweep the intensity I")
    out = resolve_output(config) if write else None
    results = []
    for v in config.sweep_values:
        truth = image * (float(v) / image.sum())
        patches = extract_patches(truth, side, stride)
        units = [(config, v, k, patches[k], n_rows, sigma, c, shared) for k in range(len(patches))]
        t0 = time.perf_counter()
        solved = parallel_map(_patch_unit, units, threads)
        recon = assemble_patches(np.array([s[0] for s in solved]), truth.shape, side, stride)
        covered = assemble_patches(np.ones_like(patches), truth.shape, side, stride) > 0
        err = rrmse(truth[covered], recon[covered])
        results.append({"I": float(v), "rrmse": err, "n_patches": len(units),
                        "n_converged": sum(s[1] for s in solved),
                        "wall_time_s": time.perf_counter() - t0, "image": recon})
        if write:
            os.makedirs(out, exist_ok=True)
            write_pgm(os.path.join(out, f"recon_I{float(v):.0e}.pgm"), np.maximum(recon, 0.0))
    if write:
        _write_csv(os.path.join(out, "rows.csv"),
                   ["sweep_name", "sweep_value", "method", "rrmse", "n_patches", "n_converged"],
                   [["I", r["I"], "constrained_vst", r["rrmse"], r["n_patches"], r["n_converged"]]
                    for r in results])
    return results


def run_experiment(config, threads=1, write=True):
    runner = {
        "residual_sweep": run_residual_sweep,
        "recon_sweep": run_recon_sweep,
        "bound_validation": run_bound_validation,
        "image_recon": run_image_recon,
    }[config.experiment]
    return runner(config, threads=threads, write=write)


def describe(config):
    """Plain-text plan of what ``config`` would run."""
    d = asdict(config)
    d["output_path"] = resolve_output(config)
    return json.dumps(d, indent=2, sort_keys=True, default=str)
