"""Command-line front end.

Exit codes: 0 success, 1 usage error, 2 runtime or domain error, 3 a
validation check failed.  Errors go to stderr as ``ERR:<code>: message``.
"""

import argparse
import json
import logging
import math
import os
import sys
from dataclasses import replace

from . import bounds as _bounds
from . import harness, solvers
from .errors import DimensionError, VstcsError
from .noise import NoiseModel, read_measurements_csv, sample_measurements, saturation_reject, write_measurements_csv
from .sensing import generate_sensing_matrix, read_matrix, write_matrix
from .signals import (
    generate_sparse_signal, generate_uniform_signal, make_dct_basis, make_identity_basis,
    read_signal_csv, write_signal_csv,
)
from .vst import VstSpec, residual_statistics

log = logging.getLogger("vstcs")

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME, EXIT_CHECK = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _add_common(p):
    p.add_argument("--seed", type=int, default=0, help="64-bit seed")
    p.add_argument("--dry-run", action="store_true", help="print the resolved plan and exit")
    p.add_argument("--threads", type=int, default=None, help="worker processes (default: all cores)")


def build_parser():
    ap = _Parser(prog="vstcs", description="Poisson compressed sensing with variance stabilisation")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("gen-matrix", help="draw a flux-preserving binary sensing matrix")
    p.add_argument("--N", type=int, default=50)
    p.add_argument("--m", type=int, default=100)
    p.add_argument("--p", type=float, default=0.5)
    p.add_argument("--out", required=True)
    _add_common(p)

    p = sub.add_parser("simulate", help="simulate measurements of a signal")
    p.add_argument("--matrix", required=True)
    p.add_argument("--signal", help="signal CSV; generated when omitted")
    p.add_argument("--signal-out", help="where to write a generated signal")
    p.add_argument("--s", type=int, default=10)
    p.add_argument("--I", type=float, default=1e8)
    p.add_argument("--sigma", type=float, default=0.0)
    p.add_argument("--out", required=True)
    _add_common(p)

    p = sub.add_parser("residual-stats", help="Monte-Carlo statistics of the VST residual")
    p.add_argument("--N", type=int, default=50)
    p.add_argument("--m", type=int, default=1000)
    p.add_argument("--I", type=float, default=1e3)
    p.add_argument("--sigma", type=float, default=0.0)
    p.add_argument("--c", type=float, default=0.375)
    p.add_argument("--trials", type=int, default=2000)
    p.add_argument("--min-rate", type=float, default=None)
    _add_common(p)

    p = sub.add_parser("reconstruct", help="single reconstruction from files")
    p.add_argument("--matrix", required=True)
    p.add_argument("--measurements", required=True)
    p.add_argument("--method", choices=("p3", "p4", "p5", "pg3", "pg5"), default="p3")
    g = p.add_mutually_exclusive_group()
    g.add_argument("--epsilon", type=float)
    g.add_argument("--rho", type=float)
    p.add_argument("--sigma", type=float, default=0.0)
    p.add_argument("--c", type=float, default=0.375)
    p.add_argument("--basis", choices=("dct", "identity"), default="dct")
    p.add_argument("--max-iter", type=int, default=2000)
    p.add_argument("--trace", help="write the iteration trace CSV here")
    p.add_argument("--out", required=True)
    _add_common(p)

    p = sub.add_parser("experiment", help="run an experiment config")
    p.add_argument("--config", required=True)
    p.add_argument("--output", help="output directory (overrides the config)")
    _add_common(p)

    p = sub.add_parser("bounds", help="evaluate the closed-form bounds")
    p.add_argument("--N", type=int, default=50)
    p.add_argument("--m", type=int, default=None)
    p.add_argument("--I", type=float, default=None)
    p.add_argument("--s", type=int, default=None)
    p.add_argument("--c", type=float, default=0.375)
    p.add_argument("--sigma", type=float, default=0.0)
    p.add_argument("--kappa", type=float, default=2.5)
    p.add_argument("--delta2s", type=float, default=None)
    p.add_argument("--model", choices=("poisson", "poisson_gaussian"), default=None)
    _add_common(p)

    p = sub.add_parser("image", help="patch-wise image reconstruction")
    p.add_argument("--image", required=True)
    p.add_argument("--I", type=float, nargs="+", default=[1e6, 1e8, 1e10])
    p.add_argument("--sigma", type=float, default=0.0)
    p.add_argument("--patch-side", type=int, default=8)
    p.add_argument("--n-per-patch", type=int, default=32)
    p.add_argument("--stride", type=int, default=None)
    p.add_argument("--shared-matrix", action="store_true")
    p.add_argument("--output", default=None)
    _add_common(p)
    return ap


def _plan(args):
    d = {k: v for k, v in vars(args).items()}
    return json.dumps(d, indent=2, sort_keys=True, default=str)


def _cmd_gen_matrix(args):
    mat = generate_sensing_matrix(args.N, args.m, args.p, args.seed)
    write_matrix(args.out, mat)
    print(f"wrote {args.N}x{args.m} matrix to {args.out}")


def _cmd_simulate(args):
    mat = read_matrix(args.matrix)
    if args.signal:
        x = read_signal_csv(args.signal)
    else:
        sig = generate_sparse_signal(mat.n_cols, args.s, args.I, make_dct_basis(mat.n_cols), args.seed)
        x = sig.x
        if args.signal_out:
            write_signal_csv(args.signal_out, x)
    model = NoiseModel.poisson() if args.sigma == 0 else NoiseModel.poisson_gaussian(args.sigma)
    ms = sample_measurements(mat, x, model, args.seed)
    if args.sigma > 0:
        ms = saturation_reject(ms, VstSpec.gat(args.sigma).offset)
    write_measurements_csv(args.out, ms)
    print(f"wrote {ms.y.size} measurements ({len(ms.rejected_indices)} rejected) to {args.out}")


def _cmd_residual_stats(args):
    mat = generate_sensing_matrix(args.N, args.m, 0.5, args.seed)
    x = generate_uniform_signal(args.m, args.I, args.seed)
    gamma = mat.phi @ x
    if args.min_rate is not None and gamma.min() < args.min_rate:
        x = x * (args.min_rate / gamma.min()) * (1.0 + 1e-12)
        gamma = mat.phi @ x
    model, spec = harness.noise_setup(args.sigma, args.c)
    st = residual_statistics(mat, x, model, spec, args.trials, args.seed)
    if args.sigma > 0:
        vb = _bounds.t3_variance_bound(gamma, args.c, args.sigma)
    else:
        vb = _bounds.t1_variance_bound(gamma, args.c)
    print(json.dumps({
        "N": args.N, "I": float(x.sum()), "sigma": args.sigma, "n_trials": st.n_trials,
        "mean_R": st.mean, "var_R": st.variance, "ks_stat": st.ks_statistic,
        "ks_reject_1pct": st.ks_reject_1pct, "mean_bound": _bounds.mean_bound(args.N),
        "var_bound": vb, "n_rejected": st.n_rejected,
    }, indent=2))


def _cmd_reconstruct(args):
    mat = read_matrix(args.matrix)
    ms = read_measurements_csv(args.measurements)
    if ms.y.size != mat.n_rows:
        raise DimensionError(f"measurements have {ms.y.size} entries but the matrix has {mat.n_rows} rows")
    basis = make_dct_basis(mat.n_cols) if args.basis == "dct" else make_identity_basis(mat.n_cols)
    pg = args.method.startswith("pg")
    spec = VstSpec.gat(args.sigma, c=args.c) if pg else VstSpec("anscombe", args.c) if args.c > 0 else VstSpec.bartlett()
    if args.method != "p4":
        ms = saturation_reject(ms, spec.offset)
    opts = {"max_iter": args.max_iter}
    if args.method in ("p3", "pg3"):
        eps = args.epsilon if args.epsilon is not None else 2.0 * math.sqrt(ms.n_retained)
        prob = solvers.make_problem(mat, basis, ms.y, spec, epsilon=eps,
                                    rejected=ms.rejected_indices, **opts)
        res = solvers.solve_constrained(prob, record_trace=bool(args.trace))
    else:
        if args.rho is None:
            raise UsageError(f"--rho is required for {args.method}")
        if args.method == "p4":
            prob = solvers.make_problem(mat, basis, ms.y, spec, fidelity="poisson_nll", rho=args.rho, **opts)
            res = solvers.solve_poisson_nll(prob, record_trace=bool(args.trace))
        else:
            prob = solvers.make_problem(mat, basis, ms.y, spec, rho=args.rho,
                                        rejected=ms.rejected_indices, **opts)
            res = solvers.solve_penalized(prob, record_trace=bool(args.trace))
    write_signal_csv(args.out, res.x_star)
    if args.trace and res.trace:
        solvers.write_trace_csv(args.trace, res.trace)
    print(json.dumps({
        "method": args.method, "objective": res.objective, "residual": res.residual,
        "iterations": res.iterations, "converged": res.converged,
        "infeasible": res.infeasible_flag, "rho_used": res.rho_used,
    }, indent=2))


def _cmd_experiment(args):
    cfg = harness.load_config(args.config, seed=args.seed if args.seed_given else None)
    if args.output:
        cfg = replace(cfg, output_path=args.output)
    log.info("resolved config: %s", harness.describe(cfg).replace("\n", " "))
    if args.dry_run:
        print(harness.describe(cfg))
        return EXIT_OK
    result = harness.run_experiment(cfg, threads=args.threads)
    out = harness.resolve_output(cfg)
    print(f"wrote results to {out}")
    if cfg.experiment == "bound_validation":
        print(json.dumps(result, indent=2, sort_keys=True))
        if not result["passed"]:
            return EXIT_CHECK
    return EXIT_OK


def _cmd_bounds(args):
    rep = _bounds.bound_report(args.N, args.I, args.s, args.c, args.sigma, args.kappa,
                               args.delta2s, m=args.m, model=args.model)
    print(rep.to_json(indent=2))


def _cmd_image(args):
    opts = {"image_path": os.path.abspath(args.image), "patch_side": args.patch_side,
            "n_per_patch": args.n_per_patch, "stride": args.stride or args.patch_side,
            "shared_matrix": int(args.shared_matrix)}
    fixed = dict(harness.DEFAULT_FIXED, sigma=args.sigma, m=args.patch_side**2, N=args.n_per_patch)
    cfg = harness.ExperimentConfig("image_recon", "I", tuple(sorted(args.I)), fixed,
                                   seed=args.seed, output_path=args.output, options=opts)
    log.info("resolved config: %s", harness.describe(cfg).replace("\n", " "))
    if args.dry_run:
        print(harness.describe(cfg))
        return EXIT_OK
    res = harness.run_image_recon(cfg, threads=args.threads)
    for r in res:
        print(f"I={r['I']:.3g} rrmse={r['rrmse']:.4f} patches={r['n_patches']} converged={r['n_converged']}")
    return EXIT_OK


COMMANDS = {
    "gen-matrix": _cmd_gen_matrix,
    "simulate": _cmd_simulate,
    "residual-stats": _cmd_residual_stats,
    "reconstruct": _cmd_reconstruct,
    "experiment": _cmd_experiment,
    "bounds": _cmd_bounds,
    "image": _cmd_image,
}


def main(argv=None):
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args = build_parser().parse_args(argv)
        args.seed_given = any(a == "--seed" or a.startswith("--seed=") for a in argv)
        logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                            format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
        if args.command not in ("experiment", "image"):
            log.info("resolved arguments: %s (seed=%d)", _plan(args).replace("\n", " "), args.seed)
            if args.dry_run:
                print(_plan(args))
                return EXIT_OK
        code = COMMANDS[args.command](args)
        return EXIT_OK if code is None else code
    except UsageError as exc:
        print(f"ERR:USAGE: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except VstcsError as exc:
        print(f"ERR:{exc.code}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except (OSError, ValueError, KeyError) as exc:
        print(f"ERR:RUNTIME: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
