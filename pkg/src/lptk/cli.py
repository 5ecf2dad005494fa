"""Command-line interface.

Subcommands: generate, gram-build, solve, bench-rates, bench-kernel,
recover. Options may come from a flat key=value config file (--config);
explicit flags take precedence over config values, which take precedence
over built-in defaults. Every numeric output is deterministic given
--seed; the effective configuration is echoed into report headers.

Exit codes: 0 success, 1 solver failure, 2 invalid arguments.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from .datasets import Dataset, SyntheticSpec, generate_sparse_regression
from .duality import Exponents
from .kernels import GramTensor, TensorKernelSpec, build_gram
from .losses import LossSpec
from .reports import write_kernel_report, write_rate_report, write_recovery_report
from .solvers import (
    SolverConfig,
    SolverError,
    solution_from_features,
    solution_from_gram,
    solve_dual_ls_q4,
    solve_dual_prox_grad,
    write_trace_csv,
)

_LOSSES = ("square", "hinge", "logistic", "eps_insensitive", "huber")
_KERNELS = {"linear": "linear", "poly": "polynomial", "poly2": "polynomial",
            "polynomial": "polynomial", "exp": "exponential", "exponential": "exponential"}

_TRUE_WORDS = {"1", "true", "yes", "on"}
_FALSE_WORDS = {"0", "false", "no", "off"}


def _parse_bool(text: str) -> bool:
    low = text.strip().lower()
    if low in _TRUE_WORDS:
        return True
    if low in _FALSE_WORDS:
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


class _Options:
    """A subcommand's option table: argparse wiring plus defaults kept
    aside so the config file can slot between flags and defaults."""

    def __init__(self, sub):
        self.sub = sub
        self.records = {}  # dest -> (type, default, required)

    def add(self, flag: str, *, type=str, default=None, required=False,
            choices=None, help=None, flag_only=False):
        dest = flag.lstrip("-").replace("-", "_")
        if flag_only:
            self.sub.add_argument(flag, action="store_true", default=None, help=help)
            self.records[dest] = (_parse_bool, False, False)
        else:
            self.sub.add_argument(flag, type=str, default=None, choices=None if choices is None
                                  else [str(c) for c in choices], help=help)
            self.records[dest] = (type, default, required)

    def finalize(self, args: argparse.Namespace) -> argparse.Namespace:
        file_values = _read_config_file(args.config) if args.config else {}
        for dest, (typ, default, required) in self.records.items():
            val = getattr(args, dest, None)
            if val is None and dest in file_values:
                val = file_values[dest]
            if val is None:
                val = default
            elif isinstance(val, str):
                val = typ(val)
            if val is None and required:
                raise ValueError(f"missing required option --{dest.replace('_', '-')}")
            setattr(args, dest, val)
        return args


def _read_config_file(path: str) -> dict[str, str]:
    values = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected key=value, got {raw!r}")
        key, val = line.split("=", 1)
        values[key.strip().replace("-", "_")] = val.strip()
    return values


def _parse_p_token(tok: str) -> float:
    if "/" in tok:
        num, den = tok.split("/", 1)
        return float(num) / float(den)
    return float(tok)


def _parse_float_list(text: str) -> list[float]:
    return [_parse_p_token(t) for t in text.split(",") if t.strip()]


def _exponents_from_args(p, q) -> Exponents:
    if p is not None and q is not None:
        raise ValueError("give either --p or --q, not both")
    if q is not None:
        return Exponents.from_q(float(q))
    if p is None:
        return Exponents.from_q(4)
    return Exponents.from_p(_parse_p_token(p))


def _add_synth(opt: _Options, n, d, k):
    opt.add("--n", type=int, default=n)
    opt.add("--d", type=int, default=d)
    opt.add("--k", type=int, default=k)
    opt.add("--sigma", type=float, default=0.05)
    opt.add("--seed", type=int, default=1)


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="lptk",
        description="lp-norm regularized learning via tensor-kernel duals",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    tables: dict[str, _Options] = {}

    def new(name, help):
        sp = sub.add_parser(name, help=help)
        sp.add_argument("--config", default=None, help="flat key=value config file")
        opt = _Options(sp)
        tables[name] = opt
        return opt

    g = new("generate", "write a synthetic sparse-regression dataset")
    _add_synth(g, 200, 10_000, 10)
    g.add("--feature-mode", default="identity", choices=("identity", "poly2"))
    g.add("--coef-mode", default="normal", choices=("normal", "unit"))
    g.add("--out", required=True)

    b = new("gram-build", "build and serialize the order-4 Gram tensor")
    b.add("--data", required=True)
    b.add("--kernel", default="linear", choices=sorted(_KERNELS))
    b.add("--degree", type=int, default=2)
    b.add("--max-n", type=int, default=150)
    b.add("--out", required=True)

    s = new("solve", "solve the dual problem on a dataset")
    s.add("--data", required=True)
    s.add("--features", flag_only=True, help="use the explicit feature-map path")
    s.add("--gram-file", help="use a precomputed Gram tensor")
    s.add("--loss", default="square", choices=_LOSSES)
    s.add("--p")
    s.add("--q")
    s.add("--gamma", type=float, default=10.0)
    s.add("--eps", type=float, default=0.1)
    s.add("--rho", type=float, default=1.0)
    s.add("--tol", type=float, default=1e-8)
    s.add("--max-iter", type=int, default=50_000)
    s.add("--delta", type=float)
    s.add("--theta", type=float, default=0.5)
    s.add("--lambda-bar", type=float)
    s.add("--algorithm", default="auto", choices=("auto", "gd", "prox"),
          help="gd: square-loss gradient descent; prox: general loop")
    s.add("--trace", help="write the iteration trace CSV here")
    s.add("--out", help="write alpha (and w on the feature path) as CSV")

    r = new("bench-rates", "dual vs primal iteration-count benchmark")
    _add_synth(r, 200, 10_000, 10)
    r.add("--gamma", type=float, default=10.0)
    r.add("--p-list", default="4/3,5/4,1.1,1.05")
    r.add("--outdir", default="reports")
    r.add("--no-figures", flag_only=True)

    kt = new("bench-kernel", "Gram-vs-feature timing benchmark")
    _add_synth(kt, 90, 650, 6)
    kt.add("--gamma", type=float, default=10.0)
    kt.add("--outdir", default="reports")
    kt.add("--no-figures", flag_only=True)

    rc = new("recover", "support-recovery experiment")
    _add_synth(rc, 85, 1500, 6)
    rc.add("--gammas", default="1,10,100")
    rc.add("--p", default="4/3")
    rc.add("--top-k", type=int)
    rc.add("--n-seeds", type=int, default=10)
    rc.add("--coef-mode", default="unit", choices=("normal", "unit"))
    rc.add("--outdir", default="reports")
    rc.add("--no-figures", flag_only=True)

    return parser, tables


def _cmd_generate(args) -> int:
    spec = SyntheticSpec(
        n=args.n, d=args.d, k=args.k, sigma=args.sigma, seed=args.seed,
        feature_mode=args.feature_mode, coef_mode=args.coef_mode,
    )
    ds = generate_sparse_regression(spec)
    ds.save(args.out)
    print(f"wrote {args.out}: n={ds.n} d={ds.d} k={spec.k} seed={spec.seed} "
          f"feature_mode={spec.feature_mode}")
    return 0


def _cmd_gram_build(args) -> int:
    ds = Dataset.load(args.data)
    spec = TensorKernelSpec(kind=_KERNELS[args.kernel], degree=args.degree)
    gram = build_gram(ds.x, spec, max_n=args.max_n)
    gram.save(args.out)
    print(f"wrote {args.out}: n={gram.n} kernel={spec.kind} degree={spec.degree} "
          f"evaluations={gram.build_evals}")
    return 0


def _cmd_solve(args) -> int:
    if bool(args.features) == bool(args.gram_file):
        raise ValueError("exactly one of --features or --gram-file is required")
    ds = Dataset.load(args.data)
    exps = _exponents_from_args(args.p, args.q)
    loss = LossSpec(kind=args.loss, eps=args.eps, rho=args.rho)
    y = ds.y
    if loss.is_margin:
        y = np.where(ds.y >= 0, 1.0, -1.0)
        print("margin loss: using sign(y) as labels")
    cfg = SolverConfig(
        gamma=args.gamma, exps=exps, tol=args.tol, max_iter=args.max_iter,
        delta=args.delta, theta=args.theta, lambda_bar=args.lambda_bar,
        seed=ds.spec.seed,
    )
    echo = {
        "data": args.data, "loss": args.loss, "p": exps.p, "q": exps.q,
        "gamma": args.gamma, "tol": args.tol, "theta": cfg.theta,
        "seed": ds.spec.seed,
    }
    if args.gram_file:
        gram = GramTensor.load(args.gram_file)
        if args.algorithm in ("auto", "gd") and loss.kind == "square":
            state = solve_dual_ls_q4(gram, y, cfg)
        else:
            state = solve_dual_prox_grad(gram, y, loss, cfg)
        sol = solution_from_gram(gram, state.alpha, y, loss, args.gamma, exps)
    else:
        if args.algorithm == "gd":
            raise ValueError("--algorithm gd requires --gram-file (kernelized path)")
        phi = ds.feature_operator()
        state = solve_dual_prox_grad(phi, y, loss, cfg, w_ref=ds.w_true, phi_ref=phi)
        sol = solution_from_features(phi, state.alpha, y, loss, args.gamma, exps)
    print(f"iterations={state.iterations} stop={state.stop_reason} "
          f"backtracks={state.linesearch_backtracks}")
    print(f"dual objective={sol.dual_value!r}")
    print(f"primal objective={sol.primal_value!r}")
    print(f"duality gap={sol.gap!r}")
    print(f"kkt residual={sol.kkt_residual!r}")
    if args.trace:
        write_trace_csv(state.history, args.trace, header=echo)
        print(f"wrote {args.trace}")
    if args.out:
        import csv as _csv

        with open(args.out, "w", newline="") as fh:
            fh.write("".join(f"# {k}={v}\n" for k, v in echo.items()))
            writer = _csv.writer(fh)
            if sol.w is not None:
                writer.writerow(["index", "alpha", "w"])
                for i in range(max(len(sol.alpha), len(sol.w))):
                    writer.writerow([
                        i,
                        repr(float(sol.alpha[i])) if i < len(sol.alpha) else "",
                        repr(float(sol.w[i])) if i < len(sol.w) else "",
                    ])
            else:
                writer.writerow(["index", "alpha"])
                for i, a in enumerate(sol.alpha):
                    writer.writerow([i, repr(float(a))])
        print(f"wrote {args.out}")
    return 0


def _cmd_bench_rates(args) -> int:
    from .experiments import run_rate_experiment

    spec = SyntheticSpec(n=args.n, d=args.d, k=args.k, sigma=args.sigma, seed=args.seed)
    report = run_rate_experiment(_parse_float_list(args.p_list), spec, args.gamma)
    for p in write_rate_report(report, args.outdir, figures=not args.no_figures):
        print(f"wrote {p}")
    return 0


def _cmd_bench_kernel(args) -> int:
    from .experiments import run_kernel_timing_experiment

    spec = SyntheticSpec(
        n=args.n, d=args.d, k=args.k, sigma=args.sigma, seed=args.seed,
        feature_mode="poly2",
    )
    report = run_kernel_timing_experiment(spec, args.gamma)
    for p in write_kernel_report(report, args.outdir, figures=not args.no_figures):
        print(f"wrote {p}")
    return 0


def _cmd_recover(args) -> int:
    from .experiments import run_recovery_experiment

    spec = SyntheticSpec(
        n=args.n, d=args.d, k=args.k, sigma=args.sigma, seed=args.seed,
        coef_mode=args.coef_mode,
    )
    report = run_recovery_experiment(
        spec, gammas=tuple(_parse_float_list(args.gammas)),
        p=_parse_p_token(args.p), top_k=args.top_k, n_seeds=args.n_seeds,
    )
    for pth in write_recovery_report(report, args.outdir, figures=not args.no_figures):
        print(f"wrote {pth}")
    return 0


_COMMANDS = {
    "generate": _cmd_generate,
    "gram-build": _cmd_gram_build,
    "solve": _cmd_solve,
    "bench-rates": _cmd_bench_rates,
    "bench-kernel": _cmd_bench_kernel,
    "recover": _cmd_recover,
}


def main(argv=None) -> int:
    parser, tables = _build_parser()
    args = parser.parse_args(argv)
    try:
        args = tables[args.command].finalize(args)
        return _COMMANDS[args.command](args)
    except SolverError as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return 1
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
