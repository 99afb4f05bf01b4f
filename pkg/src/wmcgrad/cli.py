"""``wmcgrad`` command line."""

from __future__ import annotations

import argparse
import math
import sys
import time
from pathlib import Path

from . import bench
from .exact import CompileBudgetExceeded, compile_cnf, wmc_brute, wmc_eval
from .logic import DimacsError, parse_dimacs, serialize_dimacs
from .samplers import HashSampler, RngStream, SamplerSpec, ZeroWmc, exact_model_samples, uniform_model_samples
from .sat import BudgetExceeded, Unsatisfiable, solve

EXIT_FAILURE = 1
EXIT_INPUT = 2

DEFAULT_ESTIMATORS = ("exact", "weightme", "tnorm-product", "tnorm-goedel", "sfe")


class CliError(Exception):
    def __init__(self, message: str, code: int = EXIT_FAILURE):
        super().__init__(message)
        self.code = code


def _read(path: str):
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise CliError(f"cannot read {path}: {exc.strerror}", EXIT_INPUT) from exc
    try:
        return parse_dimacs(text)
    except DimacsError as exc:
        raise CliError(f"{path}: {exc}", EXIT_INPUT) from exc


def _instances(args) -> list[bench.Instance]:
    if args.suite:
        if args.suite == "optimize":
            return bench.optimize_suite(args.suite_seed)
        maker = bench.grad_suite if args.suite == "grad" else bench.single_model_suite
        return maker(args.suite_size, args.suite_seed)
    if not args.paths:
        raise CliError("give instance paths or --suite", EXIT_INPUT)
    try:
        found = bench.load_instances(args.paths)
    except FileNotFoundError as exc:
        raise CliError(f"no such file: {exc}", EXIT_INPUT) from exc
    except DimacsError as exc:
        raise CliError(str(exc), EXIT_INPUT) from exc
    if not found:
        raise CliError("no instances matched " + " ".join(args.paths), EXIT_INPUT)
    return found


def cmd_count(args) -> int:
    phi, w, u = _read(args.path)
    start = time.perf_counter()
    if args.brute:
        res = wmc_brute(phi, w, normalization_exponent=u)
        stats = None
    else:
        try:
            circuit = compile_cnf(phi, args.node_budget, args.time_budget)
        except CompileBudgetExceeded as exc:
            raise CliError(f"budget exceeded: {exc}") from exc
        res = wmc_eval(circuit, w, u)
        stats = circuit.stats
    print(f"{math.ldexp(res.value, u):.15g}")
    if args.verbose:
        if stats is not None:
            print(f"c nodes {stats.nodes} cache_hits {stats.cache_hits} decisions {stats.decisions}")
        print(f"c normalization_exponent {u}")
        print(f"c seconds {time.perf_counter() - start:.3f}")
    return 0


def cmd_sample(args) -> int:
    phi, w, _ = _read(args.path)
    if args.count < 1:
        raise CliError("count must be positive", EXIT_INPUT)
    rng = RngStream(args.seed)
    if solve(phi) is None:
        raise CliError("formula is unsatisfiable")
    try:
        if args.sampler == "exact":
            X = exact_model_samples(compile_cnf(phi, None, None), w, args.count, rng)
        elif args.sampler == "hash":
            X = HashSampler(phi, w, SamplerSpec("hash-model", pivot=args.pivot)).samples(args.count, rng)
        else:
            X = uniform_model_samples(phi, args.count, rng, SamplerSpec("uniform-model", pivot=args.pivot))
    except (ZeroWmc, Unsatisfiable, BudgetExceeded) as exc:
        raise CliError(str(exc)) from exc
    out = sys.stdout
    for row in X:
        out.write(" ".join(str(v + 1) if b else str(-(v + 1)) for v, b in enumerate(row)) + " 0\n")
    return 0


def _print_grad_summary(records) -> None:
    for est, (mean, std, count) in bench.summarize(records).items():
        print(f"{est:45s} {mean:+.3f} ± {std:.3f}  (n={count})")
    bad = [r for r in records if r.status != "ok"]
    if bad:
        print(f"{len(bad)} run(s) without a result: " + ", ".join(sorted({r.status for r in bad})))


def cmd_grad_eval(args) -> int:
    suite = bench.SuiteConfig(tuple(_instances(args)), tuple(args.estimators), tuple(args.seeds),
                              args.timeout, args.out, args.threads)
    records = bench.run_grad_eval(suite)
    if args.out is None:
        sys.stdout.write(bench.write_grad_eval(records, None))
    else:
        _print_grad_summary(records)
    return 0


def cmd_optimize(args) -> int:
    suite = bench.SuiteConfig(tuple(_instances(args)), tuple(args.estimators), tuple(args.seeds),
                              args.timeout, args.out, args.threads)
    opt = bench.OptimizeConfig(args.iters, args.lr, args.method, args.supervision, args.sigma,
                               args.nll_threshold, args.trace_dir)
    records = bench.run_optimize(suite, opt)
    if args.out is None:
        sys.stdout.write(bench.write_optimize(records, None))
    else:
        for r in records:
            flag = "solved" if r.solved(opt.nll_threshold) else "FAILED"
            print(f"{r.instance:20s} {r.estimator:35s} seed {r.seed}  best_nll {r.best_nll:.4g}  {flag}")
    return 0


def cmd_generate(args) -> int:
    rng = RngStream(args.seed)
    out = Path(args.out)
    if args.kind in ("grad-suite", "single-suite", "optimize-suite"):
        maker = {"grad-suite": lambda: bench.grad_suite(args.count, args.seed),
                 "single-suite": lambda: bench.single_model_suite(args.count, args.seed),
                 "optimize-suite": lambda: bench.optimize_suite(args.seed)}[args.kind]
        for p in bench.write_instances(maker(), out):
            print(p)
        return 0
    if args.kind == "planted":
        phi, _ = bench.planted_cnf(args.n, args.ratio, rng)
        w = bench.uniformish_weights(args.n, rng)
    elif args.kind == "single":
        phi, _ = bench.unique_model_cnf(args.n, rng)
        w = None
    else:
        phi = bench.xor_blocks_cnf(max(1, args.n // 3), rng)
        w = None
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(serialize_dimacs(phi, w))
    print(out)
    return 0


def _suite_args(p: argparse.ArgumentParser, estimators=DEFAULT_ESTIMATORS) -> None:
    p.add_argument("paths", nargs="*", help="DIMACS files or glob patterns")
    p.add_argument("--suite", choices=("grad", "single", "optimize"), help="use a generated bundled suite")
    p.add_argument("--suite-size", type=int, default=20)
    p.add_argument("--suite-seed", type=int, default=0)
    p.add_argument("--estimators", nargs="+", default=list(estimators),
                   help='estimator strings such as "weightme:s=100,sampler=hash"')
    p.add_argument("--seeds", nargs="+", type=int, default=[0])
    p.add_argument("--timeout", type=float, default=bench.DEFAULT_TIMEOUT, help="seconds per gradient")
    p.add_argument("--threads", type=int, default=bench.default_threads(),
                   help=f"worker processes (default from ${bench.THREADS_ENV}, else 1)")
    p.add_argument("--out", help="CSV output path (timings go to a .timing.csv sidecar)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="wmcgrad", description="Weighted model counting and its gradients.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("count", help="exact weighted model count")
    p.add_argument("path")
    p.add_argument("--brute", action="store_true", help="enumerate interpretations instead of compiling")
    p.add_argument("--node-budget", type=int, default=10_000_000)
    p.add_argument("--time-budget", type=float, default=300.0)
    p.add_argument("-v", "--verbose", action="store_true")
    p.set_defaults(fn=cmd_count)

    p = sub.add_parser("sample", help="draw models")
    p.add_argument("path")
    p.add_argument("--sampler", choices=("exact", "hash", "uniform"), default="exact")
    p.add_argument("--count", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--pivot", type=int, default=73)
    p.set_defaults(fn=cmd_sample)

    p = sub.add_parser("grad-eval", help="cosine similarity of estimators against exact gradients")
    _suite_args(p)
    p.set_defaults(fn=cmd_grad_eval)

    p = sub.add_parser("optimize", help="maximize log WMC with each estimator")
    _suite_args(p)
    p.add_argument("--iters", type=int, default=10_000)
    p.add_argument("--lr", type=float, default=0.05)
    p.add_argument("--method", choices=("adaptive", "sgd"), default="adaptive")
    p.add_argument("--supervision", type=float, default=None, metavar="FRACTION",
                   help="concept-supervised init with this fraction of variables set toward a model")
    p.add_argument("--sigma", type=float, default=0.1)
    p.add_argument("--nll-threshold", type=float, default=1e-2)
    p.add_argument("--trace-dir", help="write one per-iteration trace CSV per run here")
    p.set_defaults(fn=cmd_optimize)

    p = sub.add_parser("generate", help="write benchmark instances")
    p.add_argument("kind", choices=("planted", "single", "xor", "grad-suite", "single-suite", "optimize-suite"))
    p.add_argument("--n", type=int, default=50)
    p.add_argument("--ratio", type=float, default=6.0)
    p.add_argument("--count", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="file (single instance) or directory (suite)")
    p.set_defaults(fn=cmd_generate)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except CliError as exc:
        print(f"wmcgrad: {exc}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
