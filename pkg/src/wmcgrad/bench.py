"""Benchmark harness: instance generators, gradient-quality and optimization suites."""

from __future__ import annotations

import csv
import glob
import io
import math
import multiprocessing
import os
import time
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .estimators import estimate, parse_config, sfe_grad
from .exact import compile_cnf, wmc_grad
from .logic import CnfFormula, WeightMap, parse_dimacs, serialize_dimacs
from .optimizer import InitSpec, init_weights, train
from .samplers import RngStream
from .sat import solve
from .timeouts import GradientTimeout, time_limit

CSV_VERSION = 1
THREADS_ENV = "WMCGRAD_THREADS"
DEFAULT_TIMEOUT = 300.0


# ------------------------------------------------------------ utilities


def cosine_similarity(g1, g2) -> float:
    """Cosine of the angle between two gradients; 0 if either is zero."""
    a = np.asarray(getattr(g1, "values", g1), dtype=float)
    b = np.asarray(getattr(g2, "values", g2), dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"length mismatch: {a.shape} vs {b.shape}")
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        return 0.0
    return float(np.clip(a @ b / (na * nb), -1.0, 1.0))


def is_degenerate(g1, g2) -> bool:
    a = np.asarray(getattr(g1, "values", g1), dtype=float)
    b = np.asarray(getattr(g2, "values", g2), dtype=float)
    return not (np.any(a) and np.any(b))


def default_threads() -> int:
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        return 1


def stable_key(*parts: str) -> int:
    return zlib.crc32("\x1f".join(parts).encode())


# ----------------------------------------------------------- generators


@dataclass(frozen=True)
class Instance:
    name: str
    phi: CnfFormula
    w: WeightMap
    u: int = 0
    planted: tuple[bool, ...] | None = None


def _random_clause(n: int, k: int, rng: RngStream) -> tuple[int, ...]:
    vs = rng.permutation(n)[:k] + 1
    signs = rng.random(k) < 0.5
    return tuple(int(v) if s else -int(v) for v, s in zip(vs, signs))


def planted_cnf(n: int, ratio: float, rng: RngStream, k: int = 3,
                model: np.ndarray | None = None) -> tuple[CnfFormula, np.ndarray]:
    """Random k-CNF with ``round(ratio * n)`` clauses, all satisfied by a planted model."""
    if n < k:
        raise ValueError("need at least k variables")
    z = rng.random(n) < 0.5 if model is None else np.asarray(model, dtype=bool)
    clauses = []
    while len(clauses) < round(ratio * n):
        c = _random_clause(n, k, rng)
        if any(z[abs(l) - 1] == (l > 0) for l in c):
            clauses.append(c)
    return CnfFormula.from_clauses(n, clauses), z


def unique_model_cnf(n: int, rng: RngStream, ratio: float = 3.0, k: int = 3) -> tuple[CnfFormula, np.ndarray]:
    """Planted k-CNF whose only model is the planted one.

    Starts from a planted formula and repeatedly adds a clause satisfied by
    the planted model but falsified by some other model until none remains.
    """
    phi, z = planted_cnf(n, ratio, rng, k)
    clauses = list(phi.clauses)
    block = tuple(-(v + 1) if z[v] else v + 1 for v in range(n))
    while True:
        other = solve(CnfFormula(n, tuple(clauses) + (block,)), phases=rng.random(n) < 0.5)
        if other is None:
            return CnfFormula.from_clauses(n, clauses), z
        diff = np.flatnonzero(other != z)
        pick = [int(diff[rng.integers(len(diff))])]
        rest = [int(v) for v in rng.permutation(n) if v != pick[0]][: k - 1]
        # every literal false under `other`; the differing one is true under z
        clauses.append(tuple(-(v + 1) if other[v] else v + 1 for v in pick + rest))


def xor_blocks_cnf(blocks: int, rng: RngStream, width: int = 3) -> CnfFormula:
    """Disjoint parity constraints over ``width`` variables, written as CNF.

    The product t-norm treats the clauses of a block as independent and
    has a stationary point at ``w = 1/2``, which makes these instances a
    stress test for fuzzy relaxations.
    """
    clauses = []
    for b in range(blocks):
        vs = [b * width + j + 1 for j in range(width)]
        parity = int(rng.integers(2))
        for bits in range(1 << width):
            signs = [(bits >> j) & 1 for j in range(width)]
            # forbid each assignment with the wrong parity
            if sum(signs) % 2 != parity:
                clauses.append(tuple(-v if s else v for v, s in zip(vs, signs)))
    return CnfFormula.from_clauses(blocks * width, clauses)


def uniformish_weights(n: int, rng: RngStream, sigma: float = 0.1, margin: float = 0.05) -> WeightMap:
    return WeightMap(np.clip(0.5 + rng.normal(0.0, sigma, n), margin, 1.0 - margin))


def grad_suite(count: int = 20, seed: int = 0, sizes: Sequence[int] = (50, 75, 100, 150, 200),
               ratio: float = 6.0) -> list[Instance]:
    """Planted random 3-CNFs with near-uniform weights."""
    out = []
    for i in range(count):
        rng = RngStream(seed, (1, i))
        n = sizes[i % len(sizes)]
        phi, z = planted_cnf(n, ratio, rng)
        out.append(Instance(f"planted-n{n:03d}-{i:02d}", phi, uniformish_weights(n, rng), planted=tuple(z)))
    return out


def single_model_suite(count: int = 20, seed: int = 0, sizes: Sequence[int] = (20, 25, 30)) -> list[Instance]:
    """Unique-model instances with every weight at 1/2."""
    out = []
    for i in range(count):
        rng = RngStream(seed, (2, i))
        n = sizes[i % len(sizes)]
        phi, z = unique_model_cnf(n, rng)
        out.append(Instance(f"single-n{n:03d}-{i:02d}", phi, WeightMap.uniform(n), planted=tuple(z)))
    return out


def optimize_suite(seed: int = 0) -> list[Instance]:
    """Random satisfiable instances plus two crafted hard cases.

    ``xor`` defeats the product t-norm. The ``single`` instances have one
    model among 2^60 and 2^120 interpretations; the larger one stays out of
    reach of interpretation sampling even after 90% concept supervision.
    """
    out = []
    for i, n in enumerate((20, 30, 40)):
        rng = RngStream(seed, (3, i))
        phi, z = planted_cnf(n, 4.0, rng)
        out.append(Instance(f"planted-n{n:03d}", phi, WeightMap.uniform(n), planted=tuple(z)))
    rng = RngStream(seed, (4,))
    out.append(Instance("xor-n030", xor_blocks_cnf(10, rng), WeightMap.uniform(30)))
    phi, z = unique_model_cnf(60, RngStream(seed, (5,)))
    out.append(Instance("single-n060", phi, WeightMap.uniform(60), planted=tuple(z)))
    phi, z = unique_model_cnf(120, RngStream(seed, (5, 1)))
    out.append(Instance("single-n120", phi, WeightMap.uniform(120), planted=tuple(z)))
    return out


def write_instances(instances: Iterable[Instance], directory: str | Path) -> list[Path]:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for inst in instances:
        path = directory / f"{inst.name}.cnf"
        path.write_text(serialize_dimacs(inst.phi, inst.w))
        paths.append(path)
    return paths


def load_instances(patterns: Iterable[str]) -> list[Instance]:
    """Read DIMACS files named directly or through glob patterns."""
    paths: list[str] = []
    for pat in patterns:
        hits = sorted(glob.glob(pat))
        if not hits and not any(ch in pat for ch in "*?["):
            raise FileNotFoundError(pat)
        paths.extend(hits)
    out = []
    for p in paths:
        phi, w, u = parse_dimacs(Path(p).read_text())
        out.append(Instance(Path(p).stem, phi, w, u))
    return out


# ------------------------------------------------------------- CSV I/O


def _fmt(x) -> str:
    if isinstance(x, float):
        return "nan" if math.isnan(x) else ("inf" if math.isinf(x) else f"{x:.12g}")
    if isinstance(x, bool):
        return str(int(x))
    return str(x)


def write_csv(path: str | Path | None, kind: str, columns: Sequence[str], rows: Iterable[Sequence]) -> str:
    """Versioned, deterministic CSV text; also written to ``path`` if given."""
    buf = io.StringIO()
    buf.write(f"# wmcgrad {kind} schema v{CSV_VERSION}\n")
    out = csv.writer(buf, lineterminator="\n")
    out.writerow(columns)
    for row in rows:
        out.writerow([_fmt(x) for x in row])
    text = buf.getvalue()
    if path is not None:
        Path(path).write_text(text)
    return text


def timing_path(path: str | Path) -> Path:
    p = Path(path)
    return p.with_name(p.stem + ".timing" + p.suffix)


def read_csv(path_or_text: str | Path) -> list[dict]:
    text = Path(path_or_text).read_text() if isinstance(path_or_text, Path) or os.path.exists(str(path_or_text)) \
        else str(path_or_text)
    lines = [ln for ln in text.splitlines() if not ln.startswith("#")]
    return list(csv.DictReader(lines))


def _mean_std(xs: Sequence[float]) -> tuple[float, float]:
    arr = np.asarray(xs, dtype=float)
    if arr.size == 0:
        return math.nan, math.nan
    return float(arr.mean()), float(arr.std(ddof=1)) if arr.size > 1 else 0.0


# ---------------------------------------------------------- grad-eval


@dataclass(frozen=True)
class BenchmarkRecord:
    instance: str
    estimator: str
    seed: int
    cosine_similarity: float
    degenerate: bool
    samples_used: int
    status: str
    wall_time: float = 0.0
    message: str = ""

    def __post_init__(self):
        if not -1.0 <= self.cosine_similarity <= 1.0 and not math.isnan(self.cosine_similarity):
            raise ValueError("cosine similarity out of range")


@dataclass(frozen=True)
class SuiteConfig:
    instances: tuple[Instance, ...]
    estimators: tuple[str, ...]
    seeds: tuple[int, ...] = (0,)
    timeout: float = DEFAULT_TIMEOUT
    out: str | None = None
    threads: int = field(default_factory=default_threads)

    def __post_init__(self):
        if not self.timeout > 0:
            raise ValueError("timeout must be positive")
        for e in self.estimators:
            parse_config(e)


GRAD_COLUMNS = ("instance", "estimator", "seed", "cosine", "degenerate", "samples_used", "status")


def _grad_eval_instance(args) -> list[BenchmarkRecord]:
    inst, estimators, seeds, timeout = args
    try:
        circuit = compile_cnf(inst.phi, node_budget=None, time_budget=None)
        _, exact_wmc = wmc_grad(circuit, inst.w, of="wmc")
        _, exact_log = wmc_grad(circuit, inst.w, of="logwmc")
    except Exception as exc:  # noqa: BLE001
        return [BenchmarkRecord(inst.name, e, s, math.nan, True, 0, "error", 0.0, f"ground truth: {exc}")
                for e in estimators for s in seeds]
    records = []
    for label in estimators:
        config = parse_config(label)
        for seed in seeds:
            rng = RngStream(seed, (stable_key(inst.name, str(config)),))
            start = time.perf_counter()
            try:
                with time_limit(timeout):
                    report = estimate(config, inst.phi, inst.w, rng, circuit=circuit)
            except GradientTimeout as exc:
                records.append(BenchmarkRecord(inst.name, str(config), seed, math.nan, True, 0, "timeout",
                                               time.perf_counter() - start, str(exc)))
                continue
            except Exception as exc:  # noqa: BLE001
                records.append(BenchmarkRecord(inst.name, str(config), seed, math.nan, True, 0, "error",
                                               time.perf_counter() - start, f"{type(exc).__name__}: {exc}"))
                continue
            truth = exact_log if report.estimate_of == "logwmc" else exact_wmc
            records.append(BenchmarkRecord(
                inst.name, str(config), seed, cosine_similarity(report.gradient, truth),
                is_degenerate(report.gradient, truth), report.samples_used, "ok", time.perf_counter() - start))
    return records


def _fan_out(fn, jobs: list, threads: int) -> list:
    if threads <= 1 or len(jobs) <= 1:
        return [fn(j) for j in jobs]
    ctx = multiprocessing.get_context("fork")
    with ctx.Pool(min(threads, len(jobs))) as pool:
        return list(pool.imap_unordered(fn, jobs))


def run_grad_eval(suite: SuiteConfig) -> list[BenchmarkRecord]:
    """Cosine similarity of every (instance, estimator, seed) against the exact gradient."""
    jobs = [(inst, suite.estimators, suite.seeds, suite.timeout) for inst in suite.instances]
    records = [r for batch in _fan_out(_grad_eval_instance, jobs, suite.threads) for r in batch]
    records.sort(key=lambda r: (r.instance, r.estimator, r.seed))
    if suite.out:
        write_grad_eval(records, suite.out)
    return records


def summarize(records: Sequence[BenchmarkRecord]) -> dict[str, tuple[float, float, int]]:
    """Mean, sample standard deviation and count of ok cosines per estimator."""
    by: dict[str, list[float]] = {}
    for r in records:
        if r.status == "ok":
            by.setdefault(r.estimator, []).append(r.cosine_similarity)
    return {e: (*_mean_std(xs), len(xs)) for e, xs in sorted(by.items())}


def write_grad_eval(records: Sequence[BenchmarkRecord], path: str | Path | None) -> str:
    rows = [(r.instance, r.estimator, r.seed, r.cosine_similarity, r.degenerate, r.samples_used, r.status)
            for r in records]
    for est, (mean, std, count) in summarize(records).items():
        rows.append(("summary:mean", est, count, mean, "", "", "ok"))
        rows.append(("summary:std", est, count, std, "", "", "ok"))
    text = write_csv(path, "grad-eval", GRAD_COLUMNS, rows)
    if path is not None:
        write_csv(timing_path(path), "grad-eval-timing", ("instance", "estimator", "seed", "wall_time", "message"),
                  [(r.instance, r.estimator, r.seed, r.wall_time, r.message) for r in records])
    return text


# ----------------------------------------------------------- optimize


@dataclass(frozen=True)
class OptimizeRecord:
    instance: str
    estimator: str
    init: str
    seed: int
    best_nll: float
    iterations: int
    status: str
    wall_time: float = 0.0
    message: str = ""

    def solved(self, threshold: float) -> bool:
        return self.best_nll < threshold


OPT_COLUMNS = ("instance", "estimator", "init", "seed", "best_nll", "iterations", "status")


@dataclass(frozen=True)
class OptimizeConfig:
    iters: int = 10_000
    lr: float = 0.05
    method: str = "adaptive"
    supervision: float | None = None
    sigma: float = 0.1
    nll_threshold: float = 1e-2
    trace_dir: str | None = None

    def init_spec(self) -> InitSpec:
        if self.supervision is None:
            return InitSpec(sigma=self.sigma)
        return InitSpec("concept-supervised", sigma=self.sigma, fraction=self.supervision)

    @property
    def init_label(self) -> str:
        return "gaussian" if self.supervision is None else f"supervised-{self.supervision:g}"


def _optimize_job(args) -> OptimizeRecord:
    inst, label, seed, opt, timeout, circuit = args
    config = parse_config(label)
    rng = RngStream(seed, (stable_key(inst.name, str(config), opt.init_label),))
    # initial weights depend on (instance, seed) only, so estimators start alike
    init = init_weights(inst.phi, opt.init_spec(), RngStream(seed, (stable_key(inst.name, opt.init_label),)))
    start = time.perf_counter()
    trace = train(inst.phi, config, init, opt.iters, opt.lr, rng, opt.method, opt.nll_threshold,
                  circuit=circuit, gradient_timeout=timeout)
    status = "ok" if trace.error is None else ("timeout" if "Timeout" in trace.error else "error")
    if opt.trace_dir:
        Path(opt.trace_dir).mkdir(parents=True, exist_ok=True)
        name = f"{inst.name}__{str(config).replace(':', '_').replace(',', '_')}__{opt.init_label}__{seed}.csv"
        (Path(opt.trace_dir) / name).write_text(trace.to_csv())
    return OptimizeRecord(inst.name, str(config), opt.init_label, seed, trace.best_nll, trace.iterations_run,
                          status, time.perf_counter() - start, trace.error or "")


def run_optimize(suite: SuiteConfig, opt: OptimizeConfig = OptimizeConfig()) -> list[OptimizeRecord]:
    """Best NLL reached by every (instance, estimator, seed) within ``opt.iters`` steps."""
    jobs = []
    for inst in suite.instances:
        circuit = compile_cnf(inst.phi, node_budget=None, time_budget=None)
        jobs.extend((inst, e, s, opt, suite.timeout, circuit) for e in suite.estimators for s in suite.seeds)
    records = _fan_out(_optimize_job, jobs, suite.threads)
    records.sort(key=lambda r: (r.instance, r.estimator, r.init, r.seed))
    if suite.out:
        write_optimize(records, suite.out)
    return records


def write_optimize(records: Sequence[OptimizeRecord], path: str | Path | None) -> str:
    """Rows sorted by best NLL within each estimator, ready for plotting."""
    ordered = sorted(records, key=lambda r: (r.estimator, r.init, r.best_nll, r.instance, r.seed))
    rows = [(r.instance, r.estimator, r.init, r.seed, r.best_nll, r.iterations, r.status) for r in ordered]
    text = write_csv(path, "optimize", OPT_COLUMNS, rows)
    if path is not None:
        write_csv(timing_path(path), "optimize-timing", ("instance", "estimator", "init", "seed", "wall_time", "message"),
                  [(r.instance, r.estimator, r.init, r.seed, r.wall_time, r.message) for r in records])
    return text


# ------------------------------------------------ tractability transition


@dataclass
class TransitionResult:
    cosine: list[float]
    nll: list[float]
    threshold: float = 0.9

    @property
    def crossing(self) -> int | None:
        """First iteration from which the cosine never drops below the threshold."""
        idx = None
        for i in range(len(self.cosine) - 1, -1, -1):
            if self.cosine[i] < self.threshold:
                break
            idx = i
        return idx

    @property
    def passed(self) -> bool:
        """Starts below the threshold, then crosses it and stays above.

        The crossing must happen before the final iteration so the
        "stays above" part is observed at least once more.
        """
        c = self.crossing
        return bool(self.cosine) and self.cosine[0] < self.threshold and c is not None and c < len(self.cosine) - 1

    @property
    def crossing_nll(self) -> float | None:
        c = self.crossing
        return None if c is None else self.nll[c]


def transition_instance(seed: int, n: int = 20, ratio: float = 4.0) -> Instance:
    phi, z = planted_cnf(n, ratio, RngStream(seed, (6,)))
    return Instance(f"transition-n{n:03d}-{seed}", phi, WeightMap.uniform(n), planted=tuple(z))


def tractability_transition(seed: int, n: int = 20, ratio: float = 4.0, sfe_samples: int = 1000,
                            iters: int = 2000, lr: float = 0.05, threshold: float = 0.9,
                            nll_threshold: float = 0.25) -> TransitionResult:
    """Exact-gradient training that scores an SFE estimate at every iterate.

    Training stops once the NLL drops below ``nll_threshold``. Closer to a
    deterministic solution the SFE variance grows like ``1/(1 - w)`` for
    nearly-certain variables, so its cosine decays again.
    """
    inst = transition_instance(seed, n, ratio)
    circuit = compile_cnf(inst.phi, node_budget=None, time_budget=None)
    cos: list[float] = []
    probe = RngStream(seed, (7,))

    def on_iter(it, params, report, nll):
        sfe = sfe_grad(inst.phi, params.weight_map(), sfe_samples, probe.spawn(it))
        cos.append(cosine_similarity(sfe.gradient, report.gradient))

    trace = train(inst.phi, "exact", InitSpec(), iters, lr, RngStream(seed, (8,)), circuit=circuit,
                  nll_threshold=nll_threshold, callback=on_iter)
    return TransitionResult(cos, trace.nll, threshold)
