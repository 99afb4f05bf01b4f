"""Maximizing log WMC by gradient ascent on sigmoid-parametrized weights."""

from __future__ import annotations

import csv
import io
import math
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .estimators import EstimatorConfig, EstimatorReport, estimate, parse_config
from .exact import DecisionDnnf, compile_cnf, wmc_eval
from .logic import CnfFormula, WeightMap
from .samplers import RngStream, as_rng
from .sat import Unsatisfiable, solve
from .timeouts import time_limit

BETA1, BETA2, ADAM_EPS = 0.9, 0.999, 1e-8
DEFAULT_LR = 0.05
DEFAULT_NLL_THRESHOLD = 1e-2


def sigmoid(z: np.ndarray) -> np.ndarray:
    return np.exp(-np.logaddexp(0.0, -z))


@dataclass(frozen=True)
class Params:
    logits: np.ndarray
    m: np.ndarray | None = None
    v: np.ndarray | None = None
    t: int = 0

    def __post_init__(self):
        logits = np.array(self.logits, dtype=float)
        if not np.all(np.isfinite(logits)):
            raise ValueError("logits must be finite")
        logits.setflags(write=False)
        object.__setattr__(self, "logits", logits)

    @property
    def weights(self) -> np.ndarray:
        return sigmoid(self.logits)

    def weight_map(self) -> WeightMap:
        # sigmoid saturates to exactly 0 or 1 beyond |logit| ~ 37
        return WeightMap(np.clip(self.weights, 1e-300, 1.0 - 1e-16))

    @classmethod
    def from_weights(cls, w) -> Params:
        w = np.asarray(w, dtype=float)
        if np.any(w <= 0) or np.any(w >= 1):
            raise ValueError("weights must lie strictly inside (0, 1)")
        return cls(np.log(w) - np.log1p(-w))


@dataclass(frozen=True)
class InitSpec:
    """``gaussian-half`` draws ``w ~ 0.5 + N(0, sigma)``; ``concept-supervised``
    additionally pins a random ``ceil(fraction * n)`` variables to
    ``confidence`` toward ``target`` (found by a randomized SAT call when
    not given)."""

    mode: str = "gaussian-half"
    sigma: float = 0.1
    fraction: float = 0.0
    confidence: float = 0.9
    target: tuple[bool, ...] | None = None
    margin: float = 1e-3

    def __post_init__(self):
        if self.mode not in ("gaussian-half", "concept-supervised"):
            raise ValueError(f"unknown init mode {self.mode!r}")
        if not 0.0 <= self.fraction <= 1.0:
            raise ValueError("fraction must lie in [0, 1]")
        if self.sigma < 0:
            raise ValueError("sigma must be non-negative")
        if not 0.5 < self.confidence < 1.0:
            raise ValueError("confidence must lie in (0.5, 1)")


def supervised_count(n: int, fraction: float) -> int:
    # guard against 0.9 * 100 = 90.00000000000001
    return min(n, math.ceil(round(fraction * n, 9)))


def init_weights(phi: CnfFormula, spec: InitSpec, rng: RngStream | int | None = None) -> Params:
    rng = as_rng(rng)
    n = phi.num_vars
    w = np.clip(0.5 + rng.normal(0.0, spec.sigma, n) if spec.sigma > 0 else np.full(n, 0.5),
                spec.margin, 1.0 - spec.margin)
    if spec.mode == "concept-supervised":
        target = spec.target
        if target is None:
            model = solve(phi, phases=rng.random(n) < 0.5)
            if model is None:
                raise Unsatisfiable("concept supervision needs a satisfiable formula")
            target = model
        target = np.asarray(target, dtype=bool)
        chosen = rng.permutation(n)[: supervised_count(n, spec.fraction)]
        w[chosen] = np.where(target[chosen], spec.confidence, 1.0 - spec.confidence)
    return Params.from_weights(w)


def step(params: Params, grad_logwmc: np.ndarray, lr: float = DEFAULT_LR, method: str = "adaptive") -> Params:
    """One ascent step on log WMC; ``grad_logwmc`` is taken w.r.t. the weights."""
    g = np.asarray(grad_logwmc, dtype=float)
    if g.shape != params.logits.shape or not np.all(np.isfinite(g)):
        raise ValueError("gradient must be finite and match the parameter shape")
    w = params.weights
    g_logit = g * w * (1.0 - w)
    if method == "sgd":
        return Params(params.logits + lr * g_logit, params.m, params.v, params.t + 1)
    if method != "adaptive":
        raise ValueError(f"unknown method {method!r}")
    t = params.t + 1
    m = BETA1 * (params.m if params.m is not None else 0.0) + (1 - BETA1) * g_logit
    v = BETA2 * (params.v if params.v is not None else 0.0) + (1 - BETA2) * g_logit**2
    m_hat = m / (1 - BETA1**t)
    v_hat = v / (1 - BETA2**t)
    return Params(params.logits + lr * m_hat / (np.sqrt(v_hat) + ADAM_EPS), m, v, t)


@dataclass
class TrainTrace:
    nll: list[float] = field(default_factory=list)
    grad_norm: list[float] = field(default_factory=list)
    wall_ms: list[float] = field(default_factory=list)
    exact_nll: bool = True
    error: str | None = None
    final: Params | None = None

    @property
    def iterations_run(self) -> int:
        return len(self.nll)

    @property
    def best_nll(self) -> float:
        return min(self.nll) if self.nll else math.inf

    def to_csv(self) -> str:
        buf = io.StringIO()
        out = csv.writer(buf, lineterminator="\n")
        out.writerow(["iteration", "nll", "grad_norm", "wall_ms"])
        for i, (a, b, c) in enumerate(zip(self.nll, self.grad_norm, self.wall_ms)):
            out.writerow([i, repr(a), repr(b), f"{c:.3f}"])
        return buf.getvalue()


def _nll(value: float | None) -> float:
    if value is None or value <= 0.0:
        return math.inf
    return -math.log(value)


def train(phi: CnfFormula, estimator: EstimatorConfig | str, init: InitSpec | Params = InitSpec(),
          iters: int = 10_000, lr: float = DEFAULT_LR, rng: RngStream | int | None = None,
          method: str = "adaptive", nll_threshold: float = DEFAULT_NLL_THRESHOLD,
          circuit: DecisionDnnf | None = None, track_exact: bool = True,
          callback: Callable[[int, Params, EstimatorReport, float], None] | None = None,
          gradient_timeout: float | None = None) -> TrainTrace:
    """Run up to ``iters`` ascent steps and record the NLL before each one.

    The NLL is exact (from a compiled circuit) when ``track_exact`` holds,
    otherwise it is the estimator's own value estimate. Training stops once
    the NLL falls below ``nll_threshold``. An estimator failure, including
    exceeding ``gradient_timeout`` seconds on one gradient, ends the run and
    is stored in ``trace.error``.
    """
    if iters < 1:
        raise ValueError("iters must be at least 1")
    rng = as_rng(rng)
    config = parse_config(estimator) if isinstance(estimator, str) else estimator
    params = init if isinstance(init, Params) else init_weights(phi, init, rng.spawn(0))
    if track_exact and circuit is None:
        circuit = compile_cnf(phi, node_budget=None, time_budget=None)
    est_circuit = circuit if config.kind in ("exact", "weightme") else None
    trace = TrainTrace(exact_nll=track_exact)
    start = time.perf_counter()
    for it in range(iters):
        w = params.weight_map()
        try:
            with time_limit(gradient_timeout):
                report = estimate(config, phi, w, rng.spawn(1, it), circuit=est_circuit)
        except Exception as exc:  # noqa: BLE001 - recorded, run ends
            trace.error = f"{type(exc).__name__}: {exc}"
            break
        nll = _nll(wmc_eval(circuit, w).value) if track_exact else _nll(report.value_estimate)
        g = report.log_gradient()
        trace.nll.append(nll)
        trace.grad_norm.append(float(np.linalg.norm(g)))
        trace.wall_ms.append((time.perf_counter() - start) * 1e3)
        if callback is not None:
            callback(it, params, report, nll)
        if nll < nll_threshold:
            break
        if not np.all(np.isfinite(g)):
            trace.error = "non-finite gradient"
            break
        params = step(params, g, lr, method)
    trace.final = params
    return trace
