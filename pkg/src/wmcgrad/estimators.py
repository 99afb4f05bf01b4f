"""Gradient estimators for the weighted model count.

Every estimator returns an :class:`EstimatorReport` whose gradient states
whether it approximates ``dWMC/dw`` or ``dlogWMC/dw``. Estimators that need
a compiled circuit accept one through ``circuit=`` so callers can reuse it.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, fields, replace
from typing import Callable

import numpy as np
from scipy import sparse

from .exact import DecisionDnnf, GradientVector, compile_cnf, wmc_eval, wmc_grad
from .logic import CnfFormula, WeightMap, clause_prob, condition, evaluate_batch, fuzzy_eval
from .sat import mpe, top_k_models
from .samplers import (
    HashSampler,
    RngStream,
    SamplerSpec,
    as_rng,
    exact_model_samples,
    sample_interpretations,
    uniform_model_samples,
)

KINDS = (
    "exact", "sfe", "indecater", "weightme", "ste", "gumbel", "tnorm-product", "tnorm-goedel",
    "kbest", "koptimal", "mpe", "imle", "semantic-strengthening", "uniform-model", "catlog",
    "sample-tnorm-hybrid",
)


@dataclass(frozen=True)
class EstimatorReport:
    gradient: GradientVector
    value_estimate: float | None = None
    samples_used: int = 0
    wall_time: float = 0.0
    wmc_gradient: GradientVector | None = None
    note: str = ""

    @property
    def estimate_of(self) -> str:
        return self.gradient.of

    def log_gradient(self) -> np.ndarray:
        """Best available ascent direction on log WMC.

        A WMC gradient is divided by the estimator's own value when that is
        positive; otherwise it is returned unscaled.
        """
        g = self.gradient.values
        if self.gradient.of == "logwmc":
            return g
        v = self.value_estimate
        if v is not None and v > 0.0:
            return g / v
        return g


def _report(values, of, start, **kw) -> EstimatorReport:
    return EstimatorReport(GradientVector(np.asarray(values, dtype=float), of), wall_time=time.perf_counter() - start, **kw)


def _clamped(w: WeightMap) -> np.ndarray:
    return w.clamped().prob


# -------------------------------------------------------- product t-norm


def _incidence(phi: CnfFormula) -> sparse.csr_matrix:
    idx, _, mask = phi._padded
    m, k = idx.shape
    rows = np.flatnonzero(mask.reshape(-1))
    cols = idx.reshape(-1)[rows]
    return sparse.csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(m * k, phi.num_vars))


def _exclusive_prod(A: np.ndarray, axis: int) -> np.ndarray:
    """Product of all other entries along ``axis``, without division."""
    A = np.moveaxis(A, axis, -1)
    ones = np.ones(A.shape[:-1] + (1,))
    left = np.cumprod(np.concatenate([ones, A[..., :-1]], axis=-1), axis=-1)
    right = np.cumprod(np.concatenate([ones, A[..., :0:-1]], axis=-1), axis=-1)[..., ::-1]
    return np.moveaxis(left * right, -1, axis)


def product_tnorm_batch(phi: CnfFormula, W: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Product t-norm value and exact gradient at each row of ``W``.

    ``W`` has shape (b, n) and may hold soft or hard assignments.
    """
    W = np.atleast_2d(np.asarray(W, dtype=float))
    b, n = W.shape
    if phi.is_true:
        return np.ones(b), np.zeros((b, n))
    idx, pos, mask = phi._padded
    m, k = idx.shape
    vw = W[:, idx]
    fail = np.where(mask, np.where(pos, 1.0 - vw, vw), 1.0)  # P(literal false)
    clause = 1.0 - np.prod(fail, axis=2)
    value = np.prod(clause, axis=1)
    d_clause = _exclusive_prod(clause, axis=1)  # dV/dC_c
    # dC_c/dw(var of slot j) = prod of other slots' fail, signed by polarity
    d_slot = _exclusive_prod(fail, axis=2) * np.where(pos, 1.0, -1.0) * mask
    contrib = (d_clause[:, :, None] * d_slot).reshape(b, m * k)
    grad = np.asarray(_incidence(phi).T @ contrib.T).T
    return value, grad


def _factor_product(values: list[float], grads: list[np.ndarray], n: int) -> tuple[float, np.ndarray]:
    if not values:
        return 1.0, np.zeros(n)
    v = np.array(values)
    others = _exclusive_prod(v[None, :], axis=1)[0]
    g = np.zeros(n)
    for o, gi in zip(others, grads):
        if o != 0.0:
            g += o * gi
    return float(np.prod(v)), g


def _clause_factor(clause: tuple[int, ...], w: WeightMap) -> tuple[float, np.ndarray]:
    n = len(w)
    g = np.zeros(n)
    fails = [w.lit(-l) for l in clause]
    for j, lit in enumerate(clause):
        rest = 1.0
        for jj, f in enumerate(fails):
            if jj != j:
                rest *= f
        g[abs(lit) - 1] += rest if lit > 0 else -rest
    return clause_prob(clause, w), g


def _goedel_value_grad(phi: CnfFormula, w: WeightMap) -> tuple[float, np.ndarray]:
    """Min over clauses of max literal weight, with a one-hot subgradient.

    Ties go to the lowest variable index, both among the literals of a
    clause and among tied minimal clauses.
    """
    g = np.zeros(phi.num_vars)
    if phi.is_true:
        return 1.0, g
    best = None
    for c in phi.clauses:
        if not c:
            return 0.0, g
        lit = min(c, key=lambda l: (-w.lit(l), abs(l)))
        key = (w.lit(lit), abs(lit))
        if best is None or key < best[0]:
            best = (key, lit)
    (value, _), lit = best
    g[abs(lit) - 1] = 1.0 if lit > 0 else -1.0
    return value, g


def tnorm_grad(phi: CnfFormula, w: WeightMap, tnorm: str = "product") -> EstimatorReport:
    start = time.perf_counter()
    if tnorm == "product":
        values, grads = product_tnorm_batch(phi, w.prob[None, :])
        value, g = float(values[0]), grads[0]
    elif tnorm in ("goedel", "godel"):
        value, g = _goedel_value_grad(phi, w)
    else:
        raise ValueError(f"unknown t-norm {tnorm!r}")
    return _report(g, "wmc", start, value_estimate=value, note=f"t-norm={tnorm}")


# ------------------------------------------------------ exact baseline


def exact_grad(phi: CnfFormula, w: WeightMap, circuit: DecisionDnnf | None = None, of: str = "wmc") -> EstimatorReport:
    start = time.perf_counter()
    circuit = circuit or compile_cnf(phi, node_budget=None, time_budget=None)
    res, g = wmc_grad(circuit, w, of=of)
    return _report(g.values, of, start, value_estimate=res.value)


# ----------------------------------------------- interpretation sampling


def _chunks(s: int, n: int, cells: int = 1 << 22):
    """Split ``s`` samples into batches of at most ``cells`` matrix entries."""
    size = max(1, cells // max(n, 1))
    for lo in range(0, s, size):
        yield min(size, s - lo)


def score_terms(X: np.ndarray, w: WeightMap) -> np.ndarray:
    """``d/dw log P(I; w)`` for each row ``I`` of ``X``."""
    p = _clamped(w)
    return np.where(X, 1.0 / p, -1.0 / (1.0 - p))


def sfe_grad(phi: CnfFormula, w: WeightMap, s: int, rng, rloo: bool = True) -> EstimatorReport:
    """Score-function estimate of the WMC gradient.

    With ``rloo`` each sample's reward is baselined by the mean reward of
    the other ``s - 1`` samples.
    """
    start = time.perf_counter()
    if rloo and s < 2:
        raise ValueError("leave-one-out baseline needs s >= 2")
    if s < 1:
        raise ValueError("need at least one sample")
    rng = as_rng(rng)
    wc = WeightMap(_clamped(w))
    # running sums of f * score, score and f; the baseline is applied at the end
    fs = np.zeros(len(w))
    sc = np.zeros(len(w))
    hits = 0.0
    for size in _chunks(s, len(w)):
        X = sample_interpretations(wc, size, rng)
        f = evaluate_batch(phi, X).astype(float)
        terms = score_terms(X, w)
        fs += f @ terms
        sc += terms.sum(axis=0)
        hits += f.sum()
    g = (s * fs - hits * sc) / (s - 1) / s if rloo else fs / s
    return _report(g, "wmc", start, value_estimate=hits / s, samples_used=s,
                   note="rloo" if rloo else "plain")


def indecater_terms(phi: CnfFormula, X: np.ndarray) -> np.ndarray:
    """Per sample and variable, ``f(I with x) - f(I without x)``.

    Both branches share the sample's values for every other variable.
    """
    X = np.atleast_2d(X)
    out = np.empty(X.shape, dtype=float)
    Y = X.copy()
    for v in range(X.shape[1]):
        Y[:, v] = True
        hi = evaluate_batch(phi, Y)
        Y[:, v] = False
        lo = evaluate_batch(phi, Y)
        Y[:, v] = X[:, v]
        out[:, v] = hi.astype(float) - lo.astype(float)
    return out


def indecater_grad(phi: CnfFormula, w: WeightMap, s: int, rng) -> EstimatorReport:
    """Difference of conditioned hit rates with common random numbers."""
    start = time.perf_counter()
    if s < 1:
        raise ValueError("need at least one sample")
    rng = as_rng(rng)
    total = np.zeros(len(w))
    hits = 0
    for size in _chunks(s, len(w)):
        X = sample_interpretations(w, size, rng)
        total += indecater_terms(phi, X).sum(axis=0)
        hits += int(evaluate_batch(phi, X).sum())
    return _report(total / s, "wmc", start, value_estimate=hits / s, samples_used=s)


# -------------------------------------------------------------- WeightME


def weightme_terms(models: np.ndarray, w: WeightMap) -> np.ndarray:
    """Per-sample WeightME terms ``1(x in M)/w(x) - 1(x not in M)/w(-x)``."""
    return score_terms(models, w)


def draw_models(phi: CnfFormula, w: WeightMap, sampler: str, s: int, rng: RngStream,
                circuit: DecisionDnnf | None = None, spec: SamplerSpec | None = None) -> np.ndarray:
    if sampler == "exact-model":
        circuit = circuit or compile_cnf(phi, node_budget=None, time_budget=None)
        return exact_model_samples(circuit, w, s, rng)
    if sampler == "hash-model":
        return HashSampler(phi, w, spec or SamplerSpec(kind="hash-model")).samples(s, rng)
    if sampler == "uniform-model":
        return uniform_model_samples(phi, s, rng, spec)
    raise ValueError(f"unknown model sampler {sampler!r}")


def weightme_grad(phi: CnfFormula, w: WeightMap, sampler: str = "exact-model", s: int = 100, rng=None,
                  wmc: float | None = None, circuit: DecisionDnnf | None = None,
                  spec: SamplerSpec | None = None) -> EstimatorReport:
    """Unbiased estimate of the log-WMC gradient from weighted model samples.

    Given the exact ``wmc``, the WMC gradient ``wmc * dlogWMC`` is attached
    as ``wmc_gradient``. The ``uniform-model`` sampler ignores the weights
    and is therefore biased.
    """
    start = time.perf_counter()
    if s < 1:
        raise ValueError("need at least one sample")
    rng = as_rng(rng)
    w = w.clamped()
    M = draw_models(phi, w, sampler, s, rng, circuit, spec)
    g = weightme_terms(M, w).mean(axis=0)
    extra = GradientVector(wmc * g, "wmc") if wmc is not None else None
    return _report(g, "logwmc", start, samples_used=s, wmc_gradient=extra, value_estimate=wmc,
                   note=f"sampler={sampler}")


# ------------------------------------------------ relaxed sampling (STE)


def ste_grad(phi: CnfFormula, w: WeightMap, s: int, rng) -> EstimatorReport:
    """Straight-through estimate: hard samples forward, identity backward.

    The forward pass scores each hard sample with the product t-norm; the
    backward pass differentiates that score as if the sample were ``w``,
    i.e. evaluates the t-norm gradient at the hard sample.
    """
    start = time.perf_counter()
    if s < 1:
        raise ValueError("need at least one sample")
    rng = as_rng(rng)
    X = sample_interpretations(w, s, rng).astype(float)
    vals, grads = product_tnorm_batch(phi, X)
    return _report(grads.mean(axis=0), "wmc", start, value_estimate=float(vals.mean()), samples_used=s)


def relaxed_bernoulli(w: WeightMap, s: int, temperature: float, rng) -> tuple[np.ndarray, np.ndarray]:
    """Relaxed samples ``sigmoid((logit w + L)/t)`` and their ``d/dw``."""
    p = _clamped(w)
    L = rng.logistic((s, len(p)))
    logits = np.log(p) - np.log1p(-p)
    Y = 1.0 / (1.0 + np.exp(-(logits + L) / temperature))
    dY = Y * (1.0 - Y) / (temperature * p * (1.0 - p))
    return Y, dY


def gumbel_grad(phi: CnfFormula, w: WeightMap, s: int = 10, temperature: float = 2.0, rng=None) -> EstimatorReport:
    """Gumbel-softmax (binary concrete) estimate through the product t-norm."""
    start = time.perf_counter()
    if temperature <= 0:
        raise ValueError("temperature must be positive")
    if s < 1:
        raise ValueError("need at least one sample")
    rng = as_rng(rng)
    Y, dY = relaxed_bernoulli(w, s, temperature, rng)
    vals, grads = product_tnorm_batch(phi, Y)
    return _report((grads * dY).mean(axis=0), "wmc", start, value_estimate=float(vals.mean()), samples_used=s,
                   note=f"temperature={temperature}")


# ------------------------------------------------------ model-based DNFs


def model_set_grad(models: np.ndarray, w: WeightMap) -> tuple[float, np.ndarray]:
    """Total probability of distinct full models and its gradient."""
    models = np.atleast_2d(models)
    n = len(w)
    if models.size == 0:
        return 0.0, np.zeros(n)
    models = np.unique(models, axis=0)
    lw = np.where(models, w.prob, 1.0 - w.prob)
    probs = np.prod(lw, axis=1)
    others = _exclusive_prod(lw, axis=1)
    g = (others * np.where(models, 1.0, -1.0)).sum(axis=0)
    return float(probs.sum()), g


def kbest_grad(phi: CnfFormula, w: WeightMap, k: int) -> EstimatorReport:
    """Gradient of the probability of the ``k`` most probable models.

    The value is a lower bound on the WMC.
    """
    start = time.perf_counter()
    models = np.array([r.model for r in top_k_models(phi, w, k)], dtype=bool).reshape(-1, phi.num_vars)
    value, g = model_set_grad(models, w)
    return _report(g, "wmc", start, value_estimate=value, samples_used=len(models), note=f"k={k}")


def koptimal_grad(phi: CnfFormula, w: WeightMap, k: int) -> EstimatorReport:
    from .sat import k_optimal_dnf

    start = time.perf_counter()
    models = np.array(k_optimal_dnf(phi, w, k), dtype=bool).reshape(-1, phi.num_vars)
    value, g = model_set_grad(models, w)
    return _report(g, "wmc", start, value_estimate=value, samples_used=len(models), note=f"k={k}")


def mpe_grad(phi: CnfFormula, w: WeightMap) -> EstimatorReport:
    return replace(kbest_grad(phi, w, 1), note="mpe")


def uniform_model_grad(phi: CnfFormula, w: WeightMap, s: int, rng, spec: SamplerSpec | None = None) -> EstimatorReport:
    """Gradient of the probability of the distinct uniformly sampled models."""
    start = time.perf_counter()
    rng = as_rng(rng)
    models = uniform_model_samples(phi, s, rng, spec)
    value, g = model_set_grad(models, w)
    return _report(g, "wmc", start, value_estimate=value, samples_used=s)


def imle_grad(phi: CnfFormula, w: WeightMap, s: int = 1, noise_scale: float = 1.0, rng=None) -> EstimatorReport:
    """Perturb-and-MAP direction: mean of ``2 z - 1`` over perturbed MPEs."""
    start = time.perf_counter()
    if s < 1 or noise_scale < 0:
        raise ValueError("need s >= 1 and noise_scale >= 0")
    rng = as_rng(rng)
    p = _clamped(w)
    logits = np.log(p) - np.log1p(-p)
    g = np.zeros(phi.num_vars)
    for _ in range(s):
        noisy = logits + noise_scale * rng.logistic(len(p))
        z = mpe(phi, WeightMap(1.0 / (1.0 + np.exp(-noisy)), w.clamp_margin)).model
        g += np.where(z, 1.0, -1.0)
    return _report(g / s, "wmc", start, samples_used=s, note=f"noise_scale={noise_scale}")


# ------------------------------------------------ semantic strengthening


def clause_mutual_information(a: tuple[int, ...], b: tuple[int, ...], w: WeightMap) -> float:
    """Mutual information between the satisfaction events of two clauses."""
    pa, pb = clause_prob(a, w), clause_prob(b, w)
    lits = set(a) | set(b)
    if any(-l in lits for l in lits):
        both_fail = 0.0
    else:
        both_fail = 1.0
        for l in lits:
            both_fail *= w.lit(-l)
    joint = {
        (0, 0): both_fail,
        (0, 1): (1.0 - pa) - both_fail,
        (1, 0): (1.0 - pb) - both_fail,
    }
    joint[(1, 1)] = 1.0 - joint[(0, 0)] - joint[(0, 1)] - joint[(1, 0)]
    marg_a = {0: 1.0 - pa, 1: pa}
    marg_b = {0: 1.0 - pb, 1: pb}
    mi = 0.0
    for (i, j), pij in joint.items():
        if pij > 1e-300 and marg_a[i] > 0 and marg_b[j] > 0:
            mi += pij * math.log(pij / (marg_a[i] * marg_b[j]))
    return max(mi, 0.0)


def strengthening_groups(phi: CnfFormula, w: WeightMap, kappa: int, min_mi: float = 1e-15) -> list[list[int]]:
    """Clause-index groups after merging the ``kappa`` highest-MI pairs."""
    m = len(phi.clauses)
    parent = list(range(m))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    if kappa > 0:
        by_var: dict[int, list[int]] = {}
        for i, c in enumerate(phi.clauses):
            for lit in c:
                by_var.setdefault(abs(lit), []).append(i)
        # clauses without shared variables are independent (MI = 0)
        pairs = set()
        for ids in by_var.values():
            for x in range(len(ids)):
                for y in range(x + 1, len(ids)):
                    if ids[x] != ids[y]:
                        pairs.add((ids[x], ids[y]) if ids[x] < ids[y] else (ids[y], ids[x]))
        scored = []
        for i, j in pairs:
            mi = clause_mutual_information(phi.clauses[i], phi.clauses[j], w)
            if mi > min_mi:
                scored.append((-mi, i, j))
        scored.sort()
        for _, i, j in scored[:kappa]:
            ri, rj = find(i), find(j)
            if ri != rj:
                parent[max(ri, rj)] = min(ri, rj)
    groups: dict[int, list[int]] = {}
    for i in range(m):
        groups.setdefault(find(i), []).append(i)
    return sorted(groups.values())


def semantic_strengthening_grad(phi: CnfFormula, w: WeightMap, kappa: int = 100,
                                node_budget: int | None = 1_000_000, time_budget: float | None = 300.0) -> EstimatorReport:
    """Product of exactly compiled clause groups.

    Clause pairs are merged greedily by mutual information; each merged
    group is compiled and counted exactly, singleton clauses use the
    closed-form clause probability, and the factors are multiplied as if
    independent.
    """
    start = time.perf_counter()
    if kappa < 0:
        raise ValueError("kappa must be non-negative")
    values, grads = [], []
    groups = strengthening_groups(phi, w, kappa)
    for group in groups:
        if len(group) == 1:
            v, g = _clause_factor(phi.clauses[group[0]], w)
        else:
            sub = CnfFormula(phi.num_vars, tuple(phi.clauses[i] for i in group))
            res, gv = wmc_grad(compile_cnf(sub, node_budget, time_budget), w)
            v, g = res.value, gv.values
        values.append(v)
        grads.append(g)
    value, g = _factor_product(values, grads, phi.num_vars)
    merged = sum(1 for grp in groups if len(grp) > 1)
    return _report(g, "wmc", start, value_estimate=value, note=f"kappa={kappa},groups={merged}")


# --------------------------------------------------------------- hybrids


def catlog_wrap(inner: Callable[[CnfFormula], float] | str, phi: CnfFormula, w: WeightMap,
                rng=None, s: int = 10, temperature: float = 2.0) -> EstimatorReport:
    """``inner(phi|x) - inner(phi|-x)`` for every variable.

    ``inner`` is a callable returning a value approximation of a formula's
    WMC under ``w``, or one of ``"exact"``, ``"tnorm-product"``,
    ``"tnorm-goedel"``, ``"gumbel"``. The Gumbel inner estimate reuses one
    noise draw for both branches of a variable.
    """
    start = time.perf_counter()
    rng = as_rng(rng)
    n = phi.num_vars
    if isinstance(inner, str):
        fn = _catlog_inner(inner, w, rng, s, temperature)
    else:
        fn = lambda f, v: inner(f)  # noqa: E731
    g = np.zeros(n)
    for v in range(1, n + 1):
        g[v - 1] = fn(condition(phi, v), v) - fn(condition(phi, -v), v)
    return _report(g, "wmc", start, samples_used=2 * n, note=f"inner={inner if isinstance(inner, str) else 'callable'}")


def _catlog_inner(kind: str, w: WeightMap, rng: RngStream, s: int, temperature: float):
    if kind == "exact":
        return lambda f, v: wmc_eval(compile_cnf(f, None, None), w).value
    if kind == "tnorm-product":
        return lambda f, v: fuzzy_eval(f, w, "product")
    if kind == "tnorm-goedel":
        return lambda f, v: fuzzy_eval(f, w, "goedel")
    if kind == "gumbel":
        def gumbel_value(f, v):
            Y, _ = relaxed_bernoulli(w, s, temperature, rng.spawn(v))
            return float(product_tnorm_batch(f, Y)[0].mean())
        return gumbel_value
    raise ValueError(f"catlog inner estimator must be a value approximator, not {kind!r}")


def sample_tnorm_hybrid_grad(phi: CnfFormula, w: WeightMap, s: int, rng) -> EstimatorReport:
    """Clauses hit by some sampled interpretation count as satisfied.

    The remaining clauses are combined with the product t-norm, which alone
    carries the gradient.
    """
    start = time.perf_counter()
    if s < 1:
        raise ValueError("need at least one sample")
    rng = as_rng(rng)
    X = sample_interpretations(w, s, rng)
    idx, pos, mask = phi._padded
    hit = np.zeros(len(phi.clauses), dtype=bool)
    if phi.clauses:
        truth = ((X[:, idx] == pos) & mask).any(axis=2)  # (s, m)
        hit = truth.any(axis=0)
    rest = [c for c, h in zip(phi.clauses, hit) if not h]
    factors = [_clause_factor(c, w) for c in rest]
    value, g = _factor_product([f[0] for f in factors], [f[1] for f in factors], phi.num_vars)
    return _report(g, "wmc", start, value_estimate=value, samples_used=s, note=f"unhit={len(rest)}")


# ------------------------------------------------- sample-size & theory


def c_eps_delta(epsilon: float, delta: float) -> float:
    """The constant ``epsilon**-2 * ln(2/delta)`` used by both calculators."""
    if epsilon <= 0 or not 0 < delta < 1:
        raise ValueError("need epsilon > 0 and 0 < delta < 1")
    return math.log(2.0 / delta) / epsilon**2


def _ceil(x: float) -> int:
    r = round(x)
    return int(r) if abs(x - r) < 1e-9 * max(1.0, abs(x)) else math.ceil(x)


def required_samples_interpretation(spec: SamplerSpec, wmc_lower: float) -> int:
    """Interpretation samples for an (epsilon, delta) WMC estimate.

    The sample count at ``wmc_lower = 1`` is rounded up first, so the
    result scales exactly with ``1 / wmc_lower``.
    """
    if not wmc_lower > 0:
        raise ValueError("wmc_lower must be positive")
    base = max(1, _ceil(c_eps_delta(spec.epsilon, spec.delta)))
    return max(1, _ceil(base / wmc_lower))


def required_samples_weightme(spec: SamplerSpec, lam: float) -> int:
    """Weighted model samples ``ln(2/delta) / (2 eps^2 lambda^2)``, rounded up."""
    if not 0 < lam <= 1:
        raise ValueError("lambda must lie in (0, 1]")
    return max(1, _ceil(c_eps_delta(spec.epsilon, spec.delta) / (2.0 * lam * lam)))


def tractability_threshold(spec: SamplerSpec, max_samples: int = 1_000_000) -> float:
    """Smallest derivative an interpretation-sampling estimate can certify.

    A single-sample estimate of one partial lies in [-1, 1], so Hoeffding
    gives ``s >= 2 ln(2/delta) / (eps * y)**2`` samples for relative error
    ``eps`` on a derivative ``y``. With at most ``max_samples`` samples this
    needs ``y >= sqrt(2 ln(2/delta) / max_samples) / eps``.
    """
    return math.sqrt(2.0 * math.log(2.0 / spec.delta) / max_samples) / spec.epsilon


def check_tractability_condition(phi: CnfFormula, w: WeightMap, pi, x: int, spec: SamplerSpec,
                                 max_samples: int = 1_000_000, wmc_neg: float | None = None) -> bool:
    """Does implicant ``pi`` (containing ``x`` as a literal) dominate enough?

    True iff ``WMC(pi) - WMC(phi | -x)`` reaches :func:`tractability_threshold`.
    """
    from .logic import is_implicant

    pi = list(pi)
    lit = next((l for l in pi if abs(l) == abs(x)), None)
    if lit is None:
        raise ValueError(f"variable {abs(x)} does not occur in the implicant")
    if not is_implicant(phi, pi):
        raise ValueError("pi is not an implicant of phi")
    wmc_pi = 1.0
    for l in pi:
        wmc_pi *= w.lit(l)
    if wmc_neg is None:
        wmc_neg = wmc_eval(compile_cnf(condition(phi, -lit), None, None), w).value
    return wmc_pi - wmc_neg >= tractability_threshold(spec, max_samples)


def tau_supervision(phi: CnfFormula, w: WeightMap) -> int:
    """Literals of the most probable model whose weight exceeds 1/2."""
    model = mpe(phi, w).model
    lit_w = np.where(model, w.prob, 1.0 - w.prob)
    return int(np.sum(lit_w > 0.5))


# -------------------------------------------------------- configurations


_FIELD_ALIASES = {"temp": "temperature", "noise": "noise_scale"}


@dataclass(frozen=True)
class EstimatorConfig:
    """An estimator plus its parameters; see :func:`parse_config`.

    Defaults: ``s=10`` for STE and Gumbel, ``s=10000`` for SFE and
    IndeCateR, ``s=100`` for WeightME and uniform model sampling, ``k=100``
    for k-best and k-optimal, ``kappa=100``, temperature 2.
    """

    kind: str
    s: int | None = None
    k: int | None = None
    kappa: int | None = None
    temperature: float | None = None
    noise_scale: float | None = None
    sampler: str | None = None
    inner: str | None = None
    pivot: int | None = None
    rloo: bool | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown estimator {self.kind!r}")
        defaults = _DEFAULTS.get(self.kind, {})
        for name, value in defaults.items():
            if getattr(self, name) is None:
                object.__setattr__(self, name, value)
        if self.s is not None and self.s < 1:
            raise ValueError("s must be positive")
        if self.temperature is not None and self.temperature <= 0:
            raise ValueError("temperature must be positive")
        if self.noise_scale is not None and self.noise_scale < 0:
            raise ValueError("noise_scale must be non-negative")
        if self.kind == "catlog" and self.inner not in ("exact", "tnorm-product", "tnorm-goedel", "gumbel"):
            raise ValueError("catlog needs inner=exact|tnorm-product|tnorm-goedel|gumbel")

    def __str__(self) -> str:
        parts = []
        for f in fields(self)[1:]:
            value = getattr(self, f.name)
            if value is None:
                continue
            if isinstance(value, bool):
                value = str(value).lower()
            parts.append(f"{f.name}={value}")
        return self.kind + (":" + ",".join(parts) if parts else "")

    @property
    def label(self) -> str:
        return str(self)


_DEFAULTS: dict[str, dict] = {
    "sfe": {"s": 10_000, "rloo": True},
    "indecater": {"s": 10_000},
    "weightme": {"s": 100, "sampler": "exact-model"},
    "ste": {"s": 10},
    "gumbel": {"s": 10, "temperature": 2.0},
    "kbest": {"k": 100},
    "koptimal": {"k": 100},
    "imle": {"s": 10, "noise_scale": 1.0},
    "semantic-strengthening": {"kappa": 100},
    "uniform-model": {"s": 100},
    "catlog": {"inner": "tnorm-product", "s": 10, "temperature": 2.0},
    "sample-tnorm-hybrid": {"s": 10},
}


def parse_config(text: str) -> EstimatorConfig:
    """Parse ``kind[:key=value,...]``, e.g. ``weightme:s=100,sampler=hash``.

    Keys: ``s k kappa temperature|temp noise_scale|noise sampler inner pivot
    rloo``. Sampler names may drop the ``-model`` suffix.
    """
    kind, _, rest = text.strip().partition(":")
    kw: dict = {}
    types = {f.name: f.type for f in fields(EstimatorConfig)}
    for item in filter(None, (p.strip() for p in rest.split(","))):
        key, eq, value = item.partition("=")
        if not eq:
            raise ValueError(f"expected key=value, got {item!r}")
        key = _FIELD_ALIASES.get(key.strip(), key.strip())
        if key not in types or key == "kind":
            raise ValueError(f"unknown estimator parameter {key!r}")
        value = value.strip()
        if key in ("s", "k", "kappa", "pivot"):
            kw[key] = int(float(value)) if "e" in value.lower() else int(value)
        elif key in ("temperature", "noise_scale"):
            kw[key] = float(value)
        elif key == "rloo":
            if value.lower() not in ("true", "false", "1", "0"):
                raise ValueError(f"rloo must be true or false, got {value!r}")
            kw[key] = value.lower() in ("true", "1")
        elif key == "sampler":
            kw[key] = value if value.endswith("-model") else value + "-model"
        else:
            kw[key] = value
    return EstimatorConfig(kind.strip(), **kw)


def estimate(config: EstimatorConfig | str, phi: CnfFormula, w: WeightMap, rng=None,
             circuit: DecisionDnnf | None = None) -> EstimatorReport:
    """Run the estimator described by ``config``."""
    if isinstance(config, str):
        config = parse_config(config)
    rng = as_rng(rng)
    k = config.kind
    spec_kind = "uniform-model" if k == "uniform-model" else "hash-model"
    spec = SamplerSpec(kind=spec_kind, pivot=config.pivot) if config.pivot else None
    if k == "exact":
        return exact_grad(phi, w, circuit)
    if k == "sfe":
        return sfe_grad(phi, w, config.s, rng, rloo=config.rloo)
    if k == "indecater":
        return indecater_grad(phi, w, config.s, rng)
    if k == "weightme":
        return weightme_grad(phi, w, config.sampler, config.s, rng, circuit=circuit, spec=spec)
    if k == "ste":
        return ste_grad(phi, w, config.s, rng)
    if k == "gumbel":
        return gumbel_grad(phi, w, config.s, config.temperature, rng)
    if k == "tnorm-product":
        return tnorm_grad(phi, w, "product")
    if k == "tnorm-goedel":
        return tnorm_grad(phi, w, "goedel")
    if k == "kbest":
        return kbest_grad(phi, w, config.k)
    if k == "koptimal":
        return koptimal_grad(phi, w, config.k)
    if k == "mpe":
        return mpe_grad(phi, w)
    if k == "imle":
        return imle_grad(phi, w, config.s, config.noise_scale, rng)
    if k == "semantic-strengthening":
        return semantic_strengthening_grad(phi, w, config.kappa)
    if k == "uniform-model":
        return uniform_model_grad(phi, w, config.s, rng, spec)
    if k == "catlog":
        return catlog_wrap(config.inner, phi, w, rng, config.s, config.temperature)
    if k == "sample-tnorm-hybrid":
        return sample_tnorm_hybrid_grad(phi, w, config.s, rng)
    raise ValueError(f"unknown estimator {k!r}")
