"""Interpretation sampling and (weighted, hashed, uniform) model sampling."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .exact import AND, DEC, FALSE, LIT, DecisionDnnf, node_values
from .logic import CnfFormula, WeightMap, evaluate_batch
from .sat import DEFAULT_CONFLICT_BUDGET, BudgetExceeded, Unsatisfiable, iter_models


class ZeroWmc(ValueError):
    """Model sampling requested from a formula of weight zero."""


class RngStream:
    """Reproducible random stream.

    Backed by numpy's Philox4x64 counter-based generator keyed through
    ``SeedSequence(seed, *path)``, so identical ``(seed, path)`` pairs give
    identical draws on every platform.
    """

    def __init__(self, seed: int = 0, path: Sequence[int] = ()):
        self.seed = int(seed) & ((1 << 64) - 1)
        self.path = tuple(int(p) for p in path)
        ss = np.random.SeedSequence([self.seed, *self.path])
        self.gen = np.random.Generator(np.random.Philox(ss))

    def spawn(self, *keys: int) -> RngStream:
        """Independent child stream, a pure function of (seed, path, keys)."""
        return RngStream(self.seed, self.path + tuple(keys))

    @property
    def counter(self) -> int:
        return int(self.gen.bit_generator.state["state"]["counter"][0])

    def random(self, size=None) -> np.ndarray:
        return self.gen.random(size)

    def integers(self, low, high=None, size=None):
        return self.gen.integers(low, high, size)

    def normal(self, loc=0.0, scale=1.0, size=None):
        return self.gen.normal(loc, scale, size)

    def logistic(self, size=None):
        return self.gen.logistic(0.0, 1.0, size)

    def gumbel(self, size=None):
        return self.gen.gumbel(0.0, 1.0, size)

    def choice(self, n: int, p=None):
        return int(self.gen.choice(n, p=p))

    def permutation(self, n: int) -> np.ndarray:
        return self.gen.permutation(n)

    def __repr__(self) -> str:
        return f"RngStream(seed={self.seed}, path={self.path})"


def as_rng(rng: RngStream | int | None) -> RngStream:
    if isinstance(rng, RngStream):
        return rng
    return RngStream(0 if rng is None else rng)


@dataclass(frozen=True)
class SamplerSpec:
    """Sampler kind plus the accuracy knobs used by the hash sampler.

    ``pivot`` is the largest cell the hash sampler enumerates; 73 is the
    usual choice for epsilon around 0.8. ``enumeration`` selects how cells
    are listed: ``"sat"`` (solver with blocking clauses), ``"affine"``
    (Gaussian elimination over the parity system, then evaluating every
    point of the solution subspace) or ``"auto"`` (affine whenever the
    subspace has at most ``affine_limit`` free dimensions).
    """

    kind: str = "exact-model"
    epsilon: float = 0.8
    delta: float = 0.2
    pivot: int = 73
    enumeration: str = "auto"
    affine_limit: int = 16
    max_restarts: int = 1000
    conflict_budget: int | None = DEFAULT_CONFLICT_BUDGET

    def __post_init__(self):
        if self.kind not in ("interpretation", "exact-model", "hash-model", "uniform-model"):
            raise ValueError(f"unknown sampler kind {self.kind!r}")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if not 0 < self.delta < 1:
            raise ValueError("delta must lie in (0, 1)")
        if self.pivot < 1:
            raise ValueError("pivot must be at least 1")
        if self.enumeration not in ("auto", "sat", "affine"):
            raise ValueError(f"unknown enumeration backend {self.enumeration!r}")


# ------------------------------------------------------ interpretations


def sample_interpretations(w: WeightMap, s: int, rng: RngStream) -> np.ndarray:
    """``s`` independent interpretations as an (s, n) boolean array."""
    if s < 1:
        raise ValueError("need at least one sample")
    return rng.random((s, len(w))) < w.prob


# ------------------------------------------------- exact model sampling


def exact_model_samples(circuit: DecisionDnnf, w: WeightMap, count: int, rng: RngStream) -> np.ndarray:
    """Draw ``count`` models with probability ``P(M) / WMC`` each.

    Samples descend the circuit together: a decision node sends each sample
    to its high branch with probability ``w(v) * WMC(high) / WMC(node)``,
    and-nodes pass samples to all children. Variables a sample's path never
    mentions are free and keep their prior draw from ``w``.
    """
    if count < 1:
        raise ValueError("need at least one sample")
    vals = node_values(circuit, w)
    if circuit.is_false or vals[circuit.root] <= 0.0:
        raise ZeroWmc("formula has zero weighted model count")
    p = w.prob[: circuit.num_vars]
    X = rng.random((count, circuit.num_vars)) < p
    pending: dict[int, list[np.ndarray]] = {circuit.root: [np.arange(count)]}
    nodes = circuit.nodes
    for i in range(circuit.root, -1, -1):
        parts = pending.pop(i, None)
        if parts is None:
            continue
        S = parts[0] if len(parts) == 1 else np.concatenate(parts)
        node = nodes[i]
        kind = node[0]
        if kind == DEC:
            v, hi, lo = node[1], node[2], node[3]
            p_hi = p[v - 1] * vals[hi] / vals[i]
            go = rng.random(len(S)) < p_hi
            X[S, v - 1] = go
            if go.any():
                pending.setdefault(hi, []).append(S[go])
            if not go.all():
                pending.setdefault(lo, []).append(S[~go])
        elif kind == AND:
            for c in node[1]:
                pending.setdefault(c, []).append(S)
        elif kind == LIT:
            X[S, abs(node[1]) - 1] = node[1] > 0
        elif kind == FALSE:
            raise AssertionError("sampler reached a zero-weight branch")
    return X


def exact_model_sample(circuit: DecisionDnnf, w: WeightMap, rng: RngStream) -> np.ndarray:
    return exact_model_samples(circuit, w, 1, rng)[0]


# --------------------------------------------------- hash-based sampling


def random_parity(n: int, rng: RngStream) -> tuple[tuple[int, ...], int]:
    """One member of the hash family: each variable with probability 1/2."""
    mask = rng.random(n) < 0.5
    bit = int(rng.integers(0, 2))
    return tuple(int(v) + 1 for v in np.flatnonzero(mask)), bit


def _gf2_solve(n: int, parity: Sequence[tuple[Sequence[int], int]]):
    """Row-reduce the parity system. Returns (pivots, rows, free) or None."""
    A = np.zeros((len(parity), n + 1), dtype=np.uint8)
    for r, (vs, bit) in enumerate(parity):
        for v in vs:
            A[r, v - 1] ^= 1
        A[r, n] = bit
    pivots = []
    row = 0
    for col in range(n):
        hits = np.flatnonzero(A[row:, col]) + row if row < len(A) else []
        if len(hits) == 0:
            continue
        h = hits[0]
        if h != row:
            A[[row, h]] = A[[h, row]]
        others = np.flatnonzero(A[:, col])
        others = others[others != row]
        A[others] ^= A[row]
        pivots.append(col)
        row += 1
        if row == len(A):
            break
    if np.any(A[row:, n]):
        return None  # inconsistent: empty cell
    free = [c for c in range(n) if c not in set(pivots)]
    return pivots, A[:row], free


def _cell_models_affine(phi: CnfFormula, parity, limit: int) -> list[np.ndarray] | None:
    n = phi.num_vars
    solved = _gf2_solve(n, parity)
    if solved is None:
        return []
    pivots, R, free = solved
    f = len(free)
    total = 1 << f
    models: list[np.ndarray] = []
    chunk = 1 << 14
    for start in range(0, total, chunk):
        idx = np.arange(start, min(total, start + chunk), dtype=np.int64)
        F = ((idx[:, None] >> np.arange(f, dtype=np.int64)) & 1).astype(np.uint8)
        X = np.zeros((len(idx), n), dtype=np.uint8)
        if f:
            X[:, free] = F
        if pivots:
            # pivot value = rhs xor (row restricted to free columns) . free
            coef = R[:, free].astype(np.int64) if f else np.zeros((len(pivots), 0), dtype=np.int64)
            X[:, pivots] = (R[:, n][None, :] + F.astype(np.int64) @ coef.T) % 2
        Xb = X.astype(bool)
        sat = evaluate_batch(phi, Xb)
        for row in Xb[sat]:
            models.append(row)
            if len(models) > limit:
                return None
    return models


def _cell_models_sat(phi: CnfFormula, parity, limit: int, conflict_budget) -> list[np.ndarray] | None:
    out = []
    for m in iter_models(phi, parity, conflict_budget):
        out.append(m)
        if len(out) > limit:
            return None
    return out


def cell_models(phi: CnfFormula, parity, limit: int, spec: SamplerSpec) -> list[np.ndarray] | None:
    """Models of ``phi`` inside the parity cell, or None if more than ``limit``."""
    backend = spec.enumeration
    if backend == "auto":
        backend = "affine" if phi.num_vars - len(parity) <= spec.affine_limit else "sat"
    if backend == "affine":
        return _cell_models_affine(phi, parity, limit)
    return _cell_models_sat(phi, parity, limit, spec.conflict_budget)


class HashSampler:
    """Approximate weighted model sampler over random parity cells.

    For each draw, random parity constraints are added one at a time until
    the surviving cell holds at most ``pivot`` models (an empty cell restarts
    the draw with a fresh hash); one cell model is then picked with
    probability proportional to its weight. When the whole formula has at
    most ``pivot`` models no constraint is needed and sampling is exact.
    """

    def __init__(self, phi: CnfFormula, w: WeightMap, spec: SamplerSpec = SamplerSpec(kind="hash-model")):
        self.phi = phi
        self.w = w
        self.spec = spec
        self._all = cell_models(phi, [], spec.pivot, spec)
        if self._all is not None and not self._all:
            raise Unsatisfiable("formula has no model")
        if self._all is not None:
            self._all_arr = np.array(self._all, dtype=bool).reshape(len(self._all), phi.num_vars)
            self._all_p = self._weights(self._all_arr)

    def _weights(self, X: np.ndarray) -> np.ndarray:
        p = self.w.prob[: self.phi.num_vars]
        return np.prod(np.where(X, p, 1.0 - p), axis=1)

    def _pick(self, X: np.ndarray, probs: np.ndarray, rng: RngStream) -> np.ndarray:
        total = probs.sum()
        if total <= 0.0:
            raise ZeroWmc("cell has zero weight")
        u = rng.random() * total
        i = int(np.searchsorted(np.cumsum(probs), u, side="right"))
        return X[min(i, len(X) - 1)].copy()

    def sample(self, rng: RngStream) -> np.ndarray:
        if self._all is not None:
            return self._pick(self._all_arr, self._all_p, rng)
        n = self.phi.num_vars
        for _ in range(self.spec.max_restarts):
            parity: list[tuple[tuple[int, ...], int]] = []
            while True:
                parity.append(random_parity(n, rng))
                cell = cell_models(self.phi, parity, self.spec.pivot, self.spec)
                if cell is None:
                    continue
                if not cell:
                    break
                X = np.array(cell, dtype=bool)
                return self._pick(X, self._weights(X), rng)
        raise BudgetExceeded("hash sampler exhausted its restarts")

    def samples(self, count: int, rng: RngStream) -> np.ndarray:
        if count < 1:
            raise ValueError("need at least one sample")
        if self._all is not None:
            p = self._all_p / self._all_p.sum()
            cdf = np.cumsum(p)
            idx = np.searchsorted(cdf, rng.random(count) * cdf[-1], side="right")
            return self._all_arr[np.minimum(idx, len(p) - 1)].copy()
        return np.array([self.sample(rng) for _ in range(count)], dtype=bool).reshape(count, self.phi.num_vars)


def hash_model_sample(phi: CnfFormula, w: WeightMap, spec: SamplerSpec, rng: RngStream) -> np.ndarray:
    return HashSampler(phi, w, spec).sample(rng)


def uniform_model_sample(phi: CnfFormula, rng: RngStream, spec: SamplerSpec | None = None) -> np.ndarray:
    """Hash sampling with every weight at 1/2, i.e. uniform over models."""
    spec = spec or SamplerSpec(kind="uniform-model")
    return HashSampler(phi, WeightMap.uniform(phi.num_vars), spec).sample(rng)


def uniform_model_samples(phi: CnfFormula, count: int, rng: RngStream, spec: SamplerSpec | None = None) -> np.ndarray:
    spec = spec or SamplerSpec(kind="uniform-model")
    return HashSampler(phi, WeightMap.uniform(phi.num_vars), spec).samples(count, rng)
