"""Propositional CNF formulas, Bernoulli weights and their evaluation.

Literals follow the DIMACS convention: variable ``v`` (1-based) is the
positive literal ``v`` and its negation is ``-v``. A clause is a tuple of
literals, a formula a tuple of clauses. An interpretation is a boolean
numpy vector of length ``num_vars`` whose entry ``i`` holds variable ``i+1``.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np

DEFAULT_CLAMP = 1e-6


class DimacsError(ValueError):
    """Raised for malformed DIMACS input."""


def var(lit: int) -> int:
    return abs(lit)


def neg(lit: int) -> int:
    return -lit


def normalize_clause(lits: Iterable[int]) -> tuple[int, ...] | None:
    """Deduplicate literals, keeping first occurrence order.

    Returns None for a tautological clause.
    """
    seen: dict[int, None] = {}
    for lit in lits:
        if lit == 0:
            raise ValueError("0 is not a literal")
        if -lit in seen:
            return None
        seen[lit] = None
    return tuple(seen)


@dataclass(frozen=True)
class CnfFormula:
    """Conjunction of clauses over variables ``1..num_vars``.

    No clauses means the true formula; an empty clause makes it false.
    """

    num_vars: int
    clauses: tuple[tuple[int, ...], ...] = ()

    def __post_init__(self):
        if self.num_vars < 0:
            raise ValueError("num_vars must be non-negative")
        for clause in self.clauses:
            for lit in clause:
                if lit == 0 or abs(lit) > self.num_vars:
                    raise ValueError(f"literal {lit} out of range 1..{self.num_vars}")

    @classmethod
    def from_clauses(cls, num_vars: int, clauses: Iterable[Iterable[int]]) -> CnfFormula:
        """Build a formula, dropping tautologies and duplicate literals."""
        out = []
        for c in clauses:
            nc = normalize_clause(c)
            if nc is not None:
                out.append(nc)
        return cls(num_vars, tuple(out))

    @property
    def is_false(self) -> bool:
        return any(len(c) == 0 for c in self.clauses)

    @property
    def is_true(self) -> bool:
        return not self.clauses

    def variables(self) -> set[int]:
        return {abs(lit) for c in self.clauses for lit in c}

    def conjoin(self, clauses: Iterable[Iterable[int]], num_vars: int | None = None) -> CnfFormula:
        n = self.num_vars if num_vars is None else max(num_vars, self.num_vars)
        extra = CnfFormula.from_clauses(n, clauses).clauses
        return CnfFormula(n, self.clauses + extra)

    @cached_property
    def _padded(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        # (var index 0-based, polarity, mask), each of shape (m, kmax)
        m = len(self.clauses)
        k = max((len(c) for c in self.clauses), default=0)
        idx = np.zeros((m, max(k, 1)), dtype=np.int64)
        pos = np.zeros((m, max(k, 1)), dtype=bool)
        mask = np.zeros((m, max(k, 1)), dtype=bool)
        for i, c in enumerate(self.clauses):
            for j, lit in enumerate(c):
                idx[i, j] = abs(lit) - 1
                pos[i, j] = lit > 0
                mask[i, j] = True
        return idx, pos, mask


@dataclass(frozen=True)
class WeightMap:
    """Bernoulli parameter ``w(x)`` per variable; ``w(-x) = 1 - w(x)``."""

    prob: np.ndarray
    clamp_margin: float = DEFAULT_CLAMP

    def __post_init__(self):
        p = np.array(self.prob, dtype=float, copy=True).reshape(-1)
        if np.any(~np.isfinite(p)) or np.any(p < 0.0) or np.any(p > 1.0):
            raise ValueError("weights must lie in [0, 1]")
        p.setflags(write=False)
        object.__setattr__(self, "prob", p)

    @classmethod
    def uniform(cls, num_vars: int, value: float = 0.5) -> WeightMap:
        return cls(np.full(num_vars, value))

    def __len__(self) -> int:
        return len(self.prob)

    def __eq__(self, other) -> bool:
        if not isinstance(other, WeightMap):
            return NotImplemented
        return self.clamp_margin == other.clamp_margin and np.array_equal(self.prob, other.prob)

    __hash__ = None  # type: ignore[assignment]

    def lit(self, lit: int) -> float:
        p = self.prob[abs(lit) - 1]
        return float(p) if lit > 0 else float(1.0 - p)

    def clamped(self) -> WeightMap:
        m = self.clamp_margin
        return WeightMap(np.clip(self.prob, m, 1.0 - m), m)

    def with_value(self, v: int, value: float) -> WeightMap:
        p = self.prob.copy()
        p[v - 1] = value
        return WeightMap(p, self.clamp_margin)

    def extended(self, num_vars: int, value: float = 0.5) -> WeightMap:
        if num_vars <= len(self.prob):
            return self
        p = np.concatenate([self.prob, np.full(num_vars - len(self.prob), value)])
        return WeightMap(p, self.clamp_margin)


# ---------------------------------------------------------------- DIMACS

_WEIGHT_MCC = re.compile(r"^c\s+p\s+weight\s+(\S+)\s+(\S+)(?:\s+0)?\s*$")
_WEIGHT_LEGACY = re.compile(r"^w\s+(\S+)\s+(\S+)(?:\s+0)?\s*$")


def parse_dimacs(text: str) -> tuple[CnfFormula, WeightMap, int]:
    """Parse weighted DIMACS CNF.

    Grammar, one item per line::

        c <comment>
        p cnf <num_vars> <num_clauses>
        c p weight <lit> <w> 0      (MCC 2021+ style)
        w <lit> <w> [0]             (legacy style)
        <lit> <lit> ... 0           (clauses; may span lines)

    A weight for ``-v`` sets ``w(v) = 1 - w``. Variables without a weight get
    0.5 and count towards the returned normalization exponent ``u``: the
    unit-weight WMC equals the parsed WMC times ``2**u``.
    """
    num_vars = None
    declared_clauses = None
    weights: dict[int, float] = {}
    clauses: list[list[int]] = []
    current: list[int] = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("%"):
            continue
        m = _WEIGHT_MCC.match(line) or _WEIGHT_LEGACY.match(line)
        if m:
            if num_vars is None:
                raise DimacsError(f"line {lineno}: weight before header")
            try:
                lit = int(m.group(1))
                value = float(m.group(2))
            except ValueError:
                raise DimacsError(f"line {lineno}: bad weight line {line!r}") from None
            if lit == 0 or abs(lit) > num_vars:
                raise DimacsError(f"line {lineno}: weight literal {lit} out of range")
            if not 0.0 <= value <= 1.0 or math.isnan(value):
                raise DimacsError(f"line {lineno}: weight {value} outside [0,1]")
            v = abs(lit)
            if v in weights:
                raise DimacsError(f"line {lineno}: duplicate weight for variable {v}")
            weights[v] = value if lit > 0 else 1.0 - value
            continue
        if line.startswith("c"):
            continue
        if line.startswith("p"):
            parts = line.split()
            if num_vars is not None:
                raise DimacsError(f"line {lineno}: duplicate header")
            if len(parts) != 4 or parts[1] not in ("cnf", "wcnf"):
                raise DimacsError(f"line {lineno}: malformed header {line!r}")
            try:
                num_vars, declared_clauses = int(parts[2]), int(parts[3])
            except ValueError:
                raise DimacsError(f"line {lineno}: malformed header {line!r}") from None
            if num_vars < 0 or declared_clauses < 0:
                raise DimacsError(f"line {lineno}: malformed header {line!r}")
            continue
        if num_vars is None:
            raise DimacsError(f"line {lineno}: clause before header")
        for tok in line.split():
            try:
                lit = int(tok)
            except ValueError:
                raise DimacsError(f"line {lineno}: bad literal {tok!r}") from None
            if lit == 0:
                clauses.append(current)
                current = []
            elif abs(lit) > num_vars:
                raise DimacsError(f"line {lineno}: literal {lit} out of range 1..{num_vars}")
            else:
                current.append(lit)
    if num_vars is None:
        raise DimacsError("missing 'p cnf' header")
    if current:
        clauses.append(current)
    if declared_clauses is not None and len(clauses) != declared_clauses:
        raise DimacsError(f"header declares {declared_clauses} clauses, found {len(clauses)}")
    prob = np.full(num_vars, 0.5)
    for v, value in weights.items():
        prob[v - 1] = value
    u = num_vars - len(weights)
    return CnfFormula.from_clauses(num_vars, clauses), WeightMap(prob), u


def serialize_dimacs(phi: CnfFormula, w: WeightMap | None = None, u: int | None = None) -> str:
    """Emit the MCC dialect read by :func:`parse_dimacs`.

    Weights are written with 17 significant digits. Passing the
    normalization exponent ``u`` leaves the first ``u`` variables weighted
    exactly 0.5 undeclared, so a re-parse reproduces ``u``.
    """
    lines = [f"p cnf {phi.num_vars} {len(phi.clauses)}"]
    if w is not None:
        skip = u or 0
        for v in range(1, phi.num_vars + 1):
            p = float(w.prob[v - 1])
            if skip and p == 0.5:
                skip -= 1
                continue
            lines.append(f"c p weight {v} {p:.17g} 0")
    for c in phi.clauses:
        lines.append(" ".join(str(lit) for lit in c) + " 0")
    return "\n".join(lines) + "\n"


# ------------------------------------------------------- basic semantics


def condition(phi: CnfFormula, lit: int) -> CnfFormula:
    """Set ``lit`` true. The variable stays declared but becomes vacuous."""
    if lit == 0 or abs(lit) > phi.num_vars:
        raise ValueError(f"literal {lit} out of range")
    out = []
    for c in phi.clauses:
        if lit in c:
            continue
        if -lit in c:
            c = tuple(l for l in c if l != -lit)
        out.append(c)
    return CnfFormula(phi.num_vars, tuple(out))


def condition_all(phi: CnfFormula, lits: Iterable[int]) -> CnfFormula:
    lits = set(lits)
    out = []
    for c in phi.clauses:
        if any(l in lits for l in c):
            continue
        out.append(tuple(l for l in c if -l not in lits))
    return CnfFormula(phi.num_vars, tuple(out))


def evaluate(phi: CnfFormula, interp: Sequence[bool] | np.ndarray) -> bool:
    """True iff every clause has a literal made true by ``interp``."""
    x = np.asarray(interp, dtype=bool)
    if x.shape != (phi.num_vars,):
        raise ValueError("interpretation must assign every variable")
    for c in phi.clauses:
        if not any(x[abs(l) - 1] == (l > 0) for l in c):
            return False
    return True


def evaluate_batch(phi: CnfFormula, X: np.ndarray, chunk: int = 4096) -> np.ndarray:
    """Vectorized :func:`evaluate` over the rows of a (b, n) boolean array."""
    X = np.asarray(X, dtype=bool)
    b = X.shape[0]
    if phi.is_false:
        return np.zeros(b, dtype=bool)
    if phi.is_true:
        return np.ones(b, dtype=bool)
    idx, pos, mask = phi._padded
    out = np.empty(b, dtype=bool)
    for start in range(0, b, chunk):
        sl = X[start:start + chunk]
        truth = (sl[:, idx] == pos) & mask
        out[start:start + chunk] = truth.any(axis=2).all(axis=1)
    return out


def interpretation_prob(interp: Sequence[bool] | np.ndarray, w: WeightMap) -> float:
    x = np.asarray(interp, dtype=bool)
    return float(np.prod(np.where(x, w.prob, 1.0 - w.prob)))


def log_interpretation_prob(interp, w: WeightMap) -> float:
    x = np.asarray(interp, dtype=bool)
    with np.errstate(divide="ignore"):
        return float(np.sum(np.log(np.where(x, w.prob, 1.0 - w.prob))))


def clause_prob(clause: Sequence[int], w: WeightMap) -> float:
    """``1 - prod w(-l)``: probability that a clause holds under independence."""
    fail = 1.0
    for lit in clause:
        fail *= w.lit(-lit)
    return 1.0 - fail


def fuzzy_eval(phi: CnfFormula, w: WeightMap, tnorm: str = "product") -> float:
    """Clause-wise t-norm relaxation of ``phi``."""
    if tnorm == "product":
        out = 1.0
        for c in phi.clauses:
            out *= clause_prob(c, w)
        return out
    if tnorm in ("goedel", "godel"):
        return min((max((w.lit(l) for l in c), default=0.0) for c in phi.clauses), default=1.0)
    raise ValueError(f"unknown t-norm {tnorm!r}")


# -------------------------------------------------------------- encodings


@dataclass(frozen=True)
class CategoricalEncoding:
    """Boolean chain encoding of one categorical variable.

    ``indicators[i]`` is the variable standing for outcome ``i``; ``thetas``
    are the auxiliary choice variables. ``normalization_exponent`` counts the
    indicator variables weighted 0.5 in place of 1.
    """

    clauses: tuple[tuple[int, ...], ...]
    weights: dict[int, float]
    indicators: tuple[int, ...]
    thetas: tuple[int, ...]
    normalization_exponent: int
    num_vars: int = field(default=0)


def encode_categorical(probabilities: Sequence[float], first_var: int = 1) -> CategoricalEncoding:
    """Encode a categorical distribution with Bernoulli variables only.

    Outcome ``a_i`` holds iff no earlier outcome holds and its choice
    variable ``theta_i`` (weight ``P(a_i) / P(A not in a_1..a_{i-1})``) is
    true; the last outcome takes the remaining case. Requires
    ``len(probabilities) >= 2`` and a sum of 1 within 1e-9.
    """
    probs = [float(p) for p in probabilities]
    k = len(probs)
    if k < 2:
        raise ValueError("a categorical variable needs at least two outcomes")
    if any(p < 0.0 or p > 1.0 or math.isnan(p) for p in probs):
        raise ValueError("probabilities must lie in [0, 1]")
    if abs(sum(probs) - 1.0) > 1e-9:
        raise ValueError("probabilities must sum to 1")
    indicators = tuple(range(first_var, first_var + k))
    thetas = tuple(range(first_var + k, first_var + 2 * k - 1))
    clauses: list[tuple[int, ...]] = []
    weights: dict[int, float] = {a: 0.5 for a in indicators}
    remaining = 1.0
    for i in range(k):
        a = indicators[i]
        prev = indicators[:i]
        if i < k - 1:
            t = thetas[i]
            # a <-> (~a_1 & ... & ~a_{i-1} & t)
            clauses.append(tuple([-a, t]))
            clauses.extend((-a, -b) for b in prev)
            clauses.append(tuple([a, -t] + list(prev)))
            if remaining <= 0.0:
                theta = 0.0
            else:
                theta = min(1.0, max(0.0, probs[i] / remaining))
            weights[t] = theta
            remaining -= probs[i]
        else:
            # a <-> (~a_1 & ... & ~a_{k-1})
            clauses.extend((-a, -b) for b in prev)
            clauses.append(tuple([a] + list(prev)))
    n = first_var + 2 * k - 2
    return CategoricalEncoding(tuple(clauses), weights, indicators, thetas, k, n)


def is_implicant(phi: CnfFormula, pi: Iterable[int], sat_oracle=None) -> bool:
    """True iff conditioning on every literal of ``pi`` makes ``phi`` valid.

    A CNF is valid iff each remaining clause is valid; after conditioning the
    clauses are non-tautological, so validity means no clause survives. The
    ``sat_oracle`` (``formula -> bool``), when given, is asked instead whether
    the negation of the residual has a model.
    """
    lits = list(pi)
    if any(-l in lits for l in lits):
        raise ValueError("implicant is inconsistent")
    residual = condition_all(phi, lits)
    if sat_oracle is None:
        return residual.is_true
    # The negation of a CNF is satisfiable iff some clause can be falsified.
    return not any(sat_oracle(_clause_negation(residual.num_vars, c)) for c in residual.clauses)


def _clause_negation(num_vars: int, clause: tuple[int, ...]) -> CnfFormula:
    return CnfFormula(num_vars, tuple((-l,) for l in clause))
