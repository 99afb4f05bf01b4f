"""Exact weighted model counting by compilation to decision-DNNF.

``compile_cnf`` runs an exhaustive DPLL search with unit propagation,
connected-component decomposition and a component cache; its trace is the
circuit. Evaluating the circuit bottom-up gives the WMC, and one reverse
pass gives every partial derivative at once.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Callable, Iterable

import numpy as np

from .logic import CnfFormula, WeightMap, condition, evaluate_batch
from .sat import iter_models

TRUE, FALSE, LIT, AND, DEC = range(5)
_KIND_NAMES = {TRUE: "T", FALSE: "F", LIT: "L", AND: "A", DEC: "D"}

DEFAULT_NODE_BUDGET = 10_000_000
DEFAULT_TIME_BUDGET = 300.0
BRUTE_FORCE_LIMIT = 24


class CompileBudgetExceeded(RuntimeError):
    pass


class TooManyVariables(ValueError):
    pass


class TooManyModels(RuntimeError):
    pass


@dataclass(frozen=True)
class CompileStats:
    nodes: int
    cache_hits: int
    decisions: int
    seconds: float


@dataclass(frozen=True)
class DecisionDnnf:
    """Node arena in topological order (children precede parents).

    Each node is a tuple: ``(TRUE,)``, ``(FALSE,)``, ``(LIT, lit)``,
    ``(AND, child_ids)`` or ``(DEC, var, high_id, low_id)`` where the high
    branch is conditioned on ``var`` and the low branch on ``-var``.
    """

    num_vars: int
    nodes: tuple[tuple, ...]
    root: int
    stats: CompileStats | None = None

    @property
    def is_false(self) -> bool:
        return self.nodes[self.root][0] == FALSE

    def __len__(self) -> int:
        return len(self.nodes)

    def variables(self) -> set[int]:
        out = set()
        for node in self.nodes:
            if node[0] == LIT:
                out.add(abs(node[1]))
            elif node[0] == DEC:
                out.add(node[1])
        return out


@dataclass(frozen=True)
class WmcResult:
    value: float
    normalization_exponent: int = 0
    stats: CompileStats | None = None

    @property
    def unnormalized(self) -> float:
        """The count under the original unit weights: ``value * 2**u``."""
        return self.value * 2.0 ** self.normalization_exponent


@dataclass(frozen=True)
class GradientVector:
    """Partials w.r.t. each ``w(x)``; ``of`` is ``"wmc"`` or ``"logwmc"``."""

    values: np.ndarray
    of: str = "wmc"

    def __post_init__(self):
        if self.of not in ("wmc", "logwmc"):
            raise ValueError(f"unknown gradient target {self.of!r}")
        v = np.asarray(self.values, dtype=float)
        if not np.all(np.isfinite(v)):
            raise ValueError("gradient has non-finite entries")
        object.__setattr__(self, "values", v)

    def __len__(self) -> int:
        return len(self.values)


# ------------------------------------------------------------- compiler


def branch_most_constrained(clauses: list[tuple[int, ...]]) -> int:
    """Variable occurring most often in the shortest clauses.

    Ties are broken by total occurrences, then by the smaller index.
    """
    shortest = min(len(c) for c in clauses)
    short: dict[int, int] = {}
    total: dict[int, int] = {}
    for c in clauses:
        for lit in c:
            v = abs(lit)
            total[v] = total.get(v, 0) + 1
            if len(c) == shortest:
                short[v] = short.get(v, 0) + 1
    return max(total, key=lambda v: (short.get(v, 0), total[v], -v))


class _Compiler:
    def __init__(self, node_budget, time_budget, heuristic):
        self.nodes: list[tuple] = [(FALSE,), (TRUE,)]
        self.unique: dict[tuple, int] = {(FALSE,): 0, (TRUE,): 1}
        self.cache: dict[tuple, int] = {}
        self.cache_hits = 0
        self.decisions = 0
        self.node_budget = node_budget
        self.deadline = None if time_budget is None else time.perf_counter() + time_budget
        self.heuristic = heuristic

    def mk(self, node: tuple) -> int:
        nid = self.unique.get(node)
        if nid is None:
            nid = len(self.nodes)
            if self.node_budget is not None and nid >= self.node_budget:
                raise CompileBudgetExceeded(f"node budget {self.node_budget} exceeded")
            self.nodes.append(node)
            self.unique[node] = nid
        return nid

    def mk_and(self, children: list[int]) -> int:
        kids = []
        for c in children:
            if c == 0:
                return 0
            if c != 1:
                kids.append(c)
        if not kids:
            return 1
        if len(kids) == 1:
            return kids[0]
        return self.mk((AND, tuple(sorted(kids))))

    def compile(self, clauses: list[tuple[int, ...]]) -> int:
        units: list[int] = []
        pending = {c[0] for c in clauses if len(c) == 1}
        while pending:
            if any(-u in pending for u in pending):
                return 0
            units.extend(sorted(pending, key=abs))
            assigned = pending
            pending = set()
            out = []
            for c in clauses:
                hit = False
                shrink = False
                for l in c:
                    if l in assigned:
                        hit = True
                        break
                    if -l in assigned:
                        shrink = True
                if hit:
                    continue
                if shrink:
                    c = tuple(l for l in c if -l not in assigned)
                    if not c:
                        return 0
                    if len(c) == 1:
                        pending.add(c[0])
                out.append(c)
            clauses = out
        children = [self.mk((LIT, u)) for u in units]
        for comp in _components(clauses):
            nid = self.component(comp)
            if nid == 0:
                return 0
            children.append(nid)
        return self.mk_and(children)

    def component(self, clauses: list[tuple[int, ...]]) -> int:
        key = tuple(sorted(tuple(sorted(c)) for c in clauses))
        hit = self.cache.get(key)
        if hit is not None:
            self.cache_hits += 1
            return hit
        if self.deadline is not None and time.perf_counter() > self.deadline:
            raise CompileBudgetExceeded("compilation time budget exceeded")
        v = self.heuristic(clauses)
        self.decisions += 1
        hi = self.compile(_condition(clauses, v))
        lo = self.compile(_condition(clauses, -v))
        if hi == 0 and lo == 0:
            nid = 0
        else:
            nid = self.mk((DEC, v, hi, lo))
        self.cache[key] = nid
        return nid


def _condition(clauses, lit):
    out = []
    for c in clauses:
        if lit in c:
            continue
        if -lit in c:
            c = tuple(l for l in c if l != -lit)
        out.append(c)
    return out


def _components(clauses: list[tuple[int, ...]]) -> list[list[tuple[int, ...]]]:
    if not clauses:
        return []
    parent: dict[int, int] = {}

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for c in clauses:
        root = None
        for lit in c:
            v = abs(lit)
            if v not in parent:
                parent[v] = v
            r = find(v)
            if root is None:
                root = r
            elif r != root:
                parent[r] = root
    groups: dict[int, list] = {}
    for c in clauses:
        groups.setdefault(find(abs(c[0])), []).append(c)
    return sorted(groups.values(), key=lambda g: min(abs(l) for c in g for l in c))


def compile_cnf(phi: CnfFormula, node_budget: int | None = DEFAULT_NODE_BUDGET,
                time_budget: float | None = DEFAULT_TIME_BUDGET,
                heuristic: Callable[[list], int] = branch_most_constrained) -> DecisionDnnf:
    """Compile ``phi`` into an equivalent decision-DNNF circuit.

    Pass ``None`` budgets for unbounded ground-truth runs.
    """
    start = time.perf_counter()
    comp = _Compiler(node_budget, time_budget, heuristic)
    if phi.is_false:
        root = 0
    else:
        root = comp.compile(list(phi.clauses))
    nodes, root = _prune(comp.nodes, root)
    stats = CompileStats(len(nodes), comp.cache_hits, comp.decisions, time.perf_counter() - start)
    return DecisionDnnf(phi.num_vars, nodes, root, stats)


def _prune(nodes: list[tuple], root: int) -> tuple[tuple[tuple, ...], int]:
    """Keep nodes reachable from the root, renumbered in topological order."""
    reach = [False] * len(nodes)
    reach[root] = True
    for i in range(root, -1, -1):
        if not reach[i]:
            continue
        node = nodes[i]
        if node[0] == AND:
            for c in node[1]:
                reach[c] = True
        elif node[0] == DEC:
            reach[node[2]] = reach[node[3]] = True
    remap: dict[int, int] = {}
    out: list[tuple] = []
    for i, node in enumerate(nodes):
        if not reach[i]:
            continue
        if node[0] == AND:
            node = (AND, tuple(remap[c] for c in node[1]))
        elif node[0] == DEC:
            node = (DEC, node[1], remap[node[2]], remap[node[3]])
        remap[i] = len(out)
        out.append(node)
    return tuple(out), remap[root]


# ----------------------------------------------------- evaluation passes


def node_values(circuit: DecisionDnnf, w: WeightMap) -> list[float]:
    """WMC of every node's sub-circuit, in arena order."""
    p = w.prob.tolist()
    vals: list[float] = []
    append = vals.append
    for node in circuit.nodes:
        kind = node[0]
        if kind == DEC:
            wv = p[node[1] - 1]
            append(wv * vals[node[2]] + (1.0 - wv) * vals[node[3]])
        elif kind == AND:
            prod = 1.0
            for c in node[1]:
                prod *= vals[c]
            append(prod)
        elif kind == LIT:
            lit = node[1]
            append(p[lit - 1] if lit > 0 else 1.0 - p[-lit - 1])
        elif kind == TRUE:
            append(1.0)
        else:
            append(0.0)
    return vals


def wmc_eval(circuit: DecisionDnnf, w: WeightMap, normalization_exponent: int = 0) -> WmcResult:
    if len(w) < circuit.num_vars:
        raise ValueError("weight map does not cover the circuit's variables")
    vals = node_values(circuit, w)
    return WmcResult(float(vals[circuit.root]), normalization_exponent, circuit.stats)


def wmc_grad(circuit: DecisionDnnf, w: WeightMap, normalization_exponent: int = 0,
             of: str = "wmc") -> tuple[WmcResult, GradientVector]:
    """WMC and all partials ``dWMC/dw(x)`` from one reverse pass.

    Variables absent from the circuit get 0. With ``of="logwmc"`` the
    partials are divided by the WMC (zero WMC gives a zero vector).
    """
    if len(w) < circuit.num_vars:
        raise ValueError("weight map does not cover the circuit's variables")
    p = w.prob.tolist()
    nodes = circuit.nodes
    vals = node_values(circuit, w)
    adj = [0.0] * len(nodes)
    adj[circuit.root] = 1.0
    grad = np.zeros(circuit.num_vars)
    for i in range(circuit.root, -1, -1):
        a = adj[i]
        if a == 0.0:
            continue
        node = nodes[i]
        kind = node[0]
        if kind == DEC:
            v, hi, lo = node[1], node[2], node[3]
            wv = p[v - 1]
            grad[v - 1] += a * (vals[hi] - vals[lo])
            adj[hi] += a * wv
            adj[lo] += a * (1.0 - wv)
        elif kind == AND:
            kids = node[1]
            k = len(kids)
            # product of the other children without dividing
            prefix = [1.0] * (k + 1)
            for j in range(k):
                prefix[j + 1] = prefix[j] * vals[kids[j]]
            suffix = 1.0
            for j in range(k - 1, -1, -1):
                adj[kids[j]] += a * prefix[j] * suffix
                suffix *= vals[kids[j]]
        elif kind == LIT:
            lit = node[1]
            grad[abs(lit) - 1] += a if lit > 0 else -a
    value = float(vals[circuit.root])
    if of == "logwmc":
        grad = grad / value if value > 0.0 else np.zeros_like(grad)
    return WmcResult(value, normalization_exponent, circuit.stats), GradientVector(grad, of)


# ------------------------------------------------------------ oracles


def _all_interpretations(n: int, start: int, stop: int) -> np.ndarray:
    idx = np.arange(start, stop, dtype=np.int64)
    # variable 1 is the most significant bit: rows come out in lex order
    shifts = np.arange(n - 1, -1, -1, dtype=np.int64)
    return ((idx[:, None] >> shifts) & 1).astype(bool)


def iter_interpretations(n: int, chunk: int = 1 << 16) -> Iterable[np.ndarray]:
    total = 1 << n
    for start in range(0, total, chunk):
        yield _all_interpretations(n, start, min(total, start + chunk))


def wmc_brute(phi: CnfFormula, w: WeightMap, limit: int = BRUTE_FORCE_LIMIT, normalization_exponent: int = 0) -> WmcResult:
    """Direct sum of interpretation probabilities over all models."""
    n = phi.num_vars
    if n > limit:
        raise TooManyVariables(f"{n} variables exceeds brute-force limit {limit}")
    p = w.prob[:n]
    total = 0.0
    for X in iter_interpretations(n):
        sat = evaluate_batch(phi, X)
        if not sat.any():
            continue
        probs = np.prod(np.where(X[sat], p, 1.0 - p), axis=1)
        total += float(np.sum(probs))
    return WmcResult(total, normalization_exponent)


def enumerate_models(phi: CnfFormula, limit: int = 1 << 20) -> list[np.ndarray]:
    """All models via repeated SAT calls with blocking clauses."""
    out = []
    for m in iter_models(phi):
        if len(out) >= limit:
            raise TooManyModels(f"more than {limit} models")
        out.append(m)
    return out


def dump_nnf(circuit: DecisionDnnf) -> str:
    """Line-based debug dump: ``id kind operands``."""
    lines = [f"nnf {len(circuit.nodes)} root {circuit.root} vars {circuit.num_vars}"]
    for i, node in enumerate(circuit.nodes):
        kind = node[0]
        if kind == AND:
            ops = " ".join(map(str, node[1]))
        elif kind == DEC:
            ops = f"{node[1]} {node[2]} {node[3]}"
        elif kind == LIT:
            ops = str(node[1])
        else:
            ops = ""
        lines.append(f"{i} {_KIND_NAMES[kind]} {ops}".rstrip())
    return "\n".join(lines) + "\n"


def load_nnf(text: str) -> DecisionDnnf:
    lines = [l.split() for l in text.strip().splitlines()]
    head = lines[0]
    root, n = int(head[3]), int(head[5])
    names = {v: k for k, v in _KIND_NAMES.items()}
    nodes = []
    for parts in lines[1:]:
        kind = names[parts[1]]
        ops = [int(x) for x in parts[2:]]
        if kind == AND:
            nodes.append((AND, tuple(ops)))
        elif kind == DEC:
            nodes.append((DEC, *ops))
        elif kind == LIT:
            nodes.append((LIT, ops[0]))
        else:
            nodes.append((kind,))
    return DecisionDnnf(n, tuple(nodes), root)


def conditioned_wmc(phi: CnfFormula, w: WeightMap, lit: int, **budget) -> float:
    return wmc_eval(compile_cnf(condition(phi, lit), **budget), w).value
