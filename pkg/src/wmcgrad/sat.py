"""SAT solving with parity constraints, MPE and top-k model search.

The solver is a plain CDCL engine: two watched literals, first-UIP learning,
activity-based branching with phase saving, Luby restarts. Parity (XOR)
constraints are Tseitin-encoded into CNF over fresh auxiliary variables,
which never appear in returned models.
"""

from __future__ import annotations

import heapq
import itertools
import math
from dataclasses import dataclass
from typing import Iterable, Iterator, Sequence

import numpy as np

from .logic import CnfFormula, WeightMap

DEFAULT_CONFLICT_BUDGET = 1_000_000


class Unsatisfiable(Exception):
    """The formula (with its constraints) has no model."""


class BudgetExceeded(RuntimeError):
    """A conflict or node budget ran out before an answer was found."""


def _code(lit: int) -> int:
    return 2 * (abs(lit) - 1) + (lit < 0)


def _luby(i: int) -> int:
    size, seq = 1, 0
    while size < i + 1:
        seq += 1
        size = 2 * size + 1
    while size - 1 != i:
        size = (size - 1) >> 1
        seq -= 1
        i = i % size
    return 1 << seq


class Solver:
    """Incremental CDCL solver over DIMACS-style integer literals."""

    def __init__(self, num_vars: int = 0, phases: Sequence[bool] | None = None):
        self.nvars = 0
        self.ok = True
        self.clauses: list[list[int]] = []
        self.learnt: set[int] = set()
        self.watches: list[list[int]] = []
        self.lv: list[int] = []  # per literal code: 1 true, 0 false, -1 free
        self.level: list[int] = []
        self.reason: list[int] = []
        self.activity: list[float] = []
        self.polarity: list[bool] = []  # saved phase, True = negative
        self.trail: list[int] = []
        self.trail_lim: list[int] = []
        self.qhead = 0
        self.var_inc = 1.0
        self.heap: list[tuple[float, int]] = []
        self.conflicts = 0
        self.decisions = 0
        self.add_vars(num_vars)
        if phases is not None:
            for v, ph in enumerate(phases[:num_vars]):
                self.polarity[v] = not ph

    # -------------------------------------------------------- construction

    def add_vars(self, count: int) -> int:
        """Append ``count`` variables; returns the first new DIMACS index."""
        first = self.nvars + 1
        for _ in range(count):
            v = self.nvars
            self.nvars += 1
            self.watches += [[], []]
            self.lv += [-1, -1]
            self.level.append(0)
            self.reason.append(-1)
            self.activity.append(0.0)
            self.polarity.append(True)
            heapq.heappush(self.heap, (0.0, v))
        return first

    def add_clause(self, lits: Iterable[int]) -> bool:
        """Add a clause at decision level 0. Returns False once unsatisfiable."""
        if not self.ok:
            return False
        self._cancel_until(0)
        codes: list[int] = []
        for lit in lits:
            if abs(lit) > self.nvars or lit == 0:
                raise ValueError(f"literal {lit} out of range")
            c = _code(lit)
            val = self.lv[c]
            if val == 1 or (c ^ 1) in codes:
                return True
            if val == 0 or c in codes:
                continue
            codes.append(c)
        if not codes:
            self.ok = False
            return False
        if len(codes) == 1:
            self._enqueue(codes[0], -1)
            if self._propagate() != -1:
                self.ok = False
            return self.ok
        self._attach(codes, learnt=False)
        return True

    def add_xor(self, variables: Sequence[int], parity: int, chunk: int = 3) -> bool:
        """Constrain ``xor(variables) == parity`` via auxiliary variables."""
        xs = [v for v in variables]
        if len(set(xs)) != len(xs):
            # x xor x cancels
            counts: dict[int, int] = {}
            for v in xs:
                counts[v] = counts.get(v, 0) ^ 1
            xs = [v for v, c in counts.items() if c]
        parity &= 1
        while len(xs) > chunk + 1:
            head, xs = xs[:chunk], xs[chunk:]
            t = self.add_vars(1)
            # t == xor(head)  <=>  xor(head + [t]) == 0
            if not self._add_small_xor(head + [t], 0):
                return False
            xs.append(t)
        return self._add_small_xor(xs, parity)

    def _add_small_xor(self, xs: list[int], parity: int) -> bool:
        if not xs:
            if parity:
                self.ok = False
            return self.ok
        for bits in itertools.product((False, True), repeat=len(xs)):
            if sum(bits) % 2 != parity:
                # forbid this assignment
                if not self.add_clause([-v if b else v for v, b in zip(xs, bits)]):
                    return False
        return True

    def _attach(self, codes: list[int], learnt: bool) -> int:
        ci = len(self.clauses)
        self.clauses.append(codes)
        self.watches[codes[0]].append(ci)
        self.watches[codes[1]].append(ci)
        if learnt:
            self.learnt.add(ci)
        return ci

    # ------------------------------------------------------------ search

    def _enqueue(self, code: int, reason: int) -> None:
        v = code >> 1
        self.lv[code] = 1
        self.lv[code ^ 1] = 0
        self.level[v] = len(self.trail_lim)
        self.reason[v] = reason
        self.trail.append(code)

    def _propagate(self) -> int:
        lv = self.lv
        clauses = self.clauses
        watches = self.watches
        trail = self.trail
        while self.qhead < len(trail):
            p = trail[self.qhead]
            self.qhead += 1
            false_lit = p ^ 1
            ws = watches[false_lit]
            keep: list[int] = []
            n = len(ws)
            i = 0
            while i < n:
                ci = ws[i]
                i += 1
                c = clauses[ci]
                if c[0] == false_lit:
                    c[0], c[1] = c[1], false_lit
                first = c[0]
                if lv[first] == 1:
                    keep.append(ci)
                    continue
                for k in range(2, len(c)):
                    if lv[c[k]] != 0:
                        c[1], c[k] = c[k], false_lit
                        watches[c[1]].append(ci)
                        break
                else:
                    keep.append(ci)
                    if lv[first] == 0:
                        keep.extend(ws[i:])
                        watches[false_lit] = keep
                        self.qhead = len(trail)
                        return ci
                    self._enqueue(first, ci)
            watches[false_lit] = keep
        return -1

    def _analyze(self, confl: int) -> tuple[list[int], int]:
        seen = self._seen
        level = self.level
        cur = len(self.trail_lim)
        learnt = [0]
        path = 0
        p = -1
        idx = len(self.trail) - 1
        touched = []
        c = self.clauses[confl]
        while True:
            for q in (c if p == -1 else c[1:]):
                v = q >> 1
                if not seen[v] and level[v] > 0:
                    seen[v] = True
                    touched.append(v)
                    self._bump(v)
                    if level[v] >= cur:
                        path += 1
                    else:
                        learnt.append(q)
            while not seen[self.trail[idx] >> 1]:
                idx -= 1
            p = self.trail[idx]
            idx -= 1
            seen[p >> 1] = False
            path -= 1
            if path == 0:
                break
            c = self.clauses[self.reason[p >> 1]]
        learnt[0] = p ^ 1
        for v in touched:
            seen[v] = False
        if len(learnt) == 1:
            return learnt, 0
        best = max(range(1, len(learnt)), key=lambda j: level[learnt[j] >> 1])
        learnt[1], learnt[best] = learnt[best], learnt[1]
        return learnt, level[learnt[1] >> 1]

    def _bump(self, v: int) -> None:
        self.activity[v] += self.var_inc
        if self.activity[v] > 1e100:
            self.activity = [a * 1e-100 for a in self.activity]
            self.var_inc *= 1e-100
            self.heap = [(-a, u) for u, a in enumerate(self.activity)]
            heapq.heapify(self.heap)
        elif self.lv[2 * v] == -1:
            heapq.heappush(self.heap, (-self.activity[v], v))

    def _cancel_until(self, lvl: int) -> None:
        if len(self.trail_lim) <= lvl:
            return
        lim = self.trail_lim[lvl]
        for code in self.trail[lim:]:
            v = code >> 1
            self.lv[code] = -1
            self.lv[code ^ 1] = -1
            self.reason[v] = -1
            self.polarity[v] = bool(code & 1)
            heapq.heappush(self.heap, (-self.activity[v], v))
        del self.trail[lim:]
        del self.trail_lim[lvl:]
        self.qhead = len(self.trail)

    def _pick_branch(self) -> int:
        heap = self.heap
        while heap:
            act, v = heapq.heappop(heap)
            if self.lv[2 * v] == -1 and -act == self.activity[v]:
                return 2 * v + self.polarity[v]
        for v in range(self.nvars):
            if self.lv[2 * v] == -1:
                return 2 * v + self.polarity[v]
        return -1

    def _reduce_db(self) -> None:
        locked = {self.reason[c >> 1] for c in self.trail}
        drop = sorted(
            (ci for ci in self.learnt if ci not in locked and len(self.clauses[ci]) > 2),
            key=lambda ci: -len(self.clauses[ci]),
        )[: len(self.learnt) // 2]
        if not drop:
            return
        dropped = set(drop)
        keep_map: dict[int, int] = {}
        new_clauses = []
        for ci, c in enumerate(self.clauses):
            if ci in dropped:
                continue
            keep_map[ci] = len(new_clauses)
            new_clauses.append(c)
        self.clauses = new_clauses
        self.learnt = {keep_map[ci] for ci in self.learnt if ci in keep_map}
        self.reason = [keep_map[r] if r >= 0 else -1 for r in self.reason]
        self.watches = [[] for _ in range(2 * self.nvars)]
        for ci, c in enumerate(self.clauses):
            self.watches[c[0]].append(ci)
            self.watches[c[1]].append(ci)

    def solve(self, assumptions: Sequence[int] = (), conflict_budget: int | None = DEFAULT_CONFLICT_BUDGET) -> np.ndarray | None:
        """Return a model (boolean array over all solver variables) or None."""
        if not self.ok:
            return None
        self._cancel_until(0)
        if self._propagate() != -1:
            self.ok = False
            return None
        self._seen = [False] * self.nvars
        assume = [_code(a) for a in assumptions]
        start_conflicts = self.conflicts
        restart = 0
        max_learnt = max(2000, len(self.clauses))
        while True:
            limit = 100 * _luby(restart)
            restart += 1
            status = self._search(limit, assume, start_conflicts, conflict_budget, max_learnt)
            if status is not None:
                return status if status is not False else None

    def _search(self, limit, assume, start_conflicts, budget, max_learnt):
        local = 0
        while True:
            confl = self._propagate()
            if confl != -1:
                self.conflicts += 1
                local += 1
                if len(self.trail_lim) == 0:
                    self.ok = False
                    return False
                if budget is not None and self.conflicts - start_conflicts > budget:
                    self._cancel_until(0)
                    raise BudgetExceeded(f"conflict budget {budget} exceeded")
                learnt, back = self._analyze(confl)
                self._cancel_until(back)
                if len(learnt) == 1:
                    self._enqueue(learnt[0], -1)
                else:
                    ci = self._attach(learnt, learnt=True)
                    self._enqueue(learnt[0], ci)
                self.var_inc *= 1.0 / 0.95
                continue
            if local >= limit:
                self._cancel_until(0)
                return None
            if len(self.learnt) - len(self.trail) > max_learnt:
                self._reduce_db()
            nxt = -1
            while len(self.trail_lim) < len(assume):
                p = assume[len(self.trail_lim)]
                if self.lv[p] == 1:
                    self.trail_lim.append(len(self.trail))
                elif self.lv[p] == 0:
                    self._cancel_until(0)
                    return False
                else:
                    nxt = p
                    break
            if nxt == -1:
                nxt = self._pick_branch()
                if nxt == -1:
                    model = np.array([self.lv[2 * v] == 1 for v in range(self.nvars)], dtype=bool)
                    self._cancel_until(0)
                    return model
                self.decisions += 1
            self.trail_lim.append(len(self.trail))
            self._enqueue(nxt, -1)


# ---------------------------------------------------------------- module API


@dataclass(frozen=True)
class SatInstance:
    """A CNF plus parity constraints ``(variables, bit)`` and assumptions."""

    base: CnfFormula
    parity_constraints: tuple[tuple[tuple[int, ...], int], ...] = ()
    assumptions: tuple[int, ...] = ()

    def __post_init__(self):
        for vs, bit in self.parity_constraints:
            if any(v < 1 or v > self.base.num_vars for v in vs):
                raise ValueError("parity constraint over undeclared variable")
            if bit not in (0, 1):
                raise ValueError("parity bit must be 0 or 1")
        for a in self.assumptions:
            if a == 0 or abs(a) > self.base.num_vars:
                raise ValueError(f"assumption {a} out of range")


def build_solver(phi: CnfFormula, parity: Iterable[tuple[Sequence[int], int]] = (), phases=None) -> Solver:
    s = Solver(phi.num_vars, phases=phases)
    for c in phi.clauses:
        if not s.add_clause(c):
            break
    for vs, bit in parity:
        if not s.add_xor(list(vs), bit):
            break
    return s


def solve(instance: SatInstance | CnfFormula, conflict_budget: int | None = DEFAULT_CONFLICT_BUDGET, phases=None) -> np.ndarray | None:
    """A model of the instance projected to its base variables, or None."""
    if isinstance(instance, CnfFormula):
        instance = SatInstance(instance)
    n = instance.base.num_vars
    s = build_solver(instance.base, instance.parity_constraints, phases=phases)
    model = s.solve(instance.assumptions, conflict_budget)
    return None if model is None else model[:n]


def iter_models(phi: CnfFormula, parity: Iterable[tuple[Sequence[int], int]] = (),
                conflict_budget: int | None = DEFAULT_CONFLICT_BUDGET) -> Iterator[np.ndarray]:
    """Yield every model of ``phi`` (and the parity constraints) once."""
    n = phi.num_vars
    s = build_solver(phi, parity)
    while True:
        model = s.solve((), conflict_budget)
        if model is None:
            return
        m = model[:n]
        yield m
        if n == 0 or not s.add_clause([-(v + 1) if m[v] else v + 1 for v in range(n)]):
            return


# -------------------------------------------------------------------- MPE


@dataclass(frozen=True)
class MpeResult:
    model: np.ndarray
    log_prob: float

    @property
    def prob(self) -> float:
        return math.exp(self.log_prob)


class _BranchAndBound:
    """Depth-first max-product search in lexicographic variable order.

    Variables are branched in index order, false before true, so among
    models of equal probability the first one found is lexicographically
    smallest. The bound adds the best per-variable log-weight of every free
    variable to the log-probability of the partial assignment.
    """

    def __init__(self, phi: CnfFormula, w: WeightMap, extra: Sequence[Sequence[int]] = (), node_budget: int | None = None):
        self.n = phi.num_vars
        p = w.clamped().prob
        self.logw = [(math.log(1.0 - p[v]), math.log(p[v])) for v in range(self.n)]
        self.best_free = [max(a, b) for a, b in self.logw]
        self.clauses = [list(c) for c in phi.clauses] + [list(c) for c in extra]
        self.occ: dict[int, list[int]] = {}
        for ci, c in enumerate(self.clauses):
            for lit in c:
                self.occ.setdefault(lit, []).append(ci)
        self.sat = [0] * len(self.clauses)
        self.free = [len(c) for c in self.clauses]
        self.assign: list[int] = [-1] * self.n
        self.node_budget = node_budget
        self.nodes = 0

    def _set(self, lit: int, trail: list[int]) -> bool:
        v = abs(lit) - 1
        self.assign[v] = 1 if lit > 0 else 0
        trail.append(lit)
        ok = True
        for ci in self.occ.get(lit, ()):
            self.sat[ci] += 1
        for ci in self.occ.get(-lit, ()):
            self.free[ci] -= 1
            if self.sat[ci] == 0 and self.free[ci] == 0:
                ok = False
        return ok

    def _unset(self, trail: list[int], upto: int) -> None:
        while len(trail) > upto:
            lit = trail.pop()
            self.assign[abs(lit) - 1] = -1
            for ci in self.occ.get(lit, ()):
                self.sat[ci] -= 1
            for ci in self.occ.get(-lit, ()):
                self.free[ci] += 1

    def _propagate(self, trail: list[int], start: int) -> bool:
        i = start
        while i < len(trail):
            lit = trail[i]
            i += 1
            for ci in self.occ.get(-lit, ()):
                if self.sat[ci] == 0 and self.free[ci] == 1:
                    unit = next(l for l in self.clauses[ci] if self.assign[abs(l) - 1] == -1)
                    if not self._set(unit, trail):
                        return False
        return True

    def run(self) -> tuple[list[int], float] | None:
        for ci, c in enumerate(self.clauses):
            if not c:
                return None
        trail: list[int] = []
        for c in self.clauses:
            if len(c) == 1 and self.assign[abs(c[0]) - 1] == -1:
                if not self._set(c[0], trail):
                    return None
            elif len(c) == 1 and self.assign[abs(c[0]) - 1] != (c[0] > 0):
                return None
        if not self._propagate(trail, 0):
            return None
        self.best: tuple[list[int], float] | None = None
        # once a model is known, ties can be pruned: later ones are lex-larger
        self.tie_locked = False
        self._dfs(trail, 0)
        return self.best

    def _score(self) -> tuple[float, float]:
        lp = 0.0
        rest = 0.0
        for v in range(self.n):
            a = self.assign[v]
            if a == -1:
                rest += self.best_free[v]
            else:
                lp += self.logw[v][a]
        return lp, rest

    def _dfs(self, trail: list[int], v: int) -> None:
        self.nodes += 1
        if self.node_budget is not None and self.nodes > self.node_budget:
            raise BudgetExceeded("MPE node budget exceeded")
        lp, rest = self._score()
        if self.best is not None:
            tol = 1e-12 * max(1.0, abs(self.best[1]))
            bound = lp + rest
            if bound < self.best[1] - tol or (self.tie_locked and bound <= self.best[1] + tol):
                return
        while v < self.n and self.assign[v] != -1:
            v += 1
        if v == self.n:
            # pruning guarantees a strict improvement here
            self.best = (list(self.assign), lp)
            self.tie_locked = True
            return
        for value in (0, 1):
            mark = len(trail)
            lit = v + 1 if value else -(v + 1)
            if self._set(lit, trail) and self._propagate(trail, mark):
                self._dfs(trail, v + 1)
            self._unset(trail, mark)


def mpe(phi: CnfFormula, w: WeightMap, blocked: Sequence[Sequence[int]] = (), node_budget: int | None = None) -> MpeResult:
    """Most probable model; ties go to the lexicographically smallest one.

    ``blocked`` adds extra clauses (used for blocking earlier models).
    """
    bb = _BranchAndBound(phi, w, blocked, node_budget)
    found = bb.run()
    if found is None:
        raise Unsatisfiable("formula has no model")
    assign, lp = found
    return MpeResult(np.array(assign, dtype=bool), lp)


def _blocking_clause(model: np.ndarray) -> list[int]:
    return [-(v + 1) if model[v] else v + 1 for v in range(len(model))]


def top_k_models(phi: CnfFormula, w: WeightMap, k: int, node_budget: int | None = None) -> list[MpeResult]:
    """The ``k`` most probable models, most probable first."""
    if k < 1:
        raise ValueError("k must be at least 1")
    out: list[MpeResult] = []
    blocked: list[list[int]] = []
    for _ in range(k):
        try:
            r = mpe(phi, w, blocked, node_budget)
        except Unsatisfiable:
            if not out:
                raise
            break
        out.append(r)
        if phi.num_vars == 0:
            break
        blocked.append(_blocking_clause(r.model))
    return out


def k_optimal_dnf(phi: CnfFormula, w: WeightMap, k: int, node_budget: int | None = None) -> list[np.ndarray]:
    """Greedy k-term DNF of maximum covered probability.

    Each step adds the model covering the most probability mass not yet
    covered. Full models cover disjoint sets, so the uncovered mass of a
    candidate is just its own probability and the greedy choice coincides
    with the next most probable model.
    """
    return [r.model for r in top_k_models(phi, w, k, node_budget)]
