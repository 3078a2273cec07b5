"""Constraint-based structure discovery over binary incidence data.

Pipeline: likelihood-ratio (G-squared) independence tests feed a
level-synchronized PC skeleton search, unshielded colliders are oriented
conservatively, and the orientation closure rules complete the result to
a CPDAG. The independence decision is pluggable so an exact d-separation
oracle can stand in for the statistical test.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from itertools import combinations
from typing import Callable, Sequence

import numpy as np
from scipy.special import gammaincc

from .errors import ColumnOutOfRange, StratumOverflow
from .graph import Mcg, topological_order
from .matrix import IncidenceMatrix
from .model import KnowledgePoint

logger = logging.getLogger(__name__)

DEFAULT_ALPHA = 0.05
DEFAULT_MAX_COND_SIZE = 8

# decision: True means "independent at level alpha"
IndependenceTest = Callable[[int, int, frozenset], bool]


@dataclass(frozen=True)
class CiTestResult:
    statistic: float
    dof: int
    p_value: float
    independent: bool


def chi2_sf(x: float, dof: int) -> float:
    """Chi-square survival function via the regularized upper incomplete gamma."""
    if dof <= 0:
        return 1.0
    return float(gammaincc(dof / 2.0, x / 2.0))


def g_squared_ci_test(
    z: IncidenceMatrix, x: int, y: int, s: Sequence[int] | frozenset, alpha: float
) -> CiTestResult:
    """G-squared conditional independence test of columns x and y given s.

    Rows are stratified by the joint configuration of the conditioning
    columns. Within each stratum the 2x2 (x, y) table contributes
    2 * sum(O * ln(O / E)) with expectations from the stratum margins;
    zero observed counts contribute nothing. A stratum counts one degree
    of freedom only when both x and y take both values in it; strata with
    a zero margin add nothing to statistic or dof. With zero total dof the
    pair is declared independent.
    """
    s = frozenset(s)
    k = z.cols
    for col in (x, y, *s):
        if not (0 <= col < k):
            raise ColumnOutOfRange(f"column {col} out of range for {k} columns")
    if x == y or x in s or y in s:
        raise ValueError("x, y, and s must be distinct")
    if not (0.0 < alpha < 1.0):
        raise ValueError(f"alpha must be in (0,1), got {alpha}")
    if len(s) > 30:
        raise StratumOverflow(f"conditioning set of size {len(s)} exceeds 30")

    xcol = z.cells[:, x].astype(np.int64)
    ycol = z.cells[:, y].astype(np.int64)
    if s:
        scols = z.cells[:, sorted(s)].astype(np.int64)
        weights = np.left_shift(1, np.arange(len(s), dtype=np.int64))
        strata = scols @ weights
        _, strata = np.unique(strata, return_inverse=True)
    else:
        strata = np.zeros(z.rows, dtype=np.int64)
    n_strata = int(strata.max()) + 1 if z.rows else 0

    flat = strata * 4 + xcol * 2 + ycol
    counts = np.bincount(flat, minlength=n_strata * 4).reshape(n_strata, 2, 2)

    statistic = 0.0
    dof = 0
    for table in counts:
        row = table.sum(axis=1)
        col = table.sum(axis=0)
        total = table.sum()
        if row.min() == 0 or col.min() == 0:
            continue
        dof += 1
        expected = np.outer(row, col) / total
        observed = table.astype(np.float64)
        mask = observed > 0
        statistic += 2.0 * float(
            (observed[mask] * np.log(observed[mask] / expected[mask])).sum()
        )

    if dof == 0:
        return CiTestResult(statistic=0.0, dof=0, p_value=1.0, independent=True)
    statistic = max(statistic, 0.0)
    p_value = chi2_sf(statistic, dof)
    return CiTestResult(
        statistic=statistic, dof=dof, p_value=p_value, independent=p_value > alpha
    )


@dataclass(frozen=True)
class Skeleton:
    """Undirected adjacency plus the separating sets found for removed pairs."""

    adjacency: np.ndarray
    sepsets: dict[tuple[int, int], frozenset[int]]

    def __post_init__(self):
        adj = np.asarray(self.adjacency, dtype=bool)
        if adj.ndim != 2 or adj.shape[0] != adj.shape[1]:
            raise ValueError("adjacency must be square")
        if not (adj == adj.T).all() or adj.diagonal().any():
            raise ValueError("adjacency must be symmetric with a false diagonal")
        object.__setattr__(self, "adjacency", adj)
        object.__setattr__(
            self,
            "sepsets",
            {
                (min(u, v), max(u, v)): frozenset(ss)
                for (u, v), ss in self.sepsets.items()
            },
        )

    @property
    def k(self) -> int:
        return self.adjacency.shape[0]

    def neighbors(self, i: int) -> list[int]:
        return [int(j) for j in np.flatnonzero(self.adjacency[i])]


def skeleton_from_ci(
    k: int, independent: IndependenceTest, max_cond_size: int | None = None
) -> Skeleton:
    """Level-synchronized PC skeleton phase over an arbitrary CI decision.

    For growing conditioning size l, every still-adjacent pair (u, v) is
    tested against each size-l subset of adj(u)\\{v} and adj(v)\\{u},
    enumerated in lexicographic column order. Removals are committed only
    once a level completes, so the result does not depend on scan order.
    """
    cap = min(k - 2, DEFAULT_MAX_COND_SIZE if max_cond_size is None else max_cond_size)
    adj = {i: set(range(k)) - {i} for i in range(k)}
    sepsets: dict[tuple[int, int], frozenset[int]] = {}

    level = 0
    while level <= cap:
        frozen = {i: sorted(adj[i]) for i in range(k)}
        if not any(
            len(frozen[u]) - 1 >= level and v in adj[u]
            for u in range(k)
            for v in frozen[u]
        ):
            break
        removals: list[tuple[int, int, frozenset[int]]] = []
        for u in range(k):
            for v in frozen[u]:
                if v <= u:
                    continue
                tested: set[frozenset[int]] = set()
                found = None
                for base in (frozen[u], frozen[v]):
                    pool = [w for w in base if w != u and w != v]
                    if len(pool) < level:
                        continue
                    for subset in combinations(pool, level):
                        cand = frozenset(subset)
                        if cand in tested:
                            continue
                        tested.add(cand)
                        if independent(u, v, cand):
                            found = cand
                            break
                    if found is not None:
                        break
                if found is not None:
                    removals.append((u, v, found))
        for u, v, ss in removals:
            adj[u].discard(v)
            adj[v].discard(u)
            sepsets[(u, v)] = ss
        level += 1

    adjacency = np.zeros((k, k), dtype=bool)
    for i in range(k):
        for j in adj[i]:
            adjacency[i, j] = True
    return Skeleton(adjacency=adjacency, sepsets=sepsets)


def pc_skeleton(
    z: IncidenceMatrix, alpha: float = DEFAULT_ALPHA, max_cond_size: int | None = None
) -> Skeleton:
    """PC skeleton of the incidence matrix under the G-squared test."""
    if z.cols < 1 or z.rows < 1:
        raise ValueError("incidence matrix must have at least one row and column")

    def independent(u: int, v: int, s: frozenset) -> bool:
        return g_squared_ci_test(z, u, v, s, alpha).independent

    return skeleton_from_ci(z.cols, independent, max_cond_size=max_cond_size)


def _placeholder_points(k: int) -> tuple[KnowledgePoint, ...]:
    return tuple(KnowledgePoint(key=f"x{i}") for i in range(k))


def _assemble(
    points: Sequence[KnowledgePoint],
    oriented: Sequence[tuple[int, int]],
    undirected: set[tuple[int, int]],
) -> Mcg:
    """Build a valid mixed graph from an ordered orientation list.

    Directed edges are inserted in orientation order; an edge that would
    close a directed cycle is downgraded back to undirected and logged.
    """
    accepted: list[tuple[int, int]] = []
    und = {(min(a, b), max(a, b)) for a, b in undirected}
    for u, v in oriented:
        if topological_order(len(points), accepted + [(u, v)]) is None:
            logger.warning(
                "downgrading %d->%d to undirected: orientation closes a cycle", u, v
            )
            und.add((min(u, v), max(u, v)))
        else:
            accepted.append((u, v))
    und -= {(min(u, v), max(u, v)) for u, v in accepted}
    return Mcg(
        nodes=tuple(points), directed=frozenset(accepted), undirected=frozenset(und)
    )


def orient_v_structures(
    sk: Skeleton, points: Sequence[KnowledgePoint] | None = None
) -> Mcg:
    """Orient unshielded colliders u->w<-v where w is outside sepset(u, v).

    Opposite proposals over a single edge cancel out and leave it
    undirected (conservative rule).
    """
    k = sk.k
    pts = tuple(points) if points is not None else _placeholder_points(k)
    if len(pts) != k:
        raise ValueError(f"{len(pts)} points for a {k}-node skeleton")

    proposals: list[tuple[int, int]] = []
    proposed: set[tuple[int, int]] = set()
    for w in range(k):
        nbrs = sk.neighbors(w)
        for u, v in combinations(nbrs, 2):
            if sk.adjacency[u, v]:
                continue
            sepset = sk.sepsets.get((min(u, v), max(u, v)))
            if sepset is None or w in sepset:
                continue
            for edge in ((u, w), (v, w)):
                if edge not in proposed:
                    proposed.add(edge)
                    proposals.append(edge)

    conflicted = {
        (min(u, v), max(u, v)) for u, v in proposed if (v, u) in proposed
    }
    oriented = [
        (u, v) for u, v in proposals if (min(u, v), max(u, v)) not in conflicted
    ]
    undirected = {
        (i, j)
        for i in range(k)
        for j in range(i + 1, k)
        if sk.adjacency[i, j]
        and (i, j) not in oriented
        and (j, i) not in oriented
    }
    return _assemble(pts, oriented, undirected)


def meek_closure(g: Mcg) -> Mcg:
    """Close a partially directed graph under the four Meek orientation rules.

    R1: a->b, b-c, a and c non-adjacent            => b->c
    R2: a->b->c, a-c                               => a->c
    R3: a-b, a-c, a-d, c->b, d->b, c,d non-adjacent => a->b
    R4: a-b, a-c, c->d, d->b, c,b non-adjacent,
        a and d adjacent                           => a->b

    Rules are swept in order R1..R4 with a deterministic edge scan until a
    full pass changes nothing.
    """
    k = g.k
    directed = set(g.directed)
    undirected = set(g.undirected)
    oriented: list[tuple[int, int]] = sorted(g.directed)

    def adjacent(a: int, b: int) -> bool:
        return (
            (a, b) in directed
            or (b, a) in directed
            or (min(a, b), max(a, b)) in undirected
        )

    def orient(a: int, b: int) -> None:
        undirected.discard((min(a, b), max(a, b)))
        directed.add((a, b))
        oriented.append((a, b))

    def r1_fires(b: int, c: int) -> bool:
        return any(
            (a, b) in directed and not adjacent(a, c) for a in range(k) if a != c
        )

    def r2_fires(a: int, c: int) -> bool:
        return any((a, b) in directed and (b, c) in directed for b in range(k))

    def r3_fires(a: int, b: int) -> bool:
        linked = [
            c
            for c in range(k)
            if (min(a, c), max(a, c)) in undirected and (c, b) in directed
        ]
        return any(
            not adjacent(c, d) for c, d in combinations(linked, 2)
        )

    def r4_fires(a: int, b: int) -> bool:
        for c in range(k):
            if (min(a, c), max(a, c)) not in undirected or adjacent(c, b):
                continue
            for d in range(k):
                if (c, d) in directed and (d, b) in directed and adjacent(a, d):
                    return True
        return False

    rules = (r1_fires, r2_fires, r3_fires, r4_fires)
    changed = True
    while changed:
        changed = False
        for fires in rules:
            for u, v in sorted(undirected):
                if (min(u, v), max(u, v)) not in undirected:
                    continue
                if fires(u, v):
                    orient(u, v)
                    changed = True
                elif fires(v, u):
                    orient(v, u)
                    changed = True
    return _assemble(g.nodes, oriented, undirected)


def cpdag_from_ci(
    k: int,
    independent: IndependenceTest,
    points: Sequence[KnowledgePoint] | None = None,
    max_cond_size: int | None = None,
) -> Mcg:
    """Full PC pipeline (skeleton, colliders, closure) over a CI decision."""
    sk = skeleton_from_ci(k, independent, max_cond_size=max_cond_size)
    return meek_closure(orient_v_structures(sk, points))


def discover_cpdag(
    z: IncidenceMatrix,
    alpha: float = DEFAULT_ALPHA,
    max_cond_size: int | None = None,
) -> Mcg:
    """Infer the CPDAG of the incidence matrix with the G-squared test."""
    points = tuple(KnowledgePoint(key=key) for key in z.col_keys)

    def independent(u: int, v: int, s: frozenset) -> bool:
        return g_squared_ci_test(z, u, v, s, alpha).independent

    return cpdag_from_ci(z.cols, independent, points, max_cond_size=max_cond_size)
