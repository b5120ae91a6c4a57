"""W-graph combinatorics and the cycle hierarchy.

Attractor indices are 0-based throughout.  A W-graph on ``L = {0..l-1}``
gives every index outside ``W`` exactly one outgoing arrow and contains
no closed cycle; its cost is the sum of the constrained costs of its
arrows.  From minimal W-graph costs we derive ``W(i)``, ``I_{i,j}(W)``,
``I_i(W)``, the stationary rate function and the relaxation constant
``Lambda``.  The cycle hierarchy (nested closed classes of the
"cheapest exit" relation) yields the annealing constants ``A_k``,
``c_k`` and ``c*``, and an independent evaluation of ``Lambda``.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .errors import AllInfinite, CapExceeded, DisagreementBeyondTolerance, DomainError, NonTermination

__all__ = [
    "MAX_L",
    "WGraph",
    "enumerate_wgraphs",
    "min_wgraph_cost",
    "FWQuantities",
    "fw_quantities",
    "stationary_rate",
    "LambdaResult",
    "lambda_constant",
    "CycleNode",
    "HierarchyReport",
    "build_cycle_hierarchy",
]

#: Largest number of attractors handled by exact enumeration.
MAX_L = 8
#: Relative tolerance used to decide ties among costs.
TIE_RTOL = 1e-12
AGREE_TOL = 1e-9


def _matrix(cost):
    A = np.asarray(getattr(cost, "vtilde", cost), dtype=float).copy()
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise DomainError("cost matrix must be square")
    if A.shape[0] > MAX_L:
        raise CapExceeded(f"exact enumeration is capped at l = {MAX_L}")
    np.fill_diagonal(A, 0.0)
    if np.any(np.isnan(A)) or np.any(A < 0):
        raise DomainError("costs must be nonnegative (inf allowed)")
    return A


def _close(a, b):
    if np.isinf(a) or np.isinf(b):
        return a == b
    return abs(a - b) <= TIE_RTOL * max(1.0, abs(a), abs(b))


# ------------------------------------------------------------------ W-graphs
@dataclass(frozen=True)
class WGraph:
    """A W-graph: ``arrows[i] = j`` for every ``i`` outside ``W``."""

    W: frozenset
    arrows: tuple  # sorted tuple of (i, j)

    def cost(self, C):
        return float(sum(C[i][j] for i, j in self.arrows))

    def to_dict(self):
        return {"W": sorted(self.W), "arrows": [[i, j] for i, j in self.arrows]}


@lru_cache(maxsize=4096)
def _wgraph_table(l, W):
    """All W-graphs as a target table.

    Returns
    -------
    targets : numpy.ndarray of int8, shape (G, l)
        ``targets[g, i]`` is the arrow target of ``i`` (``i`` itself for ``i`` in W).
    sinks : numpy.ndarray of int8, shape (G, l)
        Element of W reached from ``i`` by following arrows.
    """
    if l > MAX_L:
        raise CapExceeded(f"W-graph enumeration is capped at l = {MAX_L}")
    Wl = sorted(W)
    free = [i for i in range(l) if i not in W]
    if not Wl:
        return np.zeros((0, l), np.int8), np.zeros((0, l), np.int8)
    m = len(free)
    if m == 0:
        t = np.arange(l, dtype=np.int8)[None, :]
        return t, t.copy()
    choice = np.indices((l - 1,) * m, dtype=np.int8).reshape(m, -1).T
    fr = np.array(free, dtype=np.int8)
    mapped = choice + (choice >= fr[None, :])  # skip the self-loop
    tgt = np.tile(np.arange(l, dtype=np.int8), (len(mapped), 1))
    tgt[:, fr] = mapped
    p = tgt.copy()
    for _ in range(int(np.ceil(np.log2(max(l, 2)))) + 1):
        p = np.take_along_axis(p, p, axis=1)
    inW = np.zeros(l, dtype=bool)
    inW[Wl] = True
    ok = np.all(inW[p], axis=1)
    tgt, p = tgt[ok], p[ok]
    tgt.setflags(write=False)
    p.setflags(write=False)
    return tgt, p


def enumerate_wgraphs(l, W):
    """All W-graphs on ``{0, ..., l-1}``.

    Parameters
    ----------
    l : int
        Number of attractors (``<= 8``).
    W : iterable of int

    Returns
    -------
    list of WGraph
        Complete and duplicate-free; empty when ``W`` is empty.

    Examples
    --------
    >>> len(enumerate_wgraphs(3, {0}))
    3
    """
    W = frozenset(int(w) for w in W)
    if any(w < 0 or w >= l for w in W):
        raise DomainError("W must be a subset of {0..l-1}")
    tgt, _ = _wgraph_table(l, W)
    free = [i for i in range(l) if i not in W]
    return [WGraph(W, tuple((i, int(row[i])) for i in free)) for row in tgt]


def _graph_costs(C, W):
    l = len(C)
    tgt, sinks = _wgraph_table(l, frozenset(W))
    free = [i for i in range(l) if i not in W]
    if len(tgt) == 0:
        return np.zeros(0), tgt, sinks
    if not free:
        return np.zeros(len(tgt)), tgt, sinks
    fr = np.array(free)
    costs = C[fr[None, :], tgt[:, fr].astype(np.int64)].sum(axis=1)
    return costs, tgt, sinks


def _min_cost(C, W, i=None, j=None):
    """min cost over G(W), or over G_{i,j}(W) if (i, j) given; inf if empty."""
    costs, _, sinks = _graph_costs(C, W)
    if i is not None:
        costs = costs[sinks[:, i] == j]
    return float(costs.min()) if costs.size else float("inf")


def min_wgraph_cost(cost, W):
    """Cheapest W-graph.

    Parameters
    ----------
    cost : CostMatrix or array_like
        Uses the constrained costs; ``inf`` entries exclude a graph.
    W : iterable of int

    Returns
    -------
    (value, WGraph)

    Raises
    ------
    AllInfinite
        If every W-graph has infinite cost (or none exists).
    """
    C = _matrix(cost)
    W = frozenset(int(w) for w in W)
    costs, tgt, _ = _graph_costs(C, W)
    if costs.size == 0 or not np.any(np.isfinite(costs)):
        raise AllInfinite(f"no finite W-graph for W={sorted(W)}")
    k = int(np.argmin(costs))
    free = [i for i in range(len(C)) if i not in W]
    return float(costs[k]), WGraph(W, tuple((i, int(tgt[k, i])) for i in free))


# ------------------------------------------------------------- FW quantities
@dataclass(frozen=True)
class FWQuantities:
    """W-graph derived quantities.

    Attributes
    ----------
    W : numpy.ndarray
        ``W(i)`` = cheapest ``{i}``-graph.
    I_ij : dict
        ``(i, j, W) -> I_{i,j}(W)`` for nonempty ``W``, ``i`` outside, ``j`` inside.
    I_i : dict
        ``(i, W) -> I_i(W)`` for nonempty ``W`` and ``i`` outside.
    """

    W: np.ndarray
    I_ij: dict = field(repr=False)
    I_i: dict = field(repr=False)


def _subsets(l):
    for r in range(1, l + 1):
        for W in itertools.combinations(range(l), r):
            yield frozenset(W)


def fw_quantities(cost, with_I=True):
    """Compute ``W(i)``, ``I_{i,j}(W)`` and ``I_i(W)`` by exact enumeration.

    ``I_{i,j}(W)`` is the excess cost of the cheapest W-graph in which
    ``i`` drains into ``j``; ``I_i(W)`` is the gap between the cheapest
    W-graph and the cheapest graph in ``G(W + {i})`` or in
    ``G_{i,j}(W + {j})`` for ``j`` outside ``W``, ``j != i``.
    """
    C = _matrix(cost)
    l = len(C)
    Wv = np.array([_min_cost(C, {i}) for i in range(l)])
    Iij, Ii = {}, {}
    if with_I:
        for W in _subsets(l):
            if len(W) == l:
                continue
            base = _min_cost(C, W)
            for i in range(l):
                if i in W:
                    continue
                for j in W:
                    Iij[(i, j, W)] = _min_cost(C, W, i, j) - base
                cands = [_min_cost(C, W | {i})]
                for j in range(l):
                    if j in W or j == i:
                        continue
                    cands.append(_min_cost(C, W | {j}, i, j))
                Ii[(i, W)] = base - min(cands)
    return FWQuantities(Wv, Iij, Ii)


def stationary_rate(cost, vfun, xi, W=None):
    """Stationary rate function ``min_i {W(i) + V(K_i, xi)} - min_j W(j)``.

    Parameters
    ----------
    cost : CostMatrix or array_like
    vfun : callable
        ``vfun(i, xi)`` returns ``V(K_i, xi)``.
    xi : array_like
    W : array_like, optional
        Precomputed ``W(i)`` values.
    """
    if W is None:
        W = fw_quantities(cost, with_I=False).W
    W = np.asarray(W, dtype=float)
    vals = [W[i] + float(vfun(i, xi)) for i in range(len(W))]
    return max(min(vals) - W.min(), 0.0)


@dataclass(frozen=True)
class LambdaResult:
    """Relaxation constant by the graph formula and by the cycle hierarchy."""

    value: float
    cross_check: float
    agree: bool


def _lambda_graph(C):
    l = len(C)
    if l == 1:
        return 0.0
    Wv = [_min_cost(C, {i}) for i in range(l)]
    pairs = [_min_cost(C, {i, j}) for i, j in itertools.combinations(range(l), 2)]
    return float(min(Wv) - min(pairs))


def lambda_constant(cost):
    """``Lambda`` from W-graphs, cross-checked by the cycle hierarchy.

    Raises
    ------
    DisagreementBeyondTolerance
        If the two evaluations differ by more than 1e-9.
    """
    rep = build_cycle_hierarchy(cost)
    return LambdaResult(rep.Lambda, rep.Lambda_check, True)


# ------------------------------------------------------------ cycle hierarchy
@dataclass
class CycleNode:
    """A node of the cycle hierarchy.

    Attributes
    ----------
    level : int
    index : int
        Position within its level.
    children : tuple of int
        Indices of the member nodes one level down (empty at level 0).
    leaves : tuple of int
        Attractor indices contained.
    vtilde : float
        Exit cost (``inf`` for the root, which has no competitor).
    vhat : float
        Largest exit cost among the children (0 at level 0).
    arrows : tuple of int
        Cheapest-exit targets at its level.
    is_cycle : bool
        False for a node carried over unchanged from the level below.
    """

    level: int
    index: int
    children: tuple
    leaves: tuple
    vtilde: float = float("inf")
    vhat: float = 0.0
    arrows: tuple = ()
    is_cycle: bool = False

    def to_dict(self):
        return {
            "level": self.level,
            "index": self.index,
            "children": list(self.children),
            "leaves": list(self.leaves),
            "vtilde": _jnum(self.vtilde),
            "vhat": _jnum(self.vhat),
            "arrows": list(self.arrows),
            "is_cycle": self.is_cycle,
        }


def _jnum(x):
    return "inf" if np.isinf(x) else float(x)


def _closed_classes(n, arrows):
    """Closed strongly-connected classes of the arrow relation."""
    reach = np.eye(n, dtype=bool)
    for a, targets in enumerate(arrows):
        reach[a, list(targets)] = True
    for k in range(n):  # transitive closure
        reach |= reach[:, [k]] & reach[[k], :]
    classes, seen = [], set()
    for a in range(n):
        if a in seen:
            continue
        cls = sorted(b for b in range(n) if reach[a, b] and reach[b, a])
        seen.update(cls)
        closed = all(set(np.flatnonzero(reach[b])) <= set(cls) for b in cls)
        if closed and len(cls) >= 2:
            classes.append(tuple(cls))
    return classes


@dataclass
class HierarchyReport:
    """Everything derived from one cost matrix.

    Attributes
    ----------
    vtilde : numpy.ndarray
    W : numpy.ndarray
        ``W(i)`` (un-normalised minimal ``{i}``-graph costs).
    Lambda, Lambda_check : float
        Graph formula and hierarchy cross-check.
    levels : list of list of CycleNode
        ``levels[k]`` is ``L_k``; the last level is the singleton root.
    m : int
        ``L_{m+1}`` is the first singleton level.
    A : list of list of int
        ``A[k]`` lists node indices at level ``k`` (``A[m+1]`` is the root).
    c : list of float
        ``c_0 .. c_m``.
    c_star : float
    L_tilde_0 : list of int
        Minimisers of ``W``.
    """

    vtilde: np.ndarray
    W: np.ndarray
    Lambda: float
    Lambda_check: float
    levels: list
    m: int
    A: list
    c: list
    c_star: float
    L_tilde_0: list

    @property
    def A0_leaves(self):
        return sorted(self.levels[0][k].leaves[0] for k in self.A[0])

    def tree_text(self):
        """Indented rendering of the hierarchy, root first."""
        lines = []

        def fmt(x):
            return "inf" if np.isinf(x) else f"{x:.6g}"

        def walk(level, idx, depth):
            node = self.levels[level][idx]
            name = f"K{node.leaves[0]}" if level == 0 else "{" + ",".join(map(str, node.leaves)) + "}"
            tag = "cycle" if node.is_cycle else ("attractor" if level == 0 else "carried")
            inA = "*" if idx in self.A[level] else " "
            lines.append(
                f"{'  ' * depth}{inA}L{level} {name} [{tag}] exit={fmt(node.vtilde)} depth={fmt(node.vhat)}"
            )
            for ch in node.children:
                walk(level - 1, ch, depth + 1)

        walk(len(self.levels) - 1, 0, 0)
        return "\n".join(lines)

    def to_dict(self):
        def enc(A):
            return [[None if i == j else _jnum(x) for j, x in enumerate(r)] for i, r in enumerate(A)]

        return {
            "schema": "mfjp/1",
            "kind": "hierarchy",
            "vtilde": enc(self.vtilde),
            "W": [_jnum(x) for x in self.W],
            "W_normalized": [_jnum(x - np.min(self.W)) for x in self.W],
            "Lambda": _jnum(self.Lambda),
            "Lambda_check": _jnum(self.Lambda_check),
            "m": self.m,
            "levels": [[n.to_dict() for n in lev] for lev in self.levels],
            "A": [list(a) for a in self.A],
            "c": [_jnum(x) for x in self.c],
            "c_star": _jnum(self.c_star),
            "L_tilde_0": list(self.L_tilde_0),
            "tree": self.tree_text(),
        }


def build_cycle_hierarchy(cost):
    """Build the cycle hierarchy and the constants derived from it.

    At every level each node's exit cost is its cheapest transition to
    another node; all cost-minimising targets are kept as arrows.  Closed
    strongly-connected classes of size >= 2 become the nodes of the next
    level, other nodes are carried over unchanged.  The recursion stops at
    the first singleton level ``L_{m+1}``.  Then ``A_m, ..., A_0`` and
    ``c_m, ..., c_0`` are evaluated top-down, with ``A_{m+1}`` the root.

    Raises
    ------
    NonTermination
        If more than ``l + 1`` levels are produced.
    DisagreementBeyondTolerance
        If the two ``Lambda`` evaluations differ by more than 1e-9, or if
        ``A_0`` differs from the set of minimisers of ``W``.
    """
    C = _matrix(cost)
    l = len(C)
    Wv = np.array([_min_cost(C, {i}) for i in range(l)])
    wmin = Wv.min()
    L0 = [i for i in range(l) if _close(Wv[i], wmin)]
    lam = _lambda_graph(C)
    if l == 1:
        leaf = CycleNode(0, 0, (), (0,), float("inf"), 0.0, (), False)
        root = CycleNode(1, 0, (0,), (0,), float("inf"), 0.0, (), False)
        return HierarchyReport(C, Wv, 0.0, 0.0, [[leaf], [root]], 0, [[0], [0]], [0.0], 0.0, [0])

    levels = [[CycleNode(0, i, (), (i,)) for i in range(l)]]
    P = C.copy()
    while True:
        k = len(levels) - 1
        if k > l:
            raise NonTermination("cycle recursion exceeded l + 1 levels")
        nodes = levels[k]
        n = len(nodes)
        off = P + np.diag(np.full(n, np.inf))
        vt = off.min(axis=1)
        arrows = []
        for a in range(n):
            tg = tuple(b for b in range(n) if b != a and _close(off[a, b], vt[a]))
            arrows.append(tg)
            nodes[a].vtilde = float(vt[a])
            nodes[a].arrows = tg
        groups = _closed_classes(n, arrows)
        in_cycle = {a for g in groups for a in g}
        members = [(g, True) for g in groups] + [((a,), False) for a in range(n) if a not in in_cycle]
        members.sort(key=lambda t: min(min(nodes[a].leaves) for a in t[0]))
        new = []
        for idx, (g, cyc) in enumerate(members):
            leaves = tuple(sorted(x for a in g for x in nodes[a].leaves))
            vhat = float(max(vt[a] for a in g))
            new.append(CycleNode(k + 1, idx, tuple(g), leaves, float("inf"), vhat, (), cyc))
        levels.append(new)
        if len(new) == 1:
            break
        Pn = np.zeros((len(new), len(new)))
        with np.errstate(invalid="ignore"):
            for p, a in enumerate(new):
                for q, b in enumerate(new):
                    if p == q:
                        continue
                    diffs = [P[x, y] - vt[x] for x in a.children for y in b.children]
                    diffs = [np.inf if np.isnan(dv) else dv for dv in diffs]
                    Pn[p, q] = a.vhat + min(diffs)
        P = Pn
    m = len(levels) - 2

    # A_k and c_k, top-down
    A = [None] * (m + 2)
    A[m + 1] = [0]
    c = [0.0] * (m + 1)
    for k in range(m, -1, -1):
        Ak, ck = [], 0.0
        for parent in A[k + 1]:
            pnode = levels[k + 1][parent]
            sel = [ch for ch in pnode.children if _close(levels[k][ch].vtilde, pnode.vhat)]
            rest = [levels[k][ch].vtilde for ch in pnode.children if ch not in sel]
            Ak.extend(sel)
            ck = max(ck, max(rest) if rest else 0.0)
        A[k] = sorted(set(Ak))
        c[k] = float(ck)
    c_star = float(max(c))

    # Lambda cross-check from the chain of nodes containing a minimiser of W
    i0 = L0[0]
    chain = []
    for lev in levels:
        chain.append(next(n.index for n in lev if i0 in n.leaves))
    Vk = []
    for k in range(m + 1):
        parent = levels[k + 1][chain[k + 1]]
        others = [levels[k][ch].vtilde for ch in parent.children if ch != chain[k]]
        if others:
            Vk.append(max(others))
    lam_check = float(max(Vk)) if Vk else 0.0
    rep = HierarchyReport(C, Wv, lam, lam_check, levels, m, A, c, c_star, L0)
    if not (_close(lam, lam_check) or abs(lam - lam_check) <= AGREE_TOL):
        raise DisagreementBeyondTolerance(f"Lambda {lam!r} vs hierarchy {lam_check!r}")
    if rep.A0_leaves != sorted(L0):
        raise DisagreementBeyondTolerance(f"A_0={rep.A0_leaves} differs from argmin W={L0}")
    return rep
