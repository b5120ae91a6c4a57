"""Independent brute-force W-graph enumerator used as a test oracle.

Deliberately shares no code with the package: every map from the nodes
outside ``W`` to other nodes is generated with ``itertools.product`` and
kept when following arrows from every node reaches ``W``.  The graph
structure does not depend on the costs, so it is enumerated once per
``(l, W)`` and costed per matrix with numpy.
"""
import itertools
from functools import lru_cache

import numpy as np


def graphs(l, W):
    W = set(W)
    free = [i for i in range(l) if i not in W]
    choices = [[j for j in range(l) if j != i] for i in free]
    for targets in itertools.product(*choices):
        arrow = dict(zip(free, targets))
        ok = True
        for start in free:
            seen, node = set(), start
            while node not in W:
                if node in seen:
                    ok = False
                    break
                seen.add(node)
                node = arrow[node]
            if not ok:
                break
        if ok:
            yield arrow


def _sink(arrow, W, i):
    while i not in W:
        i = arrow[i]
    return i


@lru_cache(maxsize=None)
def _structure(l, W):
    """(arrow sources, arrow targets, sink of every node) for all W-graphs."""
    free = [i for i in range(l) if i not in W]
    src, dst, sinks = [], [], []
    for g in graphs(l, W):
        src.append([i for i in free])
        dst.append([g[i] for i in free])
        sinks.append([_sink(g, W, i) for i in range(l)])
    n = len(sinks)
    return (np.array(src, dtype=int).reshape(n, len(free)),
            np.array(dst, dtype=int).reshape(n, len(free)),
            np.array(sinks, dtype=int).reshape(n, l))


def _costs(C, W):
    src, dst, sinks = _structure(len(C), frozenset(W))
    with np.errstate(invalid="ignore"):
        return np.asarray(C)[src, dst].sum(axis=1), sinks


def min_cost(C, W, i=None, j=None):
    cost, sinks = _costs(C, W)
    if i is not None:
        cost = cost[sinks[:, i] == j]
    return float(cost.min()) if len(cost) else np.inf


def W_values(C):
    return [min_cost(C, {i}) for i in range(len(C))]


def lambda_graph(C):
    l = len(C)
    if l == 1:
        return 0.0
    return min(W_values(C)) - min(min_cost(C, {i, j}) for i in range(l) for j in range(i + 1, l))


def I_values(C):
    l = len(C)
    Iij, Ii = {}, {}
    for r in range(1, l):
        for Wt in itertools.combinations(range(l), r):
            W = frozenset(Wt)
            base = min_cost(C, W)
            for i in set(range(l)) - W:
                for j in W:
                    Iij[(i, j, W)] = min_cost(C, W, i, j) - base
                alt = [min_cost(C, W | {i})]
                alt += [min_cost(C, W | {j}, i, j) for j in set(range(l)) - W - {i}]
                Ii[(i, W)] = base - min(alt)
    return Iij, Ii
