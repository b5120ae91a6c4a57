"""Quasipotentials by shortest paths on a discretised simplex.

Arc costs are local minimum actions: for an arc ``x -> y`` the straight
segment is traversed at constant speed in time ``T`` and the action is
minimised over ``T`` in ``[1e-3, 1e3]`` (golden section in ``log T``).
Dijkstra's algorithm then gives ``V`` between arbitrary simplex points,
which are inserted as extra graph nodes connected to every lattice node
within the hop radius.

For two-state models :func:`hj_oracle_1d` provides an independent
reference by one-dimensional quadrature.
"""
from __future__ import annotations

import itertools
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy import integrate, optimize
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import dijkstra

from .action import lagrangian_batch
from .errors import DomainError, Unreachable, ValidationError
from .lattice import lattice_enumerate, lattice_rank, simplex_point

__all__ = [
    "CostLattice",
    "CostMatrix",
    "QuasipotentialResult",
    "build_cost_lattice",
    "segment_cost",
    "quasipotential",
    "vtilde_matrix",
    "hj_oracle_1d",
    "hj_cost_matrix",
    "default_rho0",
]

T_MIN = 1e-3
T_MAX = 1e3
GOLDEN_TOL = 1e-8
HOP = 2
_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(4)
_GL_NODES = 0.5 * (_GL_NODES + 1.0)
_GL_WEIGHTS = 0.5 * _GL_WEIGHTS
_INVPHI = (np.sqrt(5.0) - 1.0) / 2.0


def _segment_action(model, X0, X1, T):
    """Action of straight segments X0 -> X1 (shape (K, d)) in times T (K,)."""
    K, d = X0.shape
    D = X1 - X0
    V = D / T[:, None]
    pts = X0[:, None, :] + _GL_NODES[None, :, None] * D[:, None, :]
    vel = np.broadcast_to(V[:, None, :], pts.shape)
    L = lagrangian_batch(model, pts.reshape(-1, d), vel.reshape(-1, d))[0].reshape(K, -1)
    return T * (L @ _GL_WEIGHTS)


def segment_cost(model, X0, X1, t_min=T_MIN, t_max=T_MAX, tol=GOLDEN_TOL):
    """Minimum over the duration of the straight-segment action.

    Parameters
    ----------
    model : Model
    X0, X1 : array_like, shape (K, d)
        Segment endpoints.
    t_min, t_max : float
        Duration bracket.
    tol : float
        Golden-section tolerance on ``log T``.

    Returns
    -------
    cost, T_opt : numpy.ndarray, shape (K,)
        ``cost`` is ``inf`` where no duration gives a finite action and 0
        for zero-length segments.
    """
    X0 = np.atleast_2d(np.asarray(X0, dtype=float))
    X1 = np.atleast_2d(np.asarray(X1, dtype=float))
    K = len(X0)
    zero = np.max(np.abs(X1 - X0), axis=1) == 0.0
    a = np.full(K, np.log(t_min))
    b = np.full(K, np.log(t_max))
    c = b - _INVPHI * (b - a)
    e = a + _INVPHI * (b - a)
    fc = _segment_action(model, X0, X1, np.exp(c))
    fe = _segment_action(model, X0, X1, np.exp(e))
    while np.max(b - a) > tol:
        left = fc <= fe  # minimum in [a, e]
        b = np.where(left, e, b)
        a = np.where(left, a, c)
        new_c = b - _INVPHI * (b - a)
        new_e = a + _INVPHI * (b - a)
        # reuse one interior value per arc, evaluate the other
        probe = np.where(left, new_c, new_e)
        fp = _segment_action(model, X0, X1, np.exp(probe))
        fe, fc = np.where(left, fc, fp), np.where(left, fp, fe)
        c, e = new_c, new_e
    mid = 0.5 * (a + b)
    cost = _segment_action(model, X0, X1, np.exp(mid))
    # the bracket ends are admissible too
    for edge in (np.log(t_min), np.log(t_max)):
        fv = _segment_action(model, X0, X1, np.full(K, np.exp(edge)))
        better = fv < cost
        cost = np.where(better, fv, cost)
        mid = np.where(better, edge, mid)
    cost = np.where(zero, 0.0, np.maximum(cost, 0.0))
    cost = np.where(np.isnan(cost), np.inf, cost)
    return cost, np.exp(mid)


def _hop_vectors(d, hop=HOP):
    vecs = [
        v
        for v in itertools.product(range(-hop, hop + 1), repeat=d)
        if sum(v) == 0 and any(v)
    ]
    return np.array(vecs, dtype=np.int64)


@dataclass(frozen=True)
class CostLattice:
    """Weighted digraph on the lattice with ``M`` particles.

    Attributes
    ----------
    M : int
    counts : numpy.ndarray, shape (n, d)
        Lattice points as integer counts (lexicographic order).
    alive : numpy.ndarray of bool, shape (n,)
        False for nodes removed by forbidden balls.
    arc_src, arc_dst : numpy.ndarray of int64
    arc_cost : numpy.ndarray of float
        Nonnegative local minimum actions (arcs touching removed nodes
        and arcs of infinite cost are not stored).
    """

    M: int
    counts: np.ndarray
    alive: np.ndarray
    arc_src: np.ndarray
    arc_dst: np.ndarray
    arc_cost: np.ndarray

    @property
    def points(self):
        return self.counts / self.M

    @property
    def n_nodes(self):
        return int(self.alive.sum())

    def has_point(self, point):
        """True if a live node sits exactly at ``point``."""
        c = np.rint(np.asarray(point) * self.M)
        if np.max(np.abs(c / self.M - point)) > 1e-12:
            return False
        return bool(self.alive[lattice_rank(c.astype(np.int64), self.M)])

    def without(self, balls):
        """Copy with all nodes inside the given balls removed.

        Parameters
        ----------
        balls : iterable of (center, radius)
            Open sup-norm balls.
        """
        alive = self.alive.copy()
        pts = self.points
        for center, radius in balls:
            dist = np.max(np.abs(pts - np.asarray(center, dtype=float)), axis=1)
            alive &= ~(dist < radius)
        keep = alive[self.arc_src] & alive[self.arc_dst]
        return CostLattice(
            self.M, self.counts, alive, self.arc_src[keep], self.arc_dst[keep], self.arc_cost[keep]
        )


def build_cost_lattice(model, M, forbidden=(), threads=1, chunk=20000):
    """Lattice graph with local minimum-action arc costs.

    Parameters
    ----------
    model : Model
    M : int
        Resolution (particles), ``M >= 20``.
    forbidden : iterable of (center, radius)
        Sup-norm balls whose lattice nodes are removed.
    threads : int
        Worker threads for the arc-cost evaluation (results are
        independent of the thread count).

    Returns
    -------
    CostLattice
    """
    if M < 20:
        raise DomainError("resolution M must be >= 20")
    counts = lattice_enumerate(M, model.d)
    n = len(counts)
    hops = _hop_vectors(model.d)
    tgt = counts[:, None, :] + hops[None, :, :]
    ok = np.all(tgt >= 0, axis=2)
    src = np.repeat(np.arange(n), len(hops))[ok.ravel()]
    tgt = tgt[ok]
    dst = lattice_rank(tgt, M)
    X0 = counts[src] / M
    X1 = tgt / M
    parts = [(s, min(s + chunk, len(src))) for s in range(0, len(src), chunk)]

    def work(bounds):
        lo, hi = bounds
        return segment_cost(model, X0[lo:hi], X1[lo:hi])[0]

    if threads > 1 and len(parts) > 1:
        with ThreadPoolExecutor(threads) as ex:
            costs = np.concatenate(list(ex.map(work, parts)))
    else:
        costs = np.concatenate([work(p) for p in parts]) if parts else np.zeros(0)
    finite = np.isfinite(costs)
    lat = CostLattice(
        M, counts, np.ones(n, dtype=bool), src[finite], dst[finite], costs[finite]
    )
    forbidden = list(forbidden)
    return lat.without(forbidden) if forbidden else lat


@dataclass(frozen=True)
class QuasipotentialResult:
    """Shortest-path value and the polygonal minimiser."""

    value: float
    path: np.ndarray
    reachable: bool

    def path_csv(self, labels):
        rows = [",".join(["k", *labels])]
        for k, p in enumerate(self.path):
            rows.append(",".join([str(k)] + [format(float(v), ".17g") for v in p]))
        return "\n".join(rows) + "\n"


def _near(lat, point, radius):
    pts = lat.points
    dist = np.max(np.abs(pts - point), axis=1)
    return np.flatnonzero(lat.alive & (dist <= radius + 1e-12))


def _augmented_graph(model, lat, nu, xi):
    """Graph with nu (index n) and xi (index n+1) inserted."""
    n = len(lat.counts)
    r = HOP / lat.M
    out_nodes = _near(lat, nu, r)
    in_nodes = _near(lat, xi, r)
    pts = lat.points
    X0 = np.vstack([np.repeat(nu[None], len(out_nodes), 0), pts[in_nodes]])
    X1 = np.vstack([pts[out_nodes], np.repeat(xi[None], len(in_nodes), 0)])
    srcs = np.concatenate([np.full(len(out_nodes), n), in_nodes])
    dsts = np.concatenate([out_nodes, np.full(len(in_nodes), n + 1)])
    if np.max(np.abs(nu - xi)) <= r:
        X0 = np.vstack([X0, nu])
        X1 = np.vstack([X1, xi])
        srcs = np.append(srcs, n)
        dsts = np.append(dsts, n + 1)
    extra = segment_cost(model, X0, X1)[0] if len(X0) else np.zeros(0)
    fin = np.isfinite(extra)
    all_src = np.concatenate([lat.arc_src, srcs[fin]])
    all_dst = np.concatenate([lat.arc_dst, dsts[fin]])
    all_cost = np.concatenate([lat.arc_cost, extra[fin]])
    G = csr_matrix((all_cost, (all_src, all_dst)), shape=(n + 2, n + 2))
    return G


def _shortest(model, lat, nu, xi):
    n = len(lat.counts)
    G = _augmented_graph(model, lat, nu, xi)
    dist, pred = dijkstra(G, directed=True, indices=n, return_predecessors=True)
    value = float(dist[n + 1])
    if not np.isfinite(value):
        return QuasipotentialResult(float("inf"), np.vstack([nu, xi]), False)
    seq = [n + 1]
    while seq[-1] != n:
        seq.append(int(pred[seq[-1]]))
    pts = lat.points
    path = [nu if k == n else xi if k == n + 1 else pts[k] for k in reversed(seq)]
    return QuasipotentialResult(value, np.array(path), True)


def quasipotential(model, nu, xi, M=100, lattice=None, forbidden=(), raise_unreachable=False):
    """Time-free minimum action ``V(nu, xi)`` on the cost lattice.

    Parameters
    ----------
    model : Model
    nu, xi : array_like
        Simplex points (inserted exactly as graph nodes).
    M : int
        Resolution, used when ``lattice`` is not supplied.
    lattice : CostLattice, optional
        Pre-built lattice (reused across queries).
    forbidden : iterable of (center, radius)
        Additional balls to avoid.
    raise_unreachable : bool
        Raise :class:`Unreachable` instead of returning ``inf``.

    Returns
    -------
    QuasipotentialResult
    """
    nu = simplex_point(nu)
    xi = simplex_point(xi)
    if np.array_equal(nu, xi):
        return QuasipotentialResult(0.0, np.vstack([nu, xi]), True)
    lat = lattice if lattice is not None else build_cost_lattice(model, M)
    forbidden = list(forbidden)
    if forbidden:
        lat = lat.without(forbidden)
    res = _shortest(model, lat, nu, xi)
    if raise_unreachable and not res.reachable:
        raise Unreachable(f"no admissible path from {nu.tolist()} to {xi.tolist()}")
    return res


# ------------------------------------------------------------ cost matrix
@dataclass(frozen=True)
class CostMatrix:
    """Pairwise constrained (``vtilde``) and plain (``v``) costs between attractors.

    Diagonals are 0 and ignored; ``inf`` marks unreachable pairs.
    """

    vtilde: np.ndarray
    v: np.ndarray = None
    locations: np.ndarray = None
    meta: dict = None

    @property
    def size(self):
        return len(self.vtilde)

    def to_dict(self):
        def enc(A):
            if A is None:
                return None
            out = []
            for i, row in enumerate(np.asarray(A, dtype=float)):
                out.append([
                    None if i == j else ("inf" if np.isinf(x) else float(x))
                    for j, x in enumerate(row)
                ])
            return out

        doc = {
            "schema": "mfjp/1",
            "kind": "cost_matrix",
            "size": self.size,
            "vtilde": enc(self.vtilde),
            "v": enc(self.v),
        }
        if self.locations is not None:
            doc["locations"] = [[float(x) for x in p] for p in self.locations]
        if self.meta:
            doc["meta"] = self.meta
        return doc

    @classmethod
    def from_dict(cls, doc):
        """Parse a cost-matrix document.

        ``vtilde`` may be a square list of lists (diagonal ignored, ``null``
        allowed, ``"inf"`` for unreachable) or a mapping ``"i->j": value``
        with 0-based indices.
        """
        if doc.get("schema", "mfjp/1") != "mfjp/1":
            raise ValidationError(f"unsupported schema {doc.get('schema')!r}")
        if "vtilde" not in doc:
            raise ValidationError("cost document lacks 'vtilde'")

        def dec(raw, size=None):
            if raw is None:
                return None
            if isinstance(raw, dict):
                pairs = {}
                for key, val in raw.items():
                    try:
                        i, j = (int(s) for s in key.split("->"))
                    except ValueError as exc:
                        raise ValidationError(f"bad cost key {key!r}") from exc
                    pairs[(i, j)] = val
                l = size or (max(max(p) for p in pairs) + 1)
                A = np.full((l, l), np.inf)
                for (i, j), val in pairs.items():
                    A[i, j] = _num(val)
            else:
                l = len(raw)
                A = np.zeros((l, l))
                for i, row in enumerate(raw):
                    if len(row) != l:
                        raise ValidationError("cost matrix must be square")
                    for j, val in enumerate(row):
                        A[i, j] = 0.0 if i == j else _num(val)
            np.fill_diagonal(A, 0.0)
            if np.any(A < 0):
                raise ValidationError("costs must be nonnegative")
            return A

        vt = dec(doc["vtilde"], doc.get("size"))
        v = dec(doc.get("v"), len(vt))
        loc = np.asarray(doc["locations"], dtype=float) if doc.get("locations") else None
        return cls(vt, v, loc, doc.get("meta"))

    @classmethod
    def load(cls, path):
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def _num(val):
    if val is None:
        raise ValidationError("off-diagonal cost entries must be numbers or 'inf'")
    if isinstance(val, str):
        if val.lower() in ("inf", "infinity", "+inf"):
            return np.inf
        raise ValidationError(f"bad cost entry {val!r}")
    return float(val)


def default_rho0(attractors):
    """One quarter of the minimal pairwise attractor distance (sup-norm)."""
    sep = attractors.min_separation()
    return 0.25 * sep if np.isfinite(sep) else 0.0


def vtilde_matrix(model, attractors, M=100, rho0=None, lattice=None):
    """Constrained costs between attractors.

    For each ordered pair ``(i, j)`` a shortest path from ``K_i`` to
    ``K_j`` is computed on the lattice with the balls of radius ``rho0``
    around every other attractor removed; the plain ``V`` uses the full
    lattice.

    Parameters
    ----------
    model : Model
    attractors : AttractorSet
    M : int
    rho0 : float, optional
        Exclusion radius; defaults to :func:`default_rho0`.  Must be below
        half the minimal separation.
    lattice : CostLattice, optional

    Returns
    -------
    CostMatrix
        Unreachable pairs hold ``inf`` and are listed in ``meta``.
    """
    loc = attractors.locations
    l = len(loc)
    if l == 0:
        raise DomainError("no attractors")
    if rho0 is None:
        rho0 = default_rho0(attractors)
    sep = attractors.min_separation()
    if l > 1 and not rho0 < 0.5 * sep:
        raise DomainError(f"rho0={rho0} must be below half the separation {sep}")
    vt = np.zeros((l, l))
    v = np.zeros((l, l))
    if l > 1:
        lat = lattice if lattice is not None else build_cost_lattice(model, M)
        for i in range(l):
            for j in range(l):
                if i == j:
                    continue
                v[i, j] = _shortest(model, lat, loc[i], loc[j]).value
                others = [(loc[k], rho0) for k in range(l) if k not in (i, j)]
                vt[i, j] = _shortest(model, lat.without(others), loc[i], loc[j]).value if others else v[i, j]
        M = lat.M
    unreachable = [[i, j] for i in range(l) for j in range(l) if i != j and np.isinf(vt[i, j])]
    meta = {"method": "lattice", "resolution": int(M), "rho0": float(rho0), "unreachable": unreachable}
    return CostMatrix(vt, v, loc, meta)


# --------------------------------------------------------------- 1-d oracle
def _two_state_rates(model):
    if model.d != 2:
        raise DomainError("the 1-d oracle needs a two-state model")
    if set(model.edges) != {(0, 1), (1, 0)}:
        raise DomainError("the 1-d oracle needs both edges between the two states")
    e01 = model.edges.index((0, 1))
    e10 = model.edges.index((1, 0))
    up = model.rates[e01]
    down = model.rates[e10]

    def g(x):
        x = np.asarray(x, dtype=float)
        pts = np.stack([1.0 - x, x], axis=-1)
        with np.errstate(divide="ignore"):
            return np.log(x * down(pts)) - np.log((1.0 - x) * up(pts))

    return g


def _g_zeros(g, lo, hi, n=4001):
    if hi <= lo:
        return []
    xs = np.linspace(lo, hi, n)
    gs = g(xs)
    zs = []
    for k in range(n - 1):
        a, b = gs[k], gs[k + 1]
        if a == 0.0:
            zs.append(xs[k])
        elif np.isfinite(a) and np.isfinite(b) and a * b < 0:
            zs.append(optimize.brentq(lambda t: float(g(t)), xs[k], xs[k + 1], xtol=1e-15))
    return sorted(set(z for z in zs if lo < z < hi))


def hj_oracle_1d(model, x_from, x_to):
    """Exact quasipotential between two points of a two-state model.

    With ``x`` the mass of the second state and
    ``g(x) = log[x lambda_{1->0}(x) / ((1-x) lambda_{0->1}(x))]``, moving up
    costs ``int max(0, g)`` and moving down costs ``int max(0, -g)``.

    Parameters
    ----------
    model : Model
        Two-state model with both edges.
    x_from, x_to : float
        Points in ``[0, 1]``.

    Returns
    -------
    float

    Examples
    --------
    >>> from mfjp.model import nonint
    >>> round(hj_oracle_1d(nonint(), 1/3, 1.0), 10) == round(np.log(3), 10)
    True
    """
    for x in (x_from, x_to):
        if not (0.0 <= x <= 1.0):
            raise DomainError(f"x={x} outside [0, 1]")
    if x_from == x_to:
        return 0.0
    g = _two_state_rates(model)
    lo, hi = sorted((float(x_from), float(x_to)))
    sign = 1.0 if x_to > x_from else -1.0
    knots = [lo, *_g_zeros(g, lo, hi), hi]
    total = 0.0
    for a, b in zip(knots[:-1], knots[1:]):
        mid = 0.5 * (a + b)
        if sign * g(mid) <= 0:
            continue
        val, _ = integrate.quad(
            lambda t: sign * float(g(t)), a, b, epsabs=1e-13, epsrel=1e-10, limit=500
        )
        total += max(val, 0.0)
    return total


def hj_cost_matrix(model, attractors):
    """Oracle cost matrix for a two-state model.

    ``V`` comes from :func:`hj_oracle_1d`; in one dimension every path
    between two attractors crosses the attractors in between, so
    ``vtilde`` is ``inf`` unless the pair is adjacent.
    """
    x = attractors.locations[:, 1]
    l = len(x)
    v = np.zeros((l, l))
    vt = np.zeros((l, l))
    for i in range(l):
        for j in range(l):
            if i == j:
                continue
            v[i, j] = hj_oracle_1d(model, x[i], x[j])
            lo, hi = sorted((x[i], x[j]))
            between = np.any((x > lo) & (x < hi))
            vt[i, j] = np.inf if between else v[i, j]
    return CostMatrix(vt, v, attractors.locations, {"method": "hj_oracle_1d"})
