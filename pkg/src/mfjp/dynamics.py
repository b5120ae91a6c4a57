"""McKean-Vlasov flow, fixed points, stability and basins.

The deterministic limit of the empirical measure solves
``d mu/dt = drift(mu)`` where ``drift(xi)_z`` is the net probability
flux into ``z`` under the rate matrix evaluated at ``xi``.
"""
from __future__ import annotations

import io
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, LimitCycleSuspected, StepRejected, Unresolved
from .lattice import lattice_enumerate, simplex_point

__all__ = [
    "drift",
    "FlowPath",
    "mve_flow",
    "FixedPoint",
    "AttractorSet",
    "find_attractors",
    "basin_of",
    "newton_fixed_point",
    "reduced_jacobian",
]

#: Fixed points closer than this (sup-norm) are merged.
MERGE_RADIUS = 1e-6
#: Drift sup-norm a polished fixed point must reach.
FIXED_POINT_TOL = 1e-10
#: Real parts within this band are treated as marginal.
MARGINAL_BAND = 1e-10
#: Stage points may undershoot the simplex by at most this much.
STEP_TOL = 1e-9


def drift(model, xi):
    """Mean-field drift at point(s) ``xi`` (shape ``(..., d)``).

    Component ``z`` is the inflow into ``z`` minus the outflow from ``z``;
    components sum to zero.

    Examples
    --------
    >>> from mfjp.model import nonint
    >>> drift(nonint(), [2/3, 1/3]).round(15).tolist()
    [0.0, 0.0]
    """
    xi = np.asarray(xi, dtype=float)
    flux = model.edge_rates(xi) * xi[..., model.src]
    return flux @ model.incidence


# ------------------------------------------------------------------ flow
@dataclass(frozen=True)
class FlowPath:
    """A sampled trajectory.

    Attributes
    ----------
    times : numpy.ndarray, shape (n,)
    points : numpy.ndarray, shape (n, d)
    labels : tuple of str
    terminal_drift : float
        Sup-norm of the drift at the last point.
    """

    times: np.ndarray
    points: np.ndarray
    labels: tuple
    terminal_drift: float = float("nan")

    def to_csv(self):
        """CSV text: header ``t,<label>...`` then one row per node."""
        buf = io.StringIO()
        buf.write(",".join(["t", *self.labels]) + "\n")
        for t, p in zip(self.times, self.points):
            buf.write(",".join(format(float(v), ".17g") for v in (t, *p)) + "\n")
        return buf.getvalue()


def _renormalise(x):
    low = x.min(axis=-1)
    if np.any(low < -STEP_TOL):
        raise StepRejected(f"integration left the simplex (min coordinate {low.min():.3e})")
    x = np.clip(x, 0.0, None)
    return x / x.sum(axis=-1, keepdims=True)


def _rk4_step(model, x, dt):
    k1 = drift(model, x)
    x2 = x + 0.5 * dt * k1
    _check_stage(x2)
    k2 = drift(model, x2)
    x3 = x + 0.5 * dt * k2
    _check_stage(x3)
    k3 = drift(model, x3)
    x4 = x + dt * k3
    _check_stage(x4)
    k4 = drift(model, x4)
    return _renormalise(x + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4))


def _check_stage(x):
    if np.any(x < -STEP_TOL):
        raise StepRejected(f"RK4 stage left the simplex (min coordinate {x.min():.3e})")


def _integrate(model, x, t, dt, settle=None):
    """Advance a batch ``x`` (shape (B, d)) by time ``t`` with step ``dt``.

    If ``settle`` is given, stop early once every member's drift sup-norm
    is below it (checked every 100 steps).
    """
    n = int(np.ceil(t / dt - 1e-12))
    h = t / n if n else 0.0
    for k in range(n):
        x = _rk4_step(model, x, h)
        if settle is not None and k % 100 == 99:
            if np.max(np.abs(drift(model, x))) <= settle:
                break
    return x


def mve_flow(model, nu, t_max, dt=0.01, record_every=1):
    """Integrate the mean-field ODE with classical RK4.

    Each step is renormalised onto the simplex; a stage that undershoots
    a coordinate by more than 1e-9 raises :class:`StepRejected`.

    Parameters
    ----------
    model : Model
    nu : array_like
        Initial simplex point.
    t_max : float
        Final time (``t_max >= dt``).
    dt : float
        Step size; the last step is shortened so the grid ends at ``t_max``.
    record_every : int
        Keep every k-th step in the returned path (endpoints always kept).

    Returns
    -------
    FlowPath
    """
    if dt <= 0 or t_max < dt:
        raise DomainError("need dt > 0 and t_max >= dt")
    x = simplex_point(nu)[None, :]
    n = int(np.ceil(t_max / dt - 1e-12))
    times = np.minimum(np.arange(n + 1) * dt, t_max)
    pts = [x[0].copy()]
    kept = [0.0]
    for k in range(1, n + 1):
        x = _rk4_step(model, x, times[k] - times[k - 1])
        if k % record_every == 0 or k == n:
            pts.append(x[0].copy())
            kept.append(times[k])
    term = float(np.max(np.abs(drift(model, x[0]))))
    return FlowPath(np.array(kept), np.array(pts), model.labels, term)


# -------------------------------------------------------------- fixed points
def _full(y):
    return np.concatenate([y, [1.0 - y.sum()]])


def _reduced_drift(model, y):
    return drift(model, _full(y))[:-1]


def reduced_jacobian(model, xi, h=1e-6):
    """Jacobian of the drift in the first ``d-1`` coordinates.

    Central differences with step ``h``; the last coordinate is eliminated
    by the unit-sum constraint, so the spectrum is that of the flow on the
    tangent space of the simplex.
    """
    y = np.asarray(xi, dtype=float)[:-1]
    m = y.size
    J = np.empty((m, m))
    for j in range(m):
        e = np.zeros(m)
        e[j] = h
        fp = _reduced_drift(model, y + e)
        fm = _reduced_drift(model, y - e)
        if np.all(np.isfinite(fp)) and np.all(np.isfinite(fm)):
            J[:, j] = (fp - fm) / (2 * h)
        elif np.all(np.isfinite(fp)):
            J[:, j] = (fp - _reduced_drift(model, y)) / h
        else:
            J[:, j] = (_reduced_drift(model, y) - fm) / h
    return J


def _max_feasible(y, p):
    """Largest a in (0, 1] with _full(y + a p) >= 0."""
    x = _full(y)
    dx = np.concatenate([p, [-p.sum()]])
    neg = dx < 0
    if not np.any(neg):
        return 1.0
    return float(min(1.0, np.min(x[neg] / -dx[neg])))


def newton_fixed_point(model, xi0, tol=1e-12, maxit=200):
    """Damped Newton iteration for ``drift = 0`` on the simplex.

    Returns
    -------
    (point, converged, drift_norm)
    """
    y = np.asarray(xi0, dtype=float)[:-1].copy()
    f = _reduced_drift(model, y)
    norm = float(np.max(np.abs(drift(model, _full(y)))))
    for _ in range(maxit):
        if not np.isfinite(norm):
            break
        if norm <= tol:
            return _full(y), True, norm
        J = reduced_jacobian(model, _full(y))
        try:
            p = -np.linalg.solve(J, f)
        except np.linalg.LinAlgError:
            p = -np.linalg.lstsq(J, f, rcond=None)[0]
        if not np.all(np.isfinite(p)):
            break
        a = _max_feasible(y, p)
        accepted = False
        while a > 1e-12:
            yn = y + a * p
            xn = np.clip(_full(yn), 0.0, None)
            xn /= xn.sum()
            yn = xn[:-1]
            nn = float(np.max(np.abs(drift(model, xn))))
            if np.isfinite(nn) and nn < norm:
                y, norm = yn, nn
                f = _reduced_drift(model, y)
                accepted = True
                break
            a *= 0.5
        if not accepted:
            break
    return _full(y), norm <= tol, norm


@dataclass(frozen=True)
class FixedPoint:
    """A zero of the drift.

    Attributes
    ----------
    location : numpy.ndarray
    stability : str
        ``"stable"``, ``"unstable"`` or ``"saddle"``.
    eigenvalues : tuple of complex
        Spectrum of the reduced Jacobian.
    drift_norm : float
    marginal : bool
        True if some eigenvalue had ``|Re| <= 1e-10`` and stability was
        decided by a perturb-and-flow test.
    """

    location: np.ndarray
    stability: str
    eigenvalues: tuple
    drift_norm: float
    marginal: bool = False

    def to_dict(self):
        return {
            "location": [float(v) for v in self.location],
            "stability": self.stability,
            "eigenvalues": [[float(np.real(e)), float(np.imag(e))] for e in self.eigenvalues],
            "drift_norm": self.drift_norm,
            "marginal": self.marginal,
        }


@dataclass(frozen=True)
class AttractorSet:
    """Stable fixed points (indexed set ``L``) plus all other fixed points.

    ``attractors[i]`` is ``K_i``; indices are 0-based and follow the
    lexicographic order of the locations.
    """

    attractors: tuple
    fixed_points: tuple
    labels: tuple
    nonconvergent: tuple = field(default=())

    @property
    def locations(self):
        return np.array([a.location for a in self.attractors])

    def __len__(self):
        return len(self.attractors)

    def min_separation(self):
        loc = self.locations
        if len(loc) < 2:
            return float("inf")
        diff = np.abs(loc[:, None, :] - loc[None, :, :]).max(axis=-1)
        return float(diff[~np.eye(len(loc), dtype=bool)].min())

    def to_dict(self):
        return {
            "labels": list(self.labels),
            "attractors": [dict(index=i, **a.to_dict()) for i, a in enumerate(self.attractors)],
            "fixed_points": [f.to_dict() for f in self.fixed_points],
            "nonconvergent_starts": list(self.nonconvergent),
        }

    @classmethod
    def from_locations(cls, locations, labels):
        """Wrap known stable points (e.g. from an oracle) as an AttractorSet."""
        pts = tuple(
            FixedPoint(simplex_point(p), "stable", (), 0.0)
            for p in sorted((tuple(map(float, p)) for p in locations))
        )
        return cls(pts, pts, tuple(labels))


def _classify(model, x, eig):
    re = np.real(eig)
    if re.size == 0:
        return "stable", False
    if np.all(re < -MARGINAL_BAND):
        return "stable", False
    if np.all(re > MARGINAL_BAND):
        return "unstable", False
    if np.any(re > MARGINAL_BAND) and np.any(re < -MARGINAL_BAND):
        return "saddle", False
    # marginal: decide by flowing small perturbations
    d = model.d
    eps = 1e-3
    starts = []
    for i in range(d):
        for j in range(d):
            if i != j and x[j] >= eps:
                p = x.copy()
                p[i] += eps
                p[j] -= eps
                starts.append(p)
    starts = np.array(starts)
    end = _integrate(model, starts, 50.0, 0.05)
    d0 = np.abs(starts - x).max(axis=1)
    d1 = np.abs(end - x).max(axis=1)
    closer = d1 < d0
    if np.all(closer):
        return "stable", True
    if not np.any(closer):
        return "unstable", True
    return "saddle", True


def _starts(model, n_starts, seed):
    d = model.d
    rng = [np.random.default_rng([seed, k]) for k in range(n_starts)]
    rand = np.array([g.dirichlet(np.ones(d)) for g in rng])
    res = 2
    while len(lattice_enumerate(res + 1, d)) <= n_starts:
        res += 1
    grid = lattice_enumerate(res, d) / res
    bary = np.full((1, d), 1.0 / d)
    return np.vstack([grid, bary, rand])


def _cluster(model, pts, norms):
    """Union-find merge by radius, or by a zero-drift plateau between points."""
    n = len(pts)
    parent = list(range(n))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    s = np.linspace(0.0, 1.0, 21)[:, None]
    for i in range(n):
        for j in range(i + 1, n):
            dist = np.max(np.abs(pts[i] - pts[j]))
            same = dist <= MERGE_RADIUS
            if not same and dist <= 1e-2:
                seg = pts[i] + s * (pts[j] - pts[i])
                same = np.max(np.abs(drift(model, seg))) <= FIXED_POINT_TOL
            if same:
                parent[find(i)] = find(j)
    groups = {}
    for i in range(n):
        groups.setdefault(find(i), []).append(i)
    reps = []
    for members in groups.values():
        best = min(members, key=lambda k: (norms[k], tuple(pts[k])))
        reps.append(best)
    return reps


def find_attractors(model, n_starts=None, seed=0, t_max=200.0, dt=0.05, threads=1):
    """Locate and classify the fixed points of the mean-field flow.

    Starting points are a regular simplex grid, the barycentre and
    ``n_starts`` Dirichlet(1) draws seeded by ``(seed, start index)``.
    Every start is (a) polished directly by damped Newton, which finds
    unstable points, and (b) flowed for ``t_max`` and then polished.

    Parameters
    ----------
    model : Model
    n_starts : int, optional
        Defaults to ``10 * |Z|`` (the minimum allowed).
    seed : int
    t_max, dt : float
        Flow horizon and RK4 step for the flow-then-polish pass.
    threads : int
        Worker threads for the per-start Newton polish.

    Returns
    -------
    AttractorSet

    Raises
    ------
    LimitCycleSuspected
        If a flowed start neither settles nor polishes to a fixed point.
    """
    d = model.d
    if n_starts is None:
        n_starts = 10 * d
    if n_starts < 10 * d:
        raise DomainError(f"n_starts must be >= 10*|Z| = {10 * d}")
    starts = _starts(model, n_starts, seed)
    flowed = _integrate(model, starts.copy(), t_max, dt, settle=1e-9)
    cands = np.vstack([starts, flowed])

    def polish(k):
        return newton_fixed_point(model, cands[k])

    if threads > 1:
        with ThreadPoolExecutor(threads) as ex:
            results = list(ex.map(polish, range(len(cands))))
    else:
        results = [polish(k) for k in range(len(cands))]

    nonconv = []
    pts, norms = [], []
    for k, (x, ok, nrm) in enumerate(results):
        if ok:
            pts.append(x)
            norms.append(nrm)
        elif k >= len(starts):
            idx = k - len(starts)
            term = float(np.max(np.abs(drift(model, flowed[idx]))))
            if term > 1e-6:
                raise LimitCycleSuspected(
                    f"start {idx} did not settle (drift {term:.3e} after t={t_max})"
                )
            nonconv.append(idx)
    if not pts:
        raise LimitCycleSuspected("no fixed point found from any start")
    pts = np.array(pts)
    reps = _cluster(model, pts, norms)
    fps = []
    for k in reps:
        x = pts[k]
        eig = np.linalg.eigvals(reduced_jacobian(model, x)) if d > 1 else np.array([])
        eig = eig[np.lexsort((np.imag(eig), np.real(eig)))]
        stab, marg = _classify(model, x, eig)
        fps.append(FixedPoint(x, stab, tuple(complex(e) for e in eig), float(norms[k]), marg))
    fps.sort(key=lambda f: tuple(f.location))
    stable = tuple(f for f in fps if f.stability == "stable")
    return AttractorSet(stable, tuple(fps), model.labels, tuple(sorted(set(nonconv))))


def basin_of(model, attractors, nu, t_max=1e4, dt=0.05, radius=1e-4):
    """Index of the stable attractor whose basin contains ``nu``.

    The flow from ``nu`` is integrated until it comes within ``radius``
    (sup-norm) of a stable attractor.

    Raises
    ------
    Unresolved
        If no attractor is reached by ``t_max`` or the flow is stuck at a
        non-attracting fixed point.
    """
    loc = attractors.locations
    if len(loc) == 0:
        raise DomainError("attractor set is empty")
    x = simplex_point(nu)[None, :]
    t = 0.0
    chunk = 200 * dt
    while True:
        dist = np.abs(loc - x[0]).max(axis=1)
        if dist.min() <= radius:
            return int(np.argmin(dist))
        if np.max(np.abs(drift(model, x[0]))) <= 1e-14:
            raise Unresolved(f"flow from {x[0].tolist()} is stuck at a non-attracting fixed point")
        if t >= t_max:
            raise Unresolved(f"flow from {simplex_point(nu).tolist()} unresolved by t={t_max}")
        x = _integrate(model, x, min(chunk, t_max - t), dt)
        t += chunk
