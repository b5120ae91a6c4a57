"""Large-deviation action: tau, tau*, the local Lagrangian, path actions.

The local cost of moving with velocity ``v`` at ``xi`` is

    L(xi, v) = sup_alpha  sum_z alpha(z) v(z) - sum_e r_e (exp(alpha(z') - alpha(z)) - 1)

with ``r_e = lambda_e(xi) xi(z)`` for edge ``e = (z, z')``.  It equals
the edge-wise form ``sum_e r_e tau*(l_e/lambda_e - 1)`` where the
controlled rates are ``l_e = lambda_e exp(alpha*(z') - alpha*(z))``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

from .errors import DomainError
from .lattice import simplex_point

__all__ = [
    "tau",
    "tau_star",
    "LagrangianValue",
    "lagrangian",
    "lagrangian_batch",
    "recover_controls",
    "control_density",
    "ControlledPath",
    "path_action",
    "terminal_cost",
    "TerminalCostResult",
]

GRAD_TOL = 1e-10
_ALPHA_DIVERGED = 500.0
_U_CAP = 700.0


def tau(u):
    """``exp(u) - u - 1`` without cancellation for small ``|u|``."""
    u = np.asarray(u, dtype=float)
    small = np.abs(u) < 1e-4
    with np.errstate(over="ignore"):
        out = np.expm1(u) - u
    us = np.where(small, u, 0.0)
    series = us * us * (0.5 + us * (1.0 / 6.0 + us / 24.0))
    out = np.where(small, series, out)
    return out if out.ndim else float(out)


def tau_star(u):
    """Legendre transform of :func:`tau`.

    ``inf`` for ``u < -1``, ``1`` at ``u = -1``, ``(u+1) log(u+1) - u`` otherwise.

    Examples
    --------
    >>> tau_star(0.0), tau_star(-1.0), round(tau_star(np.e - 1), 12)
    (0.0, 1.0, 1.0)
    """
    u = np.asarray(u, dtype=float)
    with np.errstate(all="ignore"):
        inner = (u + 1.0) * np.log1p(u) - u
    out = np.where(u < -1.0, np.inf, np.where(u == -1.0, 1.0, inner))
    return out if out.ndim else float(out)


def _phi(f, r):
    """``r * phi(f / r)`` with ``phi(y) = y log y - y + 1``, clamped at 0."""
    f = np.asarray(f, dtype=float)
    r = np.asarray(r, dtype=float)
    with np.errstate(all="ignore"):
        y = f / r
        val = r * (y * np.log1p(y - 1.0) - (y - 1.0))
        val = np.where(f == 0.0, r, val)
        val = np.where(r == 0.0, np.where(f == 0.0, 0.0, np.inf), val)
    return np.maximum(val, 0.0)


@dataclass(frozen=True)
class LagrangianValue:
    """Value and dual maximiser of the local Lagrangian.

    Attributes
    ----------
    value : float
        Action density (nats per unit time); ``inf`` marks an infinite action.
    alpha : numpy.ndarray
        Maximiser with the gauge ``alpha[-1] = 0``.  Entries are
        non-finite when the supremum is only approached at infinity
        (e.g. on the simplex boundary).
    infinite : bool
    converged : bool
    grad_norm : float
        Sup-norm of the dual gradient at ``alpha``.
    """

    value: float
    alpha: np.ndarray
    infinite: bool
    converged: bool
    grad_norm: float


def _fluxrates(model, xi):
    return model.edge_rates(xi) * xi[..., model.src]


def _closed_form_two_state(model, r, v):
    """Closed form for two states (edge rates ``r`` (B, 2), velocity (B, 2))."""
    e01 = model.edges.index((0, 1))
    e10 = model.edges.index((1, 0))
    a, b = r[:, e01], r[:, e10]
    vx = v[:, 1]
    S = np.sqrt(vx * vx + 4.0 * a * b)
    with np.errstate(all="ignore"):
        # flows down->up (f01) and up->down (f10), f01 - f10 = vx, f01 f10 = a b
        f01 = np.where(vx >= 0, 0.5 * (vx + S), 2.0 * a * b / (S - vx))
        f10 = np.where(vx >= 0, 2.0 * a * b / (S + vx), 0.5 * (S - vx))
        # degenerate zero-rate cases
        f01 = np.where(a == 0.0, np.maximum(vx, 0.0), f01)
        f10 = np.where(a == 0.0, np.maximum(-vx, 0.0), f10)
        f01 = np.where(b == 0.0, np.maximum(vx, 0.0), f01)
        f10 = np.where(b == 0.0, np.maximum(-vx, 0.0), f10)
        value = _phi(f01, a) + _phi(f10, b)
        gap = np.log(f01) - np.log(a)  # alpha(up) - alpha(down)
    alpha = np.stack([-gap, np.zeros_like(gap)], axis=1)
    infinite = ~np.isfinite(value)
    value = np.where(infinite, np.inf, value)
    return value, alpha, infinite


def _dual_newton(model, r, v, alpha0=None, tol=GRAD_TOL, maxit=200):
    """Batched damped Newton ascent on the concave dual objective."""
    Bn, d = v.shape
    inc = model.incidence
    src, dst = model.src, model.dst
    alpha = np.zeros((Bn, d)) if alpha0 is None else np.array(alpha0, dtype=float)
    alpha[:, -1] = 0.0

    def objective(al, rows):
        u = np.minimum(al[:, dst] - al[:, src], _U_CAP)
        return np.einsum("bz,bz->b", al, v[rows]) - np.sum(r[rows] * np.expm1(u), axis=1)

    J = objective(alpha, slice(None))
    done = np.zeros(Bn, dtype=bool)
    gnorm = np.full(Bn, np.inf)
    eye = np.eye(d - 1)
    for _ in range(maxit):
        act = np.flatnonzero(~done)
        if act.size == 0:
            break
        al = alpha[act]
        u = np.minimum(al[:, dst] - al[:, src], _U_CAP)
        w = r[act] * np.exp(u)
        g = v[act] - w @ inc
        gr = g[:, :-1]
        gn = np.max(np.abs(gr), axis=1) if d > 1 else np.zeros(act.size)
        gnorm[act] = gn
        conv = gn <= tol
        diverged = np.max(np.abs(al), axis=1) > _ALPHA_DIVERGED
        done[act[conv | diverged]] = True
        keep = ~(conv | diverged)
        act, al, w, gr = act[keep], al[keep], w[keep], gr[keep]
        if act.size == 0:
            break
        incr = inc[:, :-1]
        H = np.einsum("be,ei,ej->bij", w, incr, incr)
        scale = np.maximum(np.trace(H, axis1=1, axis2=2), 1e-300)
        H = H + (1e-13 * scale + 1e-300)[:, None, None] * eye
        p = np.linalg.solve(H, gr[:, :, None])[:, :, 0]
        pfull = np.concatenate([p, np.zeros((act.size, 1))], axis=1)
        slope = np.sum(gr * p, axis=1)
        step = np.ones(act.size)
        accepted = np.zeros(act.size, dtype=bool)
        Jold = J[act]
        Jnew = Jold.copy()
        for _ls in range(60):
            trial = al + step[:, None] * pfull
            with np.errstate(over="ignore", invalid="ignore"):
                Jt = objective(trial, act)
            ok = ~accepted & np.isfinite(Jt) & (Jt >= Jold + 1e-4 * step * slope)
            if _ls == 0:
                # close to the optimum the objective stalls at rounding level
                # while the gradient still contracts quadratically: accept a
                # full step that shrinks the gradient without losing value
                ut = np.minimum(trial[:, dst] - trial[:, src], _U_CAP)
                with np.errstate(over="ignore", invalid="ignore"):
                    gt = v[act] - (r[act] * np.exp(ut)) @ inc
                gtn = np.max(np.abs(gt[:, :-1]), axis=1)
                gold = np.max(np.abs(gr), axis=1)
                flat = np.abs(Jt - Jold) <= 1e-12 * np.maximum(1.0, np.abs(Jold))
                ok |= ~accepted & np.isfinite(Jt) & flat & (gtn < 0.5 * gold)
            alpha[act[ok]] = trial[ok]
            Jnew[ok] = Jt[ok]
            accepted |= ok
            if accepted.all():
                break
            step = np.where(accepted, step, 0.5 * step)
        J[act] = Jnew
        # a rejected line search means no further ascent is possible
        done[act[~accepted]] = True
    # final gradient
    u = np.minimum(alpha[:, dst] - alpha[:, src], _U_CAP)
    g = v - (r * np.exp(u)) @ inc
    gnorm = np.max(np.abs(g[:, :-1]), axis=1) if d > 1 else np.zeros(Bn)
    converged = gnorm <= tol
    infinite = (np.max(np.abs(alpha), axis=1) > _ALPHA_DIVERGED) & ~converged
    value = np.where(infinite, np.inf, np.maximum(J, 0.0))
    return value, alpha, infinite, converged, gnorm


def lagrangian_batch(model, xi, v, method="auto", alpha0=None):
    """Vectorised Lagrangian.

    Parameters
    ----------
    model : Model
    xi : array_like, shape (B, d)
    v : array_like, shape (B, d)
        Velocities (components summing to zero).
    method : {"auto", "closed", "generic"}
        ``auto`` uses the closed form for two-state models.
    alpha0 : array_like, optional
        Warm start for the generic solver.

    Returns
    -------
    value, alpha, infinite, converged, grad_norm : numpy.ndarray
    """
    xi = np.atleast_2d(np.asarray(xi, dtype=float))
    v = np.atleast_2d(np.asarray(v, dtype=float))
    xi, v = np.broadcast_arrays(xi, v)
    xi = np.ascontiguousarray(xi)
    v = np.ascontiguousarray(v)
    r = _fluxrates(model, xi)
    # an empty state cannot lose mass
    empty_out = np.any((xi <= 0.0) & (v < -1e-14), axis=1)
    if method == "auto":
        method = "closed" if model.d == 2 and set(model.edges) == {(0, 1), (1, 0)} else "generic"
    if method == "closed":
        value, alpha, infinite = _closed_form_two_state(model, r, v)
        converged = np.ones(len(value), dtype=bool)
        u = np.minimum(alpha[:, model.dst] - alpha[:, model.src], _U_CAP)
        with np.errstate(all="ignore"):
            g = v - (r * np.exp(u)) @ model.incidence
        gnorm = np.abs(g[:, 0])
        gnorm = np.where(np.isfinite(gnorm), gnorm, 0.0)
    else:
        value, alpha, infinite, converged, gnorm = _dual_newton(model, r, v, alpha0)
    infinite = infinite | empty_out
    value = np.where(infinite, np.inf, value)
    return value, alpha, infinite, converged, gnorm


def lagrangian(model, xi, v, method="auto"):
    """Local Lagrangian ``L(xi, v)`` with its dual maximiser.

    Parameters
    ----------
    model : Model
    xi : array_like
        Simplex point.
    v : array_like
        Tangent vector (components sum to zero).
    method : {"auto", "closed", "generic"}

    Returns
    -------
    LagrangianValue

    Examples
    --------
    >>> from mfjp.model import nonint
    >>> lagrangian(nonint(), [0.5, 0.5], [0.5, -0.5]).value
    0.0
    """
    xi = simplex_point(xi)
    v = np.asarray(v, dtype=float)
    if v.shape != xi.shape:
        raise DomainError("velocity and point must have the same length")
    if abs(v.sum()) > 1e-9 * max(1.0, np.abs(v).max()):
        raise DomainError("velocity components must sum to zero")
    val, al, inf, conv, gn = lagrangian_batch(model, xi[None], v[None], method)
    return LagrangianValue(float(val[0]), al[0], bool(inf[0]), bool(conv[0]), float(gn[0]))


def recover_controls(model, xi, v):
    """Controlled rates ``l_e = lambda_e exp(alpha*(z') - alpha*(z))``.

    Returns
    -------
    numpy.ndarray, shape (..., |E|)
    """
    xi = np.atleast_2d(np.asarray(xi, dtype=float))
    v = np.atleast_2d(np.asarray(v, dtype=float))
    _, alpha, _, _, _ = lagrangian_batch(model, xi, v)
    lam = model.edge_rates(xi)
    with np.errstate(over="ignore", invalid="ignore"):
        return lam * np.exp(alpha[:, model.dst] - alpha[:, model.src])


def control_density(model, xi, controls):
    """Edge-wise action density ``sum_e xi(z) lambda_e tau*(l_e/lambda_e - 1)``."""
    xi = np.atleast_2d(np.asarray(xi, dtype=float))
    controls = np.atleast_2d(np.asarray(controls, dtype=float))
    lam = model.edge_rates(xi)
    with np.errstate(all="ignore"):
        terms = xi[:, model.src] * lam * tau_star(controls / lam - 1.0)
        terms = np.where(xi[:, model.src] == 0.0, 0.0, terms)
    return terms.sum(axis=1)


# ------------------------------------------------------------------ paths
@dataclass(frozen=True)
class ControlledPath:
    """Piecewise-linear path through simplex points.

    Attributes
    ----------
    times : numpy.ndarray, shape (n,)
        Strictly increasing.
    points : numpy.ndarray, shape (n, d)
    controls : numpy.ndarray or None, shape (n, |E|)
        Optional controlled rates at the nodes (nonnegative).
    """

    times: np.ndarray
    points: np.ndarray
    controls: np.ndarray = None

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        p = np.asarray(self.points, dtype=float)
        if t.ndim != 1 or p.ndim != 2 or len(t) != len(p) or len(t) < 2:
            raise DomainError("a path needs >= 2 nodes with matching times")
        if np.any(np.diff(t) <= 0):
            raise DomainError("path times must be strictly increasing")
        if np.any(np.abs(p.sum(axis=1) - 1.0) > 1e-9) or np.any(p < -1e-12):
            raise DomainError("path points must lie on the simplex")
        if self.controls is not None and np.any(np.asarray(self.controls) < 0):
            raise DomainError("controls must be nonnegative")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "points", np.clip(p, 0.0, None))

    @classmethod
    def from_flow(cls, flow):
        return cls(flow.times, flow.points)

    @classmethod
    def from_csv(cls, text):
        """Parse CSV with header ``t,<label>...``."""
        rows = [r for r in text.strip().splitlines() if r.strip()]
        data = np.array([[float(v) for v in r.split(",")] for r in rows[1:]])
        return cls(data[:, 0], data[:, 1:])

    def with_controls(self, model):
        """Attach the controls recovered from the dual maximiser."""
        pts, t = self.points, self.times
        vel = np.diff(pts, axis=0) / np.diff(t)[:, None]
        vel = np.vstack([vel, vel[-1:]])
        return ControlledPath(t, pts, recover_controls(model, pts, vel))


def _simpson_weights(n):
    w = np.ones(n + 1)
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    return w / (3.0 * n)


def _density(model, X, V, form):
    if form == "dual":
        return lagrangian_batch(model, X, V)[0]
    if form == "controls":
        val, alpha, inf, _, _ = lagrangian_batch(model, X, V)
        lam = model.edge_rates(X)
        with np.errstate(over="ignore", invalid="ignore"):
            ctrl = lam * np.exp(alpha[:, model.dst] - alpha[:, model.src])
        out = control_density(model, X, ctrl)
        return np.where(inf, np.inf, out)
    raise DomainError(f"unknown action form {form!r}")


def _segment_integrals(model, P0, P1, dt, n, rule, form):
    """Integral of L over each straight segment (uniform speed)."""
    K, d = P0.shape
    V = (P1 - P0) / dt[:, None]
    if rule == "simpson":
        s = np.linspace(0.0, 1.0, n + 1)
        w = _simpson_weights(n)
    else:
        s, w = np.polynomial.legendre.leggauss(n)
        s, w = 0.5 * (s + 1.0), 0.5 * w
    X = P0[:, None, :] + s[None, :, None] * (P1 - P0)[:, None, :]
    X = np.clip(X, 0.0, None)
    Vb = np.broadcast_to(V[:, None, :], X.shape)
    L = _density(model, X.reshape(-1, d), Vb.reshape(-1, d), form).reshape(K, len(s))
    with np.errstate(invalid="ignore"):
        return dt * (L @ w), L


def path_action(model, path, rtol=1e-6, atol=1e-13, max_level=14, form="dual"):
    """Action of a piecewise-linear path.

    Each segment is traversed at constant velocity.  The integral of the
    Lagrangian is computed with composite Simpson quadrature whose panel
    count doubles until two successive totals differ by at most ``rtol``
    (relative) or ``atol`` (absolute).  Segments on which the integrand is
    infinite only at an endpoint (a segment ending on the simplex
    boundary) are integrated with an open Gauss-Legendre rule instead.

    Parameters
    ----------
    model : Model
    path : ControlledPath
    rtol, atol : float
    max_level : int
        Maximum number of doublings.
    form : {"dual", "controls"}
        Integrand: the dual supremum or the edge-wise ``tau*`` form
        evaluated at the recovered controls.

    Returns
    -------
    float
        ``inf`` for an infinite action.
    """
    P = path.points
    dt = np.diff(path.times)
    P0, P1 = P[:-1], P[1:]
    n = 2
    I, L = _segment_integrals(model, P0, P1, dt, n, "simpson", form)
    open_seg = np.zeros(len(dt), dtype=bool)
    if not np.all(np.isfinite(L)):
        interior_bad = ~np.all(np.isfinite(L[:, 1:-1]), axis=1)
        if np.any(interior_bad):
            return float("inf")
        open_seg = ~np.all(np.isfinite(L), axis=1)
    sim_idx = np.flatnonzero(~open_seg)
    opn_idx = np.flatnonzero(open_seg)
    total_prev = None
    ng = 4
    for _level in range(max_level):
        parts = []
        if sim_idx.size:
            Is, Ls = _segment_integrals(model, P0[sim_idx], P1[sim_idx], dt[sim_idx], n, "simpson", form)
            if not np.all(np.isfinite(Ls)):
                return float("inf")
            parts.append(Is.sum())
        if opn_idx.size:
            Io, Lo = _segment_integrals(model, P0[opn_idx], P1[opn_idx], dt[opn_idx], ng, "gauss", form)
            if not np.all(np.isfinite(Lo)):
                return float("inf")
            parts.append(Io.sum())
        total = float(sum(parts))
        if total_prev is not None:
            diff = abs(total - total_prev)
            if diff <= rtol * abs(total) or diff <= atol:
                return max(total, 0.0)
        total_prev = total
        n *= 2
        ng *= 2
    return max(total_prev, 0.0)


# ------------------------------------------------------------ terminal cost
@dataclass(frozen=True)
class TerminalCostResult:
    """Outcome of :func:`terminal_cost`.

    Attributes
    ----------
    value : float
        Action of the best path found (an upper bound on the terminal cost).
    path : ControlledPath
    converged : bool
    stages : tuple of (n_knots, value)
        Values after each stage of the knot-refinement chain.
    """

    value: float
    path: ControlledPath
    converged: bool
    stages: tuple


_QUAD_N = 8


def _fixed_quad_action(model, P, dt):
    I, L = _segment_integrals(model, P[:-1], P[1:], dt, _QUAD_N, "gauss", "dual")
    tot = float(I.sum())
    return tot if np.isfinite(tot) else 1e12


def _softmax(z):
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def _split(P, dur):
    """Double the knot count by splitting the longest segments at their midpoint."""
    n_seg = len(dur)
    n_new = n_seg - 1  # number of interior knots to add (k -> 2k)
    order = np.argsort(-dur, kind="stable")[: max(n_new, 1)]
    chosen = set(order.tolist())
    Pn, Dn = [P[0]], []
    for k in range(n_seg):
        if k in chosen:
            mid = 0.5 * (P[k] + P[k + 1])
            Pn += [mid, P[k + 1]]
            Dn += [0.5 * dur[k], 0.5 * dur[k]]
        else:
            Pn.append(P[k + 1])
            Dn.append(dur[k])
    return np.array(Pn), np.array(Dn)


def _optimise_stage(model, nu, xi, T, P, dur, maxiter):
    """Optimise interior knots and segment durations; never worsens the start."""
    n_int = len(P) - 2
    d = len(nu)
    eps = 1e-300
    z0 = np.log(np.maximum(P[1:-1], 1e-300))
    th0 = np.log(dur / T)

    def unpack(x):
        z = x[: n_int * d].reshape(n_int, d)
        th = x[n_int * d:]
        pts = np.vstack([nu, _softmax(z), xi])
        return pts, T * _softmax(th) + eps

    def f(x):
        pts, du = unpack(x)
        return _fixed_quad_action(model, pts, du)

    x0 = np.concatenate([z0.ravel(), th0])
    f0 = f(x0)
    res = minimize(f, x0, method="L-BFGS-B", options={"maxiter": maxiter, "ftol": 1e-7, "gtol": 1e-10})
    if res.fun < f0:
        pts, du = unpack(res.x)
        return pts, du, float(res.fun), bool(res.success)
    return P, dur, f0, bool(res.success)


def terminal_cost(model, nu, xi, T, n_knots=8, maxiter=500):
    """Upper bound on the minimal action of reaching ``xi`` from ``nu`` in time ``T``.

    Minimises the path action over piecewise-linear paths with
    ``n_knots`` free interior knots.  Both knot locations and the time
    spent on each segment are optimised (quasi-Newton with
    finite-difference gradients, stopping when the relative improvement
    falls below 1e-7).  The knot count is reached through the chain
    1, 2, 4, ... where each stage starts from an exact re-parametrisation
    of the previous optimum, so the returned value never increases with
    ``n_knots`` along that chain.

    Parameters
    ----------
    model : Model
    nu, xi : array_like
        Start and end simplex points.
    T : float
        Horizon, ``T > 0``.
    n_knots : int
        Interior knots, ``>= 2``.

    Returns
    -------
    TerminalCostResult
    """
    if T <= 0:
        raise DomainError("T must be positive")
    if n_knots < 2:
        raise DomainError("n_knots must be >= 2")
    nu = simplex_point(nu)
    xi = simplex_point(xi)
    chain = [1]
    while chain[-1] < n_knots:
        chain.append(min(2 * chain[-1], n_knots))
    # stage 0: straight line with one midpoint knot
    P = np.vstack([nu, 0.5 * (nu + xi), xi])
    dur = np.array([0.5 * T, 0.5 * T])
    stages = []
    converged = True
    best = (np.inf, None)
    for k in chain:
        while len(P) - 2 < k:
            P, dur = _split(P, dur)
            if len(P) - 2 > k:  # trim surplus knots from the last split
                P, dur = _merge_to(P, dur, k)
        P, dur, _, ok = _optimise_stage(model, nu, xi, T, P, dur, maxiter)
        converged = converged and ok
        times = np.concatenate([[0.0], np.cumsum(dur)])
        times[-1] = T
        path = ControlledPath(times, P)
        val = path_action(model, path)
        stages.append((k, val))
        # keep the best path over the whole chain, so that the reported
        # value is monotone along 1, 2, 4, ... knots
        if val < best[0] or best[1] is None:
            best = (val, path)
    return TerminalCostResult(best[0], best[1], converged, tuple(stages))


def _merge_to(P, dur, k):
    """Remove the knots added last until exactly ``k`` interior knots remain."""
    while len(P) - 2 > k:
        j = int(np.argmin(dur[:-1] + dur[1:]))
        P = np.delete(P, j + 1, axis=0)
        dur = np.concatenate([dur[:j], [dur[j] + dur[j + 1]], dur[j + 2:]])
    return P, dur
