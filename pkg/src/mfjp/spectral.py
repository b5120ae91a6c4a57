"""Exact finite-N generator, invariant measure and spectral quantities.

The empirical-measure chain ``mu_N`` lives on the lattice of count
vectors (ascending lexicographic order, see :func:`lattice_enumerate`).
A particle at ``z`` jumps to ``z'`` at rate ``lambda_{z,z'}(x)``, so the
chain moves from ``x`` to ``x + (e_{z'} - e_z)/N`` at rate
``N x(z) lambda_{z,z'}(x)``.

For two-state models the chain is birth-death.  Its invariant measure
then comes from the detailed-balance product formula (in log space), and
``lambda_2`` from bisection on the inertia of the shifted generator.  The
pivots are written in subtraction-free form, which keeps full relative
accuracy even when ``lambda_2`` is far below machine epsilon times the
matrix norm.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numba
import numpy as np
import scipy.sparse as sp
from scipy.linalg import eigh, eigh_tridiagonal
from scipy.sparse.csgraph import connected_components
from scipy.sparse.linalg import spsolve
from scipy.special import logsumexp

from .errors import CapExceeded, DomainError, NotIrreducible, NotReversible, SolveFailed
from .lattice import LATTICE_CAP, LatticeMeasure, lattice_enumerate, lattice_rank

__all__ = [
    "DENSE_CAP",
    "TRIDIAGONAL_CAP",
    "GeneratorMatrix",
    "build_generator",
    "invariant_measure",
    "Reversibility",
    "check_reversibility",
    "second_eigenvalue",
    "full_spectrum",
    "TVCurve",
    "tv_mixing_curve",
    "SpectralReport",
    "spectral_report",
    "Lambda2Scan",
    "lambda2_scan",
]

DENSE_CAP = 4000
TRIDIAGONAL_CAP = 200_001
REVERSIBLE_TOL = 1e-9
RESIDUAL_TOL = 1e-10


@dataclass(frozen=True)
class GeneratorMatrix:
    """Sparse generator of ``mu_N``.

    Attributes
    ----------
    N : int
    states : numpy.ndarray of int64, shape (n, d)
        Count vectors in lattice order.
    Q : scipy.sparse.csr_matrix
        Off-diagonal rates, diagonal ``-`` row sums.
    labels : tuple of str
    """

    N: int
    states: np.ndarray = field(repr=False)
    Q: sp.csr_matrix = field(repr=False)
    labels: tuple = ()

    @property
    def dimension(self):
        return self.Q.shape[0]

    @property
    def is_birth_death(self):
        return self.states.shape[1] == 2

    def index_of(self, nu):
        """Lattice index of a :class:`LatticeMeasure` or count vector."""
        counts = nu.counts if isinstance(nu, LatticeMeasure) else np.asarray(nu)
        counts = np.asarray(counts, dtype=np.int64)
        if counts.shape != (self.states.shape[1],) or counts.sum() != self.N or np.any(counts < 0):
            raise DomainError(f"{counts.tolist()} is not a lattice point with N={self.N}")
        return int(lattice_rank(counts, self.N))

    def birth_death_rates(self):
        """``(up, down)`` with ``up[i] = Q[i, i+1]`` and ``down[i] = Q[i, i-1]``."""
        if not self.is_birth_death:
            raise DomainError("birth-death rates exist only for two states")
        n = self.dimension
        up = np.zeros(n)
        down = np.zeros(n)
        up[:-1] = self.Q.diagonal(1)
        down[1:] = self.Q.diagonal(-1)
        return up, down


def build_generator(model, N, cap=LATTICE_CAP):
    """Assemble the generator of ``mu_N``.

    Parameters
    ----------
    model : Model
    N : int
        Number of particles (``>= 1``).
    cap : int
        Maximum lattice size.

    Returns
    -------
    GeneratorMatrix

    Raises
    ------
    CapExceeded

    Examples
    --------
    >>> from mfjp.model import nonint
    >>> build_generator(nonint(), 1).Q.toarray()
    array([[-2.,  2.],
           [ 1., -1.]])
    """
    N = int(N)
    states = lattice_enumerate(N, model.d, cap=cap)
    n = len(states)
    x = states / N
    rates = model.edge_rates(x)  # (n, E)
    rows, cols, vals = [], [], []
    for k, (a, b) in enumerate(zip(model.src, model.dst)):
        live = np.flatnonzero(states[:, a] > 0)
        if live.size == 0:
            continue
        tgt = states[live].copy()
        tgt[:, a] -= 1
        tgt[:, b] += 1
        rows.append(live)
        cols.append(lattice_rank(tgt, N))
        vals.append(states[live, a] * rates[live, k])
    rows = np.concatenate(rows) if rows else np.zeros(0, np.int64)
    cols = np.concatenate(cols) if cols else np.zeros(0, np.int64)
    vals = np.concatenate(vals) if vals else np.zeros(0)
    off = sp.csr_matrix((vals, (rows, cols)), shape=(n, n))
    off.sum_duplicates()
    diag = -np.asarray(off.sum(axis=1)).ravel()
    Q = (off + sp.diags(diag)).tocsr()
    Q.sort_indices()
    return GeneratorMatrix(N, states, Q, tuple(model.labels))


def _irreducible(G):
    if G.dimension == 1:
        return True
    ncomp, _ = connected_components(G.Q, directed=True, connection="strong")
    return ncomp == 1


def _birth_death_measure(G):
    up, down = G.birth_death_rates()
    with np.errstate(divide="ignore"):
        steps = np.log(up[:-1]) - np.log(down[1:])
    logp = np.concatenate([[0.0], np.cumsum(steps)])
    return np.exp(logp - logsumexp(logp))


def _sparse_solve(G):
    n = G.dimension
    A = G.Q.T.tolil()
    A[n - 1, :] = np.ones(n)
    b = np.zeros(n)
    b[-1] = 1.0
    with np.errstate(all="ignore"):
        p = spsolve(A.tocsc(), b)
    return np.asarray(p, dtype=float)


def invariant_measure(G):
    """Invariant probability vector ``p`` with ``p Q = 0``.

    Uses a direct sparse solve.  For two-state models the detailed-balance
    product formula is evaluated in log space, returned, and cross-checked
    against the sparse solve with a tolerance scaled by the conditioning
    estimate ``||Q|| / lambda_2``.

    Raises
    ------
    NotIrreducible
    SolveFailed
        If the residual ``max |p Q|`` exceeds 1e-10 or the two methods
        disagree.
    """
    if not _irreducible(G):
        raise NotIrreducible("generator is not irreducible")
    if G.dimension == 1:
        return np.ones(1)
    p_direct = _sparse_solve(G)
    if G.is_birth_death:
        p = _birth_death_measure(G)
        # A backward-stable solve is accurate to about eps * ||Q|| / lambda_2,
        # which is vacuous for strongly metastable chains.
        up, down = G.birth_death_rates()
        gap = _birth_death_lambda2(up, down, rtol=1e-3)
        tol = 1e-8 + 1e3 * np.finfo(float).eps * np.max(up + down) / gap
        if not np.all(np.isfinite(p_direct)) or np.max(np.abs(p - p_direct)) > tol:
            raise SolveFailed("product formula and sparse solve disagree")
    else:
        p = p_direct
        if not np.all(np.isfinite(p)):
            raise SolveFailed("sparse solve produced non-finite values")
        p = np.clip(p, 0.0, None)
        p = p / p.sum()
    res = np.max(np.abs(G.Q.T @ p))
    if res > RESIDUAL_TOL or np.any(p < 0):
        raise SolveFailed(f"invariant-measure residual {res:.3g}")
    return p


@dataclass(frozen=True)
class Reversibility:
    """Largest detailed-balance violation over arcs."""

    residual: float
    reversible: bool


def check_reversibility(G, p):
    """Max ``|p(x)Q(x,y) - p(y)Q(y,x)|`` over arcs; reversible iff ``<= 1e-9``."""
    off = G.Q.tocoo()
    mask = off.row != off.col
    r, c = off.row[mask], off.col[mask]
    flux = sp.csr_matrix((p[r] * off.data[mask], (r, c)), shape=G.Q.shape)
    diff = flux - flux.T
    res = float(np.max(np.abs(diff.data))) if diff.nnz else 0.0
    return Reversibility(res, res <= REVERSIBLE_TOL)


# ------------------------------------------------------- birth-death spectrum
@numba.njit(cache=True)
def _neg_count(up, down, sigma):
    """Number of eigenvalues of ``-Q`` below ``sigma`` (Sylvester inertia).

    LDL pivots ``d_i = up_i + e_i`` with the excess recursion
    ``e_i = down_i e_{i-1} / d_{i-1} - sigma`` (``e_0 = -sigma``).
    """
    n = up.shape[0]
    e = -sigma
    count = 0
    for i in range(n):
        d = up[i] + e
        if d == 0.0:
            d = -1e-300
        if d < 0.0:
            count += 1
        if i + 1 < n:
            e = down[i + 1] * e / d - sigma
    return count


def _birth_death_eigenvalue(up, down, k, rtol=1e-14):
    """``k``-th smallest eigenvalue of ``-Q`` (``k >= 1``) by inertia bisection on ``log``."""
    n = up.shape[0]
    if not 1 <= k < n:
        raise DomainError(f"eigenvalue index {k} outside 1..{n - 1}")
    hi = 2.0 * np.max(up + down) + 1.0
    lo = 1e-300
    if _neg_count(up, down, lo) >= k + 1:
        raise SolveFailed(f"eigenvalue {k} below representable range")
    if _neg_count(up, down, -1e-300) != 0 or _neg_count(up, down, hi) != n:
        raise SolveFailed("inertia check failed")
    llo, lhi = np.log(lo), np.log(hi)
    while lhi - llo > rtol:
        mid = 0.5 * (llo + lhi)
        if _neg_count(up, down, np.exp(mid)) >= k + 1:
            lhi = mid
        else:
            llo = mid
    return float(np.exp(0.5 * (llo + lhi)))


def _birth_death_lambda2(up, down, rtol=1e-14):
    if up.shape[0] < 2:
        raise DomainError("lambda_2 needs at least two states")
    return _birth_death_eigenvalue(up, down, 1, rtol)


def _dirichlet_form(G, p, F):
    """``E(f, g) = 1/2 sum_{x != y} p(x) Q(x, y) (f(y) - f(x)) (g(y) - g(x))`` for columns of ``F``."""
    Q = G.Q.tocoo()
    off = Q.row != Q.col
    x, y, q = Q.row[off], Q.col[off], Q.data[off]
    D = F[y] - F[x]
    return 0.5 * (D * (p[x] * q)[:, None]).T @ D


def _resolve_slow_cluster(G, p, mu, U):
    """Repair eigenpairs whose eigenvalues sit below the solver's absolute accuracy.

    A dense or tridiagonal eigensolver resolves eigenvalues only to about
    ``eps * ||S||``.  Below that level, the computed eigenvectors are an
    arbitrary rotation of the true ones.  For metastable chains that
    includes ``lambda_2``.  The stationary mode is therefore replaced by
    ``sqrt(p)`` exactly, the rest of the cluster is orthonormalised against
    it and diagonalised with the Dirichlet form, which is built from
    differences and so avoids the cancellation in ``v^T S v``.  For
    birth-death chains the cluster eigenvalues come from inertia bisection.
    """
    n = len(mu)
    scale = float(np.max(np.abs(G.Q.diagonal()))) or 1.0
    m = int(np.sum(mu <= 1e-8 * scale))
    m = max(m, 1)
    s = np.sqrt(p)
    s_hat = s / np.linalg.norm(s)
    U = U.copy()
    mu = mu.copy()
    if m > 1:
        V = U[:, :m] - np.outer(s_hat, s_hat @ U[:, :m])
        W, sv, _ = np.linalg.svd(V, full_matrices=False)
        B = W[:, : m - 1]
        with np.errstate(divide="ignore", invalid="ignore"):
            F = np.where(s[:, None] > 0, B / s[:, None], 0.0)
        R = _dirichlet_form(G, p, F)
        ritz, rot = np.linalg.eigh(0.5 * (R + R.T))
        U[:, 1:m] = B @ rot
        mu[1:m] = np.clip(ritz, 0.0, None)
        if G.is_birth_death:
            up, down = G.birth_death_rates()
            mu[1:m] = [_birth_death_eigenvalue(up, down, k) for k in range(1, m)]
    U[:, 0] = s_hat
    mu[0] = 0.0
    return mu, U


def _symmetric_tridiagonal(G, p):
    up, down = G.birth_death_rates()
    diag = up + down
    off = -np.sqrt(up[:-1] * down[1:])  # -S itself, so the ground state is +sqrt(p)
    return diag, off


def _dense_symmetric(G, p):
    if G.dimension > DENSE_CAP:
        raise CapExceeded(f"dense eigensolve capped at dimension {DENSE_CAP}")
    s = np.sqrt(p)
    Qd = G.Q.toarray()
    S = (s[:, None] * Qd) / s[None, :]
    return -0.5 * (S + S.T)  # positive semidefinite


def _require_reversible(G, p, reversible):
    if reversible is None:
        reversible = check_reversibility(G, p).reversible
    if not reversible:
        raise NotReversible("chain is not reversible; spectral expansion unavailable")


def _check_lambda1(mu):
    scale = max(1.0, float(np.max(np.abs(mu))))
    if abs(mu[0]) > RESIDUAL_TOL * scale:
        raise SolveFailed(f"lambda_1 = {mu[0]!r} is not zero")


def full_spectrum(G, p, reversible=None):
    """Eigenvalue magnitudes ``0 = mu_1 <= mu_2 <= ...`` of ``-Q``."""
    _require_reversible(G, p, reversible)
    if G.is_birth_death:
        if G.dimension > DENSE_CAP:
            raise CapExceeded(f"full spectrum capped at dimension {DENSE_CAP}")
        diag, off = _symmetric_tridiagonal(G, p)
        mu = eigh_tridiagonal(diag, off, eigvals_only=True)
    else:
        mu = eigh(_dense_symmetric(G, p), eigvals_only=True)
    return np.sort(mu)


def second_eigenvalue(G, p, reversible=None):
    """Spectral gap ``lambda_2^N`` of a reversible chain.

    Parameters
    ----------
    G : GeneratorMatrix
    p : numpy.ndarray
        Invariant measure.
    reversible : bool, optional
        Skip the detailed-balance check if already known.

    Raises
    ------
    NotReversible
    CapExceeded
        Dense solve beyond dimension 4000 or birth-death beyond 200001.
    """
    _require_reversible(G, p, reversible)
    if G.is_birth_death:
        if G.dimension > TRIDIAGONAL_CAP:
            raise CapExceeded(f"tridiagonal solve capped at dimension {TRIDIAGONAL_CAP}")
        up, down = G.birth_death_rates()
        return _birth_death_lambda2(up, down)
    mu = full_spectrum(G, p, reversible=True)
    _check_lambda1(mu)
    return float(mu[1])


# --------------------------------------------------------------- TV curves
@dataclass(frozen=True)
class TVCurve:
    """Total-variation distances to equilibrium from a point mass."""

    N: int
    start: tuple
    times: np.ndarray
    tv: np.ndarray
    monotone: bool

    def to_csv(self):
        lines = ["t,tv"]
        lines += [f"{t:.17g},{v:.17g}" for t, v in zip(self.times, self.tv)]
        return "\n".join(lines) + "\n"


@numba.njit(cache=True)
def _uniformized_rows(indptr, indices, data, start, mean, lo, hi):
    """Rows ``delta_start exp(t Q)`` by uniformisation, one per Poisson mean ``Lambda t``.

    ``data`` holds the jump matrix ``P = I + Q / Lambda`` in CSR form.  A
    single pass over ``v P^k`` accumulates every requested time, with
    Poisson weights restricted to ``lo[j] <= k <= hi[j]``.  All terms are
    nonnegative, so small probabilities keep full relative accuracy.
    """
    n = indptr.shape[0] - 1
    n_t = mean.shape[0]
    out = np.zeros((n_t, n))
    v = np.zeros(n)
    v[start] = 1.0
    w = np.empty(n)
    k_max = 0
    for j in range(n_t):
        if hi[j] > k_max:
            k_max = hi[j]
    for k in range(k_max + 1):
        for j in range(n_t):
            if lo[j] <= k <= hi[j]:
                if mean[j] == 0.0:
                    wt = 1.0 if k == 0 else 0.0
                else:
                    wt = np.exp(k * np.log(mean[j]) - mean[j] - math.lgamma(k + 1.0))
                for y in range(n):
                    out[j, y] += wt * v[y]
        if k == k_max:
            break
        w[:] = 0.0
        for x in range(n):
            vx = v[x]
            if vx != 0.0:
                for q in range(indptr[x], indptr[x + 1]):
                    w[indices[q]] += vx * data[q]
        v[:] = w
    return out


UNIFORMISATION_STEP_CAP = 50_000_000


def _transient_rows(G, i, times):
    """``delta_i exp(tQ)`` for moderate ``t`` by uniformisation."""
    rate = float(np.max(-G.Q.diagonal()))
    n = G.dimension
    if rate == 0.0:
        return np.tile(np.eye(n)[i], (len(times), 1))
    P = (sp.identity(n, format="csr") + G.Q.tocsr() / rate).tocsr()
    P.sort_indices()
    mean = rate * np.asarray(times, dtype=float)
    spread = 12.0 * np.sqrt(mean) + 40.0
    lo = np.maximum(0, np.floor(mean - spread)).astype(np.int64)
    hi = np.ceil(mean + spread).astype(np.int64)
    if hi.size and hi.max() > UNIFORMISATION_STEP_CAP:
        raise CapExceeded(f"uniformisation needs {int(hi.max())} steps (cap {UNIFORMISATION_STEP_CAP})")
    return _uniformized_rows(P.indptr.astype(np.int64), P.indices.astype(np.int64), P.data, i, mean, lo, hi)


def _birth_death_right_mode(up, down, p, lam):
    """Right eigenfunction ``h`` of ``Q`` for eigenvalue ``-lam``, scaled to ``max|h| = 1``.

    Uses the increment recursion ``up_i D_i = down_i D_{i-1} - lam h_i``,
    ``h_{i+1} = h_i + D_i``, started from the end nearer the mode of ``p``.
    Along that direction ``|h|`` only grows across barriers, so no value is
    formed by cancellation, and the components on the high-probability
    side keep full relative accuracy even when they are tiny.
    """
    n = up.shape[0]
    flip = int(np.argmax(p)) > (n - 1) / 2
    if flip:
        up, down = down[::-1], up[::-1]
    h = np.empty(n)
    h[0] = 1.0
    D = 0.0
    for k in range(n - 1):
        D = (down[k] * D - lam * h[k]) / up[k]
        h[k + 1] = h[k] + D
        if not np.isfinite(h[k + 1]):
            raise SolveFailed("slow eigenfunction overflows")
        if abs(h[k + 1]) > 1e150:
            c = abs(h[k + 1])
            h[: k + 2] /= c
            D /= c
    if flip:
        h = h[::-1]
    return h / np.max(np.abs(h))


def tv_mixing_curve(G, p, nu, times, reversible=None):
    """``||delta_nu exp(tQ) - p||_TV`` at the requested times.

    The semigroup is evaluated through the eigendecomposition of the
    symmetrised generator, so ``t`` may be astronomically large (up to
    1e300).  Eigenpairs below the solver's absolute accuracy (the
    metastable modes) are rebuilt by :func:`_resolve_slow_cluster`.  For
    birth-death chains with one metastable mode, that mode's right
    eigenfunction comes from an exact recursion instead.

    A start state with tiny stationary mass divides eigenvector errors by
    ``sqrt(p(nu))``.  In that case the expansion is used only once every
    fast mode has decayed below ``exp(-40)``.  Earlier times are computed
    by uniformisation, which costs one sparse product per expected jump of
    the uniformised chain.

    Parameters
    ----------
    G : GeneratorMatrix
    p : numpy.ndarray
    nu : LatticeMeasure or count vector
    times : sequence of float
    """
    _require_reversible(G, p, reversible)
    if G.dimension > DENSE_CAP:
        raise CapExceeded(f"eigendecomposition capped at dimension {DENSE_CAP}")
    times = np.asarray(times, dtype=float)
    if np.any(times < 0) or not np.all(np.isfinite(times)):
        raise DomainError("times must be finite and nonnegative")
    i = G.index_of(nu)
    n = G.dimension
    tv = np.zeros(len(times))
    if n > 1:
        if G.is_birth_death:
            diag, off = _symmetric_tridiagonal(G, p)
            mu, U = eigh_tridiagonal(diag, off)
        else:
            mu, U = eigh(_dense_symmetric(G, p))
        mu = np.clip(mu, 0.0, None)
        mu, U = _resolve_slow_cluster(G, p, mu, U)
        scale = float(np.max(np.abs(G.Q.diagonal()))) or 1.0
        m = max(1, int(np.sum(mu <= 1e-8 * scale)))
        s = np.sqrt(p)
        with np.errstate(divide="ignore", invalid="ignore"):
            left = U[i, 1:] / s[i]
        right = U[:, 1:] * s[:, None]
        if G.is_birth_death and m == 2:
            up, down = G.birth_death_rates()
            h = _birth_death_right_mode(up, down, p, mu[1])
            left[0] = h[i] / np.sum(p * h * h)
            right[:, 0] = p * h
        fragile = s[i] < 1e-4
        if fragile:
            lam_fast = mu[m] if m < n else np.inf
            t_switch = (np.log(np.sqrt(n) / max(s[i], 1e-300)) + 40.0) / lam_fast
            early = times < t_switch
        else:
            early = np.zeros(len(times), dtype=bool)
        keep = m - 1 if fragile else n - 1
        for k, t in enumerate(times):
            if early[k]:
                continue
            w = left[:keep] * np.exp(-t * mu[1 : keep + 1])
            tv[k] = 0.5 * np.sum(np.abs(right[:, :keep] @ w))
        if np.any(early):
            rows = _transient_rows(G, i, times[early])
            tv[early] = 0.5 * np.sum(np.abs(rows - p[None, :]), axis=1)
    tv = np.clip(tv, 0.0, 1.0)
    order = np.argsort(times, kind="stable")
    monotone = bool(np.all(np.diff(tv[order]) <= 1e-12))
    return TVCurve(G.N, tuple(int(c) for c in G.states[i]), times, tv, monotone)


# ------------------------------------------------------------------ report
@dataclass
class SpectralReport:
    """Invariant measure, reversibility and spectral gap at one ``N``."""

    N: int
    pi: np.ndarray = field(repr=False)
    reversibility_residual: float = 0.0
    reversible: bool = False
    lambda2: float = float("nan")
    spectrum: np.ndarray = field(default=None, repr=False)

    def to_dict(self):
        doc = {
            "schema": "mfjp/1",
            "kind": "spectral",
            "N": self.N,
            "pi": [float(v) for v in self.pi],
            "reversibility_residual": float(self.reversibility_residual),
            "reversible": self.reversible,
            "lambda2": None if np.isnan(self.lambda2) else float(self.lambda2),
        }
        if self.spectrum is not None:
            doc["spectrum"] = [float(v) for v in self.spectrum]
        return doc


def spectral_report(model, N, full=False):
    """Build the generator at ``N`` and collect the spectral quantities.

    ``lambda2`` is ``nan`` for non-reversible chains.
    """
    G = build_generator(model, N)
    p = invariant_measure(G)
    rev = check_reversibility(G, p)
    lam2 = second_eigenvalue(G, p, True) if rev.reversible and G.dimension > 1 else float("nan")
    spec = full_spectrum(G, p, True) if (full and rev.reversible) else None
    return SpectralReport(N, p, rev.residual, rev.reversible, lam2, spec)


@dataclass(frozen=True)
class Lambda2Scan:
    """``lambda_2^N`` over a range of ``N`` and the fitted exponential rate.

    ``slope`` is the least-squares slope of ``log lambda_2^N`` against
    ``N``; it estimates ``-Lambda``.
    """

    Ns: np.ndarray
    lambda2: np.ndarray
    slope: float
    intercept: float

    @property
    def log_lambda2_over_N(self):
        return np.log(self.lambda2) / self.Ns

    def to_csv(self):
        lines = ["N,lambda2,log_lambda2_over_N"]
        for N, lam, r in zip(self.Ns, self.lambda2, self.log_lambda2_over_N):
            lines.append(f"{int(N)},{lam:.17g},{r:.17g}")
        return "\n".join(lines) + "\n"

    def to_dict(self):
        return {
            "schema": "mfjp/1",
            "kind": "lambda2_scan",
            "N": [int(n) for n in self.Ns],
            "lambda2": [float(v) for v in self.lambda2],
            "log_lambda2_over_N": [float(v) for v in self.log_lambda2_over_N],
            "slope": float(self.slope),
            "intercept": float(self.intercept),
        }


def lambda2_scan(model, Ns):
    """Spectral gap for every ``N`` in ``Ns`` and the regression of its log.

    Raises
    ------
    NotReversible
        If the chain at any ``N`` is not reversible.
    """
    Ns = np.asarray(sorted(int(n) for n in Ns))
    lam = []
    for N in Ns:
        G = build_generator(model, N)
        p = invariant_measure(G)
        lam.append(second_eigenvalue(G, p))
    lam = np.asarray(lam)
    if len(Ns) >= 2:
        slope, intercept = np.polyfit(Ns.astype(float), np.log(lam), 1)
    else:
        slope, intercept = float("nan"), float(np.log(lam[0]))
    return Lambda2Scan(Ns, lam, float(slope), float(intercept))
