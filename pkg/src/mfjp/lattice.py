"""Simplex points and the lattice of empirical measures with N particles."""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from math import comb

import numpy as np

from .errors import CapExceeded, DomainError

__all__ = [
    "LATTICE_CAP",
    "SIMPLEX_TOL",
    "LatticeMeasure",
    "simplex_point",
    "lattice_size",
    "lattice_enumerate",
    "lattice_rank",
    "round_to_lattice",
]

#: Maximum number of lattice points any routine will enumerate.
LATTICE_CAP = 5_000_000
#: Tolerance on the unit-sum constraint of simplex points.
SIMPLEX_TOL = 1e-12


def simplex_point(weights, tol=1e-9):
    """Validate and renormalise a probability vector.

    Parameters
    ----------
    weights : array_like
        Nonnegative weights.
    tol : float
        Accepted deviation of the raw sum from 1 and of entries below 0.
        After the check the vector is clipped and renormalised so that
        it sums to 1 within :data:`SIMPLEX_TOL`.

    Returns
    -------
    numpy.ndarray
    """
    w = np.array(weights, dtype=float)
    if w.ndim != 1 or w.size < 2:
        raise DomainError("a simplex point needs at least two coordinates")
    if not np.all(np.isfinite(w)):
        raise DomainError(f"non-finite simplex coordinates {w.tolist()}")
    if np.any(w < -tol) or abs(w.sum() - 1.0) > tol:
        raise DomainError(f"{w.tolist()} is not a probability vector")
    w = np.clip(w, 0.0, None)
    return w / w.sum()


@dataclass(frozen=True)
class LatticeMeasure:
    """An empirical measure of ``N`` particles stored as integer counts."""

    counts: tuple

    def __post_init__(self):
        c = tuple(int(v) for v in self.counts)
        if len(c) < 2 or any(v < 0 for v in c):
            raise DomainError(f"invalid lattice counts {c}")
        if sum(c) == 0:
            raise DomainError("lattice measures need N >= 1")
        object.__setattr__(self, "counts", c)

    @property
    def N(self):
        return sum(self.counts)

    @property
    def point(self):
        """The simplex point ``counts / N``."""
        return np.asarray(self.counts, dtype=float) / self.N


def lattice_size(N, d):
    """Number of points of the lattice: ``binomial(N + d - 1, d - 1)``."""
    if N < 0 or d < 1:
        raise DomainError("need N >= 0 and d >= 1")
    return comb(N + d - 1, d - 1)


def _check_cap(N, d, cap):
    n = lattice_size(N, d)
    if n > cap:
        raise CapExceeded(f"lattice with N={N}, |Z|={d} has {n} points > cap {cap}")
    return n


def lattice_enumerate(N, d, cap=LATTICE_CAP):
    """All count vectors of ``d`` nonnegative integers summing to ``N``.

    Parameters
    ----------
    N : int
        Particle number, ``N >= 1``.
    d : int
        Number of states.
    cap : int
        Enumeration cap.

    Returns
    -------
    numpy.ndarray
        Shape ``(binomial(N+d-1, d-1), d)``, rows in ascending
        lexicographic order.

    Examples
    --------
    >>> lattice_enumerate(2, 2).tolist()
    [[0, 2], [1, 1], [2, 0]]
    """
    if N < 1:
        raise DomainError("N must be >= 1")
    if d < 2:
        raise DomainError("|Z| must be >= 2")
    _check_cap(N, d, cap)
    # rows[k] over the last k coordinates: built right to left
    blocks = {n: np.array([[n]], dtype=np.int64) for n in range(N + 1)}
    for _ in range(d - 2):
        new = {}
        for n in range(N + 1):
            parts = [
                np.hstack([np.full((blocks[n - c].shape[0], 1), c, dtype=np.int64), blocks[n - c]])
                for c in range(n + 1)
            ]
            new[n] = np.vstack(parts)
        blocks = new
    parts = [
        np.hstack([np.full((blocks[N - c].shape[0], 1), c, dtype=np.int64), blocks[N - c]])
        for c in range(N + 1)
    ]
    return np.vstack(parts)


@lru_cache(maxsize=256)
def _binom_table(N, d):
    """``binom[n, k] = C(n, k)`` for ``n <= N + d``, ``k <= d`` (read-only)."""
    binom = np.zeros((N + d + 1, d + 1), dtype=np.int64)
    for n in range(N + d + 1):
        for k in range(min(n, d) + 1):
            binom[n, k] = comb(n, k)
    binom.setflags(write=False)
    return binom


def lattice_rank(counts, N=None):
    """Index of count vector(s) in :func:`lattice_enumerate` order.

    Parameters
    ----------
    counts : array_like of int, shape ``(..., d)``
    N : int, optional
        Particle number (inferred from the first row if omitted).

    Returns
    -------
    numpy.ndarray of int64, shape ``(...)``
    """
    x = np.asarray(counts, dtype=np.int64)
    d = x.shape[-1]
    if N is None:
        N = int(x.reshape(-1, d)[0].sum())
    binom = _binom_table(int(N), d)
    rank = np.zeros(x.shape[:-1], dtype=np.int64)
    rem = np.full(x.shape[:-1], N, dtype=np.int64)
    for i in range(d - 1):
        k = d - i - 1
        ci = x[..., i]
        rank += binom[rem + k, k] - binom[rem - ci + k, k]
        rem = rem - ci
    return rank


def round_to_lattice(point, N):
    """Nearest lattice point by largest-remainder rounding.

    Returns
    -------
    numpy.ndarray of int64
        Counts summing to ``N``.
    """
    p = simplex_point(point)
    raw = p * N
    base = np.floor(raw).astype(np.int64)
    short = N - int(base.sum())
    if short > 0:
        # stable order: largest remainder first, ties by index
        order = np.lexsort((np.arange(p.size), -(raw - base)))
        base[order[:short]] += 1
    return base
