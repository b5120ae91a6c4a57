"""Exact-event Monte Carlo for the empirical-measure chain.

The chain is simulated directly on count vectors.  Per-``N`` tables list
for every lattice state the firing rate ``n_z lambda_{z,z'}(x)`` of each
edge and the index of the post-jump state, so one event costs ``O(|E|)``
inside a compiled kernel.

Randomness
----------
Every ``(seed, replica, stage)`` triple owns an independent Philox
stream obtained from ``numpy.random.SeedSequence(seed, spawn_key=(replica,
stage))``.  Distinct spawn keys give distinct, non-overlapping streams by
construction of ``SeedSequence``, so a replica's trajectory is a pure
function of the triple and does not depend on scheduling or on the
number of worker threads.  Plain runs use ``stage = 0``; annealing stage
``N`` (the particle number) uses ``stage = N``.
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache

import numba
import numpy as np

from .errors import AllCensored, DomainError
from .lattice import LatticeMeasure, lattice_enumerate, lattice_rank, round_to_lattice

__all__ = [
    "SimConfig",
    "HittingSpec",
    "EventSequence",
    "gillespie_path",
    "HittingResult",
    "hitting_time",
    "AnnealConfig",
    "AnnealPath",
    "anneal_path",
    "AnnealSuccess",
    "anneal_success",
    "injection_times",
    "initial_particles",
]

RECORD_MODES = ("full", "events", "hitting")
_BUF = 1 << 16

# kernel status codes
_DONE, _HIT, _KILLED, _NEED_RANDOM, _NEED_RECORD = 0, 1, 2, 3, 4


# ------------------------------------------------------------------ tables
@dataclass(frozen=True)
class _Tables:
    states: np.ndarray  # (n, d) counts
    rates: np.ndarray  # (n, E) firing rates
    total: np.ndarray  # (n,)
    nxt: np.ndarray  # (n, E) post-jump index (-1 if edge cannot fire)


def _build_tables(model, N):
    states = lattice_enumerate(N, model.d)
    x = states / N
    lam = model.edge_rates(x)
    n, E = len(states), model.n_edges
    rates = np.zeros((n, E))
    nxt = np.full((n, E), -1, dtype=np.int64)
    for k, (a, b) in enumerate(zip(model.src, model.dst)):
        live = states[:, a] > 0
        rates[live, k] = states[live, a] * lam[live, k]
        tgt = states[live].copy()
        tgt[:, a] -= 1
        tgt[:, b] += 1
        nxt[live, k] = lattice_rank(tgt, N)
    return _Tables(states, rates, rates.sum(axis=1), nxt)


@lru_cache(maxsize=64)
def _tables_cached(model, N):
    return _build_tables(model, N)


def _tables(model, N):
    try:
        return _tables_cached(model, N)
    except TypeError:  # unhashable model
        return _build_tables(model, N)


# ------------------------------------------------------------------ kernel
@numba.njit(nogil=True, cache=True)
def _run(rates, total, nxt, idx, t, t_end, U, upos, target, avoid, occ,
         rec_t, rec_e, rec_i, rpos, record):
    """Advance the chain from ``(idx, t)`` until ``t_end``, a target hit,
    an avoid-region kill, or buffer exhaustion.

    Returns ``(status, idx, t, upos, rpos)``.
    """
    E = rates.shape[1]
    nU = U.shape[0]
    nrec = rec_t.shape[0]
    use_occ = occ.shape[0] > 0
    while True:
        lam = total[idx]
        if lam <= 0.0:
            if use_occ:
                occ[idx] += t_end - t
            return 0, idx, t_end, upos, rpos
        if upos + 2 > nU:
            return 3, idx, t, upos, rpos
        if record and rpos >= nrec:
            return 4, idx, t, upos, rpos
        dt = -math.log1p(-U[upos]) / lam
        r = U[upos + 1] * lam
        upos += 2
        if t + dt >= t_end:
            if use_occ:
                occ[idx] += t_end - t
            return 0, idx, t_end, upos, rpos
        if use_occ:
            occ[idx] += dt
        t += dt
        k = 0
        acc = rates[idx, 0]
        while acc <= r and k < E - 1:
            k += 1
            acc += rates[idx, k]
        while nxt[idx, k] < 0:  # guard against rounding into a dead edge
            k -= 1
        idx = nxt[idx, k]
        if record:
            rec_t[rpos] = t
            rec_e[rpos] = k
            rec_i[rpos] = idx
            rpos += 1
        if target[idx]:
            return 1, idx, t, upos, rpos
        if avoid[idx]:
            return 2, idx, t, upos, rpos


class _Stream:
    """Buffered uniforms from one Philox stream.

    The buffer starts small and doubles on each refill (up to ``_BUF``);
    the sequence of uniforms consumed is the same whatever the sizes.
    """

    def __init__(self, seed, replica, stage):
        ss = np.random.SeedSequence(int(seed), spawn_key=(int(replica), int(stage)))
        self.gen = np.random.Generator(np.random.Philox(ss))
        self.size = 256
        self.buf = self.gen.random(self.size)
        self.pos = 0

    def refill(self):
        rest = self.buf[self.pos:]
        self.size = min(2 * self.size, _BUF)
        self.buf = np.concatenate([rest, self.gen.random(self.size)])
        self.pos = 0


_EMPTY_F = np.zeros(0)
_EMPTY_I = np.zeros(0, dtype=np.int64)


def _advance(tab, idx, t, t_end, stream, target, avoid, occ=None, record=False, chunks=None):
    """Drive the kernel to completion; returns ``(status, idx, t)``."""
    occ = _EMPTY_F if occ is None else occ
    while True:
        if record:
            rt, re, ri = np.empty(_BUF), np.empty(_BUF, np.int64), np.empty(_BUF, np.int64)
        else:
            rt, re, ri = _EMPTY_F, _EMPTY_I, _EMPTY_I
        status, idx, t, upos, rpos = _run(
            tab.rates, tab.total, tab.nxt, idx, t, t_end, stream.buf, stream.pos,
            target, avoid, occ, rt, re, ri, 0, record,
        )
        stream.pos = upos
        if record and rpos:
            chunks.append((rt[:rpos], re[:rpos], ri[:rpos]))
        if status == _NEED_RANDOM:
            stream.refill()
            continue
        if status == _NEED_RECORD:
            continue
        return status, idx, t


def _threads(threads):
    if threads is None:
        threads = int(os.environ.get("MFJP_THREADS", os.cpu_count() or 1))
    return max(1, int(threads))


def _map(fn, items, threads):
    threads = _threads(threads)
    if threads == 1 or len(items) <= 1:
        return [fn(i) for i in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


# ------------------------------------------------------------ configuration
@dataclass(frozen=True)
class SimConfig:
    """Fixed-``N`` simulation setup.

    Attributes
    ----------
    model : Model
    N : int
    initial : LatticeMeasure
    t_max : float
    seed : int
    record : {"full", "events", "hitting"}
        ``full`` keeps events and post-jump counts, ``events`` keeps jump
        times and edges only, ``hitting`` keeps no per-event data.
    """

    model: object
    N: int
    initial: LatticeMeasure
    t_max: float
    seed: int = 0
    record: str = "full"

    def __post_init__(self):
        if int(self.N) < 1:
            raise DomainError("N must be >= 1")
        if not self.t_max > 0:
            raise DomainError("t_max must be positive")
        if self.record not in RECORD_MODES:
            raise DomainError(f"record must be one of {RECORD_MODES}")
        init = self.initial
        if not isinstance(init, LatticeMeasure):
            init = LatticeMeasure(np.asarray(init, dtype=np.int64))
            object.__setattr__(self, "initial", init)
        if init.N != int(self.N) or len(init.counts) != self.model.d:
            raise DomainError("initial measure does not match N and the model")


@dataclass(frozen=True)
class HittingSpec:
    """Target (and optional avoid) region as a union of sup-norm balls.

    Attributes
    ----------
    centers : numpy.ndarray, shape (k, d)
    radii : numpy.ndarray, shape (k,)
    avoid_centers, avoid_radii : numpy.ndarray, optional
    names : tuple
        Identifier reported for each target ball (default ``0..k-1``).
    """

    centers: np.ndarray
    radii: np.ndarray
    avoid_centers: np.ndarray = None
    avoid_radii: np.ndarray = None
    names: tuple = ()

    def __post_init__(self):
        c = np.atleast_2d(np.asarray(self.centers, dtype=float))
        r = np.broadcast_to(np.asarray(self.radii, dtype=float), (len(c),)).copy()
        if np.any(r <= 0):
            raise DomainError("radii must be positive")
        object.__setattr__(self, "centers", c)
        object.__setattr__(self, "radii", r)
        if self.avoid_centers is not None:
            ac = np.atleast_2d(np.asarray(self.avoid_centers, dtype=float))
            ar = np.broadcast_to(np.asarray(self.avoid_radii, dtype=float), (len(ac),)).copy()
            if np.any(ar <= 0):
                raise DomainError("radii must be positive")
            object.__setattr__(self, "avoid_centers", ac)
            object.__setattr__(self, "avoid_radii", ar)
        if not self.names:
            object.__setattr__(self, "names", tuple(range(len(c))))

    @classmethod
    def from_attractors(cls, attractors, indices, rho, avoid=(), avoid_rho=None):
        """Neighbourhoods ``[W]_rho`` of attractors ``W = indices``."""
        loc = attractors.locations if hasattr(attractors, "locations") else np.asarray(attractors)
        indices = list(indices)
        avoid = list(avoid)
        kw = {}
        if avoid:
            kw = dict(avoid_centers=loc[avoid], avoid_radii=avoid_rho if avoid_rho is not None else rho)
        return cls(loc[indices], rho, names=tuple(indices), **kw)

    @staticmethod
    def _which(x, centers, radii):
        dist = np.abs(x[:, None, :] - centers[None, :, :]).max(axis=-1)
        inside = dist <= radii[None, :]
        first = np.where(inside.any(axis=1), inside.argmax(axis=1), -1)
        return first

    def masks(self, states, N):
        """Boolean target/avoid masks and target-ball ids over lattice states."""
        x = states / N
        which = self._which(x, self.centers, self.radii)
        target = which >= 0
        if self.avoid_centers is not None:
            avoid = self._which(x, self.avoid_centers, self.avoid_radii) >= 0
            avoid &= ~target
        else:
            avoid = np.zeros(len(states), dtype=bool)
        return target, avoid, which

    def to_dict(self):
        doc = {
            "centers": self.centers.tolist(),
            "radii": self.radii.tolist(),
            "names": list(self.names),
        }
        if self.avoid_centers is not None:
            doc["avoid_centers"] = self.avoid_centers.tolist()
            doc["avoid_radii"] = self.avoid_radii.tolist()
        return doc


# ------------------------------------------------------------ plain paths
@dataclass(frozen=True)
class EventSequence:
    """Jump times, fired edges and post-jump counts of one trajectory.

    Attributes
    ----------
    times : numpy.ndarray
    edges : numpy.ndarray of int
        Index into ``model.edges``.
    counts : numpy.ndarray of int, shape (n_events, d) or None
        Post-jump counts (``record="full"`` only).
    initial : numpy.ndarray
    final : numpy.ndarray
    t_end : float
    occupation : numpy.ndarray
        Time spent in each lattice state (lattice order), summing to ``t_end``.
    labels : tuple
    edge_pairs : tuple
    """

    times: np.ndarray
    edges: np.ndarray
    counts: np.ndarray
    initial: np.ndarray
    final: np.ndarray
    t_end: float
    occupation: np.ndarray = field(repr=False)
    labels: tuple = ()
    edge_pairs: tuple = ()

    def __len__(self):
        return len(self.times)

    def to_csv(self):
        head = ["t", "edge_from", "edge_to"] + [f"n_{lab}" for lab in self.labels]
        lines = [",".join(head)]
        init = ",".join(str(int(c)) for c in self.initial)
        lines.append(f"0,,,{init}")
        for k in range(len(self.times)):
            a, b = self.edge_pairs[int(self.edges[k])]
            row = f"{self.times[k]:.17g},{self.labels[a]},{self.labels[b]}"
            if self.counts is not None:
                row += "," + ",".join(str(int(c)) for c in self.counts[k])
            lines.append(row)
        return "\n".join(lines) + "\n"



def _debug_enabled():
    return os.environ.get("MFJP_DEBUG", "") not in ("", "0")


def _check_events(model, start, post, edges, N):
    """Assert that every post-jump state is a valid lattice point reached by its edge."""
    prev = np.vstack([np.asarray(start, dtype=np.int64)[None, :], post[:-1]])
    step = post - prev
    expect = np.zeros_like(step)
    rows = np.arange(len(edges))
    expect[rows, model.src[edges]] -= 1
    expect[rows, model.dst[edges]] += 1
    if np.any(post < 0) or np.any(post.sum(axis=1) != N) or not np.array_equal(step, expect):
        raise AssertionError("simulation produced an invalid lattice transition")


def gillespie_path(cfg, replica=0):
    """Simulate one trajectory on ``[0, t_max]``.

    Parameters
    ----------
    cfg : SimConfig
    replica : int
        Stream index; trajectories are a pure function of
        ``(cfg.seed, replica)``.

    Returns
    -------
    EventSequence
    """
    model = cfg.model
    N = int(cfg.N)
    tab = _tables(model, N)
    idx = int(lattice_rank(cfg.initial.counts, N))
    stream = _Stream(cfg.seed, replica, 0)
    none = np.zeros(len(tab.states), dtype=bool)
    occ = np.zeros(len(tab.states))
    record = cfg.record != "hitting"
    chunks = []
    _, idx, t = _advance(tab, idx, 0.0, float(cfg.t_max), stream, none, none, occ, record, chunks)
    if chunks:
        times = np.concatenate([c[0] for c in chunks])
        edges = np.concatenate([c[1] for c in chunks])
        post = np.concatenate([c[2] for c in chunks])
    else:
        times, edges, post = np.zeros(0), np.zeros(0, np.int64), np.zeros(0, np.int64)
    if record and _debug_enabled() and len(post):
        _check_events(model, cfg.initial.counts, tab.states[post], edges, N)
    counts = tab.states[post] if cfg.record == "full" else None
    pairs = tuple(zip(map(int, model.src), map(int, model.dst)))
    return EventSequence(
        times, edges, counts, np.array(cfg.initial.counts), tab.states[idx].copy(),
        float(cfg.t_max), occ, tuple(model.labels), pairs,
    )


# ----------------------------------------------------------- hitting times
@dataclass(frozen=True)
class HittingResult:
    """Per-replica hitting times and summary.

    ``times[r]`` is the hitting time, or ``t_max`` for a censored replica
    (``censored[r]``); ``target[r]`` names the ball entered (``-1`` if
    censored, ``-2`` if killed in the avoid region).  Summary statistics use
    the uncensored, unkilled replicas.
    """

    N: int
    times: np.ndarray
    censored: np.ndarray
    target: np.ndarray
    t_max: float

    @property
    def n_censored(self):
        return int(self.censored.sum())

    @property
    def n_killed(self):
        return int(np.sum(self.target == -2))

    @property
    def hit(self):
        return ~self.censored & (self.target >= 0)

    @property
    def mean(self):
        return float(np.mean(self.times[self.hit]))

    @property
    def log_mean_over_N(self):
        m = self.mean
        return float(np.log(m) / self.N) if m > 0 else float("-inf")

    def quantiles(self, qs=(0.1, 0.25, 0.5, 0.75, 0.9)):
        return {float(q): float(np.quantile(self.times[self.hit], q)) for q in qs}

    def target_frequencies(self):
        ids, cnt = np.unique(self.target[self.hit], return_counts=True)
        return {int(i): int(c) for i, c in zip(ids, cnt)}

    def to_dict(self):
        h = self.times[self.hit]
        return {
            "schema": "mfjp/1",
            "kind": "hitting",
            "N": self.N,
            "replicas": int(len(self.times)),
            "censored": self.n_censored,
            "killed": self.n_killed,
            "t_max": float(self.t_max),
            "mean": self.mean,
            "log_mean_over_N": self.log_mean_over_N,
            "stderr": float(np.std(h, ddof=1) / np.sqrt(len(h))) if len(h) > 1 else None,
            "quantiles": {f"{q:g}": v for q, v in self.quantiles().items()},
            "target_frequencies": {str(k): v for k, v in self.target_frequencies().items()},
            "times": [float(t) for t in self.times],
        }


def hitting_time(cfg, spec, replicas, threads=None):
    """First entrance times into the target region.

    Parameters
    ----------
    cfg : SimConfig
        ``cfg.t_max`` is the censoring time.
    spec : HittingSpec
    replicas : int
        Replica ``r`` uses stream ``(cfg.seed, r, 0)``.
    threads : int, optional
        Worker threads (default ``MFJP_THREADS`` or the core count); the
        result does not depend on it.

    Raises
    ------
    AllCensored
        If no replica reaches the target.
    """
    if int(replicas) < 1:
        raise DomainError("replicas must be >= 1")
    N = int(cfg.N)
    tab = _tables(cfg.model, N)
    target, avoid, which = spec.masks(tab.states, N)
    start = int(lattice_rank(cfg.initial.counts, N))
    t_max = float(cfg.t_max)

    def one(r):
        if target[start]:
            return 0.0, False, int(which[start])
        stream = _Stream(cfg.seed, r, 0)
        status, idx, t = _advance(tab, start, 0.0, t_max, stream, target, avoid)
        if status == _HIT:
            return t, False, int(which[idx])
        if status == _KILLED:
            return t, False, -2
        return t_max, True, -1

    out = _map(one, list(range(int(replicas))), threads)
    times = np.array([o[0] for o in out])
    cens = np.array([o[1] for o in out], dtype=bool)
    tgt = np.array([o[2] for o in out], dtype=np.int64)
    res = HittingResult(N, times, cens, tgt, t_max)
    if not np.any(res.hit):
        raise AllCensored(f"all {replicas} replicas censored or killed before t_max={t_max:g}")
    return res


# --------------------------------------------------------------- annealing
def initial_particles(c):
    """``N0 = min{n >= 1 : exp(nc) - 2 >= 0}``."""
    if not c > 0:
        raise DomainError("c must be positive")
    return max(1, math.ceil(math.log(2.0) / c - 1e-12))


def injection_times(c, t_max, N0=None):
    """Injection schedule ``[(N, t_N)]`` for ``N > N0`` with ``t_N <= t_max``."""
    N0 = initial_particles(c) if N0 is None else N0
    out = []
    N = N0 + 1
    while True:
        tN = math.expm1(N * c) - 1.0
        if tN > t_max:
            return out
        out.append((N, tN))
        N += 1


@dataclass(frozen=True)
class AnnealConfig:
    """Annealing setup.

    Attributes
    ----------
    model : Model
    c : float
        Injection constant; particle ``N + 1`` is added at ``exp((N+1)c) - 2``.
    z0 : str
        Label of the state injected particles enter.
    start : array_like
        Simplex point; the initial ``N0``-particle counts are its
        largest-remainder rounding (or exact counts if integer with sum ``N0``).
    t_max : float
    seed : int
    """

    model: object
    c: float
    z0: str
    start: tuple
    t_max: float
    seed: int = 0

    def __post_init__(self):
        if not self.c > 0:
            raise DomainError("c must be positive")
        if not self.t_max > 0:
            raise DomainError("t_max must be positive")
        if self.z0 not in self.model.labels:
            raise DomainError(f"unknown label {self.z0!r}")

    @property
    def N0(self):
        return initial_particles(self.c)

    @property
    def z0_index(self):
        return list(self.model.labels).index(self.z0)

    def initial_counts(self):
        s = np.asarray(self.start)
        if np.issubdtype(s.dtype, np.integer) and s.sum() == self.N0:
            return s.astype(np.int64)
        return np.asarray(round_to_lattice(np.asarray(s, dtype=float), self.N0), dtype=np.int64)

    def schedule(self):
        return injection_times(self.c, self.t_max, self.N0)


def inject(counts, z0):
    """``(N mu + delta_z0)/(N+1)`` on integer counts."""
    out = np.array(counts, dtype=np.int64, copy=True)
    out[z0] += 1
    return out


@dataclass(frozen=True)
class AnnealPath:
    """Annealed trajectory: events plus injection markers ``(t_N, N, counts)``."""

    times: np.ndarray
    edges: np.ndarray
    counts: list  # post-jump counts per event (ragged in N)
    injections: tuple
    initial: np.ndarray
    final: np.ndarray
    labels: tuple = ()
    edge_pairs: tuple = ()

    def particle_number(self, t):
        """``N_t`` (right-continuous step function)."""
        n = int(self.initial.sum())
        for tn, N, _ in self.injections:
            if tn <= t:
                n = N
        return n

    def to_csv(self):
        head = ["t", "event", "edge_from", "edge_to"] + [f"n_{lab}" for lab in self.labels]
        lines = [",".join(head), "0,start,,," + ",".join(str(int(c)) for c in self.initial)]
        rows = []
        for k in range(len(self.times)):
            a, b = self.edge_pairs[int(self.edges[k])]
            rows.append((self.times[k], 1, f"jump,{self.labels[a]},{self.labels[b]}", self.counts[k]))
        for tn, N, cnt in self.injections:
            rows.append((tn, 0, "inject,,", cnt))
        rows.sort(key=lambda r: (r[0], r[1]))
        for t, _, mid, cnt in rows:
            lines.append(f"{t:.17g},{mid}," + ",".join(str(int(c)) for c in cnt))
        return "\n".join(lines) + "\n"


def _anneal_run(cfg, replica, checkpoints, spec, record, cache=None):
    model = cfg.model
    cache = {} if cache is None else cache
    z0 = cfg.z0_index
    counts = cfg.initial_counts()
    N = int(counts.sum())
    t = 0.0
    sched = cfg.schedule()
    ends = [tn for _, tn in sched] + [float(cfg.t_max)]
    checkpoints = sorted(float(c) for c in checkpoints)
    inside = []
    chunks_all, inj = [], []
    ci = 0
    for stage, t_stage_end in enumerate(ends):
        if N not in cache:  # tables and target masks are shared by replicas
            tab = _build_tables(model, N)
            tm = spec.masks(tab.states, N)[0] if spec is not None else None
            cache[N] = (tab, tm, np.zeros(len(tab.states), dtype=bool))
        tab, tmask, none = cache[N]
        idx = int(lattice_rank(counts, N))
        stream = _Stream(cfg.seed, replica, N)
        while True:
            seg_end = t_stage_end
            if ci < len(checkpoints):
                seg_end = min(seg_end, checkpoints[ci])
            chunks = [] if record else None
            start_counts = tab.states[idx].copy()
            _, idx, t = _advance(tab, idx, t, seg_end, stream, none, none, None, record, chunks)
            if record and chunks and _debug_enabled():
                _check_events(
                    model, start_counts, tab.states[np.concatenate([c[2] for c in chunks])],
                    np.concatenate([c[1] for c in chunks]), N,
                )
            if record:
                chunks_all.extend((tt, ee, tab.states[ii]) for tt, ee, ii in chunks)
            while ci < len(checkpoints) and checkpoints[ci] <= t:
                inside.append(bool(tmask[idx]))
                ci += 1
            if t >= t_stage_end:
                break
        counts = tab.states[idx].copy()
        if stage < len(sched):
            N_new, tn = sched[stage]
            counts = inject(counts, z0)
            N = N_new
            inj.append((tn, N, counts.copy()))
    while ci < len(checkpoints):  # checkpoints beyond t_max
        inside.append(False)
        ci += 1
    return counts, inside, chunks_all, inj


def anneal_path(cfg, replica=0):
    """Simulate one annealed trajectory on ``[0, t_max]``.

    The process starts at time 0 with ``N0`` particles; at each
    ``t_N = exp(Nc) - 2 <= t_max`` one particle in state ``z0`` is added.
    """
    final, _, chunks, inj = _anneal_run(cfg, replica, (), None, True)
    if chunks:
        times = np.concatenate([c[0] for c in chunks])
        edges = np.concatenate([c[1] for c in chunks])
        counts = [row for c in chunks for row in c[2]]
    else:
        times, edges, counts = np.zeros(0), np.zeros(0, np.int64), []
    model = cfg.model
    return AnnealPath(
        times, edges, counts, tuple(inj), cfg.initial_counts(), final,
        tuple(model.labels), tuple(zip(map(int, model.src), map(int, model.dst))),
    )


@dataclass(frozen=True)
class AnnealSuccess:
    """Fraction of replicas inside the target at each checkpoint."""

    checkpoints: np.ndarray
    fraction: np.ndarray
    halfwidth: np.ndarray
    inside: np.ndarray = field(repr=False)  # (replicas, checkpoints)

    def to_dict(self):
        return {
            "schema": "mfjp/1",
            "kind": "anneal",
            "replicas": int(self.inside.shape[0]),
            "checkpoints": [float(c) for c in self.checkpoints],
            "fraction": [float(f) for f in self.fraction],
            "halfwidth_95": [float(h) for h in self.halfwidth],
        }


def anneal_success(cfg, spec, checkpoints, replicas, threads=None):
    """Monte Carlo success fractions of the annealed process.

    Parameters
    ----------
    cfg : AnnealConfig
    spec : HittingSpec
        Target neighbourhoods, e.g. ``[L~_0]_rho1``.
    checkpoints : sequence of float
        Increasing times.
    replicas : int

    Returns
    -------
    AnnealSuccess
        With normal-approximation 95% binomial half-widths.
    """
    cps = np.asarray(checkpoints, dtype=float)
    if np.any(np.diff(cps) <= 0):
        raise DomainError("checkpoints must be increasing")
    cache = {}
    out = _map(lambda r: _anneal_run(cfg, r, cps, spec, False, cache)[1], list(range(int(replicas))), threads)
    inside = np.array(out, dtype=bool).reshape(int(replicas), len(cps))
    frac = inside.mean(axis=0)
    half = 1.96 * np.sqrt(frac * (1 - frac) / inside.shape[0])
    return AnnealSuccess(cps, frac, half, inside)
