"""Models: state space, transition digraph and mean-field rate functions.

A :class:`Model` bundles the ordered state labels, the directed edge
list and one :class:`~mfjp.expr.RateExpr` per edge.  The catalog
functions :func:`nonint`, :func:`curie_weiss` and :func:`cyc3` build the
reference models used throughout the test-suite.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from .errors import DomainError, NotIrreducible, RateOutOfBounds, UnknownLabel, ValidationError
from .expr import RateExpr, compile_nodes, parse_rate_expr
from .lattice import lattice_enumerate, simplex_point

__all__ = [
    "SCHEMA",
    "Model",
    "ValidationReport",
    "make_model",
    "validate_model",
    "rate_matrix",
    "nonint",
    "curie_weiss",
    "cyc3",
    "catalog",
    "load_model",
]

SCHEMA = "mfjp/1"


@dataclass(frozen=True)
class Model:
    """Finite-state mean-field jump model.

    Attributes
    ----------
    name : str
    labels : tuple of str
        Ordered state labels; coordinate ``k`` of a simplex point is the
        mass of ``labels[k]``.
    edges : tuple of (int, int)
        Directed transitions ``(z, z')`` as label indices.
    rates : tuple of RateExpr
        One expression per edge, aligned with ``edges``.
    sources : tuple of str
        Expression texts before parameter substitution (for serialisation).
    params : dict
        Parameter values substituted into ``sources``.
    """

    name: str
    labels: tuple
    edges: tuple
    rates: tuple
    sources: tuple = ()
    params: dict = field(default_factory=dict, compare=False)

    @property
    def d(self):
        """Number of states ``|Z|``."""
        return len(self.labels)

    @property
    def n_edges(self):
        return len(self.edges)

    @cached_property
    def src(self):
        return np.array([e[0] for e in self.edges], dtype=np.int64)

    @cached_property
    def dst(self):
        return np.array([e[1] for e in self.edges], dtype=np.int64)

    @cached_property
    def _compiled(self):
        return compile_nodes([r._tree for r in self.rates])

    @cached_property
    def incidence(self):
        """``|E| x |Z|`` matrix with -1 at the source and +1 at the target."""
        B = np.zeros((self.n_edges, self.d))
        B[np.arange(self.n_edges), self.src] -= 1.0
        B[np.arange(self.n_edges), self.dst] += 1.0
        B.setflags(write=False)
        return B

    def edge_rates(self, xi):
        """Rates of all edges at point(s) ``xi``; shape ``(..., |E|)``."""
        xi = np.asarray(xi, dtype=float)
        shape = xi.shape[:-1]
        with np.errstate(all="ignore"):
            vals = self._compiled(xi)
        return np.stack([np.broadcast_to(v, shape) for v in vals], axis=-1).astype(float)

    def edge_name(self, k):
        z, w = self.edges[k]
        return f"{self.labels[z]}->{self.labels[w]}"

    # ----------------------------------------------------------- serialisation
    def to_dict(self):
        srcs = self.sources or tuple(r.source for r in self.rates)
        return {
            "schema": SCHEMA,
            "name": self.name,
            "states": list(self.labels),
            "edges": [[self.labels[a], self.labels[b]] for a, b in self.edges],
            "rates": {self.edge_name(k): srcs[k] for k in range(self.n_edges)},
            "params": {k: float(v) for k, v in sorted(self.params.items())},
        }

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2)

    def digest(self):
        """SHA-256 of the canonical JSON serialisation."""
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()

    @classmethod
    def from_dict(cls, doc):
        """Build a model from a model-file document (see :func:`make_model`)."""
        if not isinstance(doc, dict):
            raise ValidationError("model document must be a JSON object")
        schema = doc.get("schema", SCHEMA)
        if schema != SCHEMA:
            raise ValidationError(f"unsupported schema {schema!r}")
        for key in ("states", "edges", "rates"):
            if key not in doc:
                raise ValidationError(f"model document lacks field {key!r}")
        return make_model(
            doc["states"],
            [tuple(e) for e in doc["edges"]],
            doc["rates"],
            name=doc.get("name", "model"),
            params=doc.get("params", {}),
        )


def make_model(states, edges, rates, name="model", params=None):
    """Construct a :class:`Model` from labels, edges and rate texts.

    Parameters
    ----------
    states : sequence of str
        Unique state labels, at least two.
    edges : sequence of (str, str)
        Directed transitions by label.
    rates : mapping ``"from->to"`` -> expression text, or a sequence
        aligned with ``edges``.
    name : str
    params : mapping, optional
        Values substituted textually into each expression.

    Returns
    -------
    Model
    """
    labels = tuple(str(s) for s in states)
    if len(labels) < 2:
        raise ValidationError("a model needs at least two states")
    if len(set(labels)) != len(labels):
        raise ValidationError(f"duplicate state labels in {list(labels)}")
    index = {lab: i for i, lab in enumerate(labels)}
    eidx = []
    for e in edges:
        if len(e) != 2:
            raise ValidationError(f"edge {e!r} is not a pair")
        a, b = (str(v) for v in e)
        for lab in (a, b):
            if lab not in index:
                raise UnknownLabel(f"edge {a}->{b} references unknown state {lab!r}")
        if a == b:
            raise ValidationError(f"self-loop {a}->{b} is not allowed")
        eidx.append((index[a], index[b]))
    if len(set(eidx)) != len(eidx):
        raise ValidationError("duplicate edges")
    if not eidx:
        raise NotIrreducible("model has no edges")
    if isinstance(rates, dict):
        texts = []
        for a, b in eidx:
            key = f"{labels[a]}->{labels[b]}"
            if key not in rates:
                raise ValidationError(f"edge {key} has no rate")
            texts.append(rates[key])
        extra = set(rates) - {f"{labels[a]}->{labels[b]}" for a, b in eidx}
        if extra:
            raise ValidationError(f"rates given for non-edges: {sorted(extra)}")
    else:
        texts = list(rates)
        if len(texts) != len(eidx):
            raise ValidationError("one rate per edge is required")
    params = {str(k): float(v) for k, v in (params or {}).items()}
    compiled = tuple(parse_rate_expr(t, labels, params) for t in texts)
    return Model(str(name), labels, tuple(eidx), compiled, tuple(texts), params)


def load_model(path):
    """Read a model file (JSON)."""
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"{path}: invalid JSON ({exc})") from exc
    return Model.from_dict(doc)


# ------------------------------------------------------------- validation
@dataclass(frozen=True)
class ValidationReport:
    """Outcome of :func:`validate_model`.

    Attributes
    ----------
    c, C : float
        Minimum and maximum rate over all edges and grid points.
    irreducible : bool
    edge_bounds : dict
        ``"from->to" -> (min, max)`` per edge.
    grid_resolution : int
    """

    c: float
    C: float
    irreducible: bool
    edge_bounds: dict
    grid_resolution: int

    def to_dict(self):
        return {
            "schema": SCHEMA,
            "c": self.c,
            "C": self.C,
            "irreducible": self.irreducible,
            "grid_resolution": self.grid_resolution,
            "edge_bounds": {k: list(v) for k, v in self.edge_bounds.items()},
        }


def is_irreducible(model):
    d = model.d
    adj = csr_matrix((np.ones(model.n_edges), (model.src, model.dst)), shape=(d, d))
    ncomp, _ = connected_components(adj, directed=True, connection="strong")
    return ncomp == 1


def validate_model(model, grid_resolution=100):
    """Check irreducibility and positive, finite rate bounds.

    Parameters
    ----------
    model : Model
    grid_resolution : int
        Rates are sampled on every point of the lattice with this many
        particles (corners included).  Must be at least 10.

    Returns
    -------
    ValidationReport

    Raises
    ------
    NotIrreducible
    RateOutOfBounds
        At the first (edge, point) with a non-finite or non-positive rate.
    """
    if grid_resolution < 10:
        raise DomainError("grid_resolution must be >= 10")
    if not is_irreducible(model):
        raise NotIrreducible(f"transition graph of {model.name!r} is not strongly connected")
    pts = lattice_enumerate(grid_resolution, model.d) / grid_resolution
    bounds = {}
    for k, expr in enumerate(model.rates):
        vals = expr(pts)
        bad = ~np.isfinite(vals) | (vals <= 0)
        if np.any(bad):
            j = int(np.argmax(bad))
            raise RateOutOfBounds(
                (model.labels[model.edges[k][0]], model.labels[model.edges[k][1]]),
                pts[j].tolist(),
                float(vals[j]),
            )
        bounds[model.edge_name(k)] = (float(vals.min()), float(vals.max()))
    c = min(b[0] for b in bounds.values())
    C = max(b[1] for b in bounds.values())
    return ValidationReport(c, C, True, bounds, grid_resolution)


def rate_matrix(model, xi):
    """The ``|Z| x |Z|`` rate matrix at ``xi`` (rows sum to zero).

    Examples
    --------
    >>> rate_matrix(nonint(), [0.3, 0.7]).tolist()
    [[-1.0, 1.0], [2.0, -2.0]]
    """
    xi = simplex_point(xi)
    lam = model.edge_rates(xi)
    if not np.all(np.isfinite(lam)):
        raise ValidationError(f"rate evaluation failed at {xi.tolist()}")
    d = model.d
    Q = np.zeros((d, d))
    Q[model.src, model.dst] = lam
    Q[np.arange(d), np.arange(d)] = -Q.sum(axis=1)
    return Q


# ---------------------------------------------------------------- catalog
def nonint(a=1.0, b=2.0):
    """Non-interacting two-state model: ``down->up`` at rate ``a``, back at ``b``."""
    return make_model(
        ["down", "up"],
        [("down", "up"), ("up", "down")],
        {"down->up": "a", "up->down": "b"},
        name="NONINT",
        params={"a": a, "b": b},
    )


def curie_weiss(beta=1.5, h=0.0):
    """Two-state Curie-Weiss-type model with order parameter ``x = xi[up]``.

    ``down->up`` fires at ``exp(beta(2x-1)+h)`` and ``up->down`` at
    ``exp(-beta(2x-1)-h)``.
    """
    return make_model(
        ["down", "up"],
        [("down", "up"), ("up", "down")],
        {
            "down->up": "exp(beta*(2*xi[up]-1)+h)",
            "up->down": "exp(-beta*(2*xi[up]-1)-h)",
        },
        name="CW",
        params={"beta": beta, "h": h},
    )


def cyc3(a=1.0, b=2.0):
    """Three states on the directed cycle ``s0->s1->s2->s0``.

    The rate of ``z -> z+1`` is ``a + b*xi[z+1]`` (non-reversible).
    """
    labels = ["s0", "s1", "s2"]
    edges = [(labels[k], labels[(k + 1) % 3]) for k in range(3)]
    rates = {f"{u}->{w}": f"a + b*xi[{w}]" for u, w in edges}
    return make_model(labels, edges, rates, name="CYC3", params={"a": a, "b": b})


_CATALOG = {"nonint": nonint, "cw": curie_weiss, "cyc3": cyc3}


def catalog(name, **params):
    """Look up a catalog model by (case-insensitive) name."""
    key = name.lower()
    if key not in _CATALOG:
        raise ValidationError(f"unknown catalog model {name!r}; choose from {sorted(_CATALOG)}")
    return _CATALOG[key](**params)
