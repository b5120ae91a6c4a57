"""Command-line interface: ``mfjp <subcommand> [options]``.

Every subcommand writes one primary artefact (JSON report or CSV table)
to ``--out`` or, if omitted, to standard output.  When ``--out`` is given
the file is written atomically and a ``<out>.manifest.json`` run manifest
(version, command line, model hash, seeds, timestamps, output digests) is
written next to it; JSON reports carry a ``"manifest"`` field naming it.

Exit codes: 0 success, 2 validation error, 3 numerical failure, 4 size
cap exceeded.

Models are given as ``--model FILE.json`` or ``--model catalog:NAME``
(``nonint``, ``cw``, ``cyc3``) with ``--param name=value`` overrides.
Points are comma-separated weights (``0.3,0.7``) or attractor references
``K<i>`` (0-based index into the lexicographically ordered attractor set).
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from datetime import datetime, timezone

import numpy as np

from . import __version__
from .action import ControlledPath, path_action, terminal_cost
from .dynamics import find_attractors, mve_flow
from .errors import DomainError, MfjpError, ValidationError
from .hierarchy import build_cycle_hierarchy
from .io import MANIFEST_SUFFIX, atomic_write, dumps, write_manifest
from .lattice import LatticeMeasure, round_to_lattice, simplex_point
from .model import Model, catalog, load_model, validate_model
from .quasipotential import CostMatrix, build_cost_lattice, default_rho0, quasipotential, vtilde_matrix
from .simulate import (
    AnnealConfig,
    HittingSpec,
    SimConfig,
    anneal_path,
    anneal_success,
    gillespie_path,
    hitting_time,
)
from .spectral import (
    build_generator,
    check_reversibility,
    invariant_measure,
    lambda2_scan,
    spectral_report,
    tv_mixing_curve,
)

__all__ = ["main", "build_parser"]


# ------------------------------------------------------------------ inputs
def _threads(args):
    if getattr(args, "threads", None):
        return max(1, int(args.threads))
    env = os.environ.get("MFJP_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError as exc:
            raise ValidationError(f"MFJP_THREADS must be an integer, got {env!r}") from exc
    return os.cpu_count() or 1


def _params(items):
    out = {}
    for item in items or ():
        if "=" not in item:
            raise ValidationError(f"--param expects name=value, got {item!r}")
        k, v = item.split("=", 1)
        try:
            out[k.strip()] = float(v)
        except ValueError as exc:
            raise ValidationError(f"--param {k}: {v!r} is not a number") from exc
    return out


def _model(args):
    params = _params(getattr(args, "param", None))
    spec = args.model
    if spec.startswith("catalog:"):
        return catalog(spec.split(":", 1)[1], **params), None
    if not os.path.isfile(spec):
        raise ValidationError(f"model file {spec!r} not found")
    if params:
        with open(spec, "r", encoding="utf-8") as fh:
            try:
                doc = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ValidationError(f"{spec}: invalid JSON ({exc})") from exc
        doc.setdefault("params", {}).update(params)
        return Model.from_dict(doc), spec
    return load_model(spec), spec


class _Attractors:
    """Lazily computed attractor set shared by point parsing."""

    def __init__(self, model, args):
        self.model = model
        self.args = args
        self._set = None

    def get(self):
        if self._set is None:
            self._set = find_attractors(
                self.model, seed=getattr(self.args, "seed", 0) or 0, threads=_threads(self.args)
            )
        return self._set


def _floats(text, what):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise ValidationError(f"{what}: cannot parse {text!r}") from exc


def _point(text, model, attractors):
    """Parse ``K<i>`` or comma-separated weights into (point, index-or-None)."""
    t = text.strip()
    if t[:1] in ("K", "k") and t[1:].isdigit():
        i = int(t[1:])
        A = attractors.get()
        if i >= len(A):
            raise DomainError(f"attractor index {i} out of range (have {len(A)})")
        return A.locations[i], i
    w = _floats(t, "point")
    if len(w) != model.d:
        raise ValidationError(f"point {t!r} needs {model.d} weights")
    return simplex_point(w), None


def _counts(text, model, N, attractors):
    """Lattice start: integer counts summing to N, or a point rounded to the lattice."""
    t = text.strip()
    if "," in t and all(v.strip().lstrip("-").isdigit() for v in t.split(",")):
        c = np.array([int(v) for v in t.split(",")], dtype=np.int64)
        if len(c) == model.d and c.sum() == N and np.all(c >= 0):
            return c
    p, _ = _point(t, model, attractors)
    return np.asarray(round_to_lattice(p, N), dtype=np.int64)


def _range(text):
    parts = text.split(":")
    try:
        if len(parts) == 2:
            a, b, s = int(parts[0]), int(parts[1]), 1
        elif len(parts) == 3:
            a, b, s = (int(p) for p in parts)
        else:
            raise ValueError
    except ValueError as exc:
        raise ValidationError(f"range must be start:stop[:stride], got {text!r}") from exc
    if s <= 0 or b < a:
        raise ValidationError(f"empty range {text!r}")
    return list(range(a, b + 1, s))


def _target(args, model, attractors, flag="target", att_flag="target_attractors"):
    balls = getattr(args, flag, None)
    idx = getattr(args, att_flag, None)
    rho = getattr(args, "rho", None)
    if idx:
        A = attractors.get()
        ids = [int(v) for v in idx.split(",")]
        r = rho if rho is not None else default_rho0(A)
        if not r > 0:
            raise DomainError("a positive --rho is required with a single attractor")
        return A.locations[ids], np.full(len(ids), r), ids
    if balls:
        centers, radii = [], []
        for item in balls.split(";"):
            if "@" not in item:
                raise ValidationError(f"ball must be 'point@radius', got {item!r}")
            pt, r = item.split("@", 1)
            centers.append(_point(pt, model, attractors)[0])
            radii.append(float(r))
        return np.array(centers), np.array(radii), list(range(len(centers)))
    return None


def _hitting_spec(args, model, attractors):
    tgt = _target(args, model, attractors)
    if tgt is None:
        raise ValidationError("a target is required (--target or --target-attractors)")
    avoid = _target(args, model, attractors, "avoid", "avoid_attractors")
    kw = {}
    if avoid is not None:
        kw = dict(avoid_centers=avoid[0], avoid_radii=avoid[1])
    return HittingSpec(tgt[0], tgt[1], names=tuple(tgt[2]), **kw)


# ------------------------------------------------------------------ output
def _emit(args, payload, seeds=(), model_file=None, model=None, extra=()):
    """Write the primary artefact (dict -> JSON, str -> CSV) and the manifest."""
    out = getattr(args, "out", None)
    if isinstance(payload, dict):
        if out:
            payload = dict(payload)
            payload["manifest"] = os.path.basename(out) + MANIFEST_SUFFIX
        text = dumps(payload)
    else:
        text = payload
    if not out:
        sys.stdout.write(text)
        return
    atomic_write(out, text)
    write_manifest(
        out,
        [out, *extra],
        args._argv,
        model_file=model_file,
        model_digest=model.digest() if model is not None else None,
        seeds=seeds,
        started=args._started,
    )


def _write_extra(path, text):
    atomic_write(path, text)
    return path


# --------------------------------------------------------------- commands
def cmd_validate(args):
    model, mf = _model(args)
    rep = validate_model(model, grid_resolution=args.grid)
    doc = rep.to_dict()
    doc = {"schema": doc.pop("schema"), "kind": "validation", "model": model.name,
           "model_digest": model.digest(), **doc}
    _emit(args, doc, model_file=mf, model=model)


def cmd_flow(args):
    model, mf = _model(args)
    A = _Attractors(model, args)
    start, _ = _point(args.from_, model, A)
    flow = mve_flow(model, start, args.t_max, dt=args.dt, record_every=args.record_every)
    _emit(args, flow.to_csv(), model_file=mf, model=model)


def cmd_attractors(args):
    model, mf = _model(args)
    A = find_attractors(model, n_starts=args.starts, seed=args.seed, t_max=args.t_max, threads=_threads(args))
    doc = {"schema": "mfjp/1", "kind": "attractors", "model": model.name, **A.to_dict()}
    _emit(args, doc, seeds=[args.seed], model_file=mf, model=model)


def cmd_action(args):
    model, mf = _model(args)
    with open(args.path, "r", encoding="utf-8") as fh:
        path = ControlledPath.from_csv(fh.read())
    val = path_action(model, path, form=args.form)
    doc = {"schema": "mfjp/1", "kind": "action", "model": model.name, "form": args.form,
           "nodes": len(path.times), "T": float(path.times[-1] - path.times[0]), "value": val}
    _emit(args, doc, model_file=mf, model=model)


def cmd_cost(args):
    model, mf = _model(args)
    A = _Attractors(model, args)
    nu, _ = _point(args.from_, model, A)
    xi, _ = _point(args.to, model, A)
    res = terminal_cost(model, nu, xi, args.T, n_knots=args.knots)
    extra = []
    if args.path_csv:
        lines = [",".join(["t", *model.labels])]
        for t, p in zip(res.path.times, res.path.points):
            lines.append(",".join([format(float(t), ".17g")] + [format(float(v), ".17g") for v in p]))
        extra.append(_write_extra(args.path_csv, "\n".join(lines) + "\n"))
    doc = {"schema": "mfjp/1", "kind": "terminal_cost", "model": model.name,
           "from": nu, "to": xi, "T": args.T, "knots": args.knots, "value": res.value,
           "converged": res.converged, "stages": [[int(k), v] for k, v in res.stages]}
    _emit(args, doc, model_file=mf, model=model, extra=extra)


def cmd_quasipotential(args):
    model, mf = _model(args)
    A = _Attractors(model, args)
    if args.matrix:
        att = A.get()
        lat = build_cost_lattice(model, args.resolution, threads=_threads(args))
        cm = vtilde_matrix(model, att, M=args.resolution, rho0=args.rho0, lattice=lat)
        doc = cm.to_dict()
        doc["model"] = model.name
        _emit(args, doc, seeds=[args.seed], model_file=mf, model=model)
        return
    if args.from_ is None or args.to is None:
        raise ValidationError("--from and --to are required unless --matrix is given")
    nu, i = _point(args.from_, model, A)
    xi, j = _point(args.to, model, A)
    forbidden = []
    if args.exclude_others:
        att = A.get()
        rho0 = args.rho0 if args.rho0 is not None else default_rho0(att)
        forbidden = [(att.locations[k], rho0) for k in range(len(att)) if k not in (i, j)]
    lat = build_cost_lattice(model, args.resolution, threads=_threads(args))
    res = quasipotential(model, nu, xi, lattice=lat, forbidden=forbidden)
    extra = []
    if args.path_csv:
        extra.append(_write_extra(args.path_csv, res.path_csv(model.labels)))
    doc = {"schema": "mfjp/1", "kind": "quasipotential", "model": model.name,
           "from": nu, "to": xi, "resolution": args.resolution,
           "excluded": [list(map(float, c)) for c, _ in forbidden],
           "value": res.value, "reachable": res.reachable, "path": res.path}
    _emit(args, doc, model_file=mf, model=model, extra=extra)


def cmd_hierarchy(args):
    cm = CostMatrix.load(args.cost)
    rep = build_cycle_hierarchy(cm)
    doc = rep.to_dict()
    if args.tree:
        sys.stderr.write(rep.tree_text() + "\n")
    _emit(args, doc, model_file=args.cost)


def cmd_spectrum(args):
    model, mf = _model(args)
    if args.N_range:
        scan = lambda2_scan(model, _range(args.N_range))
        extra = [_write_extra(args.csv, scan.to_csv())] if args.csv else []
        _emit(args, scan.to_dict(), model_file=mf, model=model, extra=extra)
        return
    if args.N is None:
        raise ValidationError("--N or --N-range is required")
    rep = spectral_report(model, args.N, full=args.full)
    extra = []
    if args.csv:
        lam = rep.lambda2
        row = f"{args.N},{lam:.17g},{np.log(lam) / args.N:.17g}" if np.isfinite(lam) else f"{args.N},nan,nan"
        extra.append(_write_extra(args.csv, "N,lambda2,log_lambda2_over_N\n" + row + "\n"))
    doc = rep.to_dict()
    doc["model"] = model.name
    _emit(args, doc, model_file=mf, model=model, extra=extra)


def _times(args):
    if args.times:
        return _floats(args.times, "--times")
    if args.log_times:
        parts = args.log_times.split(":")
        if len(parts) != 3:
            raise ValidationError("--log-times must be lo:hi:count (base-10 exponents)")
        return list(np.logspace(float(parts[0]), float(parts[1]), int(parts[2])))
    raise ValidationError("--times or --log-times is required")


def cmd_mix(args):
    model, mf = _model(args)
    A = _Attractors(model, args)
    G = build_generator(model, args.N)
    p = invariant_measure(G)
    start = _counts(args.start, model, args.N, A)
    curve = tv_mixing_curve(G, p, LatticeMeasure(start), _times(args))
    _emit(args, curve.to_csv(), model_file=mf, model=model)


def cmd_simulate(args):
    model, mf = _model(args)
    A = _Attractors(model, args)
    start = _counts(args.start, model, args.N, A)
    cfg = SimConfig(model, args.N, LatticeMeasure(start), args.t_max, seed=args.seed, record=args.record)
    path = gillespie_path(cfg, replica=args.replica)
    _emit(args, path.to_csv(), seeds=[args.seed], model_file=mf, model=model)


def cmd_hit(args):
    model, mf = _model(args)
    A = _Attractors(model, args)
    start = _counts(args.start, model, args.N, A)
    spec = _hitting_spec(args, model, A)
    cfg = SimConfig(model, args.N, LatticeMeasure(start), args.t_max, seed=args.seed, record="hitting")
    res = hitting_time(cfg, spec, args.replicas, threads=_threads(args))
    doc = res.to_dict()
    doc.update(model=model.name, start=start, seed=args.seed, target=spec.to_dict())
    _emit(args, doc, seeds=[args.seed], model_file=mf, model=model)


def cmd_anneal(args):
    model, mf = _model(args)
    A = _Attractors(model, args)
    start, _ = _point(args.start, model, A)
    cfg = AnnealConfig(model, args.c, args.z0, tuple(start), args.t_max, seed=args.seed)
    if args.replicas is None:
        _emit(args, anneal_path(cfg, replica=args.replica).to_csv(), seeds=[args.seed], model_file=mf, model=model)
        return
    spec = _hitting_spec(args, model, A)
    cps = _floats(args.checkpoints, "--checkpoints") if args.checkpoints else [args.t_max]
    res = anneal_success(cfg, spec, cps, args.replicas, threads=_threads(args))
    doc = res.to_dict()
    doc.update(model=model.name, c=args.c, z0=args.z0, N0=cfg.N0, start=start, seed=args.seed,
               target=spec.to_dict())
    _emit(args, doc, seeds=[args.seed], model_file=mf, model=model)


def cmd_pipeline(args):
    model, mf = _model(args)
    threads = _threads(args)
    val = validate_model(model)
    att = find_attractors(model, seed=args.seed, threads=threads)
    lat = build_cost_lattice(model, args.resolution, threads=threads)
    cm = vtilde_matrix(model, att, M=args.resolution, lattice=lat)
    hier = build_cycle_hierarchy(cm)
    doc = {
        "schema": "mfjp/1",
        "kind": "pipeline",
        "model": model.to_dict(),
        "model_digest": model.digest(),
        "validation": val.to_dict(),
        "attractors": att.to_dict(),
        "cost_matrix": cm.to_dict(),
        "hierarchy": hier.to_dict(),
        "Lambda": hier.Lambda,
        "c_star": hier.c_star,
        "L_tilde_0": hier.L_tilde_0,
    }
    Ns = _range(args.N_range) if args.N_range else []
    if Ns:
        G = build_generator(model, Ns[0])
        rev = check_reversibility(G, invariant_measure(G))
        doc["reversible"] = rev.reversible
        doc["reversibility_residual"] = rev.residual
        if rev.reversible:
            doc["lambda2_scan"] = lambda2_scan(model, Ns).to_dict()
    _emit(args, doc, seeds=[args.seed], model_file=mf, model=model)


# ------------------------------------------------------------------ parser
def _add_model(p):
    p.add_argument("--model", required=True, help="model JSON file or catalog:NAME (nonint, cw, cyc3)")
    p.add_argument("--param", action="append", metavar="NAME=VALUE", help="override a model parameter")


def _add_common(p, seed=True):
    p.add_argument("--out", help="output file (default: standard output)")
    p.add_argument("--threads", type=int, help="worker threads (default: MFJP_THREADS or all cores)")
    if seed:
        p.add_argument("--seed", type=int, default=0, help="master random seed")


def _add_target(p):
    p.add_argument("--target", help="target balls 'POINT@RADIUS;...' (sup-norm)")
    p.add_argument("--target-attractors", help="comma-separated attractor indices forming the target")
    p.add_argument("--avoid", help="avoid balls 'POINT@RADIUS;...'")
    p.add_argument("--avoid-attractors", help="comma-separated attractor indices to avoid")
    p.add_argument("--rho", type=float, help="neighbourhood radius for attractor targets")


def build_parser():
    parser = argparse.ArgumentParser(prog="mfjp", description="Metastability toolkit for mean-field jump processes.")
    parser.add_argument("--version", action="version", version=f"mfjp {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check irreducibility and rate bounds of a model")
    _add_model(p)
    _add_common(p, seed=False)
    p.add_argument("--grid", type=int, default=100, help="grid resolution for rate bounds")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("flow", help="integrate the mean-field flow (CSV)")
    _add_model(p)
    _add_common(p)
    p.add_argument("--from", dest="from_", required=True, help="start point")
    p.add_argument("--t-max", type=float, default=50.0)
    p.add_argument("--dt", type=float, default=0.01)
    p.add_argument("--record-every", type=int, default=1)
    p.set_defaults(func=cmd_flow)

    p = sub.add_parser("attractors", help="fixed points and stable attractors (JSON)")
    _add_model(p)
    _add_common(p)
    p.add_argument("--starts", type=int, help="random starts (default 10*|Z|)")
    p.add_argument("--t-max", type=float, default=200.0)
    p.set_defaults(func=cmd_attractors)

    p = sub.add_parser("action", help="action of a piecewise-linear path given as CSV")
    _add_model(p)
    _add_common(p, seed=False)
    p.add_argument("--path", required=True, help="CSV with header t,<labels>")
    p.add_argument("--form", choices=("dual", "controls"), default="dual")
    p.set_defaults(func=cmd_action)

    p = sub.add_parser("cost", help="terminal cost: minimal action from --from to --to in time --T")
    _add_model(p)
    _add_common(p)
    p.add_argument("--from", dest="from_", required=True)
    p.add_argument("--to", required=True)
    p.add_argument("--T", type=float, required=True)
    p.add_argument("--knots", type=int, default=8)
    p.add_argument("--path-csv", help="also write the optimised path as CSV")
    p.set_defaults(func=cmd_cost)

    p = sub.add_parser("quasipotential", help="lattice quasipotential V or the cost matrix")
    _add_model(p)
    _add_common(p)
    p.add_argument("--from", dest="from_")
    p.add_argument("--to")
    p.add_argument("--resolution", type=int, default=100)
    p.add_argument("--exclude-others", action="store_true", help="avoid balls around all other attractors")
    p.add_argument("--rho0", type=float, help="exclusion radius (default: quarter of min separation)")
    p.add_argument("--matrix", action="store_true", help="emit the constrained cost matrix over all attractors")
    p.add_argument("--path-csv", help="also write the minimising polygon as CSV")
    p.set_defaults(func=cmd_quasipotential)

    p = sub.add_parser("hierarchy", help="W-graph constants and cycle hierarchy of a cost matrix")
    p.add_argument("--cost", required=True, help="cost-matrix JSON")
    p.add_argument("--tree", action="store_true", help="print the rendered tree to stderr")
    _add_common(p, seed=False)
    p.set_defaults(func=cmd_hierarchy)

    p = sub.add_parser("spectrum", help="invariant measure and spectral gap")
    _add_model(p)
    _add_common(p, seed=False)
    p.add_argument("--N", type=int)
    p.add_argument("--N-range", help="start:stop:stride (inclusive)")
    p.add_argument("--csv", help="also write N,lambda2,log_lambda2_over_N")
    p.add_argument("--full", action="store_true", help="include the full spectrum (dense cap applies)")
    p.set_defaults(func=cmd_spectrum)

    p = sub.add_parser("mix", help="total-variation mixing curve from a lattice point (CSV)")
    _add_model(p)
    _add_common(p)
    p.add_argument("--N", type=int, required=True)
    p.add_argument("--start", required=True, help="counts 'n1,n2,...' or a point / K<i>")
    p.add_argument("--times", help="comma-separated times")
    p.add_argument("--log-times", help="lo:hi:count of base-10 exponents")
    p.set_defaults(func=cmd_mix)

    p = sub.add_parser("simulate", help="exact-event trajectory (CSV)")
    _add_model(p)
    _add_common(p)
    p.add_argument("--N", type=int, required=True)
    p.add_argument("--start", required=True)
    p.add_argument("--t-max", type=float, required=True)
    p.add_argument("--replica", type=int, default=0)
    p.add_argument("--record", choices=("full", "events"), default="full")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("hit", help="Monte Carlo hitting times (JSON summary)")
    _add_model(p)
    _add_common(p)
    p.add_argument("--N", type=int, required=True)
    p.add_argument("--start", required=True)
    p.add_argument("--t-max", type=float, required=True, help="censoring time")
    p.add_argument("--replicas", type=int, default=100)
    _add_target(p)
    p.set_defaults(func=cmd_hit)

    p = sub.add_parser("anneal", help="annealed process with particle injection")
    _add_model(p)
    _add_common(p)
    p.add_argument("--c", type=float, required=True, help="injection constant")
    p.add_argument("--z0", required=True, help="state label of injected particles")
    p.add_argument("--start", required=True, help="start point (rounded to N0 particles)")
    p.add_argument("--t-max", type=float, required=True)
    p.add_argument("--replica", type=int, default=0)
    p.add_argument("--replicas", type=int, help="run replicas and report success fractions")
    p.add_argument("--checkpoints", help="comma-separated checkpoint times")
    _add_target(p)
    p.set_defaults(func=cmd_anneal)

    p = sub.add_parser("pipeline", help="full analysis of a model in one JSON report")
    _add_model(p)
    _add_common(p)
    p.add_argument("--resolution", type=int, default=100)
    p.add_argument("--N-range", help="start:stop:stride for the lambda_2 scaling table")
    p.set_defaults(func=cmd_pipeline)
    return parser


def main(argv=None):
    """Entry point; returns the process exit code."""
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    args._argv = ["mfjp", *argv]
    args._started = datetime.now(timezone.utc).isoformat(timespec="seconds")
    try:
        args.func(args)
    except MfjpError as exc:
        sys.stderr.write(f"mfjp: {type(exc).__name__}: {exc}\n")
        return exc.exit_code
    except BrokenPipeError:
        # downstream reader (e.g. ``head``) closed the pipe; not an error
        sys.stdout = None
        return 0
    except OSError as exc:
        sys.stderr.write(f"mfjp: {type(exc).__name__}: {exc}\n")
        return 2
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
