"""Serialisation helpers: deterministic JSON, atomic writes, run manifests."""
from __future__ import annotations

import hashlib
import json
import math
import os
import sys
import tempfile
from datetime import datetime, timezone

import numpy as np

__all__ = ["dumps", "atomic_write", "file_digest", "write_manifest", "MANIFEST_SUFFIX"]

MANIFEST_SUFFIX = ".manifest.json"


def _fmt_float(x):
    if math.isnan(x):
        return '"nan"'
    if math.isinf(x):
        return '"inf"' if x > 0 else '"-inf"'
    text = format(x, ".17g")
    if not any(c in text for c in ".en"):
        text += ".0"
    return text


def _encode(obj, indent, level):
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if obj is None or obj is True or obj is False:
        return {None: "null", True: "true", False: "false"}[obj]
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return _fmt_float(float(obj))
    if isinstance(obj, str):
        return json.dumps(obj, ensure_ascii=False)
    if isinstance(obj, np.ndarray):
        obj = obj.tolist()
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{_encode(str(k), indent, 0)}: {_encode(v, indent, level + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        if all(not isinstance(v, (dict, list, tuple, np.ndarray)) for v in obj):
            return "[" + ", ".join(_encode(v, indent, 0) for v in obj) + "]"
        items = [pad + _encode(v, indent, level + 1) for v in obj]
        return "[\n" + ",\n".join(items) + "\n" + end + "]"
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def dumps(obj, indent=2):
    """JSON text with every float written to 17 significant digits.

    Non-finite floats become the strings ``"inf"``, ``"-inf"``, ``"nan"``.
    Key order is preserved, so equal inputs give byte-identical output.

    Examples
    --------
    >>> dumps({"x": 0.1, "y": [1, float("inf")]})
    '{\\n  "x": 0.10000000000000001,\\n  "y": [1, "inf"]\\n}\\n'
    """
    return _encode(obj, indent, 0) + "\n"


def atomic_write(path, text):
    """Write ``text`` to ``path`` via a temporary file and rename."""
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=".tmp-", dir=directory)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def file_digest(path):
    """SHA-256 hex digest of a file (``None`` if it does not exist)."""
    if path is None or not os.path.isfile(path):
        return None
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 16), b""):
            h.update(block)
    return h.hexdigest()


def write_manifest(primary, outputs, argv, model_file=None, model_digest=None, seeds=(), started=None):
    """Write ``<primary>.manifest.json`` describing the run.

    Timestamps live only in the manifest, so the artefacts themselves are
    byte-identical across repeated runs.
    """
    from . import __version__

    now = datetime.now(timezone.utc).isoformat(timespec="seconds")
    doc = {
        "schema": "mfjp/1",
        "kind": "manifest",
        "tool": "mfjp",
        "version": __version__,
        "command_line": list(argv),
        "python": sys.version.split()[0],
        "model_file": model_file,
        "model_file_sha256": file_digest(model_file),
        "model_digest": model_digest,
        "seeds": [int(s) for s in seeds],
        "started": started or now,
        "finished": now,
        "outputs": [{"path": p, "sha256": file_digest(p)} for p in outputs],
    }
    path = os.fspath(primary) + MANIFEST_SUFFIX
    atomic_write(path, dumps(doc))
    return path
