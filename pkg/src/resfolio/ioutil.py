"""Small file-output helpers: atomic writes and stable number formatting.

Every CLI artifact goes through these so that identical inputs produce
byte-identical files (floats use shortest round-trip repr, JSON keys are
sorted, NaN becomes null).
"""

from __future__ import annotations

import json
import math
import os
import tempfile
from pathlib import Path


def fmt(x) -> str:
    """Shortest round-trip decimal representation of a number."""
    if isinstance(x, float):
        if math.isnan(x):
            return "nan"
        return repr(x)
    return str(x)


def atomic_write_text(path: str | Path, text: str) -> None:
    """Write text to `path` via a temp file + rename in the same directory."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _sanitize(obj):
    if isinstance(obj, float):
        return None if not math.isfinite(obj) else obj
    if isinstance(obj, dict):
        return {k: _sanitize(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_sanitize(v) for v in obj]
    return obj


def write_json(path: str | Path, obj) -> None:
    """Serialize `obj` as deterministic JSON (sorted keys, NaN -> null)."""
    text = json.dumps(_sanitize(obj), sort_keys=True, indent=2, allow_nan=False)
    atomic_write_text(path, text + "\n")


def write_csv(path: str | Path, header: list[str], rows) -> None:
    """Write rows of mixed str/number cells as a deterministic CSV."""
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(fmt(c) for c in row))
    atomic_write_text(path, "\n".join(lines) + "\n")
