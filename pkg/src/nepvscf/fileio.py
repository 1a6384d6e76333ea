"""Config files, Matrix Market matrices, and deterministic CSV output.

Config files are flat ``key = value`` text ('#' starts a comment); grids are
written start:stop:count.  Every CSV embeds the config hash, seed, and
tolerances as leading comment lines; numbers use 17 significant digits so a
double round-trips exactly.
"""
from __future__ import annotations

import hashlib
import io
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import scipy.io
import scipy.sparse


def parse_config(path) -> dict[str, str]:
    cfg: dict[str, str] = {}
    text = Path(path).read_text()
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
        key, val = line.split("=", 1)
        cfg[key.strip()] = val.strip()
    return cfg


def parse_grid(spec: str) -> np.ndarray:
    """'start:stop:count' -> count equally spaced points."""
    parts = spec.split(":")
    if len(parts) != 3:
        raise ValueError(f"grid must be start:stop:count, got {spec!r}")
    start, stop, count = float(parts[0]), float(parts[1]), int(parts[2])
    if count < 1:
        raise ValueError(f"grid count must be >= 1, got {count}")
    return np.linspace(start, stop, count)


def config_hash(cfg: dict) -> str:
    blob = "\n".join(f"{k}={cfg[k]}" for k in sorted(cfg))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def read_matrix(path) -> np.ndarray:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"matrix file not found: {path}")
    m = scipy.io.mmread(str(path))
    if scipy.sparse.issparse(m):
        m = m.toarray()
    return np.asarray(m, dtype=float)


def write_matrix(path, m: np.ndarray) -> None:
    scipy.io.mmwrite(str(path), np.asarray(m, dtype=float))


def fmt(value) -> str:
    """CSV cell formatting: full-precision floats, empty cell for None."""
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        if np.isnan(value):
            return ""
        return f"{value:.17g}"
    return str(value)


def write_csv(path, columns: Sequence[str], rows: Sequence[Sequence],
              meta: Optional[dict] = None) -> None:
    buf = io.StringIO()
    for key in sorted(meta or {}):
        buf.write(f"# {key} = {fmt((meta or {})[key])}\n")
    buf.write(",".join(columns) + "\n")
    for row in rows:
        buf.write(",".join(fmt(v) for v in row) + "\n")
    Path(path).write_text(buf.getvalue())


def read_csv(path) -> tuple[dict, list[str], list[list[str]]]:
    meta: dict[str, str] = {}
    columns: list[str] = []
    rows: list[list[str]] = []
    for raw in Path(path).read_text().splitlines():
        if raw.startswith("#"):
            body = raw[1:].strip()
            if "=" in body:
                k, v = body.split("=", 1)
                meta[k.strip()] = v.strip()
            continue
        if not raw.strip():
            continue
        if not columns:
            columns = raw.split(",")
        else:
            rows.append(raw.split(","))
    return meta, columns, rows
