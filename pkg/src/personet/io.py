"""Delimited-text and JSON tables with ``#``-prefixed metadata headers."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .model import SampleSet

SAMPLE_COLUMNS = ("run_id", "node_id", "personality", "degree")


def _fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def write_table(path, columns: dict, metadata: dict, fmt: str = "csv") -> Path:
    """Write equal-length columns; values keep full float precision."""
    path = Path(path)
    names = list(columns)
    if fmt == "json":
        doc = {"metadata": metadata, "columns": {n: [_py(v) for v in columns[n]] for n in names}}
        path.write_text(json.dumps(doc, sort_keys=True, separators=(",", ":")) + "\n")
        return path
    lines = [f"# {k}: {json.dumps(v, sort_keys=True)}" for k, v in sorted(metadata.items())]
    lines.append(",".join(names))
    cols = [[_fmt(v) for v in columns[n]] for n in names]
    lines.extend(",".join(row) for row in zip(*cols))
    path.write_text("\n".join(lines) + "\n")
    return path


def _py(v):
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, np.floating):
        return float(v)
    return v


def read_table(path) -> tuple[dict, dict]:
    """Return ``(columns, metadata)``; columns are float arrays (integer-valued ones as int64)."""
    path = Path(path)
    text = path.read_text()
    if text.lstrip().startswith("{"):
        doc = json.loads(text)
        cols = {k: _array(v) for k, v in doc["columns"].items()}
        return cols, doc.get("metadata", {})
    meta, rows, header = {}, [], None
    for line in text.splitlines():
        if not line.strip():
            continue
        if line.startswith("#"):
            key, _, value = line[1:].strip().partition(":")
            meta[key.strip()] = json.loads(value)
        elif header is None:
            header = line.split(",")
        else:
            rows.append(line.split(","))
    if header is None:
        raise ValueError(f"{path}: no header row")
    cols = {}
    for j, name in enumerate(header):
        cols[name] = _array([r[j] for r in rows])
    return cols, meta


def _array(values):
    if all(isinstance(v, int) or (isinstance(v, str) and v.lstrip("-").isdigit()) for v in values):
        return np.array([int(v) for v in values], dtype=np.int64)
    return np.array([float(v) for v in values], dtype=float)


def write_samples(path, samples: SampleSet, fmt: str = "csv", integer_degree: bool = True) -> Path:
    degree = samples.degree.astype(np.int64) if integer_degree else samples.degree.astype(float)
    cols = {
        "run_id": samples.run_id,
        "node_id": samples.node_id,
        "personality": samples.personality.astype(float),
        "degree": degree,
    }
    return write_table(path, cols, samples.metadata, fmt)


def read_samples(path) -> SampleSet:
    cols, meta = read_table(path)
    missing = [c for c in SAMPLE_COLUMNS if c not in cols]
    if missing:
        raise ValueError(f"{path}: missing column(s) {', '.join(missing)}")
    return SampleSet(
        run_id=cols["run_id"].astype(np.int64),
        node_id=cols["node_id"].astype(np.int64),
        personality=cols["personality"].astype(float),
        degree=cols["degree"].astype(float),
        metadata=meta,
    )
