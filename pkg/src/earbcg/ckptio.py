"""Checkpoint archive format shared by the trainable models.

A checkpoint is a pair of files under one base path: ``<base>.npz``
holding named float64 tensors, and ``<base>.json`` holding a schema
version, a free-form hyperparameter block, and a shape tag for every
tensor.  Loading verifies each tag against the stored array so a stale
or truncated archive fails loudly instead of propagating shape bugs
into inference.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

SCHEMA_VERSION = 1

__all__ = ["write_archive", "read_archive", "SCHEMA_VERSION"]


def _paths(base) -> tuple[Path, Path]:
    base = Path(base)
    if base.suffix in (".npz", ".json"):
        base = base.with_suffix("")
    return base.with_suffix(".npz"), base.with_suffix(".json")


def write_archive(base, tensors: dict, hyperparameters: dict, kind: str) -> None:
    """Persist named tensors plus a JSON hyperparameter block."""
    npz_path, json_path = _paths(base)
    arrays = {name: np.asarray(t, dtype=np.float64) for name, t in tensors.items()}
    np.savez(npz_path, **arrays)
    meta = {
        "schema_version": SCHEMA_VERSION,
        "kind": kind,
        "hyperparameters": hyperparameters,
        "tensors": {name: list(a.shape) for name, a in arrays.items()},
    }
    json_path.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")


def read_archive(base, expected_kind: str | None = None) -> tuple[dict, dict]:
    """Load tensors and metadata, verifying shape tags and kind."""
    npz_path, json_path = _paths(base)
    meta = json.loads(json_path.read_text())
    if meta.get("schema_version") != SCHEMA_VERSION:
        raise ValueError(
            f"unsupported checkpoint schema {meta.get('schema_version')!r}")
    if expected_kind is not None and meta.get("kind") != expected_kind:
        raise ValueError(
            f"checkpoint kind {meta.get('kind')!r}, expected {expected_kind!r}")
    with np.load(npz_path) as archive:
        arrays = {name: archive[name].astype(np.float64) for name in archive.files}
    tags = meta.get("tensors", {})
    if set(tags) != set(arrays):
        missing = set(tags).symmetric_difference(arrays)
        raise ValueError(f"checkpoint tensor set mismatch: {sorted(missing)}")
    for name, shape in tags.items():
        if list(arrays[name].shape) != list(shape):
            raise ValueError(
                f"checkpoint tensor {name!r} has shape {arrays[name].shape}, "
                f"tagged {tuple(shape)}")
    return arrays, meta
