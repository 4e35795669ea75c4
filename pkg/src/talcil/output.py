"""Deterministic, atomic result emission.

Every file is written to a temp name in the target directory and then
renamed into place, so readers never observe a half-written file.  CSV
cells are formatted with repr (shortest round-trip) and records carry no
timestamps: identical inputs give byte-identical outputs.
"""

from __future__ import annotations

import hashlib
import json
import os
from pathlib import Path

import numpy as np

__all__ = [
    "fmt_cell",
    "atomic_write_text",
    "write_csv",
    "write_jsonl",
    "spec_digest",
    "write_manifest",
]


def fmt_cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, np.integer):
        return str(int(value))
    return str(value)


def atomic_write_text(path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + f".tmp-{os.getpid()}")
    tmp.write_text(text)
    os.replace(tmp, path)


def write_csv(path, header, rows) -> None:
    lines = [",".join(header)]
    lines.extend(",".join(fmt_cell(cell) for cell in row) for row in rows)
    atomic_write_text(path, "\n".join(lines) + "\n")


def write_jsonl(path, records) -> None:
    lines = [json.dumps(rec, sort_keys=True) for rec in records]
    atomic_write_text(path, "\n".join(lines) + ("\n" if lines else ""))


def _canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def spec_digest(spec_dict: dict) -> str:
    return hashlib.sha256(_canonical_json(spec_dict).encode()).hexdigest()


def write_manifest(directory, spec_dict: dict, seeds, version: str) -> None:
    """Reproducibility record: the fully resolved spec (defaults included),
    its hash, the seed list and the library version."""
    manifest = {
        "spec": spec_dict,
        "spec_sha256": spec_digest(spec_dict),
        "seeds": list(seeds),
        "version": version,
    }
    atomic_write_text(
        Path(directory) / "manifest.json",
        json.dumps(manifest, sort_keys=True, indent=2) + "\n",
    )
