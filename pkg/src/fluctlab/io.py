"""Run persistence: CSV tables, binary snapshots and fields, manifests with hashes.

Binary layouts are little-endian:

* snapshot: int64 N, int64 d, float64 t, then N*d float64 positions (row major);
* field: int64 d, int64 M, float64 L, float64 t, then M^d float64 values.

Each binary file gets a JSON sidecar describing it.  Floats in CSV files are
written with ``repr`` (shortest round-trip form), so equal arrays give equal
bytes on every platform.
"""

from __future__ import annotations

import csv
import hashlib
import json
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .grid import PeriodicGrid

MANIFEST = "manifest.json"
VERDICTS = "verdict.json"

_SNAP_HEAD = struct.Struct("<qqd")
_FIELD_HEAD = struct.Struct("<qqdd")


def _cell(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_csv(path: str | Path, columns, rows) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_cell(v) for v in r])
    return path


def read_csv(path: str | Path) -> tuple[list[str], list[list[str]]]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


def write_dat(path: str | Path, columns, rows) -> Path:
    """Whitespace-delimited table for gnuplot; strings are double-quoted."""
    path = Path(path)
    with open(path, "w") as fh:
        fh.write("# " + " ".join(columns) + "\n")
        for r in rows:
            fh.write(" ".join(f'"{v}"' if isinstance(v, str) else _cell(v) for v in r) + "\n")
    return path


def _sidecar(path: Path, meta: dict) -> None:
    path.with_suffix(path.suffix + ".json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")


def write_snapshot(path: str | Path, X: np.ndarray, t: float, **meta) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    X = np.ascontiguousarray(X, dtype="<f8")
    N, d = X.shape
    with open(path, "wb") as fh:
        fh.write(_SNAP_HEAD.pack(N, d, float(t)))
        fh.write(X.tobytes())
    _sidecar(path, {"kind": "snapshot", "N": int(N), "d": int(d), "t": float(t),
                    "layout": "int64 N, int64 d, float64 t, float64[N*d] positions",
                    "byteorder": "little", **meta})
    return path


def read_snapshot(path: str | Path) -> tuple[np.ndarray, float]:
    raw = Path(path).read_bytes()
    N, d, t = _SNAP_HEAD.unpack_from(raw)
    X = np.frombuffer(raw, dtype="<f8", offset=_SNAP_HEAD.size, count=N * d)
    return X.reshape(N, d).astype(float), t


def write_field(path: str | Path, values: np.ndarray, grid: PeriodicGrid, t: float, **meta) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    v = np.ascontiguousarray(values, dtype="<f8")
    if v.shape != grid.shape:
        raise ValueError("field shape does not match the grid")
    with open(path, "wb") as fh:
        fh.write(_FIELD_HEAD.pack(grid.d, grid.M, float(grid.L), float(t)))
        fh.write(v.tobytes())
    _sidecar(path, {"kind": "field", "d": grid.d, "M": grid.M, "L": float(grid.L), "t": float(t),
                    "layout": "int64 d, int64 M, float64 L, float64 t, float64[M^d] values",
                    "byteorder": "little", **meta})
    return path


def read_field(path: str | Path) -> tuple[np.ndarray, PeriodicGrid, float]:
    raw = Path(path).read_bytes()
    d, M, L, t = _FIELD_HEAD.unpack_from(raw)
    grid = PeriodicGrid(d, L, M)
    v = np.frombuffer(raw, dtype="<f8", offset=_FIELD_HEAD.size, count=M**d)
    return v.reshape(grid.shape).astype(float), grid, t


def sha256_file(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def hash_artifacts(run_dir: str | Path) -> dict[str, str]:
    """sha256 of every file under run_dir except the manifest, keyed by relative path."""
    root = Path(run_dir)
    return {p.relative_to(root).as_posix(): sha256_file(p)
            for p in sorted(root.rglob("*")) if p.is_file() and p.name != MANIFEST}


@dataclass
class RunManifest:
    """What was run and what it produced.

    ``job`` (command plus parameters) and ``config`` are enough to rerun;
    timestamps are informational and never enter an artifact.
    """

    job: dict
    config: dict | None
    seed_plan: dict | None
    code_version: str
    started: str = ""
    finished: str = ""
    artifacts: dict[str, str] = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True) + "\n"

    def write(self, run_dir: str | Path) -> Path:
        path = Path(run_dir) / MANIFEST
        path.write_text(self.to_json())
        return path

    @classmethod
    def load(cls, path: str | Path) -> RunManifest:
        path = Path(path)
        if path.is_dir():
            path = path / MANIFEST
        data = json.loads(path.read_text())
        return cls(**data)


def verify_artifacts(run_dir: str | Path, manifest: RunManifest) -> tuple[list[str], list[str]]:
    """(missing, mismatched) artifact paths relative to run_dir."""
    root = Path(run_dir)
    missing, bad = [], []
    for rel, digest in sorted(manifest.artifacts.items()):
        p = root / rel
        if not p.is_file():
            missing.append(rel)
        elif sha256_file(p) != digest:
            bad.append(rel)
    return missing, bad
