"""On-disk formats: binary feature tables, checkpoints, and the text catalog/interaction files.

Feature file (little-endian): magic ``MMF1``, u32 dim, u64 row_count, then
row_count records of (u64 item_id, dim x f32).

Checkpoint file: magic ``MMCK``, u32 version, u32 blob count, then named
parameter blobs (u32 name length, name bytes, u32 ndim, u32 dims..., f32 data),
followed by an optional optimizer-state section.
"""

from __future__ import annotations

import os
import struct
from typing import Iterable, Mapping

import numpy as np

from .autodiff import Parameter
from .optim import AdamState

FEATURE_MAGIC = b"MMF1"
CHECKPOINT_MAGIC = b"MMCK"
CHECKPOINT_VERSION = 1


class FeatureFormatError(ValueError):
    """Raised for malformed binary feature files."""


class CheckpointFormatError(ValueError):
    """Raised for malformed checkpoint files."""


def write_feature_file(path: str, dim: int, rows: Iterable[tuple[int, np.ndarray]]) -> int:
    """Write (item_id, vector) rows; returns the row count. Write is atomic."""
    rows = list(rows)
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as fh:
        fh.write(FEATURE_MAGIC)
        fh.write(struct.pack("<IQ", dim, len(rows)))
        for item_id, vec in rows:
            vec = np.asarray(vec, dtype="<f4")
            if vec.shape != (dim,):
                raise FeatureFormatError(f"row for item {item_id} has {vec.size} values, expected {dim}")
            fh.write(struct.pack("<Q", int(item_id)))
            fh.write(vec.tobytes())
    os.replace(tmp, path)
    return len(rows)


def read_feature_file(path: str) -> tuple[int, dict[int, np.ndarray]]:
    """Read a binary feature file into (dim, {item_id: float32 vector})."""
    with open(path, "rb") as fh:
        head = fh.read(16)
        if len(head) < 16 or head[:4] != FEATURE_MAGIC:
            raise FeatureFormatError(f"{path}: malformed header (bad magic)")
        dim, count = struct.unpack("<IQ", head[4:])
        if dim == 0:
            raise FeatureFormatError(f"{path}: header dim is zero")
        rows: dict[int, np.ndarray] = {}
        rec_bytes = 8 + 4 * dim
        for _ in range(count):
            rec = fh.read(rec_bytes)
            if len(rec) < rec_bytes:
                raise FeatureFormatError(f"{path}: truncated row")
            (item_id,) = struct.unpack("<Q", rec[:8])
            vec = np.frombuffer(rec[8:], dtype="<f4").copy()
            if not np.all(np.isfinite(vec)):
                raise FeatureFormatError(f"{path}: non-finite value in row for item {item_id}")
            if item_id in rows:
                raise FeatureFormatError(f"{path}: duplicate row for item {item_id}")
            rows[item_id] = vec
        if fh.read(1):
            raise FeatureFormatError(f"{path}: trailing bytes after {count} rows")
    return dim, rows


def write_catalog_file(path: str, items: Iterable[tuple[int, bool]]) -> None:
    """One line per item: ``item_id<TAB>has_image``."""
    tmp = f"{path}.tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        for item_id, has_image in items:
            fh.write(f"{int(item_id)}\t{1 if has_image else 0}\n")
    os.replace(tmp, path)


def read_catalog_file(path: str) -> list[tuple[int, bool]]:
    out: list[tuple[int, bool]] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 2 or parts[1] not in ("0", "1"):
                raise ValueError(f"{path}:{lineno}: expected 'item_id<TAB>0|1', got {line!r}")
            out.append((int(parts[0]), parts[1] == "1"))
    return out


def write_interactions_file(path: str, sequences: Iterable[tuple[int, list[int]]]) -> None:
    """One line per user: ``user_id<TAB>item,item,...``."""
    tmp = f"{path}.tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        for user_id, items in sequences:
            fh.write(f"{int(user_id)}\t{','.join(str(int(i)) for i in items)}\n")
    os.replace(tmp, path)


def read_interactions_file(path: str) -> list[tuple[int, list[int]]]:
    out: list[tuple[int, list[int]]] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise ValueError(f"{path}:{lineno}: expected 'user_id<TAB>item,item,...'")
            items = [int(tok) for tok in parts[1].split(",") if tok]
            out.append((int(parts[0]), items))
    return out


def save_checkpoint(path: str, params: Mapping[str, Parameter],
                    opt_state: AdamState | None = None) -> None:
    """Persist named parameters (f32) and, when given, the Adam state."""
    names = list(params.keys())
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<II", CHECKPOINT_VERSION, len(names)))
        for name in names:
            _write_blob(fh, name, params[name].data)
        if opt_state is None:
            fh.write(struct.pack("<B", 0))
        else:
            fh.write(struct.pack("<B", 1))
            tracked = [n for n in names if n in opt_state.t]
            fh.write(struct.pack("<I", len(tracked)))
            for name in tracked:
                nb = name.encode("utf-8")
                fh.write(struct.pack("<I", len(nb)))
                fh.write(nb)
                fh.write(struct.pack("<Q", opt_state.t[name]))
                _write_blob(fh, f"{name}.m", opt_state.m[name])
                _write_blob(fh, f"{name}.v", opt_state.v[name])
    os.replace(tmp, path)


def load_checkpoint(path: str) -> tuple[dict[str, np.ndarray], AdamState | None]:
    """Load parameter arrays (float32) plus the optimizer state if present."""
    with open(path, "rb") as fh:
        head = fh.read(12)
        if len(head) < 12 or head[:4] != CHECKPOINT_MAGIC:
            raise CheckpointFormatError(f"{path}: malformed header (bad magic)")
        version, count = struct.unpack("<II", head[4:])
        if version != CHECKPOINT_VERSION:
            raise CheckpointFormatError(f"{path}: unsupported version {version}")
        arrays: dict[str, np.ndarray] = {}
        for _ in range(count):
            name, arr = _read_blob(fh, path)
            arrays[name] = arr
        flag = fh.read(1)
        if not flag:
            raise CheckpointFormatError(f"{path}: missing optimizer-state flag")
        state: AdamState | None = None
        if flag[0] == 1:
            state = AdamState()
            (n_tracked,) = struct.unpack("<I", fh.read(4))
            for _ in range(n_tracked):
                (nlen,) = struct.unpack("<I", fh.read(4))
                name = fh.read(nlen).decode("utf-8")
                (t,) = struct.unpack("<Q", fh.read(8))
                _, m = _read_blob(fh, path)
                _, v = _read_blob(fh, path)
                state.t[name] = t
                state.m[name] = m
                state.v[name] = v
    return arrays, state


def _write_blob(fh, name: str, arr: np.ndarray) -> None:
    nb = name.encode("utf-8")
    # note: ascontiguousarray would promote 0-d arrays to 1-d; tobytes() below
    # already emits C order for any layout
    a = np.asarray(arr, dtype="<f4")
    fh.write(struct.pack("<I", len(nb)))
    fh.write(nb)
    fh.write(struct.pack("<I", a.ndim))
    for s in a.shape:
        fh.write(struct.pack("<I", s))
    fh.write(a.tobytes())


def _read_blob(fh, path: str) -> tuple[str, np.ndarray]:
    raw = fh.read(4)
    if len(raw) < 4:
        raise CheckpointFormatError(f"{path}: truncated blob header")
    (nlen,) = struct.unpack("<I", raw)
    name = fh.read(nlen).decode("utf-8")
    (ndim,) = struct.unpack("<I", fh.read(4))
    shape = tuple(struct.unpack("<I", fh.read(4))[0] for _ in range(ndim))
    nbytes = 4 * int(np.prod(shape)) if shape else 4
    buf = fh.read(nbytes)
    if len(buf) < nbytes:
        raise CheckpointFormatError(f"{path}: truncated blob data for {name}")
    arr = np.frombuffer(buf, dtype="<f4").reshape(shape).copy()
    return name, arr
