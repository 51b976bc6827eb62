"""Bit-exact binary store for one feature matrix per file.

Layout (all integers little-endian):

    bytes 0-3    magic "ATFS" (ASCII)
    bytes 4-7    u32 version (currently 1)
    bytes 8-11   u32 rows
    bytes 12-15  u32 cols
    bytes 16-    rows*cols float32 values, row-major, little-endian

A sidecar JSON-lines manifest (one object per line) ties files to segments:
segment_id, subject_id, modality, path (relative to the manifest), rows,
cols, sentiment, depression.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .errors import DataFormatError, NumericalError

MAGIC = b"ATFS"
VERSION = 1
HEADER = struct.Struct("<4sIII")

MANIFEST_NAME = "manifest.jsonl"
MANIFEST_KEYS = (
    "segment_id",
    "subject_id",
    "modality",
    "path",
    "rows",
    "cols",
    "sentiment",
    "depression",
)


def write_atfs(matrix: np.ndarray, path) -> None:
    m = np.ascontiguousarray(matrix, dtype="<f4")
    if m.ndim != 2:
        raise DataFormatError(f"feature matrix must be 2-d, got shape {m.shape}")
    if not np.isfinite(m).all():
        raise NumericalError(f"refusing to write non-finite values to {path}")
    rows, cols = m.shape
    with open(path, "wb") as fh:
        fh.write(HEADER.pack(MAGIC, VERSION, rows, cols))
        fh.write(m.tobytes())


def read_atfs(path) -> np.ndarray:
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < HEADER.size:
        raise DataFormatError(f"{path}: file shorter than the {HEADER.size}-byte header")
    magic, version, rows, cols = HEADER.unpack_from(raw, 0)
    if magic != MAGIC:
        raise DataFormatError(f"{path}: bad magic {magic!r} at offset 0")
    if version != VERSION:
        raise DataFormatError(f"{path}: unsupported version {version} at offset 4")
    expected = HEADER.size + 4 * rows * cols
    if len(raw) != expected:
        raise DataFormatError(
            f"{path}: body length {len(raw) - HEADER.size} does not match "
            f"header {rows}x{cols} ({expected - HEADER.size} bytes expected)"
        )
    body = np.frombuffer(raw, dtype="<f4", offset=HEADER.size)
    return body.reshape(rows, cols).copy()


def write_manifest(entries: list[dict], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for entry in entries:
            missing = [k for k in MANIFEST_KEYS if k not in entry]
            if missing:
                raise DataFormatError(f"manifest entry missing keys {missing}")
            fh.write(json.dumps({k: entry[k] for k in MANIFEST_KEYS}, sort_keys=True))
            fh.write("\n")


def read_manifest(path) -> list[dict]:
    path = Path(path)
    if not path.exists():
        raise DataFormatError(f"manifest not found: {path}")
    entries = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataFormatError(f"{path}:{lineno}: invalid JSON ({exc})") from exc
            missing = [k for k in MANIFEST_KEYS if k not in obj]
            if missing:
                raise DataFormatError(f"{path}:{lineno}: missing keys {missing}")
            entries.append(obj)
    return entries
