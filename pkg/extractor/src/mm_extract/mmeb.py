"""Writer for the engine's MMEB binary embedding format.

Implements the documented layout directly (magic "MMEB", version u32,
modality code u8, rows u32, cols u32, little-endian, then row-major float32
payload); the engine's own reader is the source of truth, exercised through
its `cmafuse validate` CLI.
"""

from __future__ import annotations

import struct

import numpy as np

MAGIC = b"MMEB"
FORMAT_VERSION = 1
HEADER = struct.Struct("<4sIBII")

EXPECTED_COLS = {"T": 768, "O": 768, "A": 1024, "V": 768}
MAX_VIDEO_FRAMES = 100


def write_embedding(path, modality: str, values: np.ndarray) -> None:
    if modality not in EXPECTED_COLS:
        raise ValueError(f"unknown modality {modality!r}")
    arr = np.ascontiguousarray(values, dtype="<f4")
    if arr.ndim == 1:
        arr = arr[None, :]
    rows, cols = arr.shape
    if cols != EXPECTED_COLS[modality]:
        raise ValueError(f"{modality} must be {EXPECTED_COLS[modality]} wide, got {cols}")
    if modality == "V":
        if not 1 <= rows <= MAX_VIDEO_FRAMES:
            raise ValueError(f"video rows {rows} outside [1, {MAX_VIDEO_FRAMES}]")
    elif rows != 1:
        raise ValueError(f"{modality} must be a single row, got {rows}")
    if not np.isfinite(arr).all():
        raise ValueError("refusing to write non-finite embedding values")
    with open(path, "wb") as fh:
        fh.write(HEADER.pack(MAGIC, FORMAT_VERSION, ord(modality), rows, cols))
        fh.write(arr.tobytes())
