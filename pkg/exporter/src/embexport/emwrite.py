"""Writer for the binary per-layer embedding store.

Layout, little-endian: magic ``LPEM``, version u32=1, n_layers u32,
n_rows u32, dim u32, then n_rows length-prefixed UTF-8 ids (u16 length),
then n_layers x n_rows x dim float32, layer-major.  Written atomically
(temp file, then rename).
"""

from __future__ import annotations

import os
import struct
from typing import Sequence

import numpy as np

MAGIC = b"LPEM"
VERSION = 1


def write_store(ids: Sequence[str], layers: np.ndarray, path) -> None:
    layers = np.asarray(layers, dtype="<f4")
    if layers.ndim != 3:
        raise ValueError(f"layers must be (n_layers, n_rows, dim), got {layers.shape}")
    if layers.shape[1] != len(ids):
        raise ValueError(f"{layers.shape[1]} rows per layer but {len(ids)} ids")
    if len(set(ids)) != len(ids):
        raise ValueError("ids must be unique")
    if not np.all(np.isfinite(layers)):
        raise ValueError("embedding payload contains NaN or Inf")

    tmp = f"{path}.tmp"
    with open(tmp, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<IIII", VERSION, layers.shape[0], layers.shape[1], layers.shape[2]))
        for uid in ids:
            raw = uid.encode("utf-8")
            if len(raw) > 0xFFFF:
                raise ValueError(f"id too long to encode: {uid[:32]!r}...")
            f.write(struct.pack("<H", len(raw)))
            f.write(raw)
        f.write(np.ascontiguousarray(layers).tobytes())
    os.replace(tmp, path)
