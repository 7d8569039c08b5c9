"""Binary per-layer embedding files.

One file holds every layer of a fixed-width embedding matrix aligned to an
ordered utterance-id list.  Layout, all little-endian:

    magic "LPEM" | version u32=1 | n_layers u32 | n_rows u32 | dim u32
    id block: n_rows x (u16 byte length + UTF-8 id)
    payload: n_layers x n_rows x dim float32, layer-major, row-major

Payloads are float32 on disk; consumers upcast to float64 for math.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import Sequence

import numpy as np

MAGIC = b"LPEM"
VERSION = 1


class EmbeddingFormatError(ValueError):
    """File is not a valid embedding store."""


class EmbeddingValueError(ValueError):
    """Store contents violate an invariant (shape, ids, finiteness)."""


@dataclass(frozen=True)
class EmbeddingStore:
    ids: tuple[str, ...]
    layers: np.ndarray  # (n_layers, n_rows, dim) float32

    def __post_init__(self) -> None:
        if self.layers.ndim != 3:
            raise EmbeddingValueError(
                f"layers must be (n_layers, n_rows, dim), got shape {self.layers.shape}"
            )
        if self.layers.shape[1] != len(self.ids):
            raise EmbeddingValueError(
                f"{self.layers.shape[1]} rows per layer but {len(self.ids)} ids"
            )
        if len(set(self.ids)) != len(self.ids):
            raise EmbeddingValueError("utterance ids must be unique")

    @property
    def n_layers(self) -> int:
        return self.layers.shape[0]

    @property
    def n_rows(self) -> int:
        return self.layers.shape[1]

    @property
    def dim(self) -> int:
        return self.layers.shape[2]

    def layer(self, layer_index: int) -> np.ndarray:
        """Matrix for 1-based ``layer_index`` upcast to float64."""
        if not 1 <= layer_index <= self.n_layers:
            raise EmbeddingValueError(
                f"layer {layer_index} out of range 1..{self.n_layers}"
            )
        return self.layers[layer_index - 1].astype(np.float64)


def store_from_matrices(ids: Sequence[str], matrices: Sequence[np.ndarray]) -> EmbeddingStore:
    """Stack per-layer matrices, refusing mismatched shapes."""
    if not matrices:
        raise EmbeddingValueError("at least one layer matrix is required")
    shapes = {np.asarray(m).shape for m in matrices}
    if len(shapes) != 1:
        raise EmbeddingValueError(f"layer matrices disagree in shape: {sorted(shapes)}")
    stacked = np.stack([np.asarray(m, dtype=np.float32) for m in matrices])
    return EmbeddingStore(tuple(ids), stacked)


def write_embeddings(store: EmbeddingStore, path) -> None:
    encoded_ids = []
    for uid in store.ids:
        raw = uid.encode("utf-8")
        if len(raw) > 0xFFFF:
            raise EmbeddingValueError(f"id too long to encode: {uid[:32]!r}...")
        encoded_ids.append(raw)
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<IIII", VERSION, store.n_layers, store.n_rows, store.dim))
        for raw in encoded_ids:
            f.write(struct.pack("<H", len(raw)))
            f.write(raw)
        f.write(np.ascontiguousarray(store.layers, dtype="<f4").tobytes())


def read_embeddings(path) -> EmbeddingStore:
    with open(path, "rb") as f:
        data = f.read()
    if data[:4] != MAGIC:
        raise EmbeddingFormatError(f"{path}: bad magic {data[:4]!r}")
    if len(data) < 20:
        raise EmbeddingFormatError(f"{path}: truncated header")
    version, n_layers, n_rows, dim = struct.unpack_from("<IIII", data, 4)
    if version != VERSION:
        raise EmbeddingFormatError(f"{path}: unsupported version {version}")
    offset = 20
    ids = []
    for _ in range(n_rows):
        if offset + 2 > len(data):
            raise EmbeddingFormatError(f"{path}: truncated id block")
        (length,) = struct.unpack_from("<H", data, offset)
        offset += 2
        if offset + length > len(data):
            raise EmbeddingFormatError(f"{path}: truncated id block")
        ids.append(data[offset : offset + length].decode("utf-8"))
        offset += length
    expected = n_layers * n_rows * dim * 4
    if len(data) - offset != expected:
        raise EmbeddingFormatError(
            f"{path}: payload is {len(data) - offset} bytes, header declares {expected}"
        )
    payload = np.frombuffer(data, dtype="<f4", offset=offset)
    layers = payload.reshape(n_layers, n_rows, dim).copy()
    if not np.all(np.isfinite(layers)):
        raise EmbeddingValueError(f"{path}: payload contains NaN or Inf")
    return EmbeddingStore(tuple(ids), layers)


def align(store: EmbeddingStore, ids: Sequence[str]) -> dict[str, int]:
    """Map each requested id to its store row; extra store rows are fine."""
    row_of = {uid: i for i, uid in enumerate(store.ids)}
    missing = [uid for uid in ids if uid not in row_of]
    if missing:
        shown = ", ".join(repr(i) for i in missing[:10])
        more = "" if len(missing) <= 10 else f" (+{len(missing) - 10} more)"
        raise EmbeddingValueError(f"ids missing from embedding store: {shown}{more}")
    return {uid: row_of[uid] for uid in ids}
