"""Any-resolution support: pad h and w up to multiples of k^2 and track a
1-D validity mask over the flattened padded sequence.

Padding is appended at the end of the h and w axes only, so tokens at the
same spatial position always land in the same subsequence regardless of
the original resolution. After a pattern map is applied the mask stays
1-D (one flag per (subsequence, position)); no 2-D mask is ever required.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .gridseq import GridShape, SequenceTensor, ShapeError
from .skiparse import SparsePattern, pattern_map


def _ceil_to(value: int, multiple: int) -> int:
    return ((value + multiple - 1) // multiple) * multiple


@dataclass(frozen=True)
class PaddedGrid:
    """Original grid, its padded counterpart, and the flat validity mask.

    mask[s] is True for real tokens (row < original.h and col < original.w)
    and False for padding. embedding[i] is the padded flat position of the
    i-th original token; it is an index vector rather than an IndexMap
    because padding is not a permutation.
    """

    original: GridShape
    padded: GridShape
    mask: np.ndarray  # (padded seq_len,) bool
    embedding: np.ndarray  # (original seq_len,) int64

    def __post_init__(self) -> None:
        for name in ("mask", "embedding"):
            arr = getattr(self, name)
            arr = np.ascontiguousarray(arr)
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)

    @property
    def trivial(self) -> bool:
        """True when no padding was needed (mask would be None downstream)."""
        return self.padded == self.original

    def mask_or_none(self) -> np.ndarray | None:
        return None if self.trivial else self.mask


def pad_grid(g: GridShape) -> PaddedGrid:
    """Pad h and w to the nearest multiple of k^2 (t is never padded)."""
    k2 = g.k * g.k
    padded = GridShape(g.t, _ceil_to(g.h, k2), _ceil_to(g.w, k2), g.k)
    rows = np.arange(padded.h) < g.h
    cols = np.arange(padded.w) < g.w
    plane = rows[:, None] & cols[None, :]
    mask = np.tile(plane.reshape(-1), g.t)
    embedding = np.flatnonzero(mask).astype(np.int64)
    return PaddedGrid(g, padded, mask, embedding)


def pad_tensor(x: SequenceTensor, pg: PaddedGrid, pad_value: float = 0.0,
               pad_fill: np.ndarray | None = None) -> SequenceTensor:
    """Embed an original-grid tensor into the padded grid.

    Pad positions take `pad_value` (or rows from `pad_fill`, used by tests
    to prove that results never depend on pad contents).
    """
    if x.seq != pg.original.seq_len:
        raise ShapeError(f"expected seq {pg.original.seq_len}, got {x.seq}")
    out = np.full((x.batch, pg.padded.seq_len, x.chan), pad_value, dtype=np.float64)
    if pad_fill is not None:
        out[:, ~pg.mask, :] = pad_fill
    out[:, pg.embedding, :] = x.data
    return SequenceTensor(out, kind=x.kind)


def strip_padding(x: SequenceTensor, pg: PaddedGrid) -> SequenceTensor:
    """Keep real tokens only, in original order (inverse of pad_tensor)."""
    if x.seq != pg.padded.seq_len:
        raise ShapeError(f"expected padded seq {pg.padded.seq_len}, got {x.seq}")
    return x.with_data(x.data[:, pg.embedding, :])


def subsequence_mask(pg: PaddedGrid, pattern: SparsePattern) -> np.ndarray:
    """Validity per (subsequence, position): the flat mask permuted by the
    pattern map. A position is valid iff its source token is real."""
    m = pattern_map(pg.padded, pattern, batch=1)
    return pg.mask[m.src.reshape(-1)].reshape(m.out_batch, m.out_seq)


def write_mask(path: str | Path, pg: PaddedGrid) -> None:
    """Mask file: padded grid dims (t, h, w, k) as u32 little-endian, then
    one byte per flat padded token (0 pad / 1 real)."""
    with open(path, "wb") as f:
        f.write(struct.pack("<IIII", pg.padded.t, pg.padded.h, pg.padded.w, pg.padded.k))
        f.write(pg.mask.astype(np.uint8).tobytes())


def read_mask(path: str | Path) -> tuple[GridShape, np.ndarray]:
    with open(path, "rb") as f:
        t, h, w, k = struct.unpack("<IIII", f.read(16))
        g = GridShape(t, h, w, k)
        mask = np.frombuffer(f.read(g.seq_len), dtype=np.uint8).astype(bool)
    return g, mask
