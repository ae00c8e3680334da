"""Dense (batch, sequence, channel) tensors and explicit gather permutations.

Every sparse-pattern rearrangement in this package is realized as an
IndexMap: a table mapping each output (batch, seq) address to the input
address it reads from. Building the table separately from applying it
keeps a single gather engine for both 64-bit real tensors and 8-bit code
tensors, and makes every rearrangement checkable for bijectivity.

A (t, h, w) grid flattens row-major: t outermost, then h, then w.

Seeded random fills use numpy's PCG64 generator (a named, documented
algorithm) so golden files can be regenerated exactly from a seed.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

REAL = "real"  # 64-bit reals
HIF8 = "hif8"  # 8-bit codes, one byte per scalar

_KIND_DTYPES = {REAL: np.float64, HIF8: np.uint8}

OSPT_MAGIC = b"OSPT"
OSPT_VERSION = 1


class CoordinateError(ValueError):
    """A (t, h, w) coordinate lies outside its grid."""


class ShapeError(ValueError):
    """Tensor and map shapes do not agree."""


@dataclass(frozen=True)
class GridShape:
    """A latent grid of t frames by h rows by w columns, with sparse ratio k.

    k is the skip interval of the sparse patterns; it constrains nothing
    here beyond positivity, the pattern builders check divisibility.
    """

    t: int
    h: int
    w: int
    k: int = 1

    def __post_init__(self) -> None:
        for name in ("t", "h", "w", "k"):
            value = getattr(self, name)
            if not isinstance(value, int) or value < 1:
                raise ValueError(f"GridShape.{name} must be a positive integer, got {value!r}")

    @property
    def seq_len(self) -> int:
        return self.t * self.h * self.w

    def flatten_index(self, t: int, h: int, w: int) -> int:
        """Row-major flat sequence index of coordinate (t, h, w)."""
        if not (0 <= t < self.t and 0 <= h < self.h and 0 <= w < self.w):
            raise CoordinateError(f"coordinate ({t}, {h}, {w}) outside grid {self.t}x{self.h}x{self.w}")
        return (t * self.h + h) * self.w + w

    def unflatten_index(self, s: int) -> tuple[int, int, int]:
        """Inverse of flatten_index."""
        if not 0 <= s < self.seq_len:
            raise CoordinateError(f"flat index {s} outside sequence of length {self.seq_len}")
        w = s % self.w
        rest = s // self.w
        return rest // self.h, rest % self.h, w


@dataclass(frozen=True)
class SequenceTensor:
    """A (batch, seq, chan) array of scalars with an explicit scalar kind.

    Rearranges permute (batch, seq) addresses only; channel vectors move
    as wholes and are never modified. Data is frozen after construction.
    """

    data: np.ndarray
    kind: str = REAL

    def __post_init__(self) -> None:
        if self.kind not in _KIND_DTYPES:
            raise ValueError(f"unknown scalar kind {self.kind!r}")
        arr = np.ascontiguousarray(self.data, dtype=_KIND_DTYPES[self.kind])
        if arr.ndim != 3:
            raise ShapeError(f"SequenceTensor data must be (batch, seq, chan), got shape {self.data.shape}")
        arr.flags.writeable = False
        object.__setattr__(self, "data", arr)

    @property
    def batch(self) -> int:
        return self.data.shape[0]

    @property
    def seq(self) -> int:
        return self.data.shape[1]

    @property
    def chan(self) -> int:
        return self.data.shape[2]

    def with_data(self, data: np.ndarray) -> "SequenceTensor":
        return SequenceTensor(data, kind=self.kind)

    @staticmethod
    def zeros(batch: int, seq: int, chan: int, kind: str = REAL) -> "SequenceTensor":
        return SequenceTensor(np.zeros((batch, seq, chan), dtype=_KIND_DTYPES[kind]), kind=kind)


def random_tensor(batch: int, seq: int, chan: int, seed: int) -> SequenceTensor:
    """Standard-normal tensor from a PCG64 stream, drawn in storage order."""
    rng = np.random.Generator(np.random.PCG64(seed))
    return SequenceTensor(rng.standard_normal((batch, seq, chan)))


@dataclass(frozen=True)
class IndexMap:
    """Gather table: output address (b, s) reads input flat address src[b, s].

    Flat input addresses are b_in * in_seq + s_in. A map is a bijection
    when every input address is consumed exactly once; all pattern maps
    in this package are bijections and are checked as such in tests.
    """

    in_batch: int
    in_seq: int
    out_batch: int
    out_seq: int
    src: np.ndarray  # (out_batch, out_seq) int64

    def __post_init__(self) -> None:
        src = np.ascontiguousarray(self.src, dtype=np.int64)
        if src.shape != (self.out_batch, self.out_seq):
            raise ShapeError(f"src shape {src.shape} != ({self.out_batch}, {self.out_seq})")
        if self.in_batch * self.in_seq != self.out_batch * self.out_seq:
            raise ShapeError("IndexMap must preserve the total element count")
        total = self.in_batch * self.in_seq
        if src.size and (src.min() < 0 or src.max() >= total):
            raise ShapeError("source addresses out of range")
        src.flags.writeable = False
        object.__setattr__(self, "src", src)

    @property
    def total(self) -> int:
        return self.in_batch * self.in_seq

    def is_bijection(self) -> bool:
        seen = np.zeros(self.total, dtype=bool)
        seen[self.src.reshape(-1)] = True
        return bool(seen.all())

    def apply(self, x: SequenceTensor) -> SequenceTensor:
        """Gather x through the map; channel vectors are copied verbatim."""
        if (x.batch, x.seq) != (self.in_batch, self.in_seq):
            raise ShapeError(
                f"map expects input ({self.in_batch}, {self.in_seq}), got ({x.batch}, {x.seq})"
            )
        flat = x.data.reshape(self.total, x.chan)
        out = flat[self.src.reshape(-1)].reshape(self.out_batch, self.out_seq, x.chan)
        return SequenceTensor(out, kind=x.kind)

    def compose(self, inner: "IndexMap") -> "IndexMap":
        """Map equal to applying `inner` first, then this map."""
        if (self.in_batch, self.in_seq) != (inner.out_batch, inner.out_seq):
            raise ShapeError("composition shapes do not chain")
        src = inner.src.reshape(-1)[self.src.reshape(-1)]
        return IndexMap(inner.in_batch, inner.in_seq, self.out_batch, self.out_seq,
                        src.reshape(self.out_batch, self.out_seq))

    def invert(self) -> "IndexMap":
        if not self.is_bijection():
            raise ShapeError("only bijective maps can be inverted")
        inv = np.empty(self.total, dtype=np.int64)
        inv[self.src.reshape(-1)] = np.arange(self.total, dtype=np.int64)
        return IndexMap(self.out_batch, self.out_seq, self.in_batch, self.in_seq,
                        inv.reshape(self.in_batch, self.in_seq))

    def same_permutation(self, other: "IndexMap") -> bool:
        return (self.in_batch, self.in_seq, self.out_batch, self.out_seq) == \
            (other.in_batch, other.in_seq, other.out_batch, other.out_seq) and \
            np.array_equal(self.src, other.src)

    @staticmethod
    def identity(batch: int, seq: int) -> "IndexMap":
        src = np.arange(batch * seq, dtype=np.int64).reshape(batch, seq)
        return IndexMap(batch, seq, batch, seq, src)


def rearrange_map(
    batch_axes: Sequence[tuple[str, int]],
    seq_axes: Sequence[tuple[str, int]],
    out_batch: Sequence[str],
    out_seq: Sequence[str],
) -> IndexMap:
    """IndexMap for a pure axis-factorization rearrangement.

    batch_axes / seq_axes list the named factors of the input batch and
    sequence dimensions in row-major nesting order (outermost first);
    out_batch / out_seq give the output nesting as a permutation of the
    same names. This is the one permutation engine behind every pattern
    map in the package.
    """
    axes = list(batch_axes) + list(seq_axes)
    names = [name for name, _ in axes]
    sizes = {name: size for name, size in axes}
    if len(set(names)) != len(names):
        raise ValueError("duplicate axis names")
    out_names = list(out_batch) + list(out_seq)
    if sorted(out_names) != sorted(names):
        raise ValueError("output axes must be a permutation of input axes")

    in_batch = int(np.prod([s for _, s in batch_axes], dtype=np.int64)) if batch_axes else 1
    in_seq = int(np.prod([s for _, s in seq_axes], dtype=np.int64)) if seq_axes else 1
    ob = int(np.prod([sizes[n] for n in out_batch], dtype=np.int64)) if out_batch else 1
    os_ = int(np.prod([sizes[n] for n in out_seq], dtype=np.int64)) if out_seq else 1

    grid = np.arange(in_batch * in_seq, dtype=np.int64).reshape([size for _, size in axes])
    perm = [names.index(n) for n in out_names]
    src = grid.transpose(perm).reshape(ob, os_)
    return IndexMap(in_batch, in_seq, ob, os_, src)


def write_ospt(path: str | Path, x: SequenceTensor) -> None:
    """Write the binary tensor format: magic "OSPT", version byte, then
    batch/seq/chan as u32 little-endian, then float64 little-endian data
    in storage order. Only real-kind tensors are stored."""
    if x.kind != REAL:
        raise ValueError("OSPT files store real-kind tensors")
    with open(path, "wb") as f:
        f.write(OSPT_MAGIC)
        f.write(bytes([OSPT_VERSION]))
        f.write(struct.pack("<III", x.batch, x.seq, x.chan))
        f.write(x.data.astype("<f8").tobytes())


def read_ospt(path: str | Path) -> SequenceTensor:
    with open(path, "rb") as f:
        magic = f.read(4)
        if magic != OSPT_MAGIC:
            raise ValueError(f"bad magic {magic!r}, expected {OSPT_MAGIC!r}")
        version = f.read(1)
        if version != bytes([OSPT_VERSION]):
            raise ValueError(f"unsupported OSPT version {version!r}")
        batch, seq, chan = struct.unpack("<III", f.read(12))
        payload = f.read(8 * batch * seq * chan)
        data = np.frombuffer(payload, dtype="<f8").reshape(batch, seq, chan)
    return SequenceTensor(data.astype(np.float64))
