"""Skip-sparse 2-D rearrangement algebra.

Two fixed patterns split a (t, h, w) grid into k*k equal-length
subsequences, concatenated along the batch axis:

  token-wise (TSA): subsequence (p, q) takes every k-th row and column,
      p = row mod k, q = col mod k (pixel-unshuffle style striding);
  group-wise (GSA): subsequence (p1, q1) takes groups of k adjacent rows
      and columns, skipping k groups, p1 = (row // k) mod k,
      q1 = (col // k) mod k (patch-unshuffle style).

Alternating the two patterns lets any two tokens interact within at most
two attention operations; `reachability_hops` verifies that claim by
exhaustive pair enumeration.

All maps are built with the shared axis-factorization engine in
`gridseq.rearrange_map`, with the enlarged batch always nested
(pattern-row, pattern-col, batch), pattern-row outermost, so that layouts
agree across implementations.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .gridseq import GridShape, IndexMap, rearrange_map


class PatternError(ValueError):
    """The grid does not satisfy the pattern's divisibility requirement."""


class ScheduleError(ValueError):
    """Invalid layer-schedule parameters."""


class SparsePattern(Enum):
    ORIGINAL = "original"
    TOKEN_WISE = "tsa"
    GROUP_WISE = "gsa"


class LayerKind(Enum):
    FULL = "full"
    TSA = "tsa"
    GSA = "gsa"


def _require_tsa(g: GridShape) -> None:
    if g.h % g.k or g.w % g.k:
        raise PatternError(
            f"token-wise pattern needs h and w divisible by k={g.k}, got {g.h}x{g.w}"
        )


def _require_gsa(g: GridShape) -> None:
    k2 = g.k * g.k
    if g.h % k2 or g.w % k2:
        raise PatternError(
            f"group-wise pattern needs h and w divisible by k^2={k2}, got {g.h}x{g.w}"
        )


def orig_to_tsa(g: GridShape, batch: int = 1) -> IndexMap:
    """Original layout -> token-wise layout (batch grows k*k, seq shrinks k*k)."""
    _require_tsa(g)
    k = g.k
    return rearrange_map(
        [("b", batch)],
        [("t", g.t), ("h", g.h // k), ("p", k), ("w", g.w // k), ("q", k)],
        ["p", "q", "b"],
        ["t", "h", "w"],
    )


def tsa_to_orig(g: GridShape, batch: int = 1) -> IndexMap:
    _require_tsa(g)
    k = g.k
    return rearrange_map(
        [("p", k), ("q", k), ("b", batch)],
        [("t", g.t), ("h", g.h // k), ("w", g.w // k)],
        ["b"],
        ["t", "h", "p", "w", "q"],
    )


def orig_to_gsa(g: GridShape, batch: int = 1) -> IndexMap:
    """Original layout -> group-wise layout. Needs h, w divisible by k^2 so
    the fused (t, h // k^2) axis splits cleanly per frame."""
    _require_gsa(g)
    k = g.k
    k2 = k * k
    return rearrange_map(
        [("b", batch)],
        [("txh", g.t * g.h // k2), ("p1", k), ("p2", k), ("wg", g.w // k2), ("q1", k), ("q2", k)],
        ["p1", "q1", "b"],
        ["txh", "p2", "wg", "q2"],
    )


def gsa_to_orig(g: GridShape, batch: int = 1) -> IndexMap:
    _require_gsa(g)
    k = g.k
    k2 = k * k
    return rearrange_map(
        [("p1", k), ("q1", k), ("b", batch)],
        [("txh", g.t * g.h // k2), ("p2", k), ("wg", g.w // k2), ("q2", k)],
        ["b"],
        ["txh", "p1", "p2", "wg", "q1", "q2"],
    )


def tsa_to_gsa(g: GridShape, batch: int = 1) -> IndexMap:
    """Direct token-wise -> group-wise conversion; equals
    orig_to_gsa composed with the inverse of orig_to_tsa."""
    _require_gsa(g)
    k = g.k
    k2 = k * k
    return rearrange_map(
        [("p2", k), ("q2", k), ("b", batch)],
        [("txh", g.t * g.h // k2), ("p1", k), ("wg", g.w // k2), ("q1", k)],
        ["p1", "q1", "b"],
        ["txh", "p2", "wg", "q2"],
    )


def gsa_to_tsa(g: GridShape, batch: int = 1) -> IndexMap:
    _require_gsa(g)
    k = g.k
    k2 = k * k
    return rearrange_map(
        [("p1", k), ("q1", k), ("b", batch)],
        [("txh", g.t * g.h // k2), ("p2", k), ("wg", g.w // k2), ("q2", k)],
        ["p2", "q2", "b"],
        ["txh", "p1", "wg", "q1"],
    )


def pattern_map(g: GridShape, pattern: SparsePattern, batch: int = 1) -> IndexMap:
    """Original layout -> the given pattern layout."""
    if pattern is SparsePattern.ORIGINAL:
        return IndexMap.identity(batch, g.seq_len)
    if pattern is SparsePattern.TOKEN_WISE:
        return orig_to_tsa(g, batch)
    if pattern is SparsePattern.GROUP_WISE:
        return orig_to_gsa(g, batch)
    raise PatternError(f"unknown pattern {pattern!r}")


def inverse_pattern_map(g: GridShape, pattern: SparsePattern, batch: int = 1) -> IndexMap:
    if pattern is SparsePattern.ORIGINAL:
        return IndexMap.identity(batch, g.seq_len)
    if pattern is SparsePattern.TOKEN_WISE:
        return tsa_to_orig(g, batch)
    if pattern is SparsePattern.GROUP_WISE:
        return gsa_to_orig(g, batch)
    raise PatternError(f"unknown pattern {pattern!r}")


@dataclass(frozen=True)
class PatternAssignment:
    """Per-token (subsequence id, position) for one batch item.

    Subsequence ids follow the enlarged-batch order of the pattern map,
    so id = p * k + q for token-wise and p1 * k + q1 for group-wise.
    Every subsequence has exactly `subseq_len` members.
    """

    pattern: SparsePattern
    subseq: np.ndarray  # (seq_len,) subsequence id per flat token
    position: np.ndarray  # (seq_len,) position within subsequence
    num_subsequences: int
    subseq_len: int

    def to_rows(self) -> list[dict]:
        return [
            {"token": i, "subsequence": int(self.subseq[i]), "position": int(self.position[i])}
            for i in range(self.subseq.size)
        ]


def assignment_of(g: GridShape, pattern: SparsePattern) -> PatternAssignment:
    m = pattern_map(g, pattern, batch=1)
    n_sub, sub_len = m.out_batch, m.out_seq
    subseq = np.empty(g.seq_len, dtype=np.int64)
    position = np.empty(g.seq_len, dtype=np.int64)
    out_flat = np.arange(n_sub * sub_len, dtype=np.int64)
    subseq[m.src.reshape(-1)] = out_flat // sub_len
    position[m.src.reshape(-1)] = out_flat % sub_len
    return PatternAssignment(pattern, subseq, position, n_sub, sub_len)


def reachability_hops(g: GridShape) -> int | float:
    """Maximum over ordered token pairs of the minimum alternating hop count.

    A hop is one attention operation: (u, v) is 1 hop apart when they share
    a subsequence in either pattern, 2 hops apart when some token m shares
    a subsequence with u in one pattern and with v in the other. Returns
    math.inf if any pair is unreachable in two hops.
    """
    _require_gsa(g)
    tsa = assignment_of(g, SparsePattern.TOKEN_WISE).subseq
    gsa = assignment_of(g, SparsePattern.GROUP_WISE).subseq
    k2 = g.k * g.k
    # occupied[t_id, g_id]: some token has this (tsa, gsa) subsequence pair
    occupied = np.zeros((k2, k2), dtype=bool)
    occupied[tsa, gsa] = True

    one_hop = (tsa[:, None] == tsa[None, :]) | (gsa[:, None] == gsa[None, :])
    # u -tsa- m -gsa- v needs (tsa[u], gsa[v]) occupied; the other order swaps u, v
    two_hop = occupied[tsa[:, None], gsa[None, :]] | occupied[tsa[None, :], gsa[:, None]]
    if not (one_hop | two_hop).all():
        return math.inf
    return 1 if one_hop.all() else 2


def build_layer_schedule(num_layers: int, n_full: int) -> list[LayerKind]:
    """Spindle schedule: n_full / 2 full-attention layers at each end, the
    middle strictly alternating token-wise / group-wise starting with TSA.

    The alternation phase (TSA first) is a fixed convention of this
    package; equivalence checks elsewhere do not depend on it.
    """
    if n_full < 0 or n_full % 2:
        raise ScheduleError(f"n_full must be even and non-negative, got {n_full}")
    if n_full > num_layers:
        raise ScheduleError(f"n_full={n_full} exceeds num_layers={num_layers}")
    head = n_full // 2
    schedule = [LayerKind.FULL] * head
    for i in range(num_layers - n_full):
        schedule.append(LayerKind.TSA if i % 2 == 0 else LayerKind.GSA)
    schedule.extend([LayerKind.FULL] * (num_layers - len(schedule)))
    return schedule
