"""Persistent per-(layer, head) tile skip masks and their RLE form.

A ``SkipMask`` is a boolean grid over (layer, head, query-tile, key-tile)
cells.  True means the tile's attention computation is bypassed.  Bits only
accumulate while a denoising run is in flight; the only way to clear them is
a whole-mask :meth:`SkipMask.reset` between independent generations.

``SkipList`` is the compiled run-length-encoded view: per mask row, the
maximally merged half-open ``(start, end)`` ranges of key tiles that are
still computed.  It is immutable once compiled and round-trips exactly.
"""

from __future__ import annotations

import base64
import json
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError, require

SNAPSHOT_VERSION = 1


class MaskSlice:
    """Writable view of one (layer, head) plane of a SkipMask.

    Holds the only write path the attention engine uses: :meth:`mark` sets
    bits, nothing clears them.
    """

    __slots__ = ("_bits",)

    def __init__(self, bits: np.ndarray):
        self._bits = bits

    @property
    def shape(self) -> tuple[int, int]:
        return self._bits.shape

    def mark(self, i: int, j: int) -> None:
        ti, tj = self._bits.shape
        require(0 <= i < ti and 0 <= j < tj,
                f"tile index ({i}, {j}) out of range for {ti}x{tj} grid")
        self._bits[i, j] = True

    def is_marked(self, i: int, j: int) -> bool:
        return bool(self._bits[i, j])

    def row(self, i: int) -> np.ndarray:
        return self._bits[i].copy()

    def marked_count(self) -> int:
        return int(self._bits.sum())

    def to_array(self) -> np.ndarray:
        return self._bits.copy()


class SkipMask:
    """Boolean skip grid indexed (layer, head, i, j), True = skip."""

    def __init__(self, layers: int, heads: int, ti: int, tj: int):
        require(layers >= 1 and heads >= 1 and ti >= 1 and tj >= 1,
                "mask dimensions must be positive")
        self.layers = layers
        self.heads = heads
        self.ti = ti
        self.tj = tj
        self._bits = np.zeros((layers, heads, ti, tj), dtype=bool)

    def _check_slice(self, layer: int, head: int) -> None:
        require(0 <= layer < self.layers, f"layer {layer} out of range")
        require(0 <= head < self.heads, f"head {head} out of range")

    def slice(self, layer: int, head: int) -> MaskSlice:
        self._check_slice(layer, head)
        return MaskSlice(self._bits[layer, head])

    def mark(self, layer: int, head: int, i: int, j: int) -> None:
        self.slice(layer, head).mark(i, j)

    def is_marked(self, layer: int, head: int, i: int, j: int) -> bool:
        self._check_slice(layer, head)
        require(0 <= i < self.ti and 0 <= j < self.tj,
                f"tile index ({i}, {j}) out of range")
        return bool(self._bits[layer, head, i, j])

    def marked_count(self) -> int:
        return int(self._bits.sum())

    def total_cells(self) -> int:
        return self._bits.size

    def sparsity(self) -> float:
        """Fraction of cells marked, in [0, 1]."""
        return self.marked_count() / self.total_cells()

    def reset(self) -> None:
        """Clear every bit.  Only for starting a new independent generation."""
        self._bits[:] = False

    def copy(self) -> "SkipMask":
        other = SkipMask(self.layers, self.heads, self.ti, self.tj)
        other._bits[:] = self._bits
        return other

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, SkipMask):
            return NotImplemented
        return (self._bits.shape == other._bits.shape
                and bool(np.array_equal(self._bits, other._bits)))

    # -- snapshot export ---------------------------------------------------

    def to_snapshot(self) -> dict:
        """JSON-ready snapshot: shape fields plus base64 bit rows per slice."""
        slices = []
        for layer in range(self.layers):
            for head in range(self.heads):
                rows = [
                    base64.b64encode(np.packbits(self._bits[layer, head, i]).tobytes()).decode("ascii")
                    for i in range(self.ti)
                ]
                slices.append({"layer": layer, "head": head, "rows": rows})
        return {
            "version": SNAPSHOT_VERSION,
            "layers": self.layers,
            "heads": self.heads,
            "ti": self.ti,
            "tj": self.tj,
            "slices": slices,
        }

    @classmethod
    def from_snapshot(cls, snap: dict) -> "SkipMask":
        if snap.get("version") != SNAPSHOT_VERSION:
            raise ValidationError(f"unsupported mask snapshot version {snap.get('version')!r}")
        mask = cls(snap["layers"], snap["heads"], snap["ti"], snap["tj"])
        for entry in snap["slices"]:
            layer, head = entry["layer"], entry["head"]
            mask._check_slice(layer, head)
            for i, row64 in enumerate(entry["rows"]):
                packed = np.frombuffer(base64.b64decode(row64), dtype=np.uint8)
                bits = np.unpackbits(packed)[: mask.tj].astype(bool)
                mask._bits[layer, head, i] = bits
        return mask

    def save_snapshot(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_snapshot(), fh)

    @classmethod
    def load_snapshot(cls, path) -> "SkipMask":
        with open(path) as fh:
            return cls.from_snapshot(json.load(fh))


def mark_skip(mask: SkipMask, layer: int, head: int, i: int, j: int) -> SkipMask:
    """Set one skip bit (idempotent) and return the mask."""
    mask.mark(layer, head, i, j)
    return mask


def _kept_ranges(skip_row: np.ndarray) -> list[tuple[int, int]]:
    """Half-open (start, end) ranges of False bits, maximally merged."""
    kept = ~np.asarray(skip_row, dtype=bool)
    if not kept.any():
        return []
    # transitions of the kept indicator, padded so runs at the edges close
    padded = np.concatenate(([False], kept, [False]))
    flips = np.flatnonzero(padded[1:] != padded[:-1])
    return [(int(s), int(e)) for s, e in zip(flips[0::2], flips[1::2])]


@dataclass(frozen=True)
class SkipList:
    """RLE companion of a SkipMask: kept key-tile ranges per (layer, head, i)."""

    layers: int
    heads: int
    ti: int
    tj: int
    ranges: dict  # (layer, head, i) -> tuple of (start, end)

    def row_ranges(self, layer: int, head: int, i: int) -> tuple[tuple[int, int], ...]:
        return self.ranges[(layer, head, i)]

    def kept_indices(self, layer: int, head: int, i: int) -> np.ndarray:
        """Kept j indices for a row, ascending."""
        parts = [np.arange(s, e) for s, e in self.row_ranges(layer, head, i)]
        if not parts:
            return np.empty(0, dtype=int)
        return np.concatenate(parts)

    def decompress_row(self, layer: int, head: int, i: int) -> np.ndarray:
        """Reconstruct the skip-flag row (True = skip)."""
        row = np.ones(self.tj, dtype=bool)
        for s, e in self.row_ranges(layer, head, i):
            row[s:e] = False
        return row

    def decompress(self) -> SkipMask:
        mask = SkipMask(self.layers, self.heads, self.ti, self.tj)
        for (layer, head, i), _ in self.ranges.items():
            mask._bits[layer, head, i] = self.decompress_row(layer, head, i)
        return mask


def compile_skip_list(mask: SkipMask) -> SkipList:
    """Compile the mask into its read-only RLE form."""
    ranges = {}
    for layer in range(mask.layers):
        for head in range(mask.heads):
            for i in range(mask.ti):
                ranges[(layer, head, i)] = tuple(_kept_ranges(mask._bits[layer, head, i]))
    return SkipList(mask.layers, mask.heads, mask.ti, mask.tj, ranges)


def sparsity(mask: SkipMask) -> float:
    """Marked fraction of the mask."""
    return mask.sparsity()
