"""Visit-order strategies for the key-tile loop.

The running row maximum of the online softmax only grows, so the sooner it
reaches the true row maximum the sooner weak tiles become skippable.  The
radial strategy visits key tiles outward from the tile aligned with the
query tile on the attention diagonal, where mass is typically strongest.
"""

from __future__ import annotations

import enum

import numpy as np

from .errors import require


class OrderingStrategy(enum.Enum):
    LINEAR = "linear"
    RADIAL = "radial"


def radial_center(i: int, ti: int, tj: int) -> int:
    """Key-tile index diagonally aligned with query tile ``i`` (round-half-up)."""
    c = int(np.floor(i * tj / ti + 0.5))
    return min(max(c, 0), tj - 1)


def visit_order(strategy: OrderingStrategy, i: int, ti: int, tj: int) -> np.ndarray:
    """Permutation of [0, tj) in which query tile ``i`` visits key tiles.

    LINEAR is the identity.  RADIAL sorts by distance from the diagonal
    center, ties broken toward smaller j for determinism.
    """
    require(ti >= 1 and tj >= 1, f"tile grid must be nonempty, got {ti}x{tj}")
    require(0 <= i < ti, f"query tile index {i} out of range [0, {ti})")
    if strategy is OrderingStrategy.LINEAR:
        return np.arange(tj)
    c = radial_center(i, ti, tj)
    j = np.arange(tj)
    # lexsort: last key is primary
    return j[np.lexsort((j, np.abs(j - c)))]
