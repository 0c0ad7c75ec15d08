"""Dense attention oracle and the tiled online-softmax engine.

The engine processes one query tile against key/value tiles in a caller
chosen order, maintaining running row maxima ``m``, running exponential sums
``l`` and a partial output accumulator ``acc``.  Three modes:

* DENSE       - every tile computed; the reference path.
* PV_SKIP     - per step: tiles whose local row maxima are dominated by the
                running maxima (margin at least epsilon) skip the
                exponentiation and the PV product.
* QK_SKIP     - evolutionary: dominated tiles are additionally recorded in a
                persistent skip mask and bypassed entirely (no scores, no
                max update) on later timesteps.  Mask bits never clear.

Scores are computed in the operand dtype (float32 for generated
trajectories); ``m``, ``l`` and ``acc`` accumulate in float64.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import require
from .ordering import OrderingStrategy, visit_order
from .skipmask import MaskSlice, SkipMask


@dataclass
class AttentionOperand:
    """One (Q, K, V) triple for a single head at one timestep.

    All three matrices are n x d.  The array dtype (float32 or float64)
    governs the precision of the tile score products.
    """

    q: np.ndarray
    k: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        self.q = _as_operand_array(self.q, "Q")
        self.k = _as_operand_array(self.k, "K")
        self.v = _as_operand_array(self.v, "V")
        require(self.q.shape == self.k.shape == self.v.shape,
                f"Q/K/V shapes differ: {self.q.shape}, {self.k.shape}, {self.v.shape}")
        require(self.q.shape[0] >= 1 and self.q.shape[1] >= 1,
                f"operand must be at least 1x1, got {self.q.shape}")

    @property
    def n(self) -> int:
        return self.q.shape[0]

    @property
    def d(self) -> int:
        return self.q.shape[1]


def _as_operand_array(x, name: str) -> np.ndarray:
    a = np.asarray(x)
    if a.dtype not in (np.float32, np.float64):
        a = a.astype(np.float32)
    require(a.ndim == 2, f"{name} must be 2-D, got shape {a.shape}")
    require(bool(np.isfinite(a).all()), f"{name} contains non-finite entries")
    return a


@dataclass(frozen=True)
class TileGeometry:
    """Tile heights along the sequence dimension for a fixed n.

    The last tile in each direction may be ragged; tiles are never padded.
    """

    n: int
    h_q: int
    h_k: int

    def __post_init__(self):
        require(self.n >= 1, f"n must be positive, got {self.n}")
        require(self.h_q >= 1 and self.h_k >= 1,
                f"tile heights must be positive, got h_q={self.h_q}, h_k={self.h_k}")

    @property
    def ti(self) -> int:
        return -(-self.n // self.h_q)

    @property
    def tj(self) -> int:
        return -(-self.n // self.h_k)

    def q_rows(self, i: int) -> slice:
        return slice(i * self.h_q, min((i + 1) * self.h_q, self.n))

    def k_rows(self, j: int) -> slice:
        return slice(j * self.h_k, min((j + 1) * self.h_k, self.n))

    def q_height(self, i: int) -> int:
        s = self.q_rows(i)
        return s.stop - s.start

    def k_height(self, j: int) -> int:
        s = self.k_rows(j)
        return s.stop - s.start


class SkipVariant(enum.Enum):
    DENSE = "dense"
    PV_SKIP = "pv"
    QK_SKIP = "qk"


@dataclass(frozen=True)
class SkipMode:
    variant: SkipVariant
    epsilon: float = 0.0

    def __post_init__(self):
        if self.variant is not SkipVariant.DENSE:
            require(math.isfinite(self.epsilon) and self.epsilon >= 0.0,
                    f"epsilon must be finite and >= 0, got {self.epsilon}")

    @classmethod
    def dense(cls) -> "SkipMode":
        return cls(SkipVariant.DENSE)

    @classmethod
    def pv_skip(cls, epsilon: float) -> "SkipMode":
        return cls(SkipVariant.PV_SKIP, epsilon)

    @classmethod
    def qk_skip(cls, epsilon: float) -> "SkipMode":
        return cls(SkipVariant.QK_SKIP, epsilon)


# Per-tile flop model: multiply-adds count as 2 flops, exponentials as 1.
# A tile skipped by the dominance condition still pays the QK part; a tile
# bypassed through the mask pays nothing.

def _qk_flops(hq: int, hk: int, d: int) -> int:
    return 2 * hq * hk * d


def _exp_flops(hq: int, hk: int) -> int:
    return hq * hk


def _pv_flops(hq: int, hk: int, d: int) -> int:
    return 2 * hq * hk * d


def _epilogue_flops(hq: int, d: int) -> int:
    return 2 * hq * d


def _full_tile_flops(hq: int, hk: int, d: int) -> int:
    return (_qk_flops(hq, hk, d) + _exp_flops(hq, hk)
            + _pv_flops(hq, hk, d) + _epilogue_flops(hq, d))


@dataclass
class TileReport:
    """Per-run tile and flop counters.  Merges like a sum."""

    tiles_total: int = 0
    tiles_pv_skipped: int = 0
    tiles_qk_skipped: int = 0
    newly_marked: int = 0
    degenerate_rows: int = 0
    flops_performed: int = 0
    flops_dense_equivalent: int = 0

    def merge(self, other: "TileReport") -> "TileReport":
        return TileReport(
            self.tiles_total + other.tiles_total,
            self.tiles_pv_skipped + other.tiles_pv_skipped,
            self.tiles_qk_skipped + other.tiles_qk_skipped,
            self.newly_marked + other.newly_marked,
            self.degenerate_rows + other.degenerate_rows,
            self.flops_performed + other.flops_performed,
            self.flops_dense_equivalent + other.flops_dense_equivalent,
        )

    def flop_sparsity(self) -> float:
        """Fraction of dense-equivalent flops skipped."""
        if self.flops_dense_equivalent == 0:
            return 0.0
        return 1.0 - self.flops_performed / self.flops_dense_equivalent


@dataclass
class TileTrace:
    """Optional per-tile decision record (instrumentation, not a contract)."""

    computed: set = field(default_factory=set)
    pv_skipped: set = field(default_factory=set)
    qk_bypassed: set = field(default_factory=set)
    newly_marked: set = field(default_factory=set)


@dataclass
class TiledResult:
    output: np.ndarray
    report: TileReport
    mask: MaskSlice | None
    trace: TileTrace | None = None


def dense_attention(op: AttentionOperand) -> np.ndarray:
    """Reference attention: row-wise softmax of QK^T/sqrt(d) applied to V.

    Everything is computed in double precision in one shot; this is the
    oracle every tiled mode is checked against.
    """
    q = op.q.astype(np.float64)
    k = op.k.astype(np.float64)
    v = op.v.astype(np.float64)
    s = q @ k.T / math.sqrt(op.d)
    s -= s.max(axis=1, keepdims=True)
    p = np.exp(s)
    p /= p.sum(axis=1, keepdims=True)
    return p @ v


def tile_scores(q_tile: np.ndarray, k_tile: np.ndarray) -> np.ndarray:
    """Scaled score tile Q_i K_j^T / sqrt(d), returned in float64.

    The matrix product runs in the tiles' dtype; the scale is applied in
    float64 so the engine's downstream bookkeeping sees float64 scores.
    """
    q_tile = np.asarray(q_tile)
    k_tile = np.asarray(k_tile)
    require(q_tile.ndim == 2 and k_tile.ndim == 2,
            "score tiles must be 2-D")
    require(q_tile.shape[1] == k_tile.shape[1],
            f"tile widths differ: {q_tile.shape[1]} vs {k_tile.shape[1]}")
    d = q_tile.shape[1]
    return (q_tile @ k_tile.T).astype(np.float64) / math.sqrt(d)


def skip_condition(m_local: np.ndarray, m_cum: np.ndarray, epsilon: float) -> bool:
    """True when every row's local maximum is dominated by margin epsilon.

    ``m_cum`` must already include ``m_local`` (update before test).  Rows
    whose cumulative maximum is still -inf have seen no tile and can never
    vote to skip.
    """
    m_local = np.asarray(m_local, dtype=np.float64)
    m_cum = np.asarray(m_cum, dtype=np.float64)
    if np.isneginf(m_cum).any():
        return False
    return bool(np.max(m_local - m_cum) <= -epsilon)


def tiled_attention(
    op: AttentionOperand,
    geom: TileGeometry,
    mode: SkipMode,
    ordering: OrderingStrategy = OrderingStrategy.LINEAR,
    mask: MaskSlice | None = None,
    collect_trace: bool = False,
) -> TiledResult:
    """One pass of the tiled online-softmax engine over a single head.

    In QK_SKIP mode ``mask`` carries skip decisions in and out; tiles already
    marked are bypassed entirely, tiles that newly satisfy the dominance
    condition are marked, skipped now, and stay skipped for the mask's
    lifetime.
    """
    require(op.n == geom.n, f"operand n={op.n} does not match geometry n={geom.n}")
    ti, tj = geom.ti, geom.tj
    if mode.variant is SkipVariant.QK_SKIP:
        require(mask is not None, "QK_SKIP requires a mask slice")
        require(mask.shape == (ti, tj),
                f"mask shape {mask.shape} does not match tile grid ({ti}, {tj})")
    else:
        require(mask is None, f"{mode.variant.value} mode does not take a mask")

    n, d = op.n, op.d
    sqrt_d = math.sqrt(d)
    out = np.zeros((n, d), dtype=np.float64)
    report = TileReport(tiles_total=ti * tj)
    trace = TileTrace() if collect_trace else None

    for i in range(ti):
        rows = geom.q_rows(i)
        hi = rows.stop - rows.start
        q_i = op.q[rows]
        m = np.full(hi, -np.inf)
        l = np.zeros(hi)
        acc = np.zeros((hi, d))

        for j in visit_order(ordering, i, ti, tj):
            j = int(j)
            cols = geom.k_rows(j)
            hj = cols.stop - cols.start

            if mode.variant is SkipVariant.QK_SKIP and mask.is_marked(i, j):
                report.tiles_qk_skipped += 1
                if trace is not None:
                    trace.qk_bypassed.add((i, j))
                continue

            s = (q_i @ op.k[cols].T).astype(np.float64) / sqrt_d
            m_local = s.max(axis=1)
            m_new = np.maximum(m, m_local)

            if mode.variant is not SkipVariant.DENSE and skip_condition(m_local, m_new, mode.epsilon):
                # Update-then-test: keep the max update.  For epsilon > 0 a
                # fired test implies m_new == m, so l/acc stay consistent
                # without a rescale; at epsilon == 0 every tile fires and
                # nothing ever accumulates.
                m = m_new
                report.flops_performed += _qk_flops(hi, hj, d)
                if mode.variant is SkipVariant.PV_SKIP:
                    report.tiles_pv_skipped += 1
                    if trace is not None:
                        trace.pv_skipped.add((i, j))
                else:
                    mask.mark(i, j)
                    report.newly_marked += 1
                    if trace is not None:
                        trace.newly_marked.add((i, j))
                continue

            alpha = np.exp(m - m_new)
            p = np.exp(s - m_new[:, None])
            l = l * alpha + p.sum(axis=1)
            acc = acc * alpha[:, None] + p @ op.v[cols].astype(np.float64)
            m = m_new
            report.flops_performed += _full_tile_flops(hi, hj, d)
            if trace is not None:
                trace.computed.add((i, j))

        live = l > 0.0
        out[rows][live] = acc[live] / l[live, None]
        report.degenerate_rows += int(hi - live.sum())

    report.flops_dense_equivalent = sum(
        _full_tile_flops(geom.q_height(i), geom.k_height(j), d)
        for i in range(ti) for j in range(tj)
    )
    return TiledResult(out, report, mask, trace)


@dataclass
class SequenceResult:
    outputs: list
    reports: list
    mask: MaskSlice


def run_timestep_sequence(
    ops,
    geom: TileGeometry,
    schedule,
    ordering: OrderingStrategy = OrderingStrategy.LINEAR,
    mask: MaskSlice | None = None,
) -> SequenceResult:
    """QK_SKIP over a denoising sequence with one persistent mask.

    ``schedule`` is the per-timestep epsilon sequence (anything float-like
    and len-compatible works, including a ThresholdSchedule).  The mask
    starts empty unless one is passed in, and only gains bits.
    """
    eps = np.asarray(getattr(schedule, "eps", schedule), dtype=np.float64)
    require(eps.ndim == 1, "schedule must be a flat sequence of thresholds")
    require(len(eps) == len(ops),
            f"schedule length {len(eps)} does not match {len(ops)} timesteps")
    for t, op in enumerate(ops):
        require(op.n == ops[0].n and op.d == ops[0].d,
                f"operand at t={t} has shape ({op.n}, {op.d}), "
                f"expected ({ops[0].n}, {ops[0].d})")
    if mask is None:
        mask = SkipMask(1, 1, geom.ti, geom.tj).slice(0, 0)

    outputs, reports = [], []
    for t, op in enumerate(ops):
        res = tiled_attention(op, geom, SkipMode.qk_skip(float(eps[t])),
                              ordering=ordering, mask=mask)
        outputs.append(res.output)
        reports.append(res.report)
    return SequenceResult(outputs, reports, mask)
