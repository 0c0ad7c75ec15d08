"""Walk through the tiled engine: oracle, tiles, and the three skip modes.

Run:  python3 demos/01_tiled_engine.py
"""

import numpy as np

from tileskip import (
    SkipMask,
    SkipMode,
    TileGeometry,
    TrajectoryConfig,
    dense_attention,
    generate_trajectory,
    skip_condition,
    tiled_attention,
)

print("=" * 70)
print("1. The dense oracle")
print("=" * 70)
op = generate_trajectory(TrajectoryConfig(1, 1, 1, 128, 32, 0.0, seed=0)).operand(0)
ref = dense_attention(op)
print(f"operand: n={op.n}, d={op.d}; dense output shape {ref.shape}")

print()
print("=" * 70)
print("2. Tiled online softmax reproduces it, one tile pair at a time")
print("=" * 70)
geom = TileGeometry(128, 16, 16)
res = tiled_attention(op, geom, SkipMode.dense())
err = np.abs(res.output - ref).max() / np.abs(ref).max()
print(f"tile grid {geom.ti}x{geom.tj}, rel Linf vs oracle: {err:.2e}")
print(f"flops performed = dense equivalent = {res.report.flops_performed}")

print()
print("=" * 70)
print("3. The dominance test behind every skip")
print("=" * 70)
m_local = np.array([1.0, 2.0])
m_cum = np.array([5.0, 9.0])
print(f"local maxima {m_local}, running maxima {m_cum}")
for eps in (3.0, 5.0):
    print(f"  epsilon={eps}: skip? {skip_condition(m_local, m_cum, eps)}")

print()
print("=" * 70)
print("4. Per-step skipping (scores computed, exp/PV elided)")
print("=" * 70)
for eps in (8.0, 4.0, 2.0, 1.0):
    r = tiled_attention(op, geom, SkipMode.pv_skip(eps))
    eta = np.abs(r.output - ref).sum() / np.abs(ref).sum()
    print(f"  eps={eps:4.1f}: {r.report.tiles_pv_skipped:3d}/{r.report.tiles_total} "
          f"tiles skipped, flop sparsity {r.report.flop_sparsity():.3f}, "
          f"rel L1 error {eta:.2e}")

print()
print("=" * 70)
print("5. Evolutionary skipping: dominated tiles enter a persistent mask")
print("=" * 70)
mask = SkipMask(1, 1, geom.ti, geom.tj)
r1 = tiled_attention(op, geom, SkipMode.qk_skip(2.0), mask=mask.slice(0, 0))
print(f"first pass : {r1.report.newly_marked} tiles marked, "
      f"{r1.report.tiles_qk_skipped} bypassed")
r2 = tiled_attention(op, geom, SkipMode.qk_skip(2.0), mask=mask.slice(0, 0))
print(f"second pass: {r2.report.newly_marked} tiles marked, "
      f"{r2.report.tiles_qk_skipped} bypassed (no scores, no max updates)")
print(f"mask sparsity now {mask.sparsity():.3f}")

print()
print("6. A threshold of 1e9 never fires: bitwise identical to dense mode:",
      np.array_equal(tiled_attention(op, geom, SkipMode.pv_skip(1e9)).output,
                     res.output))
