"""Flop accounting, the sparsity/runtime tradeoff, and length scaling.

Run:  python3 demos/05_benchmarks.py          (about a minute)
"""

from tileskip import TrajectoryConfig, length_sweep, sparsity_runtime_tradeoff
from tileskip.bench import CSV_HEADER, ordering_skip_comparison

print("Sparsity vs runtime vs final error at several thresholds")
print("(n=1024, T=4; flop reduction equals sparsity by counter).  On this")
print("fast-drifting workload eta_final is the quality cost of keeping the")
print("mask: lower thresholds buy sparsity at growing error, which is what")
print("the calibration in demo 04 exists to bound:")
cfg = TrajectoryConfig(4, 1, 1, 1024, 64, 0.01, seed=0, corr=16.0)
rows = sparsity_runtime_tradeoff(cfg, 64, 64, epsilons=[8.0, 4.0, 2.0, 1.0],
                                 reps=3)
print()
print(CSV_HEADER)
for rep in rows:
    print(rep.csv_row())
base = rows[0].wall_seconds
print()
print("wall-time reduction vs dense:")
for rep in rows[1:]:
    print(f"  eps={rep.epsilon:5.1f}: sparsity {rep.sparsity:.3f}, "
          f"reduction {1 - rep.wall_seconds / base:.3f}")

print()
print("Sequence-length sweep (fixed eps=2, trend logged, not asserted):")
base_cfg = TrajectoryConfig(3, 1, 1, 256, 32, 0.01, seed=0)
for rep in length_sweep([256, 512, 1024, 2048], base_cfg, 32, 32,
                        epsilon=2.0, reps=3):
    print(f"  n={rep.n:5d}: final-step sparsity {rep.sparsity_per_t[-1]:.3f}, "
          f"wall {rep.wall_seconds:.3f}s")
print("With a fixed attended neighborhood, far tiles dominate more of the")
print("grid as n grows, so the skipped fraction climbs with length.")

print()
print("Visit-order comparison under one threshold (measured, not asserted):")
out = ordering_skip_comparison(TrajectoryConfig(4, 1, 1, 256, 32, 0.02, seed=2),
                               16, 16, epsilon=2.0)
for name, row in out.items():
    print(f"  {name:6s}: {row['tiles_marked']} tiles marked, "
          f"flop sparsity {row['flop_sparsity']:.3f}")
