"""Evolutionary skips across a denoising sequence and the RLE skip list.

Run:  python3 demos/02_evolutionary_skipping.py
"""

from tileskip import (
    SkipMask,
    TileGeometry,
    TrajectoryConfig,
    compile_skip_list,
    generate_trajectory,
    run_timestep_sequence,
)

T = 12
traj = generate_trajectory(TrajectoryConfig(T, 1, 1, 256, 32, 0.02, seed=7))
geom = TileGeometry(256, 16, 16)
mask = SkipMask(1, 1, geom.ti, geom.tj)

print("Running a", T, "step sequence with a persistent skip mask (eps=4)...")
seq = run_timestep_sequence(traj.slice_operands(0, 0), geom, [4.0] * T,
                            mask=mask.slice(0, 0))

print()
print(" t  bypassed  newly-marked  flop-sparsity")
for t, rep in enumerate(seq.reports):
    print(f"{t:2d}  {rep.tiles_qk_skipped:8d}  {rep.newly_marked:12d}"
          f"  {rep.flop_sparsity():13.3f}")
print()
print("Bypass counts only ever grow: the mask is monotone across timesteps.")

print()
print("Final mask, one row per query tile ('#' = skipped):")
bits = seq.mask.to_array()
for i in range(bits.shape[0]):
    print("   " + "".join("#" if b else "." for b in bits[i]))

print()
print("Run-length-encoded kept ranges (what a producer would stream):")
sl = compile_skip_list(mask)
for i in range(min(6, geom.ti)):
    print(f"   row {i:2d}: {list(sl.row_ranges(0, 0, i))}")
print("   ...")
total_ranges = sum(len(sl.row_ranges(0, 0, i)) for i in range(geom.ti))
kept = int((~bits).sum())
print(f"{kept} kept tiles collapse into {total_ranges} contiguous ranges.")
