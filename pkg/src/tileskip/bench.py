"""Flop accounting, timed runs, and the scaling/tradeoff sweeps.

Timing uses a monotonic clock and reports the median over repetitions; every
repetition starts from a fresh mask so results are identical and only the
clock varies.  Flop counts come from the engine's own counters; `flop_model`
reconstructs them independently from per-tile decisions so the two can be
cross-checked.
"""

from __future__ import annotations

import statistics
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .attention import (
    SkipMode,
    TileGeometry,
    TileReport,
    dense_attention,
    run_timestep_sequence,
    tiled_attention,
)
from .errors import require
from .harness import TrajectoryConfig, generate_trajectory
from .ordering import OrderingStrategy
from .skipmask import SkipMask
from .trajectory import Trajectory

CSV_HEADER = ("mode,n,d,T,epsilon,sparsity,flops_performed,flops_dense,"
              "wall_seconds,eta_final,degenerate_rows")


@dataclass(frozen=True)
class FlopCount:
    performed: int
    dense_equivalent: int


def flop_model(geom: TileGeometry, d: int, computed, pv_skipped=(), qk_skipped=()):
    """Reconstruct flop counters from tile decision lists.

    Cost model (multiply-add = 2 flops, exp = 1): a fully computed tile pays
    QK + exp + PV + per-tile epilogue; a condition-skipped tile pays QK only;
    a mask-bypassed tile pays nothing.  Ragged edge tiles pay their reduced
    heights.
    """
    def qk_part(i, j):
        return 2 * geom.q_height(i) * geom.k_height(j) * d

    def full(i, j):
        hq, hk = geom.q_height(i), geom.k_height(j)
        return 2 * hq * hk * d + hq * hk + 2 * hq * hk * d + 2 * hq * d

    performed = sum(full(i, j) for i, j in computed)
    performed += sum(qk_part(i, j) for i, j in pv_skipped)
    dense_equivalent = sum(full(i, j)
                           for i in range(geom.ti) for j in range(geom.tj))
    # qk_skipped tiles cost nothing; accepted for completeness of the record
    _ = len(tuple(qk_skipped))
    return FlopCount(performed, dense_equivalent)


@dataclass
class RunReport:
    """Everything one run produced, minus the tensors."""

    mode: str
    n: int
    d: int
    timesteps: int
    epsilon: float | None
    sparsity_per_t: list
    flops_performed: int
    flops_dense_equivalent: int
    wall_seconds: float
    eta_per_t: list | None
    degenerate_rows: int
    workers: int = 1
    reps: int = 1

    @property
    def sparsity(self) -> float:
        if self.flops_dense_equivalent == 0:
            return 0.0
        return 1.0 - self.flops_performed / self.flops_dense_equivalent

    @property
    def eta_final(self) -> float | None:
        if not self.eta_per_t:
            return None
        return self.eta_per_t[-1]

    def csv_row(self) -> str:
        eps = "" if self.epsilon is None else repr(float(self.epsilon))
        eta = "" if self.eta_final is None else repr(float(self.eta_final))
        return (f"{self.mode},{self.n},{self.d},{self.timesteps},{eps},"
                f"{self.sparsity!r},{self.flops_performed},"
                f"{self.flops_dense_equivalent},{self.wall_seconds!r},{eta},"
                f"{self.degenerate_rows}")

    def to_json(self) -> dict:
        return {
            "mode": self.mode,
            "n": self.n,
            "d": self.d,
            "T": self.timesteps,
            "epsilon": self.epsilon,
            "sparsity": self.sparsity,
            "sparsity_per_t": list(self.sparsity_per_t),
            "flops_performed": self.flops_performed,
            "flops_dense": self.flops_dense_equivalent,
            "wall_seconds": self.wall_seconds,
            "eta_per_t": None if self.eta_per_t is None else list(self.eta_per_t),
            "eta_final": self.eta_final,
            "degenerate_rows": self.degenerate_rows,
            "workers": self.workers,
            "reps": self.reps,
        }


def write_csv(path, reports) -> None:
    with open(path, "w") as fh:
        fh.write(CSV_HEADER + "\n")
        for rep in reports:
            fh.write(rep.csv_row() + "\n")


@dataclass
class ExecutedRun:
    report: RunReport
    mask: SkipMask | None
    outputs: list | None = field(default=None, repr=False)  # [t][slice] arrays


def _slice_pass(traj, geom, mode, eps_seq, ordering, mask, layer, head):
    if mode == "qk":
        res = run_timestep_sequence(traj.slice_operands(layer, head), geom,
                                    eps_seq, ordering=ordering,
                                    mask=mask.slice(layer, head))
        return res.outputs, res.reports
    outputs, reports = [], []
    for t in range(traj.timesteps):
        skip_mode = (SkipMode.dense() if mode == "dense"
                     else SkipMode.pv_skip(float(eps_seq[t])))
        r = tiled_attention(traj.operand(t, layer, head), geom, skip_mode,
                            ordering=ordering)
        outputs.append(r.output)
        reports.append(r.report)
    return outputs, reports


def execute_run(
    traj: Trajectory,
    geom: TileGeometry,
    mode: str = "qk",
    epsilon: float | None = None,
    schedule=None,
    ordering: OrderingStrategy = OrderingStrategy.LINEAR,
    workers: int = 1,
    reps: int = 1,
    eta: str = "per_t",
) -> ExecutedRun:
    """Run a whole trajectory and assemble its report.

    ``eta`` is "per_t" (dense oracle at every step), "final" (last step
    only), or "none".  The oracle passes run outside the timed region.
    """
    require(mode in ("dense", "pv", "qk"), f"unknown mode {mode!r}")
    require(eta in ("per_t", "final", "none"), f"unknown eta option {eta!r}")
    require(reps >= 1 and workers >= 1, "reps and workers must be >= 1")
    T = traj.timesteps
    if mode == "dense":
        require(epsilon is None and schedule is None,
                "dense mode takes no threshold")
        eps_seq = np.zeros(T)
    elif schedule is not None:
        require(epsilon is None, "give either epsilon or a schedule, not both")
        eps_seq = np.asarray(getattr(schedule, "eps", schedule), dtype=np.float64)
        require(len(eps_seq) == T, f"schedule length {len(eps_seq)} != T={T}")
    else:
        require(epsilon is not None, f"mode {mode!r} needs epsilon or schedule")
        eps_seq = np.full(T, float(epsilon))

    slices = [(layer, head) for layer in range(traj.layers)
              for head in range(traj.heads)]

    def one_rep():
        mask = (SkipMask(traj.layers, traj.heads, geom.ti, geom.tj)
                if mode == "qk" else None)
        if workers == 1 or len(slices) == 1:
            per_slice = [_slice_pass(traj, geom, mode, eps_seq, ordering,
                                     mask, layer, head)
                         for layer, head in slices]
        else:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                futs = [pool.submit(_slice_pass, traj, geom, mode, eps_seq,
                                    ordering, mask, layer, head)
                        for layer, head in slices]
                per_slice = [f.result() for f in futs]
        return mask, per_slice

    walls = []
    mask, per_slice = None, None
    for _ in range(reps):
        t0 = time.perf_counter()
        mask, per_slice = one_rep()
        walls.append(time.perf_counter() - t0)
    wall = statistics.median(walls)

    merged = []
    for t in range(T):
        rep_t = TileReport()
        for _, reports in per_slice:
            rep_t = rep_t.merge(reports[t])
        merged.append(rep_t)
    total = TileReport()
    for rep_t in merged:
        total = total.merge(rep_t)

    outputs = [[per_slice[s][0][t] for s in range(len(slices))] for t in range(T)]

    eta_per_t = None
    if eta != "none":
        ts = range(T) if eta == "per_t" else [T - 1]
        eta_per_t = []
        for t in ts:
            num = den = 0.0
            for s, (layer, head) in enumerate(slices):
                ref = dense_attention(traj.operand(t, layer, head))
                num += float(np.abs(outputs[t][s] - ref).sum())
                den += float(np.abs(ref).sum())
            eta_per_t.append(num / den)

    report = RunReport(
        mode=mode, n=traj.n, d=traj.d, timesteps=T,
        epsilon=None if (mode == "dense" or schedule is not None) else float(epsilon),
        sparsity_per_t=[r.flop_sparsity() for r in merged],
        flops_performed=total.flops_performed,
        flops_dense_equivalent=total.flops_dense_equivalent,
        wall_seconds=wall,
        eta_per_t=eta_per_t,
        degenerate_rows=total.degenerate_rows,
        workers=workers, reps=reps,
    )
    return ExecutedRun(report, mask, outputs)


# -- sweeps --------------------------------------------------------------------


def length_sweep(
    ns,
    base: TrajectoryConfig,
    h_q: int,
    h_k: int,
    epsilon: float,
    mode: str = "qk",
    ordering: OrderingStrategy = OrderingStrategy.LINEAR,
    reps: int = 3,
) -> list:
    """Drift-harness runs over increasing sequence lengths.

    Returns one RunReport per n; final-step sparsity and wall time are the
    interesting columns.
    """
    reports = []
    for n in sorted(ns):
        cfg = TrajectoryConfig(base.timesteps, base.layers, base.heads,
                               int(n), base.d, base.rho, base.seed)
        traj = generate_trajectory(cfg)
        geom = TileGeometry(int(n), h_q, h_k)
        eps = None if mode == "dense" else epsilon
        run = execute_run(traj, geom, mode=mode, epsilon=eps,
                          ordering=ordering, reps=reps, eta="final")
        reports.append(run.report)
    return reports


def ordering_skip_comparison(
    config: TrajectoryConfig,
    h_q: int,
    h_k: int,
    epsilon: float,
) -> dict:
    """Measured (never asserted): skip counts per visit-order strategy.

    Visiting the strongest tiles first saturates the running maximum sooner,
    which can only help the dominance test; how much it helps depends on
    where the workload's attention mass sits.
    """
    traj = generate_trajectory(config)
    geom = TileGeometry(config.n, h_q, h_k)
    out = {}
    for ordering in OrderingStrategy:
        run = execute_run(traj, geom, mode="qk", epsilon=epsilon,
                          ordering=ordering, eta="none")
        out[ordering.value] = {
            "tiles_marked": run.mask.marked_count(),
            "flop_sparsity": run.report.sparsity,
        }
    return out


def sparsity_runtime_tradeoff(
    config: TrajectoryConfig,
    h_q: int,
    h_k: int,
    epsilons,
    ordering: OrderingStrategy = OrderingStrategy.LINEAR,
    reps: int = 3,
) -> list:
    """Table rows for sparsity vs runtime vs final error at several thresholds.

    A dense baseline row comes first; the flop-reduction column of each QK
    row equals its sparsity by construction of the counters.
    """
    traj = generate_trajectory(config)
    geom = TileGeometry(config.n, h_q, h_k)
    rows = [execute_run(traj, geom, mode="dense", ordering=ordering,
                        reps=reps, eta="final").report]
    for eps in epsilons:
        rows.append(execute_run(traj, geom, mode="qk", epsilon=float(eps),
                                ordering=ordering, reps=reps, eta="final").report)
    return rows
