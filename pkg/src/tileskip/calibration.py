"""Per-timestep threshold calibration against segmented error bounds.

Timesteps are split into three even segments with error budgets
``xi - tau``, ``xi``, ``xi + tau``: early steps get the tightest budget
because their errors compound through the rest of the denoising run.  For
each timestep, calibration sweeps an ascending threshold grid and keeps the
smallest (most aggressive) epsilon whose one-step relative L1 error against
the dense output stays within that step's budget, carrying the evolved skip
mask forward exactly as a deployed run would.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .attention import SkipMode, TileGeometry, dense_attention, tiled_attention
from .errors import ValidationError, require
from .ordering import OrderingStrategy
from .skipmask import SkipMask
from .trajectory import Trajectory


@dataclass
class ThresholdSchedule:
    """Per-timestep skip thresholds, one epsilon >= 0 per step."""

    eps: np.ndarray

    def __post_init__(self):
        self.eps = np.asarray(self.eps, dtype=np.float64)
        require(self.eps.ndim == 1, "schedule must be one-dimensional")
        require(bool(np.isfinite(self.eps).all()) and bool((self.eps >= 0).all()),
                "thresholds must be finite and >= 0")

    def __len__(self) -> int:
        return len(self.eps)

    def __getitem__(self, t):
        return self.eps[t]

    def __iter__(self):
        return iter(self.eps)


@dataclass(frozen=True)
class ErrorBoundSpec:
    """Base bound xi, segment offset tau, and the timestep count."""

    xi: float
    tau: float
    timesteps: int

    def __post_init__(self):
        require(self.tau >= 0.0, f"tau must be >= 0, got {self.tau}")
        require(self.xi - self.tau > 0.0,
                f"xi - tau must be positive, got {self.xi - self.tau}")
        require(self.timesteps >= 1, "timesteps must be positive")


def relative_l1_error(o_sparse: np.ndarray, o_dense: np.ndarray) -> float:
    """Entrywise-sum norm of the difference over that of the dense output."""
    o_sparse = np.asarray(o_sparse, dtype=np.float64)
    o_dense = np.asarray(o_dense, dtype=np.float64)
    require(o_sparse.shape == o_dense.shape,
            f"shape mismatch: {o_sparse.shape} vs {o_dense.shape}")
    denom = float(np.abs(o_dense).sum())
    if denom == 0.0:
        raise ValidationError("relative L1 error undefined for an all-zero reference")
    return float(np.abs(o_sparse - o_dense).sum()) / denom


def segment_bounds(spec: ErrorBoundSpec) -> np.ndarray:
    """Per-timestep error budgets over the three even segments."""
    t = spec.timesteps
    bounds = np.full(t, spec.xi + spec.tau)
    bounds[: t // 3] = spec.xi - spec.tau
    bounds[t // 3: 2 * t // 3] = spec.xi
    return bounds


@dataclass
class CalibrationResult:
    schedule: ThresholdSchedule
    bounds: np.ndarray
    flagged: list
    grid: np.ndarray
    eta_per_t: list            # error of the chosen threshold at each step
    sweep: list = field(repr=False)  # [t][g] error of grid[g] at step t
    mask: SkipMask | None = field(default=None, repr=False)


def _as_trajectory(trajectory) -> Trajectory:
    if isinstance(trajectory, Trajectory):
        return trajectory
    return Trajectory.from_operands(list(trajectory))


def calibrate(
    trajectory,
    geom: TileGeometry,
    grid,
    spec: ErrorBoundSpec,
    ordering: OrderingStrategy = OrderingStrategy.LINEAR,
) -> CalibrationResult:
    """Grid-search the largest admissible sparsity per timestep.

    Returns the smallest grid epsilon meeting each step's bound; steps where
    even the largest grid value fails keep that value and are flagged.  The
    mask evolves under the chosen thresholds, so re-running a sequence with
    the returned schedule reproduces the calibration errors bit for bit.
    """
    traj = _as_trajectory(trajectory)
    grid = np.asarray(grid, dtype=np.float64)
    require(grid.size > 0, "threshold grid must be non-empty")
    require(bool(np.isfinite(grid).all()) and bool((grid >= 0).all()),
            "grid values must be finite and >= 0")
    require(bool((np.diff(grid) > 0).all()) if grid.size > 1 else True,
            "grid must be strictly ascending")
    require(spec.timesteps == traj.timesteps,
            f"bound spec covers {spec.timesteps} steps, trajectory has {traj.timesteps}")

    bounds = segment_bounds(spec)
    slices = [(layer, head) for layer in range(traj.layers) for head in range(traj.heads)]
    mask = SkipMask(traj.layers, traj.heads, geom.ti, geom.tj)

    # Dense references, one pass, reused by every grid candidate.
    dense = [[dense_attention(traj.operand(t, layer, head)) for layer, head in slices]
             for t in range(traj.timesteps)]

    eps_out, flagged, eta_out, sweep = [], [], [], []
    for t in range(traj.timesteps):
        denom = sum(float(np.abs(o).sum()) for o in dense[t])
        if denom == 0.0:
            raise ValidationError(f"dense output at t={t} is all zero")
        etas = []
        chosen_idx = None
        chosen_mask = None
        last_mask = None
        for g, eps in enumerate(grid):
            trial = mask.copy()
            num = 0.0
            for s, (layer, head) in enumerate(slices):
                res = tiled_attention(traj.operand(t, layer, head), geom,
                                      SkipMode.qk_skip(float(eps)),
                                      ordering=ordering, mask=trial.slice(layer, head))
                num += float(np.abs(res.output - dense[t][s]).sum())
            eta = num / denom
            etas.append(eta)
            last_mask = trial
            if chosen_idx is None and eta <= bounds[t]:
                chosen_idx = g
                chosen_mask = trial
        sweep.append(etas)
        if chosen_idx is None:
            chosen_idx = len(grid) - 1
            chosen_mask = last_mask
            flagged.append(t)
        eps_out.append(float(grid[chosen_idx]))
        eta_out.append(etas[chosen_idx])
        mask = chosen_mask

    return CalibrationResult(ThresholdSchedule(np.asarray(eps_out)), bounds,
                             flagged, grid, eta_out, sweep, mask)


def save_schedule(path, result: CalibrationResult, xi: float, tau: float,
                  seed: int | None = None) -> None:
    payload = {
        "eps": [float(e) for e in result.schedule.eps],
        "xi": xi,
        "tau": tau,
        "grid": [float(g) for g in result.grid],
        "seed": seed,
        "flagged": list(result.flagged),
    }
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2)


def load_schedule(path) -> tuple[ThresholdSchedule, dict]:
    with open(path) as fh:
        payload = json.load(fh)
    eps = payload.get("eps")
    if not isinstance(eps, list) or not eps:
        raise ValidationError(f"{path}: missing or empty 'eps' array")
    if any(not isinstance(e, (int, float)) or not math.isfinite(e) or e < 0 for e in eps):
        raise ValidationError(f"{path}: thresholds must be finite and >= 0")
    meta = {k: v for k, v in payload.items() if k != "eps"}
    return ThresholdSchedule(np.asarray(eps, dtype=np.float64)), meta
