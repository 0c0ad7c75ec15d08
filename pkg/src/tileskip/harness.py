"""Synthetic denoising trajectories and the experiments run on them.

Real denoising sequences evolve slowly between adjacent timesteps, which is
exactly why tile skip decisions persist.  The generator reproduces that
structure deterministically: per (layer, head, role) it draws two Gaussian
endpoints and walks a cosine/sine arc between them, optionally adding
per-step jitter whose relative size is the drift rate ``rho``.

Experiments:

* persistence:  do tiles that satisfy the skip condition at step t still
  satisfy it delta steps later, compared to the base rate?
* perturbation: does the same one-step sparsity error hurt more when
  injected early in the sequence than late?
* forward bound: the output-difference inequality
  ||dy|| <= ||dp|| * ||V_t||_F + ||dV||_F for stochastic rows p.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .attention import (
    AttentionOperand,
    SkipMode,
    TileGeometry,
    tiled_attention,
)
from .errors import require
from .ordering import OrderingStrategy
from .trajectory import Trajectory


@dataclass(frozen=True)
class TrajectoryConfig:
    timesteps: int
    layers: int
    heads: int
    n: int
    d: int
    rho: float
    seed: int
    # endpoint field shape: correlation length along the token axis and the
    # logit scale; defaults emulate the peaked, locally coherent attention
    # patterns that make tile skipping worthwhile in the first place
    corr: float = 8.0
    scale: float = 3.0

    def __post_init__(self):
        require(self.timesteps >= 1 and self.layers >= 1 and self.heads >= 1
                and self.n >= 1 and self.d >= 1,
                "all trajectory counts must be positive")
        require(0.0 <= self.rho <= 1.0, f"rho must be in [0, 1], got {self.rho}")
        require(self.corr >= 0.0, f"corr must be >= 0, got {self.corr}")
        require(self.scale > 0.0, f"scale must be positive, got {self.scale}")


def _endpoint_field(rng, n: int, d: int, corr: float, scale: float) -> np.ndarray:
    """Seeded Gaussian field, low-passed along the token axis.

    White noise would put some row's near-maximum score in almost every key
    tile, so whole-tile dominance would never fire; tokens that evolve
    smoothly along the sequence give the coherent score landscape the skip
    condition feeds on.  RMS is normalized before scaling so the logit
    magnitude is controlled by ``scale`` alone.
    """
    x = rng.standard_normal((n, d))
    if corr > 0.0 and n > 1:
        freq = np.fft.rfftfreq(n)
        kernel = np.exp(-0.5 * (2.0 * math.pi * freq * corr) ** 2)
        x = np.fft.irfft(np.fft.rfft(x, axis=0) * kernel[:, None], n=n, axis=0)
        x /= math.sqrt(float((x ** 2).mean()))
    return x * scale


def _arc_weights(t: int, timesteps: int) -> tuple[float, float]:
    u = t / (timesteps - 1) if timesteps > 1 else 0.0
    if u == 0.0:
        return 1.0, 0.0
    if u == 1.0:
        return 0.0, 1.0
    theta = (math.pi / 2.0) * u
    return math.cos(theta), math.sin(theta)


def generate_trajectory(config: TrajectoryConfig) -> Trajectory:
    """Deterministic drifting trajectory.

    Slot (t, layer, head, role) holds cos(theta_t) X_A + sin(theta_t) X_B
    with theta_t = (pi/2) t/(T-1), plus N(0, sigma) jitter where
    sigma = rho ||X_A||_F / sqrt(n d).  rho = 0 gives the jitter-free path
    whose endpoints are exactly X_A and X_B.
    """
    rng = np.random.default_rng(config.seed)
    T, n, d = config.timesteps, config.n, config.d
    data = np.empty((T, config.layers, config.heads, 3, n, d), dtype=np.float32)
    for layer in range(config.layers):
        for head in range(config.heads):
            for role in range(3):
                xa = _endpoint_field(rng, n, d, config.corr, config.scale)
                xb = _endpoint_field(rng, n, d, config.corr, config.scale)
                sigma = config.rho * np.linalg.norm(xa) / math.sqrt(n * d)
                for t in range(T):
                    cw, sw = _arc_weights(t, T)
                    x = cw * xa + sw * xb
                    if config.rho > 0.0:
                        x = x + rng.normal(0.0, sigma, size=(n, d))
                    data[t, layer, head, role] = x.astype(np.float32)
    return Trajectory(data)


def stationary_trajectory(config: TrajectoryConfig) -> Trajectory:
    """Coherent trajectory: both interpolation endpoints are the same draw.

    With rho = 0 every step is identical (the exact-persistence control);
    with rho > 0 the fixed pattern carries the same per-step jitter as the
    drifting generator, which is the regime evolutionary skipping targets.
    """
    rng = np.random.default_rng(config.seed)
    T, n, d = config.timesteps, config.n, config.d
    data = np.empty((T, config.layers, config.heads, 3, n, d), dtype=np.float32)
    for layer in range(config.layers):
        for head in range(config.heads):
            for role in range(3):
                xa = _endpoint_field(rng, n, d, config.corr, config.scale)
                sigma = config.rho * np.linalg.norm(xa) / math.sqrt(n * d)
                for t in range(T):
                    x = xa
                    if config.rho > 0.0:
                        x = x + rng.normal(0.0, sigma, size=(n, d))
                    data[t, layer, head, role] = x.astype(np.float32)
    return Trajectory(data)


# -- persistence --------------------------------------------------------------


@dataclass(frozen=True)
class PersistenceSample:
    persisted: float | None   # None when no tile satisfied the condition at t
    base_rate: float


@dataclass
class PersistenceReport:
    epsilon: float
    deltas: tuple
    total_cells: int
    samples: dict  # (t, delta) -> PersistenceSample


def _skip_sets(traj: Trajectory, geom: TileGeometry, epsilon: float,
               ordering: OrderingStrategy) -> list:
    """Per timestep, the union over slices of condition-satisfying tiles.

    Fresh instrumented PV_SKIP evaluation at every step: no mask carryover,
    so the sets reflect the condition itself, not its evolutionary reuse.
    """
    sets = []
    for t in range(traj.timesteps):
        cells = set()
        for layer in range(traj.layers):
            for head in range(traj.heads):
                res = tiled_attention(traj.operand(t, layer, head), geom,
                                      SkipMode.pv_skip(epsilon),
                                      ordering=ordering, collect_trace=True)
                cells |= {(layer, head, i, j) for i, j in res.trace.pv_skipped}
        sets.append(cells)
    return sets


def persistence_experiment(
    traj: Trajectory,
    geom: TileGeometry,
    epsilon: float,
    deltas,
    ordering: OrderingStrategy = OrderingStrategy.LINEAR,
    probe_ts=None,
) -> PersistenceReport:
    """Measure how often skip-condition membership survives a step gap."""
    deltas = tuple(sorted(set(int(d) for d in deltas)))
    require(all(d >= 1 for d in deltas), "deltas must be >= 1")
    require(deltas and deltas[-1] < traj.timesteps,
            "largest delta leaves no (t, t+delta) pair")
    sets = _skip_sets(traj, geom, epsilon, ordering)
    total = traj.layers * traj.heads * geom.ti * geom.tj

    samples = {}
    for delta in deltas:
        ts = range(traj.timesteps - delta) if probe_ts is None else probe_ts
        for t in ts:
            require(0 <= t and t + delta < traj.timesteps,
                    f"probe t={t}, delta={delta} outside trajectory")
            now, later = sets[t], sets[t + delta]
            persisted = len(now & later) / len(now) if now else None
            samples[(t, delta)] = PersistenceSample(persisted, len(later) / total)
    return PersistenceReport(epsilon, deltas, total, samples)


# -- perturbation timing -------------------------------------------------------


def _mixing_maps(T: int, d: int, seed: int) -> list:
    """Fixed per-step orthogonal d x d maps with a canonical sign choice."""
    rng = np.random.default_rng(seed)
    maps = []
    for _ in range(T):
        q, r = np.linalg.qr(rng.standard_normal((d, d)))
        maps.append(q * np.sign(np.diag(r)))
    return maps


def _propagated_run(traj, geom, ordering, mixers, gamma, inject_t, epsilon):
    """Run the sequence through the state feedback loop, return final outputs.

    Each step's attention output, scaled and pushed through that step's
    orthogonal mixer, becomes the next step's state: h' = gamma y R_t.  The
    state perturbs Q, K and V, so an injected error is re-expressed through
    the attention pathway at every subsequent step; the mixer itself neither
    shrinks nor grows it.  Replacing (rather than accumulating) the state
    keeps the trajectory magnitudes stationary, which keeps the softmax away
    from the saturated regime where late errors would vanish in rounding.
    All steps run the tiled engine, so an inject step that skips nothing is
    bitwise identical to the clean run.
    """
    finals = []
    for layer in range(traj.layers):
        for head in range(traj.heads):
            h = np.zeros((traj.n, traj.d))
            y = None
            for t in range(traj.timesteps):
                base = traj.operand(t, layer, head)
                op = AttentionOperand(base.q + h, base.k + h, base.v + h)
                mode = (SkipMode.pv_skip(epsilon) if t == inject_t
                        else SkipMode.dense())
                y = tiled_attention(op, geom, mode, ordering=ordering).output
                h = gamma * y @ mixers[t]
            finals.append(y)
    return finals


def perturbation_experiment(
    traj: Trajectory,
    geom: TileGeometry,
    inject_ts,
    epsilon_inject: float,
    ordering: OrderingStrategy = OrderingStrategy.LINEAR,
    gamma: float = 1.0,
    mix_seed: int = 0,
) -> dict:
    """Final-step error for a one-step sparsity injection at each t*.

    Earlier injections pass through more feedback steps, so their errors
    compound; the returned map t* -> eta_final exposes the trend.
    """
    inject_ts = sorted(set(int(t) for t in inject_ts))
    require(all(0 <= t < traj.timesteps for t in inject_ts),
            "inject timesteps must lie inside the trajectory")
    mixers = _mixing_maps(traj.timesteps, traj.d, mix_seed)
    clean = _propagated_run(traj, geom, ordering, mixers, gamma,
                            inject_t=None, epsilon=0.0)
    denom = sum(float(np.abs(y).sum()) for y in clean)
    require(denom > 0.0, "clean run produced an all-zero final output")

    etas = {}
    for t_star in inject_ts:
        pert = _propagated_run(traj, geom, ordering, mixers, gamma,
                               inject_t=t_star, epsilon=epsilon_inject)
        num = sum(float(np.abs(p - c).sum()) for p, c in zip(pert, clean))
        etas[t_star] = num / denom
    return etas


# -- forward bound -------------------------------------------------------------


@dataclass(frozen=True)
class BoundCheck:
    holds: bool
    slack: float      # min over rows of rhs - lhs
    lhs: np.ndarray
    rhs: np.ndarray


def forward_bound_check(p_t, p_prev, v_t, v_prev) -> BoundCheck:
    """Check ||dy||_2 <= ||dp||_2 ||V_t||_F + ||dV||_F for stochastic rows.

    ``p_t`` and ``p_prev`` are attention rows (1-D) or stacks of rows (2-D);
    the inequality is a theorem for valid inputs, so ``holds`` is False only
    on a norm-code bug.  Slack is diagnostic.
    """
    p_t = np.atleast_2d(np.asarray(p_t, dtype=np.float64))
    p_prev = np.atleast_2d(np.asarray(p_prev, dtype=np.float64))
    v_t = np.asarray(v_t, dtype=np.float64)
    v_prev = np.asarray(v_prev, dtype=np.float64)
    require(p_t.shape == p_prev.shape, "transition row shapes differ")
    require(v_t.shape == v_prev.shape, "value matrix shapes differ")
    require(p_t.shape[1] == v_t.shape[0],
            f"row length {p_t.shape[1]} does not match V rows {v_t.shape[0]}")
    for name, p in (("p_t", p_t), ("p_prev", p_prev)):
        require(bool((p >= 0.0).all()), f"{name} has negative entries")
        require(bool(np.abs(p.sum(axis=1) - 1.0).max() <= 1e-6),
                f"{name} rows must sum to 1 within 1e-6")

    dy = p_t @ v_t - p_prev @ v_prev
    lhs = np.linalg.norm(dy, axis=1)
    dp = np.linalg.norm(p_t - p_prev, axis=1)
    rhs = dp * np.linalg.norm(v_t) + np.linalg.norm(v_t - v_prev)
    # float guard: the bound can be tight to the last ulp in rank-1 cases
    tol = 1e-12 * np.maximum(rhs, 1.0)
    holds = bool((lhs <= rhs + tol).all())
    return BoundCheck(holds, float((rhs - lhs).min()), lhs, rhs)
