import numpy as np
import pytest

from tileskip import AttentionOperand, TrajectoryConfig, generate_trajectory


def gaussian_operand(n, d, seed, dtype=np.float32, scale=1.0):
    """Unstructured operand; fine for oracle-equivalence checks."""
    rng = np.random.default_rng(seed)
    mats = [(rng.standard_normal((n, d)) * scale).astype(dtype) for _ in range(3)]
    return AttentionOperand(*mats)


def structured_operand(n, d, seed, scale=3.0, corr=8.0):
    """Sequence-correlated operand; produces real tile-level dominance."""
    cfg = TrajectoryConfig(1, 1, 1, n, d, rho=0.0, seed=seed, corr=corr, scale=scale)
    return generate_trajectory(cfg).operand(0)


def rel_linf(a, b):
    """Max-abs-entry norm of the difference, relative to the reference."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    return float(np.abs(a - b).max() / np.abs(b).max())


@pytest.fixture
def rng():
    return np.random.default_rng(0)
