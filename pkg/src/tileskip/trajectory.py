"""Trajectory container and the LATN tensor file format.

A trajectory holds the (Q, K, V) operands of every (timestep, layer, head)
slot as one float32 array of shape (T, layers, heads, 3, n, d).

File layout (little endian):

    magic   4 bytes  "LATN"
    version u32      1
    layers  u32
    heads   u32
    n       u32
    d       u32
    T       u32
    data    T*layers*heads*3 matrices of n*d float32, row major,
            ordered (t, layer, head, {Q, K, V})
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .attention import AttentionOperand
from .errors import ValidationError, require

MAGIC = b"LATN"
VERSION = 1
_HEADER = struct.Struct("<4sIIIIII")


@dataclass
class Trajectory:
    data: np.ndarray  # (T, layers, heads, 3, n, d) float32

    def __post_init__(self):
        self.data = np.ascontiguousarray(self.data, dtype=np.float32)
        require(self.data.ndim == 6 and self.data.shape[3] == 3,
                f"trajectory data must be (T, layers, heads, 3, n, d), got {self.data.shape}")

    @property
    def timesteps(self) -> int:
        return self.data.shape[0]

    @property
    def layers(self) -> int:
        return self.data.shape[1]

    @property
    def heads(self) -> int:
        return self.data.shape[2]

    @property
    def n(self) -> int:
        return self.data.shape[4]

    @property
    def d(self) -> int:
        return self.data.shape[5]

    def operand(self, t: int, layer: int = 0, head: int = 0) -> AttentionOperand:
        q, k, v = self.data[t, layer, head]
        return AttentionOperand(q, k, v)

    def slice_operands(self, layer: int, head: int) -> list:
        """All timesteps of one (layer, head) stream."""
        return [self.operand(t, layer, head) for t in range(self.timesteps)]

    @classmethod
    def from_operands(cls, ops) -> "Trajectory":
        """Wrap a single-stream operand sequence as a 1-layer 1-head trajectory."""
        data = np.stack([np.stack([op.q, op.k, op.v]) for op in ops])
        return cls(data[:, None, None])


def write_latn(path, traj: Trajectory) -> None:
    t, layers, heads, _, n, d = traj.data.shape
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, layers, heads, n, d, t))
        fh.write(traj.data.astype("<f4", copy=False).tobytes())


def read_latn(path) -> Trajectory:
    with open(path, "rb") as fh:
        header = fh.read(_HEADER.size)
        if len(header) < _HEADER.size:
            raise ValidationError(f"{path}: truncated header")
        magic, version, layers, heads, n, d, t = _HEADER.unpack(header)
        if magic != MAGIC:
            raise ValidationError(f"{path}: bad magic {magic!r}")
        if version != VERSION:
            raise ValidationError(f"{path}: unsupported version {version}")
        payload = fh.read()
    expected = t * layers * heads * 3 * n * d * 4
    if len(payload) != expected:
        raise ValidationError(
            f"{path}: payload is {len(payload)} bytes, header implies {expected}")
    data = np.frombuffer(payload, dtype="<f4").reshape(t, layers, heads, 3, n, d)
    return Trajectory(data.copy())
