"""Rank-4 float64 tensors and deterministic, splittable random number generation.

All network math in this package runs on plain numpy arrays of shape
(n, c, h, w) in float64, row-major.  The helpers here enforce the shape and
finiteness contracts and provide the single RNG abstraction every other
module draws randomness from.
"""

from __future__ import annotations

import struct

import numpy as np

Shape4 = tuple[int, int, int, int]


class ShapeError(ValueError):
    """Tensor shape does not satisfy an operation's contract."""


class NonFiniteError(FloatingPointError):
    """A NaN or Inf appeared where only finite values are allowed."""


def _validate_shape(shape) -> Shape4:
    if len(shape) != 4:
        raise ShapeError(f"expected a 4-tuple shape, got {shape!r}")
    dims = tuple(int(d) for d in shape)
    if any(d < 1 for d in dims):
        raise ShapeError(f"all dimensions must be >= 1, got {dims}")
    return dims


def tensor_new(shape, fill: float = 0.0) -> np.ndarray:
    """Allocate an (n, c, h, w) float64 tensor filled with a constant."""
    dims = _validate_shape(shape)
    return np.full(dims, float(fill), dtype=np.float64)


def check_finite(t: np.ndarray, what: str = "tensor") -> np.ndarray:
    if not np.all(np.isfinite(t)):
        raise NonFiniteError(f"{what} contains NaN or Inf")
    return t


_BINARY_OPS = {
    "add": np.add,
    "sub": np.subtract,
    "mul": np.multiply,
}


def map_binary(a: np.ndarray, b: np.ndarray, op: str) -> np.ndarray:
    """Elementwise add/sub/mul of two same-shape tensors."""
    if a.shape != b.shape:
        raise ShapeError(f"shape mismatch: {a.shape} vs {b.shape}")
    if op not in _BINARY_OPS:
        raise ValueError(f"unknown op {op!r}")
    return check_finite(_BINARY_OPS[op](a, b), f"map_binary({op}) result")


class SeededRng:
    """Deterministic RNG with hierarchical splitting.

    A generator is identified by (seed, path).  `split(*keys)` derives a
    child whose stream is independent of any sibling's, regardless of the
    order children are created or drawn from.  Streams are backed by
    numpy's PCG64 seeded through SeedSequence(seed, spawn_key=path), which
    is stable across platforms and numpy releases.
    """

    def __init__(self, seed: int, path: tuple[int, ...] = ()):
        if seed < 0:
            raise ValueError("seed must be a non-negative integer")
        self.seed = int(seed)
        self.path = tuple(int(k) for k in path)
        self._seq = np.random.SeedSequence(self.seed, spawn_key=self.path)
        self._gen = np.random.Generator(np.random.PCG64(self._seq))

    def split(self, *keys: int) -> "SeededRng":
        """Child generator for the given sub-path; never advances self."""
        return SeededRng(self.seed, self.path + tuple(int(k) for k in keys))

    @property
    def key(self) -> int:
        """Stable 64-bit identifier of this stream (for logs and CSV)."""
        return int(self._seq.generate_state(1, dtype=np.uint64)[0])

    def uniform(self, shape, lo: float = 0.0, hi: float = 1.0) -> np.ndarray:
        if not lo < hi:
            raise ValueError(f"require lo < hi, got lo={lo}, hi={hi}")
        return self._gen.uniform(lo, hi, size=shape).astype(np.float64, copy=False)

    def integers(self, lo: int, hi: int, size=None):
        return self._gen.integers(lo, hi, size=size)

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)


def rng_uniform(rng: SeededRng, shape, lo: float, hi: float) -> np.ndarray:
    """Rank-4 tensor of i.i.d. uniform [lo, hi) samples; advances rng."""
    dims = _validate_shape(shape)
    return rng.uniform(dims, lo, hi)


# .t4 debug dump: four little-endian uint32 dims, then the row-major
# float64 buffer, little-endian.

def dump_t4(t: np.ndarray, path) -> None:
    dims = _validate_shape(t.shape)
    with open(path, "wb") as f:
        f.write(struct.pack("<4I", *dims))
        f.write(np.ascontiguousarray(t, dtype="<f8").tobytes())


def load_t4(path) -> np.ndarray:
    with open(path, "rb") as f:
        dims = struct.unpack("<4I", f.read(16))
        data = np.frombuffer(f.read(), dtype="<f8")
    dims = _validate_shape(dims)
    expected = dims[0] * dims[1] * dims[2] * dims[3]
    if data.size != expected:
        raise ShapeError(f"t4 payload has {data.size} values, header implies {expected}")
    return data.reshape(dims).astype(np.float64)
