"""Linear measurement operators ``A_t`` with exact adjoints, and ``y_t = A_t x_t + e_t``.

Frames are flattened in C order (channel, row, column) before measurement.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tensor_core import DTYPE, SeededRng, ShapeError, gaussian


def _vector(v, n: int, what: str) -> np.ndarray:
    v = np.asarray(v, dtype=DTYPE).reshape(-1)
    if v.size != n:
        raise ShapeError(f"{what} has length {v.size}, expected {n}")
    return v


class MeasurementOperator:
    kind: str
    n: int

    @property
    def m(self) -> int:
        raise NotImplementedError

    def apply(self, x) -> np.ndarray:
        raise NotImplementedError

    def adjoint(self, y) -> np.ndarray:
        raise NotImplementedError


@dataclass(frozen=True)
class Identity(MeasurementOperator):
    n: int
    kind = "identity"

    @property
    def m(self) -> int:
        return self.n

    def apply(self, x):
        return _vector(x, self.n, "frame").copy()

    def adjoint(self, y):
        return _vector(y, self.n, "measurement").copy()


@dataclass(frozen=True, eq=False)
class GaussianDense(MeasurementOperator):
    matrix: np.ndarray
    seed: int | None = None
    kind = "gaussian"

    @property
    def n(self) -> int:
        return self.matrix.shape[1]

    @property
    def m(self) -> int:
        return self.matrix.shape[0]

    def apply(self, x):
        return self.matrix @ _vector(x, self.n, "frame")

    def adjoint(self, y):
        return self.matrix.T @ _vector(y, self.m, "measurement")


@dataclass(frozen=True, eq=False)
class PixelMask(MeasurementOperator):
    n: int
    kept: np.ndarray
    kind = "mask"

    def __post_init__(self):
        kept = np.asarray(self.kept, dtype=np.int64)
        if kept.ndim != 1 or (kept.size and (kept[0] < 0 or kept[-1] >= self.n)) or np.any(np.diff(kept) <= 0):
            raise ValueError("mask indices must be strictly increasing and within [0, n)")
        object.__setattr__(self, "kept", kept)

    @property
    def m(self) -> int:
        return self.kept.size

    @property
    def keep_fraction(self) -> float:
        return self.m / self.n

    def apply(self, x):
        return _vector(x, self.n, "frame")[self.kept]

    def adjoint(self, y):
        out = np.zeros(self.n)
        out[self.kept] = _vector(y, self.m, "measurement")
        return out


def apply(op: MeasurementOperator, x) -> np.ndarray:
    return op.apply(x)


def adjoint(op: MeasurementOperator, y) -> np.ndarray:
    return op.adjoint(y)


def make_gaussian(m: int, n: int, rng: SeededRng) -> GaussianDense:
    """Dense ``m x n`` matrix with i.i.d. N(0, 1/m) entries."""
    if m < 1 or n < 1:
        raise ValueError(f"invalid gaussian operator size {m}x{n}")
    return GaussianDense(gaussian(rng, (m, n), np.sqrt(1.0 / m)), seed=rng.seed)


def kept_count(n: int, p: float) -> int:
    # round half up
    return int(np.floor(p * n + 0.5))


def make_mask(n: int, keep_fraction: float, rng: SeededRng) -> PixelMask:
    if not 0.0 < keep_fraction <= 1.0:
        raise ValueError(f"keep fraction must lie in (0, 1], got {keep_fraction}")
    count = kept_count(n, keep_fraction)
    if count == n:
        kept = np.arange(n)
    else:
        kept = np.sort(rng.choice(n, count))
    return PixelMask(n, kept)


def make_operators(spec: str, n: int, frames: int, rng: SeededRng, *, shared_mask: bool = False) -> list[MeasurementOperator]:
    """Build one operator per frame from ``identity``, ``gaussian:M`` or ``mask:P``."""
    kind, _, arg = spec.partition(":")
    if kind == "identity":
        return [Identity(n) for _ in range(frames)]
    if kind == "gaussian":
        m = int(arg)
        return [make_gaussian(m, n, rng) for _ in range(frames)]
    if kind == "mask":
        p = float(arg)
        if shared_mask:
            mask = make_mask(n, p, rng)
            return [mask] * frames
        return [make_mask(n, p, rng) for _ in range(frames)]
    raise ValueError(f"unknown measurement spec {spec!r}")


@dataclass
class MeasurementSet:
    operators: list[MeasurementOperator]
    measurements: list[np.ndarray]
    noise_std: float = 0.0

    def __post_init__(self):
        if len(self.operators) != len(self.measurements):
            raise ShapeError("need one measurement vector per operator")
        for t, (op, y) in enumerate(zip(self.operators, self.measurements)):
            if y.shape != (op.m,):
                raise ShapeError(f"frame {t}: measurement length {y.shape} does not match operator ({op.m})")

    def __len__(self):
        return len(self.operators)


def measure_sequence(frames, operators, noise_std: float, rng: SeededRng) -> MeasurementSet:
    frames = np.asarray(frames, dtype=DTYPE)
    if len(frames) != len(operators):
        raise ShapeError(f"{len(frames)} frames but {len(operators)} operators")
    if noise_std < 0:
        raise ValueError("noise_std must be non-negative")
    ys = []
    for x, op in zip(frames, operators):
        y = op.apply(x.reshape(-1))
        if noise_std > 0:
            y = y + gaussian(rng, y.shape, noise_std)
        ys.append(y)
    return MeasurementSet(list(operators), ys, float(noise_std))
