"""Dense float64 arrays, seeded randomness and a small thin SVD.

Tensors are plain ``numpy.ndarray`` objects of dtype float64 in C (row-major)
order. The helpers here validate shapes and finiteness at the boundaries so
that the modules built on top can stay terse.

Randomness comes from :class:`SeededRng`, a wrapper around numpy's PCG64 bit
generator. PCG64 is a documented 128-bit permuted congruential generator whose
output stream is defined independently of platform, so golden values recorded
on one machine reproduce on any other.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

DTYPE = np.float64

SVD_MAX_SWEEPS = 100
SVD_TOL = 1e-12


class ShapeError(ValueError):
    """Operand shapes do not conform."""


class NumericError(ArithmeticError):
    """An input or result contains NaN or Inf."""


class ConvergenceError(RuntimeError):
    """An iterative routine hit its iteration cap."""


def as_tensor(data, shape=None) -> np.ndarray:
    arr = np.array(data, dtype=DTYPE, order="C")
    if shape is not None:
        shape = tuple(int(s) for s in shape)
        if any(s <= 0 for s in shape):
            raise ShapeError(f"dimension sizes must be positive, got {shape}")
        if arr.size != int(np.prod(shape)):
            raise ShapeError(f"{arr.size} values cannot fill shape {shape}")
        arr = arr.reshape(shape)
    return arr


def check_finite(arr: np.ndarray, what: str = "array") -> np.ndarray:
    if not np.all(np.isfinite(arr)):
        raise NumericError(f"{what} contains non-finite values")
    return arr


def matmul(a, b) -> np.ndarray:
    a = np.asarray(a, dtype=DTYPE)
    b = np.asarray(b, dtype=DTYPE)
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeError(f"matmul expects matrices, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"inner dimensions differ: {a.shape} @ {b.shape}")
    return a @ b


class SeededRng:
    """Reproducible random stream keyed by an integer seed."""

    def __init__(self, seed: int):
        self.seed = int(seed)
        self._gen = np.random.Generator(np.random.PCG64(self.seed))

    def normal(self, shape, stddev: float = 1.0) -> np.ndarray:
        return gaussian(self, shape, stddev)

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)

    def choice(self, n: int, size: int) -> np.ndarray:
        """``size`` distinct indices from ``range(n)``, uniformly."""
        return self._gen.choice(n, size=size, replace=False)

    def integers(self, low: int, high: int, size=None):
        return self._gen.integers(low, high, size=size)

    def spawn(self, key: int) -> "SeededRng":
        """Independent child stream; same (seed, key) gives the same child."""
        return SeededRng(int(np.random.SeedSequence([self.seed, int(key)]).generate_state(1)[0]))


def gaussian(rng: SeededRng, shape, stddev: float = 1.0) -> np.ndarray:
    if not stddev > 0:
        raise ValueError(f"stddev must be positive, got {stddev}")
    if isinstance(shape, int):
        shape = (shape,)
    shape = tuple(int(s) for s in shape)
    if any(s < 0 for s in shape):
        raise ShapeError(f"negative dimension in {shape}")
    return rng._gen.standard_normal(shape) * stddev


@dataclass(frozen=True)
class SvdResult:
    left: np.ndarray  # k x p
    singular_values: np.ndarray  # p
    right: np.ndarray  # T x p

    def reconstruct(self, rank: int | None = None) -> np.ndarray:
        p = len(self.singular_values) if rank is None else rank
        return (self.left[:, :p] * self.singular_values[:p]) @ self.right[:, :p].T


def _complete_orthonormal(q: np.ndarray, missing: np.ndarray) -> None:
    """Fill columns ``missing`` of ``q`` in place with an orthonormal completion."""
    n = q.shape[0]
    have = [j for j in range(q.shape[1]) if j not in set(missing.tolist())]
    basis = [q[:, j] for j in have]
    it = iter(np.eye(n))
    for j in missing:
        for e in it:
            v = e.copy()
            for _ in range(2):
                for b in basis:
                    v -= (b @ v) * b
            norm = np.linalg.norm(v)
            if norm > 1e-8:
                v /= norm
                q[:, j] = v
                basis.append(v)
                break


def _jacobi_tall(m: np.ndarray):
    """One-sided Jacobi on a k x T matrix with T <= k."""
    a = m.copy()
    t = a.shape[1]
    v = np.eye(t)
    for _ in range(SVD_MAX_SWEEPS):
        rotated = False
        for i in range(t - 1):
            for j in range(i + 1, t):
                ai = a[:, i]
                aj = a[:, j]
                alpha = ai @ ai
                beta = aj @ aj
                gamma = ai @ aj
                if gamma == 0.0 or abs(gamma) <= SVD_TOL * np.sqrt(alpha * beta):
                    continue
                rotated = True
                zeta = (beta - alpha) / (2.0 * gamma)
                tan = np.copysign(1.0, zeta) / (abs(zeta) + np.sqrt(1.0 + zeta * zeta))
                c = 1.0 / np.sqrt(1.0 + tan * tan)
                s = c * tan
                a[:, [i, j]] = np.column_stack((c * ai - s * aj, s * ai + c * aj))
                vi = v[:, i].copy()
                v[:, i] = c * vi - s * v[:, j]
                v[:, j] = s * vi + c * v[:, j]
        if not rotated:
            break
    else:
        raise ConvergenceError(f"Jacobi SVD did not converge in {SVD_MAX_SWEEPS} sweeps")

    sv = np.linalg.norm(a, axis=0)
    order = np.argsort(-sv, kind="stable")
    sv = sv[order]
    a = a[:, order]
    v = v[:, order]
    u = np.zeros_like(a)
    nz = sv > 0
    u[:, nz] = a[:, nz] / sv[nz]
    if not nz.all():
        _complete_orthonormal(u, np.flatnonzero(~nz))
    return u, sv, v


def svd_thin(m) -> SvdResult:
    """Thin SVD ``m = U diag(s) V^T`` by one-sided Jacobi rotations.

    Singular values come out non-increasing (ties keep computation order) and
    each left singular vector has its first nonzero component positive.
    """
    m = np.asarray(m, dtype=DTYPE)
    if m.ndim != 2 or min(m.shape) < 1:
        raise ShapeError(f"svd_thin expects a non-empty matrix, got shape {m.shape}")
    check_finite(m, "svd input")
    k, t = m.shape
    if t <= k:
        u, s, v = _jacobi_tall(m)
    else:
        v, s, u = _jacobi_tall(m.T)
    for j in range(u.shape[1]):
        nz = np.flatnonzero(np.abs(u[:, j]) > 1e-14)
        if nz.size and u[nz[0], j] < 0:
            u[:, j] = -u[:, j]
            v[:, j] = -v[:, j]
    return SvdResult(left=u, singular_values=s, right=v)
