"""Projections of the latent matrix ``Z`` (k x T, one column per frame).

* :func:`project_rank` keeps the top-r singular triplets (best Frobenius
  rank-r approximation).
* :func:`project_affine` keeps the column mean plus the top-d principal
  directions of the centred columns; ``d = 1`` puts every code on a line.
* :func:`project_affine_grouped` does a global rank projection followed by an
  affine projection inside each contiguous group of columns.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .tensor_core import DTYPE, ShapeError, check_finite, svd_thin


@dataclass
class LatentBasis:
    mean: np.ndarray  # (k,)
    directions: np.ndarray  # (k, d), orthonormal columns
    coefficients: np.ndarray  # (d, T)

    def reconstruct(self) -> np.ndarray:
        return self.mean[:, None] + self.directions @ self.coefficients

    @property
    def dim(self) -> int:
        return self.directions.shape[1]


def _as_latent(z) -> np.ndarray:
    z = np.asarray(z, dtype=DTYPE)
    if z.ndim != 2:
        raise ShapeError(f"latent matrix must be 2-D (k x T), got shape {z.shape}")
    return check_finite(z, "latent matrix")


def project_rank(z, r: int) -> tuple[np.ndarray, LatentBasis]:
    z = _as_latent(z)
    k, t = z.shape
    if not 1 <= r <= min(k, t):
        raise ValueError(f"rank {r} outside [1, {min(k, t)}]")
    svd = svd_thin(z)
    u = svd.left[:, :r]
    coeffs = svd.singular_values[:r, None] * svd.right[:, :r].T
    projected = u @ coeffs
    return projected, LatentBasis(np.zeros(k), u.copy(), coeffs)


def project_affine(z, d: int) -> tuple[np.ndarray, LatentBasis]:
    z = _as_latent(z)
    k, t = z.shape
    if not 0 <= d <= min(k, t - 1):
        raise ValueError(f"affine dimension {d} outside [0, {min(k, t - 1)}]")
    mean = z.mean(axis=1)
    centred = z - mean[:, None]
    if d == 0:
        return np.repeat(mean[:, None], t, axis=1), LatentBasis(mean, np.zeros((k, 0)), np.zeros((0, t)))
    svd = svd_thin(centred)
    u = svd.left[:, :d].copy()
    coeffs = u.T @ centred
    basis = LatentBasis(mean, u, coeffs)
    return basis.reconstruct(), basis


def _check_groups(bounds, t: int) -> list[tuple[int, int]]:
    """``bounds`` are group start indices (first must be 0) or explicit (start, stop) pairs."""
    bounds = list(bounds)
    if bounds and not isinstance(bounds[0], (tuple, list)):
        starts = [int(b) for b in bounds]
        bounds = list(zip(starts, starts[1:] + [t]))
    pairs = [(int(a), int(b)) for a, b in bounds]
    if not pairs or pairs[0][0] != 0 or pairs[-1][1] != t:
        raise ValueError(f"groups {pairs} do not cover columns 0..{t}")
    for (a, b), (c, _) in zip(pairs, pairs[1:] + [(t, t)]):
        if not a < b or b != c:
            raise ValueError(f"groups {pairs} are not a contiguous partition")
    return pairs


def project_affine_grouped(z, groups, d_global: int, d_per_group: int) -> np.ndarray:
    z = _as_latent(z)
    pairs = _check_groups(groups, z.shape[1])
    out, _ = project_rank(z, d_global)
    for a, b in pairs:
        if b - a > 1:
            out[:, a:b], _ = project_affine(out[:, a:b], min(d_per_group, b - a - 1))
    return out


def interpolate(z_a, z_b, s: float, *, strict: bool = True) -> np.ndarray:
    """Straight-line interpolation ``(1 - s) z_a + s z_b``."""
    z_a = np.asarray(z_a, dtype=DTYPE)
    z_b = np.asarray(z_b, dtype=DTYPE)
    if z_a.shape != z_b.shape:
        raise ShapeError(f"endpoint shapes differ: {z_a.shape} vs {z_b.shape}")
    if not 0.0 <= s <= 1.0:
        if strict:
            raise ValueError(f"interpolation position {s} outside [0, 1]")
        warnings.warn(f"extrapolating latent codes at s={s}", stacklevel=2)
    if s == 0.0:
        return z_a.copy()
    if s == 1.0:
        return z_b.copy()
    return (1.0 - s) * z_a + s * z_b


def line_distances(z) -> np.ndarray:
    """Distance of every column from the best-fit line through the columns."""
    z = _as_latent(z)
    if z.shape[1] < 2:
        return np.zeros(z.shape[1])
    line, _ = project_affine(z, 1)
    return np.linalg.norm(z - line, axis=0)


def rank_ratio(z, r: int) -> float:
    """``sigma_{r+1} / sigma_1`` of ``z`` (0 when there is no (r+1)-th value)."""
    s = svd_thin(_as_latent(z)).singular_values
    if r >= len(s) or s[0] == 0:
        return 0.0
    return float(s[r] / s[0])


def order_monotonicity(basis: LatentBasis) -> float:
    """Fraction of consecutive steps along the first direction sharing the majority sign.

    1.0 means the codes are visited in temporal order along the line.
    """
    if basis.dim == 0 or basis.coefficients.shape[1] < 2:
        return 1.0
    steps = np.diff(basis.coefficients[0])
    pos = int(np.sum(steps > 0))
    neg = int(np.sum(steps < 0))
    return max(pos, neg) / steps.size


def write_basis_csv(basis: LatentBasis, path) -> None:
    k, d = basis.directions.shape
    t = basis.coefficients.shape[1]
    width = max(k, t)
    rows = [["mean", 0, *basis.mean]]
    rows += [["direction", j, *basis.directions[:, j]] for j in range(d)]
    rows += [["coefficient", j, *basis.coefficients[j]] for j in range(d)]
    with open(Path(path), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["kind", "index", *[f"v{i}" for i in range(width)]])
        for row in rows:
            w.writerow([row[0], row[1], *(repr(float(v)) for v in row[2:])])


def read_basis_csv(path) -> LatentBasis:
    mean, dirs, coeffs = None, [], []
    with open(Path(path), newline="") as fh:
        r = csv.reader(fh)
        next(r)
        for row in r:
            vals = np.array([float(v) for v in row[2:] if v != ""])
            if row[0] == "mean":
                mean = vals
            elif row[0] == "direction":
                dirs.append(vals)
            elif row[0] == "coefficient":
                coeffs.append(vals)
    if mean is None:
        raise ValueError(f"{path}: no mean row")
    k = mean.size
    directions = np.array(dirs).T if dirs else np.zeros((k, 0))
    coefficients = np.array(coeffs) if coeffs else np.zeros((0, 0))
    return LatentBasis(mean, directions, coefficients)
