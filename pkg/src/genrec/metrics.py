"""MSE and PSNR, with the dynamic range taken from the reference image itself."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .tensor_core import ShapeError


def _pair(x, x_hat):
    x = np.asarray(x, dtype=np.float64)
    x_hat = np.asarray(x_hat, dtype=np.float64)
    if x.shape != x_hat.shape:
        raise ShapeError(f"shape mismatch: {x.shape} vs {x_hat.shape}")
    return x, x_hat


def mse(x, x_hat) -> float:
    x, x_hat = _pair(x, x_hat)
    return float(np.mean((x - x_hat) ** 2))


def psnr(x, x_hat) -> float:
    """``20 log10((max(x) - min(x)) / sqrt(MSE))``.

    Returns ``inf`` for a perfect reconstruction and ``-inf`` when the
    reference is constant but the reconstruction is not.
    """
    x, x_hat = _pair(x, x_hat)
    err = mse(x, x_hat)
    if err == 0.0:
        return math.inf
    span = float(x.max() - x.min())
    if span == 0.0:
        return -math.inf
    return 20.0 * math.log10(span / math.sqrt(err))


@dataclass
class MetricsReport:
    psnr: list[float]
    mse: list[float]
    loss_trace: list[float] = field(default_factory=list)

    @property
    def mean_psnr(self) -> float:
        return float(np.mean(self.psnr)) if self.psnr else math.nan

    @property
    def degenerate(self) -> list[int]:
        return [i for i, p in enumerate(self.psnr) if p == -math.inf]

    def write_csv(self, path, frame_indices=None) -> None:
        idx = frame_indices if frame_indices is not None else range(len(self.psnr))
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["frame_index", "mse", "psnr"])
            for i, e, p in zip(idx, self.mse, self.psnr):
                w.writerow([i, repr(e), repr(p)])


def report(frames, estimates, loss_trace=()) -> MetricsReport:
    frames = np.asarray(frames)
    estimates = np.asarray(estimates)
    if frames.shape != estimates.shape:
        raise ShapeError(f"shape mismatch: {frames.shape} vs {estimates.shape}")
    return MetricsReport(
        psnr=[psnr(x, xh) for x, xh in zip(frames, estimates)],
        mse=[mse(x, xh) for x, xh in zip(frames, estimates)],
        loss_trace=list(loss_trace),
    )
