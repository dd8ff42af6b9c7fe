"""Gradient-descent recovery of latent codes (and optionally generator weights).

One epoch of :func:`run` is, in order:

1. gradient step on every latent code ``z_t`` (data term, scaled by ``lambda``
   and joined by the temporal similarity penalty when ``lambda < 1``);
2. projection of ``Z`` onto the configured constraint set;
3. for joint recovery, a gradient step on the generator weights, with the
   gradient evaluated at the updated codes.

Per-frame work may be spread over threads; gradients are always summed in
ascending frame order so that serial and threaded runs agree bitwise.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from . import latent_space
from .generator import Weights, backward, forward, generate
from .measurement import Identity, MeasurementSet
from .metrics import MetricsReport, report
from .tensor_core import SeededRng, ShapeError

log = logging.getLogger(__name__)

MODES = ("latent_only", "joint")


class DivergedError(ArithmeticError):
    def __init__(self, epoch: int, restart: int = 0):
        super().__init__(f"solver diverged at epoch {epoch} (restart {restart})")
        self.epoch = epoch
        self.restart = restart


class ExtrapolationError(ValueError):
    """A held-out frame has no observed frame on one side."""


@dataclass(frozen=True)
class Constraint:
    kind: str = "none"  # none | rank | affine | grouped
    rank: int = 0
    dim: int = 1
    groups: tuple[int, ...] = (0,)  # group start columns, for "grouped"

    @classmethod
    def parse(cls, text: str) -> "Constraint":
        """``none``, ``rank:R``, ``affine:D`` or ``grouped:R:D[:start,start,...]``."""
        parts = text.split(":")
        kind = parts[0]
        try:
            if kind == "none":
                return cls()
            if kind == "rank":
                return cls("rank", rank=int(parts[1]))
            if kind == "affine":
                return cls("affine", dim=int(parts[1]))
            if kind == "grouped":
                starts = tuple(int(s) for s in parts[3].split(",")) if len(parts) > 3 else (0,)
                return cls("grouped", rank=int(parts[1]), dim=int(parts[2]), groups=starts)
        except IndexError:
            raise ValueError(f"constraint {text!r} is missing a number") from None
        raise ValueError(f"unknown constraint {text!r}")

    def __str__(self):
        if self.kind == "rank":
            return f"rank:{self.rank}"
        if self.kind == "affine":
            return f"affine:{self.dim}"
        if self.kind == "grouped":
            return f"grouped:{self.rank}:{self.dim}:{','.join(map(str, self.groups))}"
        return "none"

    def project(self, z: np.ndarray) -> np.ndarray:
        if self.kind == "none":
            return z
        if self.kind == "rank":
            return latent_space.project_rank(z, self.rank)[0]
        if self.kind == "affine":
            return latent_space.project_affine(z, self.dim)[0]
        if self.kind == "grouped":
            return latent_space.project_affine_grouped(z, self.groups, self.rank, self.dim)
        raise ValueError(f"unknown constraint kind {self.kind!r}")

    def basis(self, z: np.ndarray) -> latent_space.LatentBasis:
        if self.kind == "affine":
            return latent_space.project_affine(z, self.dim)[1]
        r = self.rank if self.kind in ("rank", "grouped") else min(z.shape)
        return latent_space.project_rank(z, r)[1]


@dataclass(frozen=True)
class SolverConfig:
    mode: str = "joint"
    constraint: Constraint = field(default_factory=Constraint)
    similarity_lambda: float = 1.0
    similarity_beta: tuple[float, ...] | None = None
    lr_z: float = 1.0
    lr_gamma: float = 0.01
    epochs: int = 2000
    tol: float = 1e-6
    window: int = 50
    seed: int = 0
    holdout: frozenset[int] = frozenset()  # 0-based frame indices
    restarts: int = 1
    workers: int = 1
    z_init_std: float = 1.0
    # "fixed": constant steps. "backtrack": halve a step until the objective
    # does not increase, then let it grow by `step_growth` back toward the cap.
    step_control: str = "fixed"
    step_growth: float = 1.1
    max_halvings: int = 40

    def __post_init__(self):
        if self.step_control not in ("fixed", "backtrack"):
            raise ValueError(f"unknown step control {self.step_control!r}")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if not 0.0 < self.similarity_lambda <= 1.0:
            raise ValueError(f"similarity_lambda must lie in (0, 1], got {self.similarity_lambda}")
        if self.lr_z <= 0 or self.lr_gamma <= 0:
            raise ValueError("learning rates must be positive")
        if self.epochs < 1 or self.restarts < 1 or self.workers < 1:
            raise ValueError("epochs, restarts and workers must be positive")
        object.__setattr__(self, "holdout", frozenset(int(t) for t in self.holdout))


@dataclass
class SolverState:
    z: np.ndarray
    weights: Weights
    epoch: int = 0
    residual_history: list[float] = field(default_factory=list)


@dataclass
class RecoveryResult:
    frames: np.ndarray  # (T, C, H, W)
    z: np.ndarray
    basis: latent_space.LatentBasis
    weights: Weights
    final_loss: float
    residual_history: list[float]
    restart: int = 0
    restart_losses: list[float] = field(default_factory=list)
    metrics: MetricsReport | None = None
    config: SolverConfig | None = None

    @property
    def mean_psnr(self) -> float:
        return self.metrics.mean_psnr if self.metrics else float("nan")


# --------------------------------------------------------------------------- gradients


def _frame_terms(weights: Weights, z_t, op, y, need_z: bool, need_w: bool):
    img, tape = forward(weights, z_t)
    resid = op.apply(img.reshape(-1)) - y
    loss = float(resid @ resid)
    if not (need_z or need_w):
        return loss, None, None
    d_img = (2.0 * op.adjoint(resid)).reshape(img.shape)
    g = backward(weights, tape, d_img, need_weights=need_w)
    return loss, g.d_z, (g.tensors() if need_w else None)


def data_loss_and_grads(
    weights: Weights,
    z: np.ndarray,
    meas: MeasurementSet,
    holdout=frozenset(),
    *,
    need_z: bool = True,
    need_weights: bool = True,
    workers: int = 1,
):
    """``sum_{t not held out} ||y_t - A_t G(z_t)||^2`` and its gradients.

    Returns ``(loss, dZ, dWeights)``; ``dZ`` is ``k x T`` (zero columns for
    held-out frames) and ``dWeights`` a :class:`Weights` holding gradients.
    Either gradient is ``None`` when not requested.
    """
    k, t = z.shape
    if t != len(meas):
        raise ShapeError(f"latent matrix has {t} columns but there are {len(meas)} measurements")
    if k != weights.arch.latent_dim:
        raise ShapeError(f"latent dimension {k} does not match generator ({weights.arch.latent_dim})")
    frames = [i for i in range(t) if i not in holdout]

    def job(i):
        return _frame_terms(weights, z[:, i], meas.operators[i], meas.measurements[i], need_z, need_weights)

    if workers > 1:
        pool = ThreadPoolExecutor(max_workers=workers)
        results = pool.map(job, frames)
    else:
        pool = None
        results = map(job, frames)

    loss = 0.0
    dz = np.zeros_like(z) if need_z else None
    dw = [np.zeros_like(a) for a in weights.tensors()] if need_weights else None
    try:
        # map() yields in submission order: the reduction is ascending in t
        for i, (l_i, dz_i, dw_i) in zip(frames, results):
            loss += l_i
            if need_z:
                dz[:, i] = dz_i
            if need_weights:
                for acc, g in zip(dw, dw_i):
                    acc += g
    finally:
        if pool is not None:
            pool.shutdown()
    return loss, dz, (Weights.from_tensors(weights.arch, dw) if need_weights else None)


def frame_losses(weights: Weights, z: np.ndarray, meas: MeasurementSet, holdout=frozenset(), columns=None, workers: int = 1) -> np.ndarray:
    """Per-frame data losses (zero for held-out frames); only ``columns`` are evaluated if given."""
    t = z.shape[1]
    cols = [i for i in (range(t) if columns is None else columns) if i not in holdout]

    def job(i):
        return _frame_terms(weights, z[:, i], meas.operators[i], meas.measurements[i], False, False)[0]

    out = np.zeros(t)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            vals = list(pool.map(job, cols))
    else:
        vals = [job(i) for i in cols]
    out[cols] = vals
    return out


def similarity_grad(z: np.ndarray, lam: float, beta=None):
    """Penalty ``(1 - lam) sum_t beta_t ||z_{t+1} - z_t||^2`` and its gradient."""
    t = z.shape[1]
    if t < 2:
        raise ValueError("similarity penalty needs at least two frames")
    beta = np.ones(t - 1) if beta is None else np.asarray(beta, dtype=np.float64)
    if beta.shape != (t - 1,):
        raise ShapeError(f"need {t - 1} similarity weights, got {beta.shape}")
    diff = z[:, 1:] - z[:, :-1]
    penalty = (1.0 - lam) * float(np.sum(beta * np.sum(diff**2, axis=0)))
    wd = 2.0 * (1.0 - lam) * beta * diff
    grad = np.zeros_like(z)
    grad[:, 1:] += wd
    grad[:, :-1] -= wd
    return penalty, grad


# --------------------------------------------------------------------------- solver


def _converged(history: list[float], window: int, tol: float) -> bool:
    if len(history) < 2 * window:
        return False
    prev = float(np.mean(history[-2 * window : -window]))
    cur = float(np.mean(history[-window:]))
    return abs(prev - cur) <= tol * abs(prev)


def _objective(weights, z, meas, config, sub) -> float:
    loss = data_loss_and_grads(weights, z, meas, need_z=False, need_weights=False, **sub)[0]
    lam = config.similarity_lambda
    if lam == 1.0:
        return loss
    return lam * loss + similarity_grad(z, lam, config.similarity_beta)[0]


def _solve_once(config: SolverConfig, meas: MeasurementSet, init_weights: Weights, rng: SeededRng, restart: int, callback):
    arch = init_weights.arch
    t = len(meas)
    z = rng.normal((arch.latent_dim, t), config.z_init_std)
    state = SolverState(z, init_weights.copy())
    lam = config.similarity_lambda
    joint = config.mode == "joint"
    backtrack = config.step_control == "backtrack"
    sub = dict(holdout=config.holdout, workers=config.workers)
    eta_z, eta_w = config.lr_z, config.lr_gamma
    eta_cols = None

    def weight_step(weights, dw, eta):
        return Weights.from_tensors(arch, [w - eta * g for w, g in zip(weights.tensors(), dw.tensors())])

    for epoch in range(config.epochs):
        loss, dz, _ = data_loss_and_grads(state.weights, state.z, meas, need_weights=False, **sub)
        if not np.isfinite(loss):
            raise DivergedError(epoch, restart)
        state.residual_history.append(loss)

        if lam != 1.0:
            penalty, dsim = similarity_grad(state.z, lam, config.similarity_beta)
            dz = lam * dz + dsim
        z_new = config.constraint.project(state.z - eta_z * dz)
        if backtrack and lam == 1.0 and config.constraint.kind == "none":
            # columns are decoupled: each frame gets its own step
            eta_cols = eta_cols if eta_cols is not None else np.full(t, config.lr_z)
            old = frame_losses(state.weights, state.z, meas, **sub)
            z_new = state.z - eta_cols * dz
            todo = list(range(t))
            for _ in range(config.max_halvings):
                new = frame_losses(state.weights, z_new, meas, columns=todo, **sub)
                todo = [i for i in todo if new[i] > old[i]]
                if not todo:
                    break
                eta_cols[todo] *= 0.5
                z_new[:, todo] = state.z[:, todo] - eta_cols[todo] * dz[:, todo]
            eta_cols = np.minimum(eta_cols * config.step_growth, config.lr_z)
        elif backtrack:
            current = loss if lam == 1.0 else lam * loss + penalty
            for _ in range(config.max_halvings):
                if _objective(state.weights, z_new, meas, config, sub) <= current:
                    break
                eta_z *= 0.5
                z_new = config.constraint.project(state.z - eta_z * dz)
            eta_z = min(eta_z * config.step_growth, config.lr_z)
        state.z = z_new

        if joint:
            _, _, dw = data_loss_and_grads(state.weights, state.z, meas, need_z=False, **sub)
            if lam != 1.0:
                dw = Weights.from_tensors(arch, [lam * g for g in dw.tensors()])
            w_new = weight_step(state.weights, dw, eta_w)
            if backtrack:
                current = _objective(state.weights, state.z, meas, config, sub)
                for _ in range(config.max_halvings):
                    if _objective(w_new, state.z, meas, config, sub) <= current:
                        break
                    eta_w *= 0.5
                    w_new = weight_step(state.weights, dw, eta_w)
                eta_w = min(eta_w * config.step_growth, config.lr_gamma)
            state.weights = w_new
        state.epoch = epoch + 1
        if not np.all(np.isfinite(state.z)):
            raise DivergedError(epoch, restart)
        if callback is not None:
            callback(state)
        if _converged(state.residual_history, config.window, config.tol):
            break

    final, _, _ = data_loss_and_grads(state.weights, state.z, meas, need_z=False, need_weights=False, **sub)
    if not np.isfinite(final):
        raise DivergedError(state.epoch, restart)
    return state, final


def run(
    config: SolverConfig,
    meas: MeasurementSet,
    init_weights: Weights,
    rng: SeededRng | None = None,
    *,
    truth: np.ndarray | None = None,
    callback: Callable[[SolverState], None] | None = None,
) -> RecoveryResult:
    """Recover ``Z`` (and the weights in joint mode), keeping the best of ``config.restarts`` starts."""
    t = len(meas)
    if any(not 0 <= h < t for h in config.holdout):
        raise ValueError(f"holdout {sorted(config.holdout)} outside frames 0..{t - 1}")
    rng = rng if rng is not None else SeededRng(config.seed)
    best, best_loss, best_restart, losses = None, np.inf, 0, []
    for r in range(config.restarts):
        state, final = _solve_once(config, meas, init_weights, rng.spawn(r), r, callback)
        log.info("restart %d: final data loss %.6g after %d epochs", r, final, state.epoch)
        losses.append(final)
        if final < best_loss:
            best, best_loss, best_restart = state, final, r

    frames = np.stack([generate(best.weights, best.z[:, i]) for i in range(t)])
    result = RecoveryResult(
        frames=frames,
        z=best.z,
        basis=config.constraint.basis(best.z),
        weights=best.weights,
        final_loss=best_loss,
        residual_history=best.residual_history,
        restart=best_restart,
        restart_losses=losses,
        config=config,
    )
    if truth is not None:
        result.metrics = report(truth, frames, best.residual_history)
    return result


def prefit(frames: np.ndarray, init_weights: Weights, config: SolverConfig | None = None) -> Weights:
    """Fit generator weights to a training sequence by joint recovery with identity operators."""
    frames = np.asarray(frames, dtype=np.float64)
    n = init_weights.arch.n_pixels
    meas = MeasurementSet([Identity(n)] * len(frames), [f.reshape(-1) for f in frames])
    config = replace(config or SolverConfig(), mode="joint", holdout=frozenset())
    return run(config, meas, init_weights).weights


# --------------------------------------------------------------------------- interpolation


def bracket(t: int, observed: list[int]) -> tuple[int, int]:
    before = [o for o in observed if o < t]
    after = [o for o in observed if o > t]
    if not before or not after:
        raise ExtrapolationError(f"frame {t} is not bracketed by observed frames")
    return before[-1], after[0]


def interpolate_holdout(result: RecoveryResult, holdout) -> tuple[list[int], np.ndarray, np.ndarray]:
    """Synthesize held-out frames from codes interpolated between the bracketing observed frames.

    Returns ``(frame_indices, codes (k x H), frames (H, C, H, W))``.
    """
    holdout = sorted(int(h) for h in holdout)
    t = result.z.shape[1]
    if not holdout:
        k = result.z.shape[0]
        return [], np.zeros((k, 0)), np.zeros((0, *result.weights.arch.image_shape))
    observed = [i for i in range(t) if i not in set(holdout)]
    codes = []
    for h in holdout:
        a, b = bracket(h, observed)
        codes.append(latent_space.interpolate(result.z[:, a], result.z[:, b], (h - a) / (b - a)))
    codes = np.column_stack(codes)
    frames = np.stack([generate(result.weights, codes[:, i]) for i in range(len(holdout))])
    return holdout, codes, frames


def interpolate_frames(weights: Weights, z_a, z_b, steps: int) -> tuple[np.ndarray, np.ndarray]:
    """``steps`` codes evenly spaced from ``z_a`` to ``z_b`` (inclusive) and their images."""
    if steps < 2:
        raise ValueError("need at least two interpolation steps")
    s = np.linspace(0.0, 1.0, steps)
    codes = np.column_stack([latent_space.interpolate(z_a, z_b, float(v)) for v in s])
    frames = np.stack([generate(weights, codes[:, i]) for i in range(steps)])
    return codes, frames
