"""Finite-difference validation of the hand-written backward pass.

The checked objective is the joint data loss ``sum_t ||y_t - A_t G(z_t)||^2``
on a small random instance. Each probe compares a central difference along a
random direction ``v`` with ``<grad, v>``. Probes whose step crosses a ReLU
kink (the activation pattern differs at the two evaluation points) are
redrawn, since the central difference is meaningless there.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .generator import Weights, backward, forward, preset, random_weights
from .measurement import MeasurementSet, make_operators
from .tensor_core import SeededRng

TENSOR_NAMES = ("fc", "deconv1", "deconv2", "deconv3", "deconv4")


@dataclass
class GradcheckReport:
    max_rel_error: dict[str, float]
    probes: int
    threshold: float

    @property
    def passed(self) -> bool:
        return all(e < self.threshold for e in self.max_rel_error.values())

    def lines(self) -> list[str]:
        out = [f"{name:8s} max_rel_err={err:.3e} {'ok' if err < self.threshold else 'FAIL'}"
               for name, err in self.max_rel_error.items()]
        out.append(f"{'PASS' if self.passed else 'FAIL'} ({self.probes} probes per tensor, threshold {self.threshold:g})")
        return out


def _pattern(weights: Weights, z: np.ndarray):
    pats = []
    for t in range(z.shape[1]):
        _, tape = forward(weights, z[:, t])
        pats.extend(p > 0 for p in tape.pre[:-1])
    return pats


def _loss(weights, z, meas):
    total = 0.0
    for t in range(z.shape[1]):
        img, _ = forward(weights, z[:, t])
        r = meas.operators[t].apply(img.reshape(-1)) - meas.measurements[t]
        total += float(r @ r)
    return total


def _grads(weights, z, meas, backward_fn):
    dz = np.zeros_like(z)
    dw = [np.zeros_like(a) for a in weights.tensors()]
    for t in range(z.shape[1]):
        img, tape = forward(weights, z[:, t])
        op = meas.operators[t]
        r = op.apply(img.reshape(-1)) - meas.measurements[t]
        g = backward_fn(weights, tape, (2.0 * op.adjoint(r)).reshape(img.shape))
        dz[:, t] = g.d_z
        for acc, gi in zip(dw, g.tensors()):
            acc += gi
    return dz, dw


def make_instance(seed: int, arch_name: str = "tiny16", frames: int = 2, m: int = 16):
    rng = SeededRng(seed)
    arch = preset(arch_name)
    weights = random_weights(arch, rng.spawn(0))
    z = rng.spawn(1).normal((arch.latent_dim, frames))
    ops = make_operators(f"gaussian:{m}", arch.n_pixels, frames, rng.spawn(2))
    ys = [rng.spawn(3 + t).normal(op.m) for t, op in enumerate(ops)]
    return weights, z, MeasurementSet(ops, ys)


def gradcheck(
    weights: Weights,
    z: np.ndarray,
    meas: MeasurementSet,
    *,
    probes: int = 50,
    h: float = 1e-5,
    threshold: float = 1e-6,
    seed: int = 0,
    backward_fn: Callable = backward,
) -> GradcheckReport:
    dz, dw = _grads(weights, z, meas, backward_fn)
    analytic = dict(zip(TENSOR_NAMES, dw))
    analytic["z"] = dz
    rng = SeededRng(seed)
    errors = {}
    for idx, name in enumerate((*TENSOR_NAMES, "z")):
        worst = 0.0
        done = 0
        attempts = 0
        while done < probes:
            attempts += 1
            if attempts > 20 * probes:
                raise RuntimeError(f"could not find kink-free probes for {name}")
            v = rng.normal(analytic[name].shape)
            if name == "z":
                wp = wm = weights
                zp, zm = z + h * v, z - h * v
            else:
                ts = weights.tensors()
                wp = Weights.from_tensors(weights.arch, [t + h * v if j == idx else t for j, t in enumerate(ts)])
                wm = Weights.from_tensors(weights.arch, [t - h * v if j == idx else t for j, t in enumerate(ts)])
                zp = zm = z
            pp, pm = _pattern(wp, zp), _pattern(wm, zm)
            if any(not np.array_equal(a, b) for a, b in zip(pp, pm)):
                continue
            fd = (_loss(wp, zp, meas) - _loss(wm, zm, meas)) / (2.0 * h)
            an = float(np.sum(analytic[name] * v))
            scale = max(abs(fd), abs(an))
            err = abs(fd - an) / scale if scale > 0 else 0.0
            worst = max(worst, err)
            done += 1
        errors[name] = worst
    return GradcheckReport(errors, probes, threshold)
