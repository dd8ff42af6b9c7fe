"""DCGAN-style generator without batch norm or biases, with a hand-written backward pass.

The network maps a latent code ``z`` (length ``k``) to an image::

    h0 = relu(reshape(z @ fc))                      # c0 x s x s
    h1..h3 = relu(deconv(h_{l-1}, kernel_l))         # spatial size doubles each time
    image = tanh(deconv(h3, kernel_4))

Every transposed convolution uses a 4x4 kernel, stride 2 and padding 1, so an
``H x W`` input becomes ``2H x 2W``. Kernels are stored as
``(in_channels, out_channels, 4, 4)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tensor_core import DTYPE, SeededRng, ShapeError, gaussian

KERNEL = 4
STRIDE = 2
PADDING = 1


class TapeError(RuntimeError):
    """A forward tape was replayed against weights it was not recorded with."""


@dataclass(frozen=True)
class Architecture:
    latent_dim: int
    base_channels: int
    deconv_channels: tuple[int, ...]
    base_size: int = 4

    def __post_init__(self):
        object.__setattr__(self, "deconv_channels", tuple(int(c) for c in self.deconv_channels))
        if self.latent_dim < 1 or self.base_channels < 1 or self.base_size < 1:
            raise ValueError(f"invalid architecture {self}")
        if not self.deconv_channels or min(self.deconv_channels) < 1:
            raise ValueError("need at least one deconvolution layer with positive channels")

    @property
    def out_channels(self) -> int:
        return self.deconv_channels[-1]

    @property
    def out_size(self) -> int:
        return self.base_size * 2 ** len(self.deconv_channels)

    @property
    def image_shape(self) -> tuple[int, int, int]:
        return (self.out_channels, self.out_size, self.out_size)

    @property
    def n_pixels(self) -> int:
        c, h, w = self.image_shape
        return c * h * w

    def fc_shape(self) -> tuple[int, int]:
        return (self.latent_dim, self.base_channels * self.base_size**2)

    def kernel_shapes(self) -> list[tuple[int, int, int, int]]:
        ins = (self.base_channels,) + self.deconv_channels[:-1]
        return [(ci, co, KERNEL, KERNEL) for ci, co in zip(ins, self.deconv_channels)]

    def layer_param_counts(self) -> list[int]:
        shapes = [self.fc_shape()] + self.kernel_shapes()
        return [int(np.prod(s)) for s in shapes]


PRESETS = {
    "grayscale": Architecture(32, 256, (128, 64, 32, 1)),
    "rgb": Architecture(256, 512, (256, 128, 64, 3)),
    # grayscale-sized network with a 3-channel output layer
    "grayscale_rgb": Architecture(32, 256, (128, 64, 32, 3)),
    "tiny": Architecture(4, 8, (8, 4, 2, 1)),
    "tiny_rgb": Architecture(4, 8, (8, 4, 2, 3)),
    # 1x1 base grid: same layer stack, 16x16 output
    "tiny16": Architecture(4, 8, (8, 4, 2, 1), base_size=1),
}


def preset(name: str) -> Architecture:
    try:
        return PRESETS[name]
    except KeyError:
        raise KeyError(f"unknown architecture preset {name!r}; choose from {sorted(PRESETS)}") from None


def param_count(arch: Architecture) -> int:
    return sum(arch.layer_param_counts())


@dataclass
class Weights:
    arch: Architecture
    fc: np.ndarray
    kernels: list[np.ndarray]

    def __post_init__(self):
        if self.fc.shape != self.arch.fc_shape():
            raise ShapeError(f"fc has shape {self.fc.shape}, expected {self.arch.fc_shape()}")
        expected = self.arch.kernel_shapes()
        if len(self.kernels) != len(expected):
            raise ShapeError(f"expected {len(expected)} kernels, got {len(self.kernels)}")
        for i, (kern, shape) in enumerate(zip(self.kernels, expected)):
            if kern.shape != shape:
                raise ShapeError(f"kernel {i + 1} has shape {kern.shape}, expected {shape}")

    def tensors(self) -> list[np.ndarray]:
        """All weight arrays in serialization order: fc, deconv 1..L."""
        return [self.fc, *self.kernels]

    @classmethod
    def from_tensors(cls, arch: Architecture, tensors) -> "Weights":
        tensors = [np.array(t, dtype=DTYPE) for t in tensors]
        return cls(arch, tensors[0], tensors[1:])

    def copy(self) -> "Weights":
        return Weights.from_tensors(self.arch, self.tensors())

    def flatten(self) -> np.ndarray:
        return np.concatenate([t.ravel() for t in self.tensors()])

    @classmethod
    def unflatten(cls, arch: Architecture, flat: np.ndarray) -> "Weights":
        shapes = [arch.fc_shape()] + arch.kernel_shapes()
        if flat.size != param_count(arch):
            raise ShapeError(f"payload has {flat.size} values, architecture needs {param_count(arch)}")
        out, pos = [], 0
        for s in shapes:
            n = int(np.prod(s))
            out.append(np.array(flat[pos : pos + n], dtype=DTYPE).reshape(s))
            pos += n
        return cls.from_tensors(arch, out)

    @classmethod
    def zeros(cls, arch: Architecture) -> "Weights":
        return cls(arch, np.zeros(arch.fc_shape()), [np.zeros(s) for s in arch.kernel_shapes()])


def layer_fan_in(arch: Architecture) -> list[int]:
    # A stride-2, 4x4 transposed conv feeds each output pixel from a 2x2 input patch.
    ins = (arch.base_channels,) + arch.deconv_channels[:-1]
    return [arch.latent_dim] + [ci * (KERNEL // STRIDE) ** 2 for ci in ins]


def random_weights(arch: Architecture, rng: SeededRng) -> Weights:
    """He-style initialisation: N(0, 2 / fan_in) for every tensor."""
    shapes = [arch.fc_shape()] + arch.kernel_shapes()
    tensors = [gaussian(rng, s, np.sqrt(2.0 / fan)) for s, fan in zip(shapes, layer_fan_in(arch))]
    return Weights.from_tensors(arch, tensors)


# --------------------------------------------------------------------------- deconvolution


def deconv2d_forward(x: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    """Transposed convolution, stride 2, padding 1: ``(Cin, H, W) -> (Cout, 2H, 2W)``."""
    cin, h, w = x.shape
    if kernel.ndim != 4 or kernel.shape[0] != cin or kernel.shape[2:] != (KERNEL, KERNEL):
        raise ShapeError(f"kernel {kernel.shape} does not match input with {cin} channels")
    cout = kernel.shape[1]
    cols = x.reshape(cin, h * w).T @ kernel.reshape(cin, cout * KERNEL * KERNEL)
    cols = cols.reshape(h, w, cout, KERNEL, KERNEL)
    full = np.zeros((cout, STRIDE * h + 2, STRIDE * w + 2))
    for a in range(KERNEL):
        for b in range(KERNEL):
            full[:, a : a + STRIDE * h : STRIDE, b : b + STRIDE * w : STRIDE] += cols[:, :, :, a, b].transpose(2, 0, 1)
    return full[:, PADDING : PADDING + STRIDE * h, PADDING : PADDING + STRIDE * w].copy()


def deconv2d_backward(x: np.ndarray, kernel: np.ndarray, d_out: np.ndarray, need_kernel: bool = True):
    """Gradients ``(d_x, d_kernel)`` of :func:`deconv2d_forward` for cotangent ``d_out``.

    ``d_kernel`` is ``None`` when ``need_kernel`` is false.
    """
    cin, h, w = x.shape
    cout = kernel.shape[1]
    full = np.zeros((cout, STRIDE * h + 2, STRIDE * w + 2))
    full[:, PADDING : PADDING + STRIDE * h, PADDING : PADDING + STRIDE * w] = d_out
    d_cols = np.empty((h, w, cout, KERNEL, KERNEL))
    for a in range(KERNEL):
        for b in range(KERNEL):
            d_cols[:, :, :, a, b] = full[:, a : a + STRIDE * h : STRIDE, b : b + STRIDE * w : STRIDE].transpose(1, 2, 0)
    d_cols = d_cols.reshape(h * w, cout * KERNEL * KERNEL)
    x_flat = x.reshape(cin, h * w)
    d_kernel = (x_flat @ d_cols).reshape(kernel.shape) if need_kernel else None
    d_x = (d_cols @ kernel.reshape(cin, -1).T).T.reshape(cin, h, w)
    return d_x, d_kernel


# --------------------------------------------------------------------------- network


@dataclass
class ForwardTape:
    weights: Weights
    z: np.ndarray
    pre: list[np.ndarray] = field(default_factory=list)
    post: list[np.ndarray] = field(default_factory=list)


@dataclass
class Gradients:
    d_fc: np.ndarray
    d_kernels: list[np.ndarray]
    d_z: np.ndarray

    def tensors(self) -> list[np.ndarray]:
        return [self.d_fc, *self.d_kernels]

    def as_weights(self, arch: Architecture) -> Weights:
        return Weights(arch, self.d_fc, list(self.d_kernels))


def forward(weights: Weights, z) -> tuple[np.ndarray, ForwardTape]:
    arch = weights.arch
    z = np.asarray(z, dtype=DTYPE)
    if z.shape != (arch.latent_dim,):
        raise ShapeError(f"latent code has shape {z.shape}, expected ({arch.latent_dim},)")
    tape = ForwardTape(weights, z)
    s = arch.base_size
    pre = (z @ weights.fc).reshape(arch.base_channels, s, s)
    act = np.maximum(pre, 0.0)
    tape.pre.append(pre)
    tape.post.append(act)
    last = len(weights.kernels) - 1
    for i, kern in enumerate(weights.kernels):
        pre = deconv2d_forward(act, kern)
        act = np.tanh(pre) if i == last else np.maximum(pre, 0.0)
        tape.pre.append(pre)
        tape.post.append(act)
    return act, tape


def generate(weights: Weights, z) -> np.ndarray:
    return forward(weights, z)[0]


def backward(weights: Weights, tape: ForwardTape, d_image, need_weights: bool = True) -> Gradients:
    """Reverse-mode gradients of ``<G(z), d_image>`` w.r.t. ``z`` and every weight tensor.

    With ``need_weights=False`` only ``d_z`` is computed; the weight fields are ``None``.
    """
    if tape.weights is not weights:
        raise TapeError("tape was recorded with a different weights object")
    arch = weights.arch
    d_image = np.asarray(d_image, dtype=DTYPE)
    if d_image.shape != arch.image_shape:
        raise ShapeError(f"cotangent has shape {d_image.shape}, expected {arch.image_shape}")
    n = len(weights.kernels)
    d_kernels: list[np.ndarray] = [None] * n  # type: ignore[list-item]
    # tanh' = 1 - tanh^2
    d_pre = d_image * (1.0 - tape.post[-1] ** 2)
    for i in range(n - 1, -1, -1):
        d_act, d_kernels[i] = deconv2d_backward(tape.post[i], weights.kernels[i], d_pre, need_weights)
        d_pre = d_act * (tape.pre[i] > 0.0)
    d_pre = d_pre.reshape(-1)
    d_fc = np.outer(tape.z, d_pre) if need_weights else None
    d_z = weights.fc @ d_pre
    return Gradients(d_fc, d_kernels if need_weights else None, d_z)
