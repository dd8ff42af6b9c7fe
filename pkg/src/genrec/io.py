"""File formats: 8-bit PGM/PPM frames, the GENREC1 weights file, CSV traces, key=value configs.

Pixel bytes map to internal values by ``v / 127.5 - 1``; the inverse rounds
half up and clips to ``[0, 255]``.

Weights file layout (all integers little-endian uint32)::

    b"GENREC1"                 7-byte magic
    latent_dim, base_channels, base_size, n_layers
    channel_1 ... channel_n    deconvolution output channels
    out_channels               repeated for readers that only need the image depth
    float64 LE payload         fc, then deconv 1..n, each in C order
"""

from __future__ import annotations

import csv
import re
import struct
from pathlib import Path

import numpy as np

from .generator import Architecture, Weights, param_count

MAGIC = b"GENREC1"


class FormatError(ValueError):
    pass


# --------------------------------------------------------------------------- frames


def to_bytes(img: np.ndarray) -> np.ndarray:
    return np.clip(np.floor((np.asarray(img) + 1.0) * 127.5 + 0.5), 0, 255).astype(np.uint8)


def from_bytes(arr: np.ndarray) -> np.ndarray:
    return arr.astype(np.float64) / 127.5 - 1.0


def write_frame(path, img: np.ndarray) -> None:
    """Write a ``(1, H, W)`` frame as binary PGM or ``(3, H, W)`` as binary PPM."""
    img = np.asarray(img)
    c, h, w = img.shape
    if c == 1:
        header, body = b"P5", to_bytes(img[0])
    elif c == 3:
        header, body = b"P6", to_bytes(img.transpose(1, 2, 0))
    else:
        raise FormatError(f"cannot store a {c}-channel frame as PGM/PPM")
    with open(path, "wb") as fh:
        fh.write(header + b"\n%d %d\n255\n" % (w, h))
        fh.write(body.tobytes())


def read_frame(path) -> np.ndarray:
    data = Path(path).read_bytes()
    tokens = []
    pos = 0
    while len(tokens) < 4:
        m = re.compile(rb"\s*(#[^\n]*\n\s*)*(\S+)").match(data, pos)
        if m is None:
            raise FormatError(f"{path}: truncated header")
        tokens.append(m.group(2))
        pos = m.end()
    pos += 1  # single whitespace byte before the raster
    magic, w, h, maxval = tokens[0], int(tokens[1]), int(tokens[2]), int(tokens[3])
    if maxval != 255:
        raise FormatError(f"{path}: only 8-bit images are supported")
    if magic == b"P5":
        raster = np.frombuffer(data, np.uint8, h * w, pos).reshape(1, h, w)
    elif magic == b"P6":
        raster = np.frombuffer(data, np.uint8, h * w * 3, pos).reshape(h, w, 3).transpose(2, 0, 1)
    else:
        raise FormatError(f"{path}: unsupported magic {magic!r}")
    return from_bytes(raster)


def frame_suffix(channels: int) -> str:
    return ".pgm" if channels == 1 else ".ppm"


def write_frames(directory, frames, prefix: str = "frame", indices=None) -> list[Path]:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    indices = range(len(frames)) if indices is None else indices
    paths = []
    for i, img in zip(indices, frames):
        p = directory / f"{prefix}_{i:04d}{frame_suffix(img.shape[0])}"
        write_frame(p, img)
        paths.append(p)
    return paths


def read_frames(directory, prefix: str = "frame") -> np.ndarray:
    directory = Path(directory)
    paths = sorted(p for p in directory.iterdir() if p.name.startswith(prefix + "_") and p.suffix in (".pgm", ".ppm"))
    if not paths:
        raise FileNotFoundError(f"no {prefix}_*.pgm/ppm frames in {directory}")
    return np.stack([read_frame(p) for p in paths])


# --------------------------------------------------------------------------- weights


def save_weights(path, weights: Weights) -> None:
    arch = weights.arch
    n = len(arch.deconv_channels)
    header = struct.pack(
        f"<4I{n}II", arch.latent_dim, arch.base_channels, arch.base_size, n, *arch.deconv_channels, arch.out_channels
    )
    payload = np.ascontiguousarray(weights.flatten(), dtype="<f8").tobytes()
    with open(path, "wb") as fh:
        fh.write(MAGIC + header + payload)


def load_weights(path) -> Weights:
    data = Path(path).read_bytes()
    if not data.startswith(MAGIC):
        raise FormatError(f"{path}: not a GENREC1 weights file")
    pos = len(MAGIC)
    k, c0, base, n = struct.unpack_from("<4I", data, pos)
    pos += 16
    channels = struct.unpack_from(f"<{n}I", data, pos)
    pos += 4 * n
    (out_channels,) = struct.unpack_from("<I", data, pos)
    pos += 4
    arch = Architecture(k, c0, channels, base_size=base)
    if out_channels != arch.out_channels:
        raise FormatError(f"{path}: header output channels disagree with layer list")
    flat = np.frombuffer(data, "<f8", offset=pos)
    if flat.size != param_count(arch):
        raise FormatError(f"{path}: payload has {flat.size} values, expected {param_count(arch)}")
    return Weights.unflatten(arch, flat.astype(np.float64))


# --------------------------------------------------------------------------- csv / config


def write_csv(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(v) if isinstance(v, float) else v for v in row])


def read_csv(path) -> tuple[list[str], list[list[str]]]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


def write_residuals(path, history) -> None:
    write_csv(path, ["epoch", "data_loss"], [(i, float(v)) for i, v in enumerate(history)])


def write_latents(path, z: np.ndarray) -> None:
    k, t = z.shape
    write_csv(path, ["frame_index", *[f"z{j}" for j in range(k)]], [(i, *map(float, z[:, i])) for i in range(t)])


def read_latents(path) -> np.ndarray:
    _, rows = read_csv(path)
    return np.array([[float(v) for v in row[1:]] for row in rows]).T


def parse_config(text: str) -> dict[str, str]:
    """Flat ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise FormatError(f"config line {n}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key.replace("-", "_")] = value
    return out


def format_config(values: dict) -> str:
    return "".join(f"{k} = {v}\n" for k, v in values.items())
