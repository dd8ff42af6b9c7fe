"""Procedural video sequences: rotating glyph, rotating colour wheel, bouncing glyphs.

All frames are ``(C, H, W)`` float64 arrays in ``[-1, 1]`` with background -1.
"""

from __future__ import annotations

import colorsys
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .tensor_core import SeededRng

BACKGROUND = -1.0
SIZES = (16, 32, 64)
KINDS = ("rotating_sprite", "color_wheel", "translating_sprites")

# 7x5 stroke glyphs; '#' is ink.
_GLYPHS = {
    "0": [" ### ", "#   #", "#  ##", "# # #", "##  #", "#   #", " ### "],
    "1": ["  #  ", " ##  ", "# #  ", "  #  ", "  #  ", "  #  ", "#####"],
    "2": [" ### ", "#   #", "    #", "   # ", "  #  ", " #   ", "#####"],
    "3": ["#####", "   # ", "  #  ", "   # ", "    #", "#   #", " ### "],
    "4": ["   # ", "  ## ", " # # ", "#  # ", "#####", "   # ", "   # "],
    "5": ["#####", "#    ", "#### ", "    #", "    #", "#   #", " ### "],
    "6": ["  ## ", " #   ", "#    ", "#### ", "#   #", "#   #", " ### "],
    "7": ["#####", "    #", "   # ", "  #  ", " #   ", " #   ", " #   "],
    "8": [" ### ", "#   #", "#   #", " ### ", "#   #", "#   #", " ### "],
    "9": [" ### ", "#   #", "#   #", " ####", "    #", "   # ", " ##  "],
}


def glyph_bitmap(char: str, height: int) -> np.ndarray:
    """Glyph scaled (nearest) to roughly ``height`` rows, values in {-1, 1}, strokes thickened."""
    rows = _GLYPHS[char]
    base = np.array([[c == "#" for c in row] for row in rows], dtype=float)
    scale = max(1, height // base.shape[0])
    big = np.kron(base, np.ones((scale, scale)))
    if scale >= 3:
        big = ndimage.binary_dilation(big > 0, iterations=1).astype(float)
    return 2.0 * big - 1.0


@dataclass(frozen=True)
class SequenceSpec:
    kind: str
    frames: int
    size: int = 64
    deg_per_frame: float = 2.0
    slices: int = 12
    glyphs: str = "3"
    velocities: tuple | None = None
    seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown sequence kind {self.kind!r}")
        if self.frames < 1:
            raise ValueError("need at least one frame")
        if self.size not in SIZES:
            raise ValueError(f"size must be one of {SIZES}")


@dataclass
class VideoSequence:
    frames: np.ndarray  # (T, C, H, W)
    spec: SequenceSpec | None = None
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.frames)


def rotate_frame(img, theta_degrees: float) -> np.ndarray:
    """Rotate about the image centre with bilinear resampling; outside samples are -1.

    Accepts ``(H, W)`` or ``(C, H, W)``.
    """
    img = np.asarray(img, dtype=np.float64)
    if img.ndim == 3:
        return np.stack([rotate_frame(ch, theta_degrees) for ch in img])
    h, w = img.shape
    if h != w:
        raise ValueError(f"rotate_frame needs a square image, got {img.shape}")
    if theta_degrees == 0:
        return img.copy()
    th = np.deg2rad(theta_degrees)
    c = (h - 1) / 2.0
    rr, cc = np.meshgrid(np.arange(h) - c, np.arange(w) - c, indexing="ij")
    # inverse map: output pixel samples the source rotated by -theta
    src_r = np.cos(th) * rr - np.sin(th) * cc + c
    src_c = np.sin(th) * rr + np.cos(th) * cc + c
    for arr in (src_r, src_c):
        snap = np.round(arr)
        near = np.abs(arr - snap) < 1e-9
        arr[near] = snap[near]
    return ndimage.map_coordinates(img, [src_r, src_c], order=1, mode="constant", cval=BACKGROUND)


def _centred_glyph(char: str, size: int) -> np.ndarray:
    g = glyph_bitmap(char, size // 2)
    frame = np.full((size, size), BACKGROUND)
    r0 = (size - g.shape[0]) // 2
    c0 = (size - g.shape[1]) // 2
    frame[r0 : r0 + g.shape[0], c0 : c0 + g.shape[1]] = g
    return frame


def rotating_sprite_sequence(spec: SequenceSpec) -> VideoSequence:
    base = _centred_glyph(spec.glyphs[0], spec.size)
    frames = np.stack([rotate_frame(base, t * spec.deg_per_frame)[None] for t in range(spec.frames)])
    return VideoSequence(np.clip(frames, -1.0, 1.0), spec)


def palette(slices: int = 12) -> np.ndarray:
    """``slices`` evenly spaced fully saturated hues, scaled to [-1, 1]."""
    rgb = [colorsys.hsv_to_rgb(s / slices, 1.0, 1.0) for s in range(slices)]
    return 2.0 * np.array(rgb) - 1.0


def slice_index(angle_degrees, t: int, deg_per_frame: float, slices: int = 12):
    width = 360.0 / slices
    return (np.floor(np.mod(angle_degrees - t * deg_per_frame, 360.0) / width).astype(int)) % slices


def pixel_angles(size: int):
    c = (size - 1) / 2.0
    rr, cc = np.meshgrid(np.arange(size) - c, np.arange(size) - c, indexing="ij")
    # angle measured counter-clockwise from +x with image rows pointing down
    angle = np.mod(np.degrees(np.arctan2(-rr, cc)), 360.0)
    inside = rr**2 + cc**2 <= (size / 2.0) ** 2
    return angle, inside


def color_wheel_sequence(spec: SequenceSpec) -> VideoSequence:
    colors = palette(spec.slices)
    angle, inside = pixel_angles(spec.size)
    frames = np.full((spec.frames, 3, spec.size, spec.size), BACKGROUND)
    for t in range(spec.frames):
        idx = slice_index(angle, t, spec.deg_per_frame, spec.slices)
        img = colors[idx].transpose(2, 0, 1)
        frames[t][:, inside] = img[:, inside]
    return VideoSequence(frames, spec)


def bounce_positions(start: int, velocity: int, limit: int, steps: int) -> list[int]:
    """Positions in ``[0, limit]`` of a point moving ``velocity`` per step with reflection."""
    pos, vel, out = start, velocity, [start]
    for _ in range(steps - 1):
        pos += vel
        while pos < 0 or pos > limit:
            if pos < 0:
                pos = -pos
            else:
                pos = 2 * limit - pos
            vel = -vel
        out.append(pos)
    return out


def translating_sprites_sequence(spec: SequenceSpec) -> VideoSequence:
    rng = SeededRng(spec.seed)
    glyphs = (spec.glyphs * 2)[:2]
    sprites = [glyph_bitmap(ch, max(7, spec.size * 3 // 8)) for ch in glyphs]
    for s in sprites:
        if s.shape[0] > spec.size or s.shape[1] > spec.size:
            raise ValueError("sprite larger than frame")
    vels = spec.velocities
    if vels is None:
        vels = tuple(tuple(int(v) for v in rng.integers(-3, 4, size=2)) for _ in sprites)
    tracks = []
    for s, (vr, vc) in zip(sprites, vels):
        lim_r = spec.size - s.shape[0]
        lim_c = spec.size - s.shape[1]
        r0 = int(rng.integers(0, lim_r + 1))
        c0 = int(rng.integers(0, lim_c + 1))
        tracks.append((bounce_positions(r0, vr, lim_r, spec.frames), bounce_positions(c0, vc, lim_c, spec.frames)))
    frames = np.full((spec.frames, 1, spec.size, spec.size), BACKGROUND)
    for t in range(spec.frames):
        for s, (rows, cols) in zip(sprites, tracks):
            r, c = rows[t], cols[t]
            win = frames[t, 0, r : r + s.shape[0], c : c + s.shape[1]]
            np.maximum(win, s, out=win)
    return VideoSequence(frames, spec, {"tracks": tracks, "velocities": vels})


def make_sequence(spec: SequenceSpec) -> VideoSequence:
    return {
        "rotating_sprite": rotating_sprite_sequence,
        "color_wheel": color_wheel_sequence,
        "translating_sprites": translating_sprites_sequence,
    }[spec.kind](spec)
