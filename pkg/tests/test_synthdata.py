import numpy as np
import pytest

from genrec import synthdata

from genrec.synthdata import (
    BACKGROUND,
    SequenceSpec,
    bounce_positions,
    glyph_bitmap,
    make_sequence,
    palette,
    pixel_angles,
    rotate_frame,
)


def test_rotate_zero_is_identity(np_rng):
    img = np_rng.uniform(-1, 1, (16, 16))
    assert np.array_equal(rotate_frame(img, 0.0), img)


def test_rotate_90_is_permutation(np_rng):
    img = np_rng.uniform(-1, 1, (8, 8))
    out = rotate_frame(img, 90.0)
    # positive angles turn (row, col) axes: out[r, c] = img[n-1-c, r]
    n = img.shape[0]
    oracle = np.empty_like(img)
    for r in range(n):
        for c in range(n):
            oracle[r, c] = img[n - 1 - c, r]
    np.testing.assert_allclose(out, oracle, atol=1e-12)


def test_rotate_cumulative_360():
    # smooth asymmetric blobs: a hard-edged glyph is washed out by 180 chained bilinear resamples
    n = 32
    c = (n - 1) / 2
    rr, cc = np.meshgrid(np.arange(n) - c, np.arange(n) - c, indexing="ij")
    img = -1 + 1.6 * np.exp(-((rr - 3) ** 2 / 40 + (cc + 2) ** 2 / 12)) + 0.4 * np.exp(-((rr + 5) ** 2 + (cc - 6) ** 2) / 8)
    assert np.mean(np.abs(rotate_frame(img, 90.0) - img)) > 0.1
    out = img
    for _ in range(180):
        out = rotate_frame(out, 2.0)
    assert np.mean(np.abs(out - img)) < 0.1


def test_rotate_non_square():
    with pytest.raises(ValueError):
        rotate_frame(np.zeros((4, 5)), 10.0)


def test_rotate_preserves_mean():
    img = make_sequence(SequenceSpec("rotating_sprite", 1, size=64)).frames[0, 0]
    fg = img - BACKGROUND
    for theta in (15, 45, 90, 133):
        rot = rotate_frame(img, theta) - BACKGROUND
        assert abs(rot.mean() - fg.mean()) < 0.05 * fg.mean()


def test_rotating_sequence_shape_and_range():
    seq = make_sequence(SequenceSpec("rotating_sprite", 32, size=32, deg_per_frame=2.0))
    assert seq.frames.shape == (32, 1, 32, 32)
    assert seq.frames.min() >= -1 and seq.frames.max() <= 1


def test_color_wheel_palette_only():
    seq = make_sequence(SequenceSpec("color_wheel", 3, size=32))
    _, inside = pixel_angles(32)
    pal = palette(12)
    for frame in seq.frames:
        px = frame[:, inside].T
        d = np.abs(px[:, None, :] - pal[None]).sum(axis=2)
        assert np.all(d.min(axis=1) == 0)
        assert np.all(frame[:, ~inside] == BACKGROUND)


def test_color_wheel_30_frame_shift():
    seq = make_sequence(SequenceSpec("color_wheel", 31, size=64, deg_per_frame=1.0))
    pal = palette(12)
    _, inside = pixel_angles(64)
    lookup = {tuple(c): i for i, c in enumerate(pal)}
    a = np.array([lookup[tuple(p)] for p in seq.frames[0][:, inside].T])
    b = np.array([lookup[tuple(p)] for p in seq.frames[30][:, inside].T])
    assert np.array_equal(b, (a - 1) % 12)


def test_color_wheel_atan2_oracle():
    size, t, deg = 32, 7, 1.0
    frame = make_sequence(SequenceSpec("color_wheel", t + 1, size=size, deg_per_frame=deg)).frames[t]
    pal = palette(12)
    c = (size - 1) / 2
    for r in range(size):
        for col in range(size):
            y, x = c - r, col - c
            if x * x + y * y > (size / 2) ** 2:
                continue
            ang = np.degrees(np.arctan2(y, x)) % 360
            s = int(((ang - t * deg) % 360) // 30) % 12
            assert np.array_equal(frame[:, r, col], pal[s])


def test_palette_distinct():
    pal = palette(12)
    assert len({tuple(c) for c in pal}) == 12


def test_bounce_oracle():
    def oracle(start, v, limit, steps):
        # unit-step walk that turns around on reaching a wall
        out, p, d = [start], start, (1 if v > 0 else -1)
        for _ in range(steps - 1):
            for _ in range(abs(v)):
                if not 0 <= p + d <= limit:
                    d = -d
                p += d
            out.append(p)
        return out

    for start, v, limit in [(0, 1, 5), (3, -2, 9), (9, 3, 9), (0, 0, 4)]:
        assert bounce_positions(start, v, limit, 25) == oracle(start, v, limit, 25)


def test_translating_zero_velocity():
    seq = make_sequence(SequenceSpec("translating_sprites", 5, size=32, velocities=((0, 0), (0, 0))))
    assert all(np.array_equal(f, seq.frames[0]) for f in seq.frames)


def test_translating_sprite_too_large(monkeypatch):
    monkeypatch.setattr(synthdata, "glyph_bitmap", lambda ch, h: np.ones((40, 40)))
    with pytest.raises(ValueError):
        make_sequence(SequenceSpec("translating_sprites", 2, size=16, glyphs="3"))


@pytest.mark.parametrize("kind", ["rotating_sprite", "color_wheel", "translating_sprites"])
def test_deterministic(kind):
    a = make_sequence(SequenceSpec(kind, 4, size=32, seed=3)).frames
    b = make_sequence(SequenceSpec(kind, 4, size=32, seed=3)).frames
    assert np.array_equal(a, b)
    assert a.min() >= -1 and a.max() <= 1


def test_spec_validation():
    with pytest.raises(ValueError):
        SequenceSpec("rotating_sprite", 0)
    with pytest.raises(ValueError):
        SequenceSpec("rotating_sprite", 4, size=20)
    with pytest.raises(ValueError):
        SequenceSpec("spiral", 4)


def test_glyph_bitmap_range():
    g = glyph_bitmap("3", 14)
    assert g.shape[0] == 14 and set(np.unique(g)) <= {-1.0, 1.0}
