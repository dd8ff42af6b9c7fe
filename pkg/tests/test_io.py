import numpy as np
import pytest

from genrec import io
from genrec.generator import Architecture, generate, preset, random_weights
from genrec.tensor_core import SeededRng


def test_weights_roundtrip_bitwise(tmp_path):
    for name in ("tiny", "tiny16", "tiny_rgb"):
        w = random_weights(preset(name), SeededRng(1))
        io.save_weights(tmp_path / "w.genrec", w)
        back = io.load_weights(tmp_path / "w.genrec")
        assert back.arch == w.arch
        z = np.random.default_rng(0).standard_normal(w.arch.latent_dim)
        assert np.array_equal(generate(back, z), generate(w, z))


def test_weights_header_layout(tmp_path):
    w = random_weights(preset("tiny"), SeededRng(0))
    io.save_weights(tmp_path / "w.genrec", w)
    data = (tmp_path / "w.genrec").read_bytes()
    assert data[:7] == b"GENREC1"
    header = np.frombuffer(data, "<u4", 9, 7)
    assert header.tolist() == [4, 8, 4, 4, 8, 4, 2, 1, 1]
    assert len(data) == 7 + 36 + 8 * 2208


def test_weights_bad_files(tmp_path):
    (tmp_path / "bad").write_bytes(b"NOTAFILE")
    with pytest.raises(io.FormatError):
        io.load_weights(tmp_path / "bad")
    w = random_weights(Architecture(2, 2, (1,), base_size=1), SeededRng(0))
    io.save_weights(tmp_path / "w", w)
    (tmp_path / "short").write_bytes((tmp_path / "w").read_bytes()[:-8])
    with pytest.raises(io.FormatError):
        io.load_weights(tmp_path / "short")


def test_pixel_mapping():
    assert np.array_equal(io.to_bytes(np.array([-1.0, 0.0, 1.0, 5.0])), [0, 128, 255, 255])
    np.testing.assert_allclose(io.from_bytes(np.array([0, 255], dtype=np.uint8)), [-1.0, 1.0])
    b = np.arange(256, dtype=np.uint8)
    assert np.array_equal(io.to_bytes(io.from_bytes(b)), b)


@pytest.mark.parametrize("channels, suffix", [(1, ".pgm"), (3, ".ppm")])
def test_frame_roundtrip(tmp_path, channels, suffix):
    img = io.from_bytes(np.random.default_rng(0).integers(0, 256, (channels, 5, 7)).astype(np.uint8))
    paths = io.write_frames(tmp_path, [img, img])
    assert [p.name for p in paths] == [f"frame_0000{suffix}", f"frame_0001{suffix}"]
    back = io.read_frames(tmp_path)
    assert back.shape == (2, channels, 5, 7)
    assert np.array_equal(back[0], img)


def test_pgm_header(tmp_path):
    io.write_frame(tmp_path / "a.pgm", np.zeros((1, 2, 3)))
    assert (tmp_path / "a.pgm").read_bytes() == b"P5\n3 2\n255\n" + bytes([128] * 6)


def test_read_frame_with_comment(tmp_path):
    (tmp_path / "c.pgm").write_bytes(b"P5\n# comment\n2 1\n255\n" + bytes([0, 255]))
    np.testing.assert_allclose(io.read_frame(tmp_path / "c.pgm"), [[[-1.0, 1.0]]])


def test_csv_dialect(tmp_path):
    io.write_residuals(tmp_path / "r.csv", [3.5, 2.0])
    assert (tmp_path / "r.csv").read_bytes() == b"epoch,data_loss\n0,3.5\n1,2.0\n"


def test_latents_roundtrip(tmp_path):
    z = np.random.default_rng(3).standard_normal((4, 6))
    io.write_latents(tmp_path / "z.csv", z)
    assert np.array_equal(io.read_latents(tmp_path / "z.csv"), z)


def test_config_parse():
    cfg = io.parse_config("# header\nmode = joint  # comment\nlr-z=0.5\n\n")
    assert cfg == {"mode": "joint", "lr_z": "0.5"}
    with pytest.raises(io.FormatError):
        io.parse_config("novalue\n")
    assert io.parse_config(io.format_config({"a": 1, "b": "x"})) == {"a": "1", "b": "x"}
