import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from genrec.generator import (
    PRESETS,
    Architecture,
    TapeError,
    Weights,
    backward,
    deconv2d_backward,
    deconv2d_forward,
    forward,
    generate,
    param_count,
    preset,
    random_weights,
)
from genrec.tensor_core import SeededRng, ShapeError


def scatter_add_deconv(x, kernel):
    """Direct transposed convolution: every input pixel stamps the kernel at stride 2, then crop 1."""
    cin, h, w = x.shape
    cout = kernel.shape[1]
    full = np.zeros((cout, 2 * h + 2, 2 * w + 2))
    for ci in range(cin):
        for i in range(h):
            for j in range(w):
                for co in range(cout):
                    full[co, 2 * i : 2 * i + 4, 2 * j : 2 * j + 4] += x[ci, i, j] * kernel[ci, co]
    return full[:, 1:-1, 1:-1]


def shape_walker_count(latent_dim, base_channels, channels, base_size=4):
    total = latent_dim * base_channels * base_size * base_size
    prev = base_channels
    for c in channels:
        total += prev * c * 4 * 4
        prev = c
    return total


def test_param_count_grayscale_table():
    arch = preset("grayscale")
    assert arch.layer_param_counts() == [131072, 524288, 131072, 32768, 512]
    assert param_count(arch) == 819712


def test_param_count_rgb_table():
    arch = preset("rgb")
    assert arch.layer_param_counts() == [2097152, 2097152, 524288, 131072, 3072]
    assert param_count(arch) == 4852736


@pytest.mark.parametrize("name", sorted(PRESETS))
def test_param_count_matches_shape_walker(name):
    a = PRESETS[name]
    assert param_count(a) == shape_walker_count(a.latent_dim, a.base_channels, a.deconv_channels, a.base_size)


def test_tiny_preset_count():
    # 4*128 + 8*8*16 + 8*4*16 + 4*2*16 + 2*1*16
    assert param_count(preset("tiny")) == 512 + 1024 + 512 + 128 + 32


def test_output_sizes():
    assert preset("grayscale").image_shape == (1, 64, 64)
    assert preset("rgb").image_shape == (3, 64, 64)
    assert preset("tiny").image_shape == (1, 64, 64)
    assert preset("tiny16").image_shape == (1, 16, 16)


def test_deconv_zero_kernel(np_rng):
    x = np_rng.standard_normal((3, 5, 5))
    assert np.all(deconv2d_forward(x, np.zeros((3, 2, 4, 4))) == 0)


def test_deconv_small_matches_scatter_add(np_rng):
    x = np_rng.standard_normal((1, 2, 2))
    k = np_rng.standard_normal((1, 1, 4, 4))
    out = deconv2d_forward(x, k)
    assert out.shape == (1, 4, 4)
    np.testing.assert_allclose(out, scatter_add_deconv(x, k), atol=1e-13)


@settings(max_examples=30, deadline=None)
@given(cin=st.integers(1, 3), cout=st.integers(1, 3), h=st.integers(1, 5), seed=st.integers(0, 10_000))
def test_deconv_property_matches_scatter_add(cin, cout, h, seed):
    r = np.random.default_rng(seed)
    x = r.standard_normal((cin, h, h + 1))
    k = r.standard_normal((cin, cout, 4, 4))
    out = deconv2d_forward(x, k)
    assert out.shape == (cout, 2 * h, 2 * (h + 1))
    np.testing.assert_allclose(out, scatter_add_deconv(x, k), atol=1e-12)


def test_deconv_dimension_doubling(np_rng):
    assert deconv2d_forward(np_rng.standard_normal((1, 4, 4)), np_rng.standard_normal((1, 1, 4, 4))).shape == (1, 8, 8)


def test_deconv_channel_mismatch():
    with pytest.raises(ShapeError):
        deconv2d_forward(np.ones((2, 3, 3)), np.ones((3, 1, 4, 4)))


def test_deconv_backward_is_adjoint(np_rng):
    x = np_rng.standard_normal((3, 4, 4))
    k = np_rng.standard_normal((3, 2, 4, 4))
    d = np_rng.standard_normal((2, 8, 8))
    dx, dk = deconv2d_backward(x, k, d)
    # linear in x and in k: <f(x), d> == <x, dx> == <k, dk>
    ref = np.sum(deconv2d_forward(x, k) * d)
    assert np.isclose(ref, np.sum(x * dx), rtol=1e-12)
    assert np.isclose(ref, np.sum(k * dk), rtol=1e-12)


def test_forward_zero_weights():
    arch = preset("tiny")
    img, _ = forward(Weights.zeros(arch), np.ones(arch.latent_dim))
    assert np.all(img == 0)


def test_rgb_output_shape():
    arch = preset("rgb")
    w = Weights.zeros(arch)
    assert generate(w, np.ones(256)).shape == (3, 64, 64)


def test_forward_single_path_hand_trace():
    # one live path: z0 -> fc unit (0, 0, 0) -> one kernel tap per layer -> output pixel
    arch = Architecture(1, 1, (1, 1), base_size=1)
    fc = np.array([[2.0]])
    k1 = np.zeros((1, 1, 4, 4))
    k1[0, 0, 1, 1] = 0.5
    k2 = np.zeros((1, 1, 4, 4))
    k2[0, 0, 1, 1] = -0.7
    w = Weights(arch, fc, [k1, k2])
    z = np.array([0.8])
    img = generate(w, z)
    # fc: 1.6 -> relu 1.6; deconv1 tap (1,1) lands at output (0,0) after cropping: 0.8
    # deconv2 tap (1,1) at (0,0): -0.56 -> tanh
    expected = np.zeros((1, 4, 4))
    expected[0, 0, 0] = np.tanh(-0.7 * max(0.5 * max(2.0 * 0.8, 0), 0))
    np.testing.assert_allclose(img, expected, atol=1e-15)


def test_output_range_and_determinism(tiny_weights, np_rng):
    z = np_rng.standard_normal(4)
    a = generate(tiny_weights, z)
    b = generate(tiny_weights, z)
    assert np.array_equal(a, b)
    assert np.all(np.abs(a) < 1)


def test_backward_zero_cotangent(tiny_weights, np_rng):
    img, tape = forward(tiny_weights, np_rng.standard_normal(4))
    g = backward(tiny_weights, tape, np.zeros_like(img))
    assert all(np.all(t == 0) for t in g.tensors()) and np.all(g.d_z == 0)


def test_backward_stale_tape(tiny_weights, np_rng):
    img, tape = forward(tiny_weights, np_rng.standard_normal(4))
    with pytest.raises(TapeError):
        backward(tiny_weights.copy(), tape, img)


def test_relu_gradient_zero_at_negative_preactivation():
    arch = Architecture(1, 1, (1,), base_size=1)
    w = Weights(arch, np.array([[-1.0]]), [np.ones((1, 1, 4, 4))])
    img, tape = forward(w, np.array([1.0]))
    assert tape.pre[0].item() < 0
    g = backward(w, tape, np.ones_like(img))
    assert g.d_z[0] == 0.0 and np.all(g.d_fc == 0.0)


def _entrywise_fd(weights, z, cot, h=1e-5):
    f = lambda w, zz: float(np.sum(generate(w, zz) * cot))
    tensors = weights.tensors()
    fd = []
    for idx, t in enumerate(tensors):
        g = np.zeros_like(t)
        for pos in np.ndindex(t.shape):
            plus = [a.copy() for a in tensors]
            minus = [a.copy() for a in tensors]
            plus[idx][pos] += h
            minus[idx][pos] -= h
            g[pos] = (f(Weights.from_tensors(weights.arch, plus), z) - f(Weights.from_tensors(weights.arch, minus), z)) / (2 * h)
        fd.append(g)
    dz = np.array([(f(weights, z + h * e) - f(weights, z - h * e)) / (2 * h) for e in np.eye(len(z))])
    return fd, dz


@pytest.mark.parametrize("name", ["tiny", "tiny16"])
def test_backward_every_entry_matches_finite_differences(name):
    weights = random_weights(preset(name), SeededRng(11))
    r = np.random.default_rng(4)
    z = r.standard_normal(4)
    img, tape = forward(weights, z)
    cot = r.standard_normal(img.shape)
    g = backward(weights, tape, cot)
    fd, fd_z = _entrywise_fd(weights, z, cot)
    for an, num in zip([*g.tensors(), g.d_z], [*fd, fd_z]):
        scale = np.maximum(np.maximum(np.abs(an), np.abs(num)), 1e-3 * np.abs(an).max())
        assert np.max(np.abs(an - num) / scale) < 1e-6


def test_directional_derivatives(tiny16_weights):
    r = np.random.default_rng(8)
    z = r.standard_normal(4)
    img, tape = forward(tiny16_weights, z)
    cot = r.standard_normal(img.shape)
    g = backward(tiny16_weights, tape, cot)
    f = lambda w, zz: float(np.sum(generate(w, zz) * cot))
    h = 1e-5
    for _ in range(50):
        vs = [r.standard_normal(t.shape) for t in tiny16_weights.tensors()]
        vz = r.standard_normal(4)
        wp = Weights.from_tensors(tiny16_weights.arch, [t + h * v for t, v in zip(tiny16_weights.tensors(), vs)])
        wm = Weights.from_tensors(tiny16_weights.arch, [t - h * v for t, v in zip(tiny16_weights.tensors(), vs)])
        fd = (f(wp, z + h * vz) - f(wm, z - h * vz)) / (2 * h)
        an = sum(np.sum(a * v) for a, v in zip(g.tensors(), vs)) + g.d_z @ vz
        assert abs(fd - an) / max(abs(fd), abs(an)) < 1e-6


def test_random_weights_scaling():
    arch = preset("grayscale")
    w = random_weights(arch, SeededRng(0))
    assert np.isclose(w.fc.std(), np.sqrt(2 / 32), rtol=0.02)
    assert np.isclose(w.kernels[0].std(), np.sqrt(2 / (256 * 4)), rtol=0.02)


def test_flatten_roundtrip(tiny_weights):
    back = Weights.unflatten(tiny_weights.arch, tiny_weights.flatten())
    assert all(np.array_equal(a, b) for a, b in zip(back.tensors(), tiny_weights.tensors()))
