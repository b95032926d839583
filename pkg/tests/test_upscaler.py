import json

import numpy as np
import pytest

from hcdkit.diffpipe import (
    BicubicOp,
    ConvLayer,
    LearnedDownscaler,
    ModelChain,
    UpscalerParams,
    conv2d,
    depth_to_space,
    format_arch,
    forward,
    load_model,
    loss,
    make_chain,
    parse_arch,
    save_model,
    space_to_depth,
)
from hcdkit.imaging import psnr
from hcdkit.tensor import Rng


def naive_conv(x, w, b, stride=1):
    """Nested-loop zero-padded convolution (cross-correlation)."""
    B, C, H, W = x.shape
    O, _, k, _ = w.shape
    p = k // 2
    Ho, Wo = (H + stride - 1) // stride, (W + stride - 1) // stride
    out = np.zeros((B, O, Ho, Wo))
    for n in range(B):
        for o in range(O):
            for i in range(Ho):
                for j in range(Wo):
                    acc = b[o]
                    for c in range(C):
                        for di in range(k):
                            for dj in range(k):
                                r, q = i * stride + di - p, j * stride + dj - p
                                if 0 <= r < H and 0 <= q < W:
                                    acc += w[o, c, di, dj] * x[n, c, r, q]
                    out[n, o, i, j] = acc
    return out


def naive_shuffle(z, s):
    B, cs, H, W = z.shape
    c = cs // (s * s)
    out = np.zeros((B, c, H * s, W * s))
    for ch in range(c):
        for i in range(s):
            for j in range(s):
                out[:, ch, i::s, j::s] = z[:, ch * s * s + i * s + j]
    return out


PLAIN = "conv(3,4,3) relu conv(4,5,1) relu conv(5,12,3) pixelshuffle(2)"


class TestConv:
    @pytest.mark.parametrize("k", [1, 3, 5])
    def test_against_loops(self, k):
        r = Rng(k)
        x, w, b = r.normal((2, 3, 5, 4)), r.normal((4, 3, k, k)), r.normal((4,))
        assert np.allclose(conv2d(x, w, b), naive_conv(x, w, b), atol=1e-10)

    def test_strided_against_loops(self):
        r = Rng(9)
        x, w, b = r.normal((1, 2, 8, 8)), r.normal((2, 2, 5, 5)), r.normal((2,))
        assert np.allclose(conv2d(x, w, b, stride=2), naive_conv(x, w, b, 2), atol=1e-10)

    def test_shuffle_convention(self):
        z = Rng(2).normal((2, 12, 3, 4))
        assert np.array_equal(depth_to_space(z, 2), naive_shuffle(z, 2))

    def test_shuffle_roundtrip(self):
        z = Rng(2).normal((1, 27, 2, 5))
        assert np.array_equal(space_to_depth(depth_to_space(z, 3), 3), z)


class TestArch:
    def test_default_string(self):
        assert UpscalerParams.default_arch(2) == (
            "conv(3,32,5) relu conv(32,32,3) relu conv(32,12,3) pixelshuffle(2) +bicubic"
        )

    @pytest.mark.parametrize("arch", [PLAIN, PLAIN + " +bicubic", "conv(1,4,3) pixelshuffle(2)"])
    def test_roundtrip(self, arch):
        layers, scale, skip = parse_arch(arch)
        assert format_arch(layers, scale, skip) == arch
        assert UpscalerParams.init(arch, 0).arch == arch

    @pytest.mark.parametrize("arch", ["", "conv(3,4,3)", "conv(3,4,3) conv(4,12,3) pixelshuffle(2)",
                                      "relu pixelshuffle(2)", "conv(3,4,x) pixelshuffle(2)"])
    def test_bad_strings(self, arch):
        with pytest.raises(ValueError):
            parse_arch(arch)

    def test_channel_chain(self):
        with pytest.raises(ValueError, match="channel mismatch"):
            UpscalerParams([ConvLayer(np.zeros((4, 3, 3, 3)), np.zeros(4)),
                            ConvLayer(np.zeros((12, 5, 3, 3)), np.zeros(12))], 2)

    def test_even_kernel(self):
        with pytest.raises(ValueError, match="odd"):
            UpscalerParams([ConvLayer(np.zeros((12, 3, 2, 2)), np.zeros(12))], 2)

    def test_he_init_scale(self):
        f = UpscalerParams.init("conv(3,64,5) relu conv(64,12,3) pixelshuffle(2)", 1)
        std = f.layers[1].weight.std()
        assert std == pytest.approx(np.sqrt(2.0 / (64 * 9)), rel=0.05)
        assert not any(l.bias.any() for l in f.layers)

    def test_init_deterministic(self):
        a, b = UpscalerParams.init(PLAIN, 5), UpscalerParams.init(PLAIN, 5)
        assert all(np.array_equal(u, v) for u, v in zip(a.arrays(), b.arrays()))


class TestForward:
    def test_zero_net(self):
        f = UpscalerParams.init(PLAIN, 0)
        for l in f.layers:
            l.weight[...] = 0.0
        y, _ = forward(ModelChain(BicubicOp(2), f), Rng(0).uniform((1, 3, 4, 4)))
        assert y.shape == (1, 3, 8, 8) and not y.any()

    def test_zero_net_with_skip_is_bicubic(self):
        f = UpscalerParams.init(PLAIN + " +bicubic", 0)
        for l in f.layers:
            l.weight[...] = 0.0
        x = Rng(0).uniform((1, 3, 4, 4))
        assert np.array_equal(forward(ModelChain(BicubicOp(2), f), x)[0], BicubicOp(2).up(x))

    def test_bias_only(self):
        f = UpscalerParams.init("conv(3,12,1) pixelshuffle(2)", 0)
        f.layers[0].weight[...] = 0.0
        f.layers[0].bias[:] = np.arange(12) / 10
        y = f.forward(Rng(0).uniform((1, 3, 3, 3)))[0]
        assert np.allclose(y[0, 1, 0::2, 1::2], 0.5)
        assert np.allclose(y[0, 2, 1::2, 1::2], 1.1)

    def test_loop_oracle(self):
        chain = make_chain(2, seed=4, arch=PLAIN)
        x = Rng(4).uniform((1, 3, 4, 4))
        h = x
        for n, l in enumerate(chain.f.layers):
            h = naive_conv(h, l.weight, l.bias)
            if n < 2:
                h = np.maximum(h, 0)
        y, tape = forward(chain, x)
        assert np.allclose(y, naive_shuffle(h, 2), atol=1e-10)
        assert len(tape.pre) == 3

    def test_dims(self):
        chain = make_chain(2)
        assert chain.rescale(Rng(0).uniform((1, 3, 12, 10))).shape == (1, 3, 12, 10)

    def test_batch_equivariant(self):
        chain = make_chain(2, seed=1)
        x = Rng(1).uniform((3, 3, 6, 5))
        whole = chain.up(x)
        for i in range(3):
            assert np.array_equal(chain.up(x[i : i + 1])[0], whole[i])

    def test_channel_mismatch(self):
        with pytest.raises(ValueError, match="channels"):
            forward(make_chain(2), np.zeros((1, 1, 4, 4)))

    def test_scale_mismatch(self):
        with pytest.raises(ValueError, match="scale"):
            ModelChain(BicubicOp(4), UpscalerParams.init(PLAIN, 0))

    def test_learned_downscaler_close_to_bicubic_inside(self):
        g = LearnedDownscaler.from_bicubic(3, 2)
        y = Rng(3).uniform((1, 3, 16, 16))
        a, b = g.down(y), BicubicOp(2).down(y)
        assert np.allclose(a[..., 2:-2, 2:-2], b[..., 2:-2, 2:-2], atol=1e-12)


class TestLoss:
    def test_identical(self):
        a = Rng(0).uniform((1, 3, 4, 4))
        assert loss("mse", a, a) == 0.0
        assert loss("charbonnier", a, a) == pytest.approx(1e-6, abs=1e-18)

    def test_uniform_residual(self):
        a = np.zeros((1, 3, 4, 4))
        assert loss("mse", a + 0.1, a) == pytest.approx(0.01, abs=1e-15)

    def test_psnr_relation(self):
        r = Rng(1)
        a, b = r.uniform((1, 1, 8, 8)), r.uniform((1, 1, 8, 8))
        assert 10 * np.log10(1 / loss("mse", a, b)) == pytest.approx(psnr(a[0, 0], b[0, 0]), abs=1e-9)

    def test_mismatch(self):
        with pytest.raises(ValueError, match="mismatch"):
            loss("mse", np.zeros((1, 1, 2, 2)), np.zeros((1, 1, 2, 3)))

    def test_unknown(self):
        with pytest.raises(ValueError):
            loss("l2", np.zeros((1, 1, 2, 2)), np.zeros((1, 1, 2, 2)))


class TestSerialization:
    @pytest.mark.parametrize("learned", [False, True])
    def test_roundtrip(self, tmp_path, learned):
        chain = make_chain(2, seed=3, learned_down=learned)
        save_model(chain, tmp_path / "m.json")
        back = load_model(tmp_path / "m.json")
        x = Rng(0).uniform((1, 3, 8, 8))
        assert back.f.arch == chain.f.arch
        assert np.array_equal(back.rescale(x), chain.rescale(x))

    def test_bytes_deterministic(self, tmp_path):
        save_model(make_chain(2, seed=3), tmp_path / "a.json")
        save_model(load_model(tmp_path / "a.json"), tmp_path / "b.json")
        assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()

    def test_version_checked(self, tmp_path):
        d = make_chain(2).to_dict()
        d["version"] = 99
        (tmp_path / "m.json").write_text(json.dumps(d))
        with pytest.raises(ValueError, match="version"):
            load_model(tmp_path / "m.json")

    def test_arch_mismatch(self, tmp_path):
        d = make_chain(2).to_dict()
        d["upscaler"]["arch"] = PLAIN
        (tmp_path / "m.json").write_text(json.dumps(d))
        with pytest.raises(ValueError):
            load_model(tmp_path / "m.json")

    def test_garbage(self, tmp_path):
        (tmp_path / "m.json").write_text("{nope")
        with pytest.raises(ValueError):
            load_model(tmp_path / "m.json")
