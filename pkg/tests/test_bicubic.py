import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hcdkit.diffpipe import BicubicOp, bicubic_down, bicubic_down_adjoint
from hcdkit.tensor import Rng


def keys(t, a=-0.5):
    t = abs(t)
    if t <= 1:
        return (a + 2) * t**3 - (a + 3) * t**2 + 1
    if t < 2:
        return a * t**3 - 5 * a * t**2 + 8 * a * t - 4 * a
    return 0.0


def loop_down_1d(row, s):
    """Direct weighted sum: stretched kernel, clamped indices, normalised weights."""
    n = len(row)
    out = []
    for i in range(n // s):
        u = (i + 0.5) * s - 0.5
        acc = wsum = 0.0
        for j in range(math.floor(u - 2 * s) - 1, math.ceil(u + 2 * s) + 2):
            w = keys((u - j) / s)
            acc += w * row[min(max(j, 0), n - 1)]
            wsum += w
        out.append(acc / wsum)
    return out


def loop_down(img, s):
    rows = [loop_down_1d(r, s) for r in img]
    cols = [loop_down_1d(list(c), s) for c in zip(*rows)]
    return np.array(cols).T


class TestDown:
    def test_constant(self):
        y = np.full((1, 3, 8, 8), 0.5)
        assert np.max(np.abs(bicubic_down(BicubicOp(2), y) - 0.5)) <= 1e-12

    @pytest.mark.parametrize("scale", [2, 3, 4])
    def test_constant_preserved_all_scales(self, scale):
        y = np.full((2, 1, 12 * scale // 2, 8 * scale // 2 * 2), 0.37)
        assert np.max(np.abs(BicubicOp(scale).down(y) - 0.37)) <= 1e-12

    @pytest.mark.parametrize("scale", [2, 4])
    def test_rows_sum_to_one(self, scale):
        _, w = BicubicOp(scale).weight_rows(32)
        assert np.max(np.abs(w.sum(axis=1) - 1.0)) <= 1e-12

    def test_shape(self):
        assert BicubicOp(2).down(np.zeros((2, 3, 8, 6))).shape == (2, 3, 4, 3)

    def test_non_divisible(self):
        with pytest.raises(ValueError, match="divisible"):
            BicubicOp(2).down(np.zeros((1, 1, 7, 8)))

    @pytest.mark.parametrize("scale", [2, 4])
    def test_ramp(self, scale):
        n = 16 * scale
        ramp = np.tile(np.arange(n, dtype=float), (n, 1))
        out = BicubicOp(scale).down(ramp[None, None])[0, 0]
        centres = (np.arange(n // scale) + 0.5) * scale - 0.5
        inner = slice(2, n // scale - 2)
        assert np.allclose(out[:, inner], centres[inner], atol=1e-10)
        assert np.allclose(out[:, inner], np.array(loop_down(ramp, scale))[:, inner], atol=1e-10)

    @pytest.mark.parametrize("seed", range(5))
    @pytest.mark.parametrize("scale", [2, 4])
    def test_loop_oracle(self, seed, scale):
        img = Rng(seed).uniform((8 * scale // 2, 8 * scale // 2 + scale))
        got = BicubicOp(scale).down(img[None, None])[0, 0]
        assert np.allclose(got, loop_down(img.tolist(), scale), atol=1e-10, rtol=0)

    def test_dense_matrix_oracle(self):
        op = BicubicOp(2)
        idx, w = op.weight_rows(8)
        m = np.zeros((4, 8))
        for i in range(4):
            for j, wt in zip(idx[i], w[i]):
                m[i, j] += wt
        y = Rng(7).uniform((1, 2, 8, 8))
        assert np.allclose(op.down(y), m @ y @ m.T, atol=1e-10, rtol=0)

    def test_linear(self):
        r = Rng(3)
        u, v = r.uniform((1, 3, 8, 8)), r.uniform((1, 3, 8, 8))
        op = BicubicOp(2)
        assert np.allclose(op.down(2.5 * u - 0.7 * v), 2.5 * op.down(u) - 0.7 * op.down(v), atol=1e-10)

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 2**31), st.sampled_from([2, 4]), st.integers(1, 4), st.integers(1, 4))
    def test_affine_range(self, seed, scale, hb, wb):
        # a > -0.75 keeps the overshoot bounded; outputs stay near the input range
        y = Rng(seed).uniform((1, 1, hb * scale * 2, wb * scale * 2))
        out = BicubicOp(scale).down(y)
        assert out.min() > -0.25 and out.max() < 1.25


class TestAdjoint:
    def test_zeros(self):
        assert not BicubicOp(2).adjoint(np.zeros((1, 1, 4, 4))).any()

    @pytest.mark.parametrize("scale", [2, 4])
    def test_inner_product_100_pairs(self, scale):
        op = BicubicOp(scale)
        r = Rng(11)
        worst = 0.0
        for _ in range(100):
            u = r.normal((1, 3, 4 * scale, 4 * scale))
            v = r.normal((1, 3, 4, 4))
            lhs = np.sum(op.down(u) * v)
            rhs = np.sum(u * bicubic_down_adjoint(op, v))
            worst = max(worst, abs(lhs - rhs))
        assert worst <= 1e-10

    def test_unit_vector_gives_operator_row(self):
        op = BicubicOp(2)
        m = op.matrix(8)
        for i in range(4):
            for j in range(4):
                v = np.zeros((1, 1, 4, 4))
                v[0, 0, i, j] = 1.0
                assert np.allclose(op.adjoint(v)[0, 0], np.outer(m[i], m[j]), atol=1e-14)

    def test_dim_mismatch(self):
        with pytest.raises(ValueError):
            BicubicOp(2).adjoint(np.zeros((1, 1, 4, 4)), (10, 8))


class TestUp:
    def test_constant(self):
        out = BicubicOp(2).up(np.full((1, 1, 5, 6), 0.25))
        assert out.shape == (1, 1, 10, 12)
        assert np.max(np.abs(out - 0.25)) <= 1e-12

    def test_up_adjoint(self):
        op = BicubicOp(2)
        r = Rng(5)
        x, v = r.normal((1, 2, 5, 6)), r.normal((1, 2, 10, 12))
        assert np.sum(op.up(x) * v) == pytest.approx(np.sum(x * op.up_adjoint(v)), abs=1e-10)
