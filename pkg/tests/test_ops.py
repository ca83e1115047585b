import numpy as np
import pytest

from unsupseg import ops


def conv2d_naive(x, kernels, bias, padding="zero"):
    """Quadruple-loop reference convolution (independent oracle)."""
    c, h, w = x.shape
    o = kernels.shape[0]
    if padding == "zero":
        xp = np.zeros((c, h + 2, w + 2), dtype=x.dtype)
        xp[:, 1 : h + 1, 1 : w + 1] = x
    else:
        xp = np.pad(x, ((0, 0), (1, 1), (1, 1)), mode="edge")
    out = np.empty((o, h, w), dtype=x.dtype)
    for oc in range(o):
        for y in range(h):
            for xx in range(w):
                acc = bias[oc]
                for ic in range(c):
                    for dy in range(3):
                        for dx in range(3):
                            acc += kernels[oc, ic, dy, dx] * xp[ic, y + dy, xx + dx]
                out[oc, y, xx] = acc
    return out


def wrap_conv(x, kernels, bias, padding="zero"):
    """Adapt conv2d to the gradient_check (output, vjp) convention."""

    def f(point):
        xi, ki, bi = point
        out = ops.conv2d(xi, ki, bi, padding=padding)

        def vjp(u):
            return list(ops.conv2d_vjp(xi, ki, u, padding=padding))

        return out, vjp

    return f, [x, kernels, bias]


def wrap_bn(x, gamma, beta, eps=1e-5):
    def f(point):
        xi, gi, bi = point
        out, stats = ops.batch_norm_channels(xi, gi, bi, eps)

        def vjp(u):
            return list(ops.batch_norm_channels_vjp(u, gi, stats))

        return out, vjp

    return f, [x, gamma, beta]


class TestConv2d:
    def test_zero_kernels_give_zero_output(self):
        rng = np.random.default_rng(0)
        x = rng.random((2, 5, 5))
        out = ops.conv2d(x, np.zeros((3, 2, 3, 3)), np.zeros(3))
        assert np.all(out == 0)

    def test_all_ones_center_and_corners(self):
        x = np.ones((1, 3, 3))
        out = ops.conv2d(x, np.ones((1, 1, 3, 3)), np.zeros(1))
        assert out[0, 1, 1] == 9
        for y, xx in ((0, 0), (0, 2), (2, 0), (2, 2)):
            assert out[0, y, xx] == 4

    def test_matches_naive_oracle(self):
        rng = np.random.default_rng(1)
        x = rng.standard_normal((2, 4, 4))
        k = rng.standard_normal((3, 2, 3, 3))
        b = rng.standard_normal(3)
        assert np.allclose(ops.conv2d(x, k, b), conv2d_naive(x, k, b), atol=1e-6)

    def test_replicate_padding_matches_naive(self):
        rng = np.random.default_rng(2)
        x = rng.standard_normal((2, 4, 5))
        k = rng.standard_normal((3, 2, 3, 3))
        b = rng.standard_normal(3)
        got = ops.conv2d(x, k, b, padding="replicate")
        assert np.allclose(got, conv2d_naive(x, k, b, padding="replicate"), atol=1e-6)

    def test_replicate_constant_input_stays_constant(self):
        rng = np.random.default_rng(3)
        k = rng.standard_normal((4, 2, 3, 3))
        x = np.full((2, 6, 6), 0.7)
        out = ops.conv2d(x, k, rng.standard_normal(4), padding="replicate")
        for oc in range(4):
            assert np.allclose(out[oc], out[oc, 0, 0])

    def test_channel_mismatch_rejected(self):
        with pytest.raises(ValueError):
            ops.conv2d(np.zeros((2, 4, 4)), np.zeros((3, 5, 3, 3)), np.zeros(3))

    def test_linearity(self):
        rng = np.random.default_rng(4)
        k = rng.standard_normal((3, 2, 3, 3))
        bias = np.zeros(3)
        x = rng.standard_normal((2, 5, 5))
        y = rng.standard_normal((2, 5, 5))
        a, b = 1.7, -0.4
        lhs = ops.conv2d(a * x + b * y, k, bias)
        rhs = a * ops.conv2d(x, k, bias) + b * ops.conv2d(y, k, bias)
        assert np.allclose(lhs, rhs, atol=1e-5)

    @pytest.mark.parametrize("padding", ["zero", "replicate"])
    def test_gradient_check(self, padding):
        rng = np.random.default_rng(5)
        f, point = wrap_conv(
            rng.standard_normal((2, 6, 6)),
            rng.standard_normal((3, 2, 3, 3)),
            rng.standard_normal(3),
            padding=padding,
        )
        assert ops.gradient_check(f, point, step=1e-3) < 1e-4


class TestRelu:
    def test_forward(self):
        x = np.array([-1.0, 0.0, 2.0])
        assert np.array_equal(ops.relu(x), [0.0, 0.0, 2.0])

    def test_vjp_subgradient_zero_at_zero(self):
        x = np.array([-1.0, 0.0, 2.0])
        up = np.array([5.0, 5.0, 5.0])
        assert np.array_equal(ops.relu_vjp(x, up), [0.0, 0.0, 5.0])

    def test_gradient_matches_fd_away_from_zero(self):
        rng = np.random.default_rng(6)
        x = rng.standard_normal((3, 4, 4))
        x = np.where(np.abs(x) < 0.1, x + 0.3 * np.sign(x) + 0.3, x)  # clear the kink

        def f(point):
            out = ops.relu(point[0])
            return out, lambda u: [ops.relu_vjp(point[0], u)]

        assert ops.gradient_check(f, [x], step=1e-3) < 1e-6


class TestBatchNorm:
    def test_two_values_normalize_to_plus_minus_one(self):
        x = np.array([[[1.0, 3.0]]])  # one channel, two pixels
        out, _ = ops.batch_norm_channels(x, np.ones(1), np.zeros(1), eps=1e-12)
        assert np.allclose(out, [[[-1.0, 1.0]]], atol=1e-6)

    def test_constant_channel_outputs_beta(self):
        x = np.full((2, 3, 3), 4.2)
        out, _ = ops.batch_norm_channels(x, np.ones(2), np.full(2, 0.5), eps=1e-5)
        assert np.allclose(out, 0.5)

    def test_forward_matches_direct_formula(self):
        rng = np.random.default_rng(7)
        x = rng.standard_normal((3, 4, 4))
        gamma = rng.standard_normal(3)
        beta = rng.standard_normal(3)
        eps = 1e-5
        out, _ = ops.batch_norm_channels(x, gamma, beta, eps)
        for c in range(3):
            mean = x[c].mean()
            var = ((x[c] - mean) ** 2).mean()
            expect = gamma[c] * (x[c] - mean) / np.sqrt(var + eps) + beta[c]
            assert np.allclose(out[c], expect, atol=1e-6)

    def test_gradient_check(self):
        rng = np.random.default_rng(8)
        f, point = wrap_bn(
            rng.standard_normal((4, 5, 5)),
            rng.standard_normal(4),
            rng.standard_normal(4),
        )
        assert ops.gradient_check(f, point, step=1e-3) < 1e-4

    def test_identity_affine_gives_zero_mean_unit_variance(self):
        rng = np.random.default_rng(9)
        eps = 1e-5
        for trial in range(10):
            x = rng.standard_normal((3, 6, 6)) * rng.uniform(0.5, 3.0)
            out, _ = ops.batch_norm_channels(x, np.ones(3), np.zeros(3), eps)
            for c in range(3):
                v = x[c].var()
                assert abs(out[c].mean()) < 1e-5
                assert abs(out[c].var() - v / (v + eps)) < 1e-4


class TestTransposeConsistency:
    """<vjp(u), delta> must equal <u, jvp(delta)> with jvp by finite differences."""

    def _check(self, f_forward, f_vjp, inputs, seed):
        rng = np.random.default_rng(seed)
        out = f_forward(*inputs)
        u = rng.standard_normal(out.shape)
        deltas = [rng.standard_normal(a.shape) for a in inputs]
        grads = f_vjp(u, *inputs)
        lhs = sum(float(np.vdot(g, d)) for g, d in zip(grads, deltas))
        h = 1e-4
        plus = f_forward(*[a + h * d for a, d in zip(inputs, deltas)])
        minus = f_forward(*[a - h * d for a, d in zip(inputs, deltas)])
        rhs = float(np.vdot(u, (plus - minus) / (2 * h)))
        assert abs(lhs - rhs) / max(abs(lhs), abs(rhs)) < 1e-4

    def test_conv2d(self):
        rng = np.random.default_rng(10)
        x = rng.standard_normal((2, 5, 5))
        k = rng.standard_normal((3, 2, 3, 3))
        b = rng.standard_normal(3)
        self._check(
            lambda xi, ki, bi: ops.conv2d(xi, ki, bi),
            lambda u, xi, ki, bi: ops.conv2d_vjp(xi, ki, u),
            [x, k, b],
            seed=11,
        )

    def test_batch_norm(self):
        rng = np.random.default_rng(12)
        x = rng.standard_normal((3, 4, 4))
        gamma = rng.standard_normal(3)
        beta = rng.standard_normal(3)
        self._check(
            lambda xi, gi, bi: ops.batch_norm_channels(xi, gi, bi)[0],
            lambda u, xi, gi, bi: ops.batch_norm_channels_vjp(
                u, gi, ops.batch_norm_channels(xi, gi, bi)[1]
            ),
            [x, gamma, beta],
            seed=13,
        )

    def test_relu(self):
        rng = np.random.default_rng(14)
        x = rng.standard_normal((3, 4, 4)) + 0.5
        x = np.where(np.abs(x) < 0.05, x + 0.2, x)
        self._check(
            lambda xi: ops.relu(xi),
            lambda u, xi: (ops.relu_vjp(xi, u),),
            [x],
            seed=15,
        )


class TestGradientCheck:
    def test_identity_is_exact(self):
        def identity(point):
            return point[0], lambda u: [u]

        x = np.zeros((2, 3))
        assert ops.gradient_check(identity, [x], step=0.5) == 0.0

    def test_reports_nonfinite_output(self):
        def bad(point):
            out = point[0].copy()
            out[0] = np.nan
            return out, lambda u: [u]

        with pytest.raises(FloatingPointError, match="coordinate"):
            ops.gradient_check(bad, [np.ones(3)])


class TestDeterminismAndFiniteness:
    def test_primitives_bit_identical(self):
        rng = np.random.default_rng(16)
        x = rng.standard_normal((2, 4, 4)).astype(np.float32)
        k = rng.standard_normal((3, 2, 3, 3)).astype(np.float32)
        b = rng.standard_normal(3).astype(np.float32)
        out1 = ops.conv2d(x, k, b)
        out2 = ops.conv2d(x.copy(), k.copy(), b.copy())
        assert np.array_equal(out1, out2)
        g = rng.standard_normal(2).astype(np.float32)
        bt = rng.standard_normal(2).astype(np.float32)
        y = rng.standard_normal((2, 4, 4)).astype(np.float32)
        assert np.array_equal(
            ops.batch_norm_channels(y, g, bt)[0],
            ops.batch_norm_channels(y.copy(), g.copy(), bt.copy())[0],
        )

    def test_all_passes_finite_on_finite_input(self):
        rng = np.random.default_rng(17)
        x = rng.standard_normal((3, 6, 6))
        k = rng.standard_normal((4, 3, 3, 3))
        b = rng.standard_normal(4)
        up = rng.standard_normal((4, 6, 6))
        out = ops.conv2d(x, k, b)
        assert np.all(np.isfinite(out))
        for arr in ops.conv2d_vjp(x, k, up):
            assert np.all(np.isfinite(arr))
        gamma = rng.standard_normal(4)
        beta = rng.standard_normal(4)
        bn_out, stats = ops.batch_norm_channels(out, gamma, beta)
        assert np.all(np.isfinite(bn_out))
        for arr in ops.batch_norm_channels_vjp(up, gamma, stats):
            assert np.all(np.isfinite(arr))
        r = ops.relu(out)
        assert np.all(np.isfinite(r))
        assert np.all(np.isfinite(ops.relu_vjp(out, up)))
