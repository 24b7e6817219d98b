"""Autodiff engine: forward oracles, gradient checks, negative controls."""
import numpy as np
import pytest

from groundroll import nn
from groundroll.nn.tensor import Tensor


def check(loss_fn, params, h=1e-5):
    report = nn.grad_check(loss_fn, params, h=h)
    assert report.ok, f"max rel err {report.max_rel_err:.3e}: {report.per_param}"
    return report


def rand_param(rng, shape):
    return Tensor(rng.normal(size=shape), requires_grad=True)


class TestForwardOracles:
    def test_conv2d_ones_kernel_sums_window(self):
        x = Tensor(np.arange(16.0).reshape(1, 1, 4, 4))
        w = Tensor(np.ones((1, 1, 2, 2)))
        out = nn.conv2d(x, w).data[0, 0]
        # each output = sum of its 2x2 input window
        expected = np.array([[10, 14, 18], [26, 30, 34], [42, 46, 50]], dtype=float)
        assert np.array_equal(out, expected)

    def test_conv1d_matches_numpy_correlate(self):
        rng = np.random.default_rng(0)
        sig = rng.normal(size=12)
        ker = rng.normal(size=3)
        out = nn.conv1d(Tensor(sig[None, None]), Tensor(ker[None, None])).data[0, 0]
        expected = np.correlate(sig, ker, mode="valid")
        assert np.allclose(out, expected)

    def test_conv2d_stride_padding_shape(self):
        x = Tensor(np.zeros((2, 3, 8, 8)))
        w = Tensor(np.zeros((5, 3, 3, 3)))
        assert nn.conv2d(x, w, stride=2, padding=1).shape == (2, 5, 4, 4)

    def test_conv_transpose_is_conv_adjoint(self):
        # <conv(x), y> == <x, conv_transpose(y)> for matching geometry
        rng = np.random.default_rng(1)
        x = rng.normal(size=(1, 2, 6, 6))
        w = rng.normal(size=(3, 2, 4, 4))
        y = rng.normal(size=(1, 3, 3, 3))
        fwd = nn.conv2d(Tensor(x), Tensor(w), stride=2, padding=1).data
        # conv_transpose weight layout is (C_in, C_out, kh, kw)
        back = nn.conv_transpose2d(Tensor(y), Tensor(w.transpose(1, 0, 2, 3)),
                                   stride=2, padding=1).data
        assert fwd.shape == y.shape
        assert back.shape == x.shape
        assert np.isclose((fwd * y).sum(), (x * back).sum())

    def test_updown_sampling(self):
        x = Tensor(np.array([[[1.0, 2.0], [3.0, 4.0]]])[None])
        up = nn.upsample2d_x2(x).data[0, 0]
        assert np.array_equal(up[:2, :2], [[1, 1], [1, 1]])
        down = nn.downsample2d_x2(Tensor(up[None, None])).data[0, 0]
        assert np.array_equal(down, [[1.0, 2.0], [3.0, 4.0]])

    def test_activations(self):
        x = Tensor(np.array([-2.0, 0.0, 3.0]))
        assert np.array_equal(nn.relu(x).data, [0, 0, 3])
        assert np.allclose(nn.leaky_relu(x, 0.1).data, [-0.2, 0, 3])
        assert np.allclose(nn.sigmoid(x).data, 1 / (1 + np.exp([2.0, 0.0, -3.0])))
        assert np.allclose(nn.tanh(x).data, np.tanh([-2.0, 0.0, 3.0]))

    def test_sigmoid_extreme_inputs_stay_finite(self):
        out = nn.sigmoid(Tensor(np.array([-1000.0, 1000.0]))).data
        assert np.all(np.isfinite(out))
        assert out[0] == pytest.approx(0.0, abs=1e-12)
        assert out[1] == pytest.approx(1.0, abs=1e-12)


class TestGradients:
    def test_arithmetic_chain(self):
        rng = np.random.default_rng(2)
        a = rand_param(rng, (3, 4))
        b = rand_param(rng, (3, 4))

        def loss():
            return ((a * b + a - b) / (b * b + 2.0)).sum()

        check(loss, [("a", a), ("b", b)])

    def test_broadcasting(self):
        rng = np.random.default_rng(3)
        a = rand_param(rng, (3, 4))
        b = rand_param(rng, (1, 4))

        def loss():
            return (a * b + b).mean()

        check(loss, [("a", a), ("b", b)])

    def test_matmul_transpose_reshape(self):
        rng = np.random.default_rng(4)
        a = rand_param(rng, (3, 5))
        b = rand_param(rng, (5, 2))

        def loss():
            return a.matmul(b).transpose2d().reshape((6,)).sum()

        check(loss, [("a", a), ("b", b)])

    def test_reductions_axes(self):
        rng = np.random.default_rng(5)
        a = rand_param(rng, (2, 3, 4))

        def loss():
            return (a.sum(axis=2).mean(axis=0) * a.mean(axis=(1, 2), keepdims=False).sum()).sum()

        check(loss, [("a", a)])

    def test_pointwise_ops(self):
        rng = np.random.default_rng(6)
        a = Tensor(rng.uniform(0.5, 2.0, size=(4, 4)), requires_grad=True)

        def loss():
            return (a.exp().log().sqrt() + a.abs()).mean()

        check(loss, [("a", a)])

    def test_clamp_gradient_masks_saturated(self):
        a = Tensor(np.array([-2.0, 0.5, 2.0]), requires_grad=True)
        out = a.clamp(0.0, 1.0).sum()
        out.backward()
        assert np.array_equal(a.grad, [0.0, 1.0, 0.0])

    def test_activations_grad(self):
        rng = np.random.default_rng(7)
        a = rand_param(rng, (6,))

        def loss():
            return (nn.tanh(a) + nn.sigmoid(a) + nn.leaky_relu(a, 0.2)).sum()

        check(loss, [("a", a)])

    def test_concat_grad(self):
        rng = np.random.default_rng(8)
        a = rand_param(rng, (2, 3))
        b = rand_param(rng, (2, 2))

        def loss():
            return (nn.concat([a, b], axis=1) * nn.concat([a, b], axis=1)).sum()

        check(loss, [("a", a), ("b", b)])

    @pytest.mark.parametrize("stride,padding", [(1, 0), (2, 1), (1, 2)])
    def test_conv2d_grad(self, stride, padding):
        rng = np.random.default_rng(9)
        x = rand_param(rng, (2, 2, 5, 6))
        w = rand_param(rng, (3, 2, 3, 3))
        b = rand_param(rng, (3,))

        def loss():
            return nn.conv2d(x, w, b, stride=stride, padding=padding).mean()

        check(loss, [("x", x), ("w", w), ("b", b)])

    @pytest.mark.parametrize("stride,padding", [(1, 0), (2, 1), (2, 3)])
    def test_conv1d_grad(self, stride, padding):
        rng = np.random.default_rng(10)
        x = rand_param(rng, (2, 3, 9))
        w = rand_param(rng, (2, 3, 4))
        b = rand_param(rng, (2,))

        def loss():
            out = nn.conv1d(x, w, b, stride=stride, padding=padding)
            return (out * out).mean()

        check(loss, [("x", x), ("w", w), ("b", b)])

    @pytest.mark.parametrize("stride,padding", [(2, 1), (2, 0), (1, 1)])
    def test_conv_transpose2d_grad(self, stride, padding):
        rng = np.random.default_rng(11)
        x = rand_param(rng, (1, 3, 4, 4))
        w = rand_param(rng, (3, 2, 4, 4))
        b = rand_param(rng, (2,))

        def loss():
            return nn.conv_transpose2d(x, w, b, stride=stride, padding=padding).mean()

        check(loss, [("x", x), ("w", w), ("b", b)])

    def test_resampling_grads(self):
        rng = np.random.default_rng(12)
        x2 = rand_param(rng, (1, 2, 4, 4))
        x1 = rand_param(rng, (1, 2, 6))

        def loss():
            a = nn.downsample2d_x2(nn.upsample2d_x2(x2)).sum()
            b = nn.downsample1d_x2(nn.upsample1d_x2(x1)).sum()
            return a + b

        check(loss, [("x2", x2), ("x1", x1)])

    def test_diamond_graph_accumulates(self):
        # the same tensor feeding two paths must receive both gradients
        a = Tensor(np.array([3.0]), requires_grad=True)
        out = a * a + a * 2.0
        out.backward()
        assert a.grad[0] == pytest.approx(2 * 3.0 + 2.0)


class TestLayers:
    def test_layer_gradients(self):
        rng = np.random.default_rng(13)
        conv = nn.Conv2d(2, 3, 3, stride=2, padding=1, rng=rng)
        norm = nn.InstanceNorm2d(3)
        lin = nn.Linear(3, 1, rng=rng)
        x = Tensor(rng.normal(size=(2, 2, 6, 6)))

        def loss():
            h = nn.leaky_relu(norm(conv(x)), 0.2)
            return lin(h.mean(axis=3).mean(axis=2)).mean()

        params = list(conv.named_parameters("conv.")) + \
            list(norm.named_parameters("norm.")) + list(lin.named_parameters("lin."))
        check(loss, params)

    def test_instance_norm_1d_normalizes(self):
        rng = np.random.default_rng(14)
        x = Tensor(rng.normal(loc=5.0, scale=3.0, size=(2, 4, 50)))
        out = nn.InstanceNorm1d(4)(x).data
        assert np.abs(out.mean(axis=2)).max() < 1e-9
        assert np.abs(out.std(axis=2) - 1.0).max() < 1e-3

    def test_named_parameters_nested(self):
        class Tiny(nn.Module):
            def __init__(self):
                super().__init__()
                self.inner = nn.Linear(2, 2)
                self.scale = Tensor(np.ones(1), requires_grad=True)

        names = [n for n, _ in Tiny().named_parameters()]
        assert names == ["scale", "inner.weight", "inner.bias"]

    def test_load_state_checks(self):
        lin = nn.Linear(3, 2)
        state = {n: p.data.copy() for n, p in lin.named_parameters()}
        lin2 = nn.Linear(3, 2, rng=np.random.default_rng(99))
        lin2.load_state(state)
        assert np.array_equal(lin2.weight.data, lin.weight.data)
        with pytest.raises(KeyError):
            nn.Linear(3, 2).load_state({})
        bad = dict(state)
        bad["weight"] = np.zeros((2, 2))
        with pytest.raises(ValueError, match="shape"):
            nn.Linear(3, 2).load_state(bad)

    def test_seeded_init_reproducible(self):
        a = nn.Conv1d(1, 4, 5, rng=np.random.default_rng(123))
        b = nn.Conv1d(1, 4, 5, rng=np.random.default_rng(123))
        assert np.array_equal(a.weight.data, b.weight.data)


class TestEngineGuards:
    def test_backward_requires_scalar(self):
        a = Tensor(np.ones(3), requires_grad=True)
        with pytest.raises(ValueError, match="scalar"):
            (a * 2.0).backward()

    def test_no_grad_blocks_tape(self):
        a = Tensor(np.ones(3), requires_grad=True)
        with nn.no_grad():
            out = (a * 2.0).sum()
        assert not out.requires_grad

    def test_nonfinite_detected(self):
        with pytest.raises(nn.NonFiniteError):
            Tensor(np.array([1.0])) / Tensor(np.array([0.0]))

    def test_axis_limit(self):
        with pytest.raises(ValueError, match="at most"):
            Tensor(np.zeros((1, 1, 1, 1, 1)))

    def test_channel_mismatch(self):
        with pytest.raises(ValueError, match="mismatch"):
            nn.conv2d(Tensor(np.zeros((1, 2, 4, 4))), Tensor(np.zeros((1, 3, 3, 3))))

    def test_gradcheck_catches_wrong_gradient(self):
        # negative control: an op with a deliberately broken backward rule
        # must be flagged, otherwise the checker proves nothing
        a = Tensor(np.array([1.5, -0.7, 2.0]), requires_grad=True)

        def broken_square(t):
            def backward(g):
                t._accumulate(g * 3.0 * t.data)  # should be 2 * t.data
            return Tensor._from_op(t.data**2, (t,), backward, "broken")

        report = nn.grad_check(lambda: broken_square(a).sum(), [("a", a)])
        assert not report.ok
