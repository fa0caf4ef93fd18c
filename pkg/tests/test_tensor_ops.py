"""Tensor engine: op values, tape semantics, broadcasting, serialization."""

import numpy as np
import pytest

from spiketrack.autodiff import (
    AutodiffError,
    Tape,
    Tensor,
    backward,
    load_checkpoint,
    no_grad,
    ops,
    reset_tape,
    save_checkpoint,
    set_debug,
)


class TestForwardValues:
    def test_softplus_at_zero_is_ln2(self):
        assert ops.softplus(Tensor(0.0)).item() == pytest.approx(np.log(2.0), abs=1e-15)

    def test_tanh_at_zero(self):
        assert ops.tanh(Tensor(0.0)).item() == 0.0

    def test_clamp_min_clamps_below(self):
        assert ops.clamp_min(Tensor(-0.2808), 0.0).item() == 0.0
        assert ops.clamp_min(Tensor(0.7), 0.0).item() == pytest.approx(0.7)

    def test_sigmoid_matches_closed_form(self, rng):
        x = rng.normal(size=100) * 5
        got = ops.sigmoid(Tensor(x)).data
        np.testing.assert_allclose(got, 1.0 / (1.0 + np.exp(-x)), atol=1e-12)

    def test_softplus_stable_for_large_inputs(self):
        y = ops.softplus(Tensor([800.0, -800.0])).data
        assert y[0] == pytest.approx(800.0)
        assert y[1] == pytest.approx(0.0, abs=1e-300)

    def test_matmul_shape_error_names_shapes(self):
        with pytest.raises(AutodiffError, match=r"matmul.*\(2, 3\).*\(2, 3\)"):
            ops.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 3))))

    def test_conv2d_channel_mismatch_error(self):
        x = Tensor(np.ones((1, 4, 4, 3)))
        w = Tensor(np.ones((2, 5, 3, 3)))
        with pytest.raises(AutodiffError, match="conv2d"):
            ops.conv2d(x, w, stride=1, pad=1)

    def test_forward_is_deterministic(self, rng):
        x = rng.normal(size=(4, 5))
        a = ops.exp(ops.tanh(Tensor(x))).data
        b = ops.exp(ops.tanh(Tensor(x))).data
        assert np.array_equal(a, b)


class TestBackward:
    def test_sum_gradient_is_ones(self):
        with Tape():
            x = Tensor([1.0, 2.0, 3.0], requires_grad=True)
            backward(ops.sum_(x))
        np.testing.assert_array_equal(x.grad, [1.0, 1.0, 1.0])

    def test_mean_of_squares_gradient(self):
        # d/dx mean(x^2) = 2x/n at x = [1, 2, 3]
        with Tape():
            x = Tensor([1.0, 2.0, 3.0], requires_grad=True)
            backward(ops.mean(ops.mul(x, x)))
        np.testing.assert_allclose(x.grad, [2 / 3, 4 / 3, 2.0], atol=1e-12)

    def test_softplus_chain_gradient(self):
        # d/dw softplus(w x) = x sigmoid(w x) at w=0.5, x=2
        with Tape():
            w = Tensor(0.5, requires_grad=True)
            x = Tensor(2.0)
            backward(ops.softplus(ops.mul(w, x)))
        expected = 2.0 / (1.0 + np.exp(-1.0))
        assert w.grad == pytest.approx(expected, abs=1e-12)
        assert w.grad == pytest.approx(1.4621171573, abs=1e-9)

    def test_non_scalar_loss_rejected(self):
        with Tape():
            x = Tensor([1.0, 2.0], requires_grad=True)
            y = ops.mul(x, x)
            with pytest.raises(AutodiffError, match="scalar"):
                backward(y)

    def test_backward_twice_rejected(self):
        with Tape():
            x = Tensor([1.0], requires_grad=True)
            loss = ops.sum_(ops.mul(x, x))
            backward(loss)
            with pytest.raises(AutodiffError, match="twice"):
                backward(loss)

    def test_empty_tape_rejected(self):
        with Tape():
            with pytest.raises(AutodiffError, match="empty"):
                backward(Tensor(1.0))

    def test_reset_rearms_backward(self):
        with Tape():
            x = Tensor([2.0], requires_grad=True)
            backward(ops.sum_(ops.mul(x, x)))
            reset_tape()
            backward(ops.sum_(ops.mul(x, x)))
        # two backward passes accumulate
        assert x.grad == pytest.approx(8.0)

    def test_gradient_linearity(self, rng):
        """Gradient of a sum of losses equals the sum of the gradients."""
        xval = rng.normal(size=6)

        def grad_of(fn):
            with Tape():
                x = Tensor(xval, requires_grad=True)
                backward(fn(x))
            return x.grad

        f = lambda x: ops.sum_(ops.tanh(x))
        g = lambda x: ops.mean(ops.mul(x, x))
        both = lambda x: ops.add(f(x), g(x))
        np.testing.assert_allclose(grad_of(both), grad_of(f) + grad_of(g), atol=1e-12)

    def test_no_grad_suppresses_recording(self):
        with Tape() as tape:
            x = Tensor([1.0], requires_grad=True)
            with no_grad():
                y = ops.mul(x, x)
            assert len(tape) == 0
            assert not y.requires_grad

    def test_broadcast_add_unbroadcasts_grad(self):
        with Tape():
            a = Tensor(np.ones((3, 4)), requires_grad=True)
            row = Tensor(np.ones(4), requires_grad=True)
            backward(ops.sum_(ops.add(a, row)))
        assert a.grad.shape == (3, 4)
        np.testing.assert_array_equal(row.grad, [3.0, 3.0, 3.0, 3.0])

    def test_reused_tensor_accumulates(self):
        with Tape():
            x = Tensor(3.0, requires_grad=True)
            backward(ops.mul(x, x))
        assert x.grad == pytest.approx(6.0)


class TestDebugMode:
    def test_nan_output_flagged(self):
        set_debug(True)
        with pytest.raises(AutodiffError, match="non-finite"):
            ops.log(Tensor([-1.0]))

    def test_disabled_lets_nan_through(self):
        set_debug(False)
        out = ops.log(Tensor([-1.0]))
        assert np.isnan(out.data[0])


class TestCheckpoint:
    def test_round_trip_exact(self, tmp_path, rng):
        params = {
            "layer.weight": Tensor(rng.normal(size=(3, 4))),
            "layer.bias": Tensor(rng.normal(size=4)),
        }
        path = tmp_path / "ckpt.json"
        save_checkpoint(path, params, extra={"note": "x"})
        loaded, extra = load_checkpoint(path)
        assert extra == {"note": "x"}
        for name, t in params.items():
            assert np.array_equal(loaded[name], t.data)

    def test_version_tag_checked(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text('{"version": 99, "params": {}}')
        from spiketrack.autodiff import CheckpointError

        with pytest.raises(CheckpointError, match="version"):
            load_checkpoint(path)
