"""Tests for the autodiff tape, per-step networks and optimizers."""

import logging

import numpy as np
import pytest

from autodiff.nets import EVAL, TRAIN, NetSpec, ParamStore, apply_net, backward, forward, init_params
from autodiff.optim import OptimAlgorithm, OptimState, optimizer_step
from autodiff.tape import Tape, Tensor, batch_norm, mean, relu, signed_pow, stack_columns, take, total
from shared.errors import DegenerateBatch, DimensionMismatch, NonFiniteError

# Configure logging for test output.
logging.basicConfig(level=logging.INFO, format="%(asctime)s - %(name)s - %(levelname)s - %(message)s")
logger = logging.getLogger(__name__)

FD_STEP = 1e-6


def _close(analytic: float, numeric: float) -> bool:
    return abs(analytic - numeric) <= 1e-4 * max(abs(analytic), abs(numeric)) + 1e-7


def _weighted_output(spec: NetSpec, params: ParamStore, x: np.ndarray, weights: np.ndarray) -> float:
    return float(np.sum(apply_net(spec, params, x, TRAIN).data * weights))


class TestTape:
    """Elementary operations and the backward pass."""

    def test_product_rule(self):
        """Gradients of a product follow the product rule."""
        with Tape() as tape:
            a = Tensor(np.array([1.0, 2.0]), requires_grad=True)
            b = Tensor(np.array([3.0, -1.0]), requires_grad=True)
            out = total(a * b + a / b - b)
        tape.backward(out)
        np.testing.assert_allclose(a.grad, b.data + 1.0 / b.data)
        np.testing.assert_allclose(b.grad, a.data - a.data / b.data**2 - 1.0)

    def test_broadcast_scalar_gradient(self):
        """A broadcast scalar collects the summed gradient."""
        with Tape() as tape:
            s = Tensor(2.0, requires_grad=True)
            out = total(s * np.ones(5))
        tape.backward(out)
        assert float(s.grad) == pytest.approx(5.0)

    def test_relu_gradient_is_zero_at_zero(self):
        """relu passes no gradient at 0."""
        with Tape() as tape:
            x = Tensor(np.array([-1.0, 0.0, 2.0]), requires_grad=True)
            out = total(relu(x))
        tape.backward(out)
        np.testing.assert_array_equal(x.grad, [0.0, 0.0, 1.0])

    def test_signed_pow_gradient(self):
        """signed_pow differentiates as r|x|^(r−1)."""
        with Tape() as tape:
            x = Tensor(np.array([-4.0, 9.0]), requires_grad=True)
            out = total(signed_pow(x, 0.5))
        tape.backward(out)
        np.testing.assert_allclose(x.grad, [0.25, 1.0 / 6.0])

    def test_signed_pow_matches_on_arrays_and_tensors(self):
        """Arrays and tensors give the same signed_pow values."""
        x = np.array([-2.0, 0.5, 3.0])
        np.testing.assert_array_equal(signed_pow(x, 2.0), signed_pow(Tensor(x), 2.0).data)

    def test_stack_and_take(self):
        """Stacking and slicing route gradients back to their columns."""
        with Tape() as tape:
            a = Tensor(np.array([1.0, 2.0]), requires_grad=True)
            b = Tensor(np.array([3.0, 4.0]), requires_grad=True)
            m = stack_columns([a, b])
            out = total(take(m, (slice(None), 1)) * 2.0)
        tape.backward(out)
        np.testing.assert_array_equal(a.grad, [0.0, 0.0])
        np.testing.assert_array_equal(b.grad, [2.0, 2.0])

    def test_mean(self):
        """mean spreads the gradient evenly."""
        with Tape() as tape:
            x = Tensor(np.arange(4.0), requires_grad=True)
            out = mean(x * x)
        tape.backward(out)
        np.testing.assert_allclose(x.grad, 2.0 * np.arange(4.0) / 4.0)

    def test_backward_is_single_use(self):
        """A tape can only be replayed once."""
        with Tape() as tape:
            x = Tensor(1.0, requires_grad=True)
            out = x * x
        tape.backward(out)
        with pytest.raises(RuntimeError):
            tape.backward(out)

    def test_seed_shape_mismatch(self):
        """The backward seed must match the output shape."""
        with Tape() as tape:
            x = Tensor(np.ones(3), requires_grad=True)
            out = x * 2.0
        with pytest.raises(DimensionMismatch):
            tape.backward(out, np.ones(4))

    def test_nothing_recorded_outside_a_tape(self):
        """Operations outside a tape leave no record."""
        x = Tensor(np.ones(2), requires_grad=True)
        out = x * 3.0
        assert not out.requires_grad


@pytest.fixture(params=["fbsde", "deep_hedging"])
def spec(request):
    return NetSpec.fbsde() if request.param == "fbsde" else NetSpec.deep_hedging()


class TestNetworks:
    """Network evaluation and gradients against finite differences."""

    def test_layout_names(self):
        """Parameter names follow the layer layout."""
        names = [name for name, _ in NetSpec.fbsde((15,)).layout()]
        assert names == ["w1", "b1", "bn1.gamma", "bn1.beta", "w2", "b2"]

    def test_parameter_gradients_match_finite_differences(self, spec):
        """Parameter gradients agree with central differences."""
        rng = np.random.default_rng(0)
        params = init_params(spec, "glorot", seed=1, index=2)
        x = rng.normal(size=(32, spec.input_dim))
        weights = rng.normal(size=(32, 1))

        _, tape = forward(spec, params, x, TRAIN)
        grads = backward(tape, params, weights)

        indices = rng.choice(params.size, size=min(100, params.size), replace=False)
        for idx in indices:
            plus, minus = params.copy(), params.copy()
            plus.flat[idx] += FD_STEP
            minus.flat[idx] -= FD_STEP
            numeric = (_weighted_output(spec, plus, x, weights) - _weighted_output(spec, minus, x, weights)) / (
                2 * FD_STEP
            )
            assert _close(grads.params[idx], numeric), f"parameter {idx}: {grads.params[idx]} vs {numeric}"

    def test_input_gradients_match_finite_differences(self, spec):
        """Input gradients agree with central differences."""
        rng = np.random.default_rng(1)
        params = init_params(spec, "glorot", seed=3)
        x = rng.normal(size=(16, spec.input_dim))
        weights = rng.normal(size=(16, 1))

        _, tape = forward(spec, params, x, TRAIN)
        grads = backward(tape, params, weights)

        for row, col in zip(rng.integers(0, 16, size=20), rng.integers(0, spec.input_dim, size=20)):
            plus, minus = x.copy(), x.copy()
            plus[row, col] += FD_STEP
            minus[row, col] -= FD_STEP
            numeric = (_weighted_output(spec, params, plus, weights) - _weighted_output(spec, params, minus, weights)) / (
                2 * FD_STEP
            )
            assert _close(grads.inputs[row, col], numeric)

    def test_gradient_is_linear_in_the_seed(self, spec):
        """Scaling the backward seed scales every gradient."""
        rng = np.random.default_rng(2)
        params = init_params(spec, "glorot", seed=0)
        x = rng.normal(size=(8, spec.input_dim))
        seed = rng.normal(size=(8, 1))
        first, second = params.copy(), params.copy()
        _, tape_a = forward(spec, first, x, TRAIN)
        _, tape_b = forward(spec, second, x, TRAIN)
        single = backward(tape_a, first, seed).params
        double = backward(tape_b, second, 2.0 * seed).params
        assert np.any(single != 0.0)
        np.testing.assert_allclose(double, 2.0 * single, rtol=1e-12, atol=1e-15)

    def test_shared_store_gradients_add_up(self):
        """A store used twice accumulates both gradients."""
        spec = NetSpec.fbsde()
        params = init_params(spec, "glorot", seed=5)
        rng = np.random.default_rng(5)
        x1, x2 = rng.normal(size=(8, 2)), rng.normal(size=(8, 2))
        with Tape() as tape:
            out = total(apply_net(spec, params, x1)) + total(apply_net(spec, params, x2))
        tape.backward(out)
        combined = tape.param_grads(params)

        separate = np.zeros(params.size)
        for x in (x1, x2):
            _, single = forward(spec, params, x, TRAIN)
            separate += backward(single, params, np.ones((8, 1))).params
        np.testing.assert_allclose(combined, separate, rtol=1e-10, atol=1e-14)

    def test_zero_output_init_emits_zero(self, spec):
        """zero_output networks emit exactly 0."""
        params = init_params(spec, "zero_output", seed=0)
        out = apply_net(spec, params, np.random.default_rng(0).normal(size=(4, spec.input_dim)), TRAIN)
        np.testing.assert_array_equal(out.data, 0.0)

    def test_zero_output_init_is_trainable(self, spec):
        """zero_output networks still have nonzero gradients."""
        params = init_params(spec, "zero_output", seed=0)
        x = np.random.default_rng(0).normal(size=(4, spec.input_dim))
        _, tape = forward(spec, params, x, TRAIN)
        grads = backward(tape, params, np.ones((4, 1))).params
        assert np.any(grads != 0.0)

    def test_streams_differ_per_index(self):
        """Each network index draws its own initial weights."""
        spec = NetSpec.deep_hedging()
        a, b = init_params(spec, "glorot", seed=0, index=0), init_params(spec, "glorot", seed=0, index=1)
        assert not np.array_equal(a.flat, b.flat)
        np.testing.assert_array_equal(a.flat, init_params(spec, "glorot", seed=0, index=0).flat)

    def test_train_mode_needs_two_rows(self, spec):
        """Train-mode batch normalization rejects a single row."""
        params = init_params(spec, "glorot", seed=0)
        with pytest.raises(DegenerateBatch):
            apply_net(spec, params, np.zeros((1, spec.input_dim)), TRAIN)

    def test_eval_mode_accepts_one_row(self, spec):
        """Eval mode works on a single row."""
        params = init_params(spec, "glorot", seed=0)
        out = apply_net(spec, params, np.zeros((1, spec.input_dim)), EVAL)
        assert out.shape == (1, 1)

    def test_train_mode_updates_running_statistics(self):
        """Running statistics move by momentum towards the batch statistics."""
        spec = NetSpec.fbsde()
        params = init_params(spec, "glorot", seed=0)
        x = np.random.default_rng(0).normal(size=(64, 2)) + 3.0
        pre = x @ params["w1"].T + params["b1"]
        apply_net(spec, params, x, TRAIN, momentum=0.5)
        np.testing.assert_allclose(params.buffers["bn1.mean"], 0.5 * pre.mean(axis=0), rtol=1e-12)
        np.testing.assert_allclose(params.buffers["bn1.var"], 0.5 + 0.5 * pre.var(axis=0, ddof=1), rtol=1e-12)

    def test_batch_norm_standardizes_features(self):
        """Features with mean 3 and variance 4 come out with mean 0 and variance 1."""
        z = np.random.default_rng(1).normal(size=(500, 3))
        z = (z - z.mean(axis=0)) / z.std(axis=0)
        out, batch_mean, batch_var = batch_norm(3.0 + 2.0 * z, np.ones(3), np.zeros(3), eps=0.0)
        np.testing.assert_allclose(out.data.mean(axis=0), 0.0, atol=1e-12)
        np.testing.assert_allclose(out.data.var(axis=0), 1.0, rtol=1e-12)
        np.testing.assert_allclose(batch_mean, 3.0, rtol=1e-12)
        np.testing.assert_allclose(batch_var, 4.0 * 500 / 499, rtol=1e-12)

    def test_input_width_is_checked(self, spec):
        """Inputs of the wrong width are rejected."""
        params = init_params(spec, "glorot", seed=0)
        with pytest.raises(DimensionMismatch):
            apply_net(spec, params, np.zeros((4, spec.input_dim + 1)), TRAIN)

    def test_store_size_is_checked(self):
        """A flat vector must match the layout size."""
        with pytest.raises(DimensionMismatch):
            ParamStore([("w", (2, 2))], np.zeros(3))


class TestOptimizers:
    """Adam and SGD updates."""

    def _store(self, values):
        return ParamStore([("x", (len(values),))], np.asarray(values, dtype=float))

    def test_sgd_step(self):
        """SGD moves against the gradient by lr·g."""
        store = self._store([1.0, -2.0])
        optimizer_step(OptimState.sgd(0.1), [store], [np.array([1.0, 1.0])])
        np.testing.assert_allclose(store.flat, [0.9, -2.1])

    def test_adam_first_step_moves_by_learning_rate(self):
        """Adam's first step has magnitude lr in every coordinate."""
        store = self._store([1.0, 1.0, 1.0])
        state = OptimState.adam([store], learning_rate=0.01)
        optimizer_step(state, [store], [np.array([5.0, -0.1, 1e3])])
        np.testing.assert_allclose(store.flat, [0.99, 1.01, 0.99], rtol=1e-6)
        assert state.step == 1
        assert state.algorithm == OptimAlgorithm.ADAM

    def test_adam_minimizes_a_quadratic(self):
        """Adam reaches the minimum of a convex quadratic."""
        store = self._store([3.0, -4.0])
        state = OptimState.adam([store], learning_rate=0.05)
        for _ in range(2000):
            optimizer_step(state, [store], [2.0 * store.flat])
        assert np.all(np.abs(store.flat) < 0.1)

    def test_non_finite_gradient(self):
        """A NaN gradient raises and leaves the parameters alone."""
        store = self._store([1.0])
        with pytest.raises(NonFiniteError):
            optimizer_step(OptimState.sgd(0.1), [store], [np.array([np.nan])])
        assert store.flat[0] == 1.0

    def test_gradient_shape_mismatch(self):
        """Gradients must match the store size."""
        store = self._store([1.0, 2.0])
        with pytest.raises(DimensionMismatch):
            optimizer_step(OptimState.sgd(0.1), [store], [np.zeros(3)])
