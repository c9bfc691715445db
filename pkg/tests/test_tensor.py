import numpy as np
import pytest

from melodyfill.nn import tensor as T
from melodyfill.nn.gradcheck import check_gradients, max_rel_error
from melodyfill.nn.rng import RngStream
from melodyfill.nn.tensor import IndexOutOfRange, ShapeMismatch, Tensor


@pytest.fixture(autouse=True)
def float64_core():
    T.set_dtype(np.float64)
    yield
    T.set_dtype(np.float32)


def param(rng, shape):
    return Tensor(rng.normal(size=shape), requires_grad=True)


class TestElementwise:
    def test_relu_values(self):
        out = T.relu(Tensor([-1.0, 0.0, 2.0]))
        assert out.data.tolist() == [0.0, 0.0, 2.0]

    def test_selu_values(self):
        assert T.selu(Tensor(0.0)).item() == 0.0
        assert T.selu(Tensor(1.0)).item() == pytest.approx(1.0507009873554805)
        x = -1.0
        expected = 1.0507009873554805 * 1.6732632423543772 * (np.exp(x) - 1.0)
        assert T.selu(Tensor(x)).item() == pytest.approx(expected)

    def test_sigmoid_tanh_extremes_finite(self):
        big = Tensor([-1e4, -50.0, 0.0, 50.0, 1e4])
        assert np.all(np.isfinite(T.sigmoid(big).data))
        assert T.sigmoid(Tensor(0.0)).item() == pytest.approx(0.5)
        assert np.all(np.isfinite(T.tanh(big).data))

    @pytest.mark.parametrize("op", [T.relu, T.selu, T.sigmoid, T.tanh, T.exp, T.square])
    def test_gradients(self, op):
        rng = RngStream(3)
        x = param(rng, (11,))
        x.data += 0.05  # keep relu away from its kink
        err = check_gradients(lambda: T.tmean(T.square(op(x))), [x])
        assert err <= 1e-4

    def test_log_gradient(self):
        rng = RngStream(4)
        x = Tensor(rng.uniform(0.5, 2.0, size=9), requires_grad=True)
        assert check_gradients(lambda: T.tmean(T.log(x)), [x]) <= 1e-4


class TestLinearAlgebra:
    def test_matmul_shapes(self):
        a, b = Tensor(np.ones((2, 3))), Tensor(np.ones((4, 5)))
        with pytest.raises(ShapeMismatch):
            T.matmul(a, b)

    def test_matmul_gradient(self):
        rng = RngStream(5)
        a, b = param(rng, (4, 3)), param(rng, (3, 2))
        assert check_gradients(lambda: T.tsum(T.matmul(a, b)), [a, b]) <= 1e-4

    def test_broadcast_add_gradient(self):
        rng = RngStream(6)
        x, b = param(rng, (5, 3)), param(rng, (3,))
        assert check_gradients(lambda: T.tmean(T.square(x + b)), [x, b]) <= 1e-4

    def test_concat_stack_getitem_gradients(self):
        rng = RngStream(7)
        a, b = param(rng, (3, 2)), param(rng, (3, 2))

        def loss():
            c = T.concat([a, b], axis=1)
            s = T.stack([c, c], axis=0)
            return T.tmean(T.square(s[1][:, 1:3]))

        assert check_gradients(loss, [a, b]) <= 1e-4

    def test_sum_mean_axes(self):
        x = Tensor(np.arange(6.0).reshape(2, 3), requires_grad=True)
        assert T.tsum(x).item() == 15.0
        assert np.allclose(T.tmean(x, axis=0).data, [1.5, 2.5, 3.5])


class TestEmbedding:
    def test_one_hot_rows(self):
        table = Tensor(np.eye(4), requires_grad=True)
        out = T.embedding(table, np.array([2]))
        assert np.allclose(out.data, [[0, 0, 1, 0]])

    def test_out_of_range(self):
        with pytest.raises(IndexOutOfRange):
            T.embedding(Tensor(np.eye(4)), np.array([4]))

    def test_repeated_index_grad_accumulates(self):
        rng = RngStream(8)
        table = param(rng, (5, 3))
        idx = np.array([1, 1, 4])

        def loss():
            return T.tsum(T.embedding(table, idx) * Tensor([[1.0, 2, 3], [4, 5, 6], [7, 8, 9]]))

        loss().backward()
        assert np.allclose(table.grad[1], [1 + 4, 2 + 5, 3 + 6])
        assert check_gradients(loss, [table]) <= 1e-4


class TestSoftmaxCrossEntropy:
    def test_uniform_logits(self):
        for k in (2, 5, 17):
            loss = T.softmax_cross_entropy(Tensor(np.zeros(k)), 0)
            assert loss.item() == pytest.approx(np.log(k))

    def test_confident_logits(self):
        logits = np.zeros(6)
        logits[3] = 200.0
        assert T.softmax_cross_entropy(Tensor(logits), 3).item() == pytest.approx(0.0, abs=1e-9)

    def test_stability_at_large_magnitudes(self):
        loss = T.softmax_cross_entropy(Tensor([1e4, 1e4 - 5.0]), 1)
        exact = 5.0 + np.log1p(np.exp(-5.0))
        assert np.isfinite(loss.item()) and loss.item() == pytest.approx(exact, rel=1e-9)

    def test_target_out_of_range(self):
        with pytest.raises(IndexOutOfRange):
            T.softmax_cross_entropy(Tensor(np.zeros(3)), 3)

    def test_gradient(self):
        rng = RngStream(9)
        logits = param(rng, (6, 5))
        targets = np.array([0, 1, 2, 3, 4, 0])
        err = check_gradients(lambda: T.tmean(T.softmax_cross_entropy(logits, targets)),
                              [logits])
        assert err <= 1e-4

    def test_gradient_is_softmax_minus_onehot(self):
        logits = Tensor(np.array([[1.0, 2.0, 0.5]]), requires_grad=True)
        T.softmax_cross_entropy(logits, np.array([1])).backward()
        probs = np.exp(logits.data) / np.exp(logits.data).sum()
        expected = probs.copy()
        expected[0, 1] -= 1.0
        assert np.allclose(logits.grad, expected)


class TestGraphMachinery:
    def test_no_grad_blocks_recording(self):
        x = Tensor([1.0, 2.0], requires_grad=True)
        with T.no_grad():
            y = T.tsum(T.square(x))
        assert y._vjp is None and not y.requires_grad

    def test_diamond_graph_accumulates(self):
        x = Tensor([3.0], requires_grad=True)
        y = x * 2.0 + x * 5.0
        T.tsum(y).backward()
        assert np.allclose(x.grad, [7.0])

    def test_backward_requires_scalar(self):
        x = Tensor([1.0, 2.0], requires_grad=True)
        with pytest.raises(ShapeMismatch):
            (x * 2.0).backward()

    def test_debug_mode_catches_nonfinite(self):
        T.set_debug(True)
        try:
            with np.errstate(invalid="ignore"):
                with pytest.raises(FloatingPointError):
                    T.log(Tensor([-1.0]))
        finally:
            T.set_debug(False)

    def test_max_rel_error_floor(self):
        assert max_rel_error(np.array([0.0]), np.array([1e-9])) < 1e-4
        assert max_rel_error(np.array([1.0]), np.array([1.1])) == pytest.approx(0.1 / 1.1)
