import numpy as np
import pytest

from melodyfill.nn import tensor as T
from melodyfill.nn.gradcheck import check_gradients
from melodyfill.nn.layers import GRU, Embedding, GRUCellWeights, Linear, ParameterStore, gru_cell
from melodyfill.nn.optim import Adam
from melodyfill.nn.rng import RngStream
from melodyfill.nn.tensor import ShapeMismatch, Tensor


@pytest.fixture(autouse=True)
def float64_core():
    T.set_dtype(np.float64)
    yield
    T.set_dtype(np.float32)


def make_cell(store, prefix, in_dim, hid, rng):
    return GRUCellWeights(store, prefix, in_dim, hid, rng)


class TestLinear:
    def test_zero_weight_gives_bias(self):
        store, rng = ParameterStore(), RngStream(0)
        lin = Linear(store, "l", 3, 2, rng)
        lin.W.data[:] = 0.0
        lin.b.data[:] = 4.5
        out = lin(Tensor(np.random.default_rng(0).normal(size=(5, 3))))
        assert np.allclose(out.data, 4.5)

    def test_identity_weight(self):
        store, rng = ParameterStore(), RngStream(0)
        lin = Linear(store, "l", 3, 3, rng)
        lin.W.data[:] = np.eye(3)
        lin.b.data[:] = 0.0
        x = np.random.default_rng(1).normal(size=(4, 3))
        assert np.allclose(lin(Tensor(x)).data, x)

    def test_gradient(self):
        store, rng = ParameterStore(), RngStream(1)
        lin = Linear(store, "l", 4, 3, rng)
        x = Tensor(rng.normal(size=(6, 4)), requires_grad=True)
        err = check_gradients(lambda: T.tmean(T.square(lin(x))), [x, lin.W, lin.b])
        assert err <= 1e-4


class TestGRUCell:
    def test_zero_weights_halve_hidden(self):
        store, rng = ParameterStore(), RngStream(2)
        w = make_cell(store, "c", 3, 4, rng)
        for t in store.tensors():
            t.data[:] = 0.0
        h = Tensor(np.full((2, 4), 0.8))
        x = Tensor(np.zeros((2, 3)))
        out = gru_cell(x, h, w)
        # u = sigmoid(0) = 0.5 and candidate = tanh(0) = 0, so h' = 0.5 h
        assert np.allclose(out.data, 0.4)

    def test_zero_hidden_zero_weights(self):
        store, rng = ParameterStore(), RngStream(2)
        w = make_cell(store, "c", 3, 4, rng)
        for t in store.tensors():
            t.data[:] = 0.0
        out = gru_cell(Tensor(np.ones((2, 3))), Tensor(np.zeros((2, 4))), w)
        assert np.allclose(out.data, 0.0)

    def test_shape_mismatch(self):
        store, rng = ParameterStore(), RngStream(2)
        w = make_cell(store, "c", 3, 4, rng)
        with pytest.raises(ShapeMismatch):
            gru_cell(Tensor(np.ones((2, 5))), Tensor(np.zeros((2, 4))), w)

    def test_gradient(self):
        store, rng = ParameterStore(), RngStream(3)
        w = make_cell(store, "c", 3, 4, rng)
        x = Tensor(rng.normal(size=(2, 3)), requires_grad=True)
        h = Tensor(rng.normal(size=(2, 4)), requires_grad=True)
        err = check_gradients(lambda: T.tmean(T.square(gru_cell(x, h, w))),
                              [x, h] + store.tensors())
        assert err <= 1e-4


class TestGRUUnroll:
    def test_empty_sequence(self):
        store, rng = ParameterStore(), RngStream(4)
        gru = GRU(store, "g", 3, 4, 2, rng)
        h0 = [Tensor(np.full((2, 4), 0.3))] * 2
        out, final = gru.forward(Tensor(np.zeros((0, 2, 3))), h0=h0)
        assert out.shape == (0, 2, 4)
        assert final is not h0 and all(np.allclose(f.data, 0.3) for f in final)

    def test_bidirectional_palindrome_with_tied_weights(self):
        store, rng = ParameterStore(), RngStream(5)
        gru = GRU(store, "g", 3, 4, 1, rng, bidirectional=True)
        fwd, bwd = gru.weights
        for attr in GRUCellWeights.__slots__:
            getattr(bwd, attr).data[:] = getattr(fwd, attr).data
        base = rng.normal(size=(3, 1, 3))
        seq = np.concatenate([base, base[::-1]], axis=0)  # palindrome
        out, _ = gru.forward(Tensor(seq))
        assert np.allclose(out.data[:, :, :4], out.data[::-1, :, 4:], atol=1e-12)

    def test_dropout_eval_equals_train_at_p0(self):
        store, rng = ParameterStore(), RngStream(6)
        gru = GRU(store, "g", 3, 4, 2, rng, dropout=0.0)
        seq = Tensor(rng.normal(size=(5, 2, 3)))
        out_train, _ = gru.forward(seq, train=True, rng=RngStream(0))
        out_eval, _ = gru.forward(seq, train=False)
        assert np.array_equal(out_train.data, out_eval.data)

    def test_dropout_masks_are_seeded(self):
        store, rng = ParameterStore(), RngStream(7)
        gru = GRU(store, "g", 3, 4, 2, rng, dropout=0.5)
        seq = Tensor(rng.normal(size=(5, 2, 3)))
        a, _ = gru.forward(seq, train=True, rng=RngStream(11))
        b, _ = gru.forward(seq, train=True, rng=RngStream(11))
        c, _ = gru.forward(seq, train=True, rng=RngStream(12))
        assert np.array_equal(a.data, b.data)
        assert not np.array_equal(a.data, c.data)

    def test_stacked_bidirectional_gradient(self):
        store, rng = ParameterStore(), RngStream(8)
        gru = GRU(store, "g", 3, 4, 2, rng, bidirectional=True)
        seq = Tensor(rng.normal(size=(4, 2, 3)), requires_grad=True)

        def loss():
            out, final = gru.forward(seq)
            return T.tmean(T.square(out)) + T.tmean(T.square(final[2] + final[3]))

        err = check_gradients(loss, [seq] + store.tensors(), max_coords_per_tensor=12)
        assert err <= 1e-4


class TestParameterStore:
    def test_duplicate_name_rejected(self):
        store = ParameterStore()
        store.add("w", np.zeros(3))
        with pytest.raises(ValueError):
            store.add("w", np.zeros(3))

    def test_freeze_blocks_gradients(self):
        store, rng = ParameterStore(), RngStream(9)
        lin = Linear(store, "l", 3, 2, rng)
        store.set_trainable(False)
        out = T.tmean(T.square(lin(Tensor(rng.normal(size=(4, 3))))))
        assert not out.requires_grad

    def test_deterministic_init(self):
        a = ParameterStore()
        Linear(a, "l", 7, 5, RngStream(13))
        b = ParameterStore()
        Linear(b, "l", 7, 5, RngStream(13))
        assert np.array_equal(a["l.W"].data, b["l.W"].data)


class TestAdam:
    def test_zero_gradient_no_change(self):
        store, rng = ParameterStore(), RngStream(10)
        w = store.add("w", rng.normal(size=4))
        before = w.data.copy()
        Adam(store).step()
        assert np.array_equal(w.data, before)

    def test_first_step_is_signed_lr(self):
        store = ParameterStore()
        w = store.add("w", np.zeros(3))
        w.grad = np.array([0.5, -2.0, 1e-12])
        Adam(store, lr=1e-3).step()
        assert np.allclose(w.data[:2], [-1e-3, 1e-3], rtol=1e-4)
        assert abs(w.data[2]) < 1e-3  # |g| near eps barely moves

    def test_step_counter_and_v_monotone(self):
        store = ParameterStore()
        w = store.add("w", np.zeros(3))
        adam = Adam(store)
        w.grad = np.array([1.0, 2.0, 3.0])
        adam.step()
        v1 = adam.v["w"].copy()
        w.grad = np.array([1.0, 2.0, 3.0])
        adam.step()
        assert adam.step_count == 2
        assert np.all(adam.v["w"] >= v1)

    def test_gradients_cleared_after_step(self):
        store = ParameterStore()
        w = store.add("w", np.zeros(3))
        w.grad = np.ones(3)
        Adam(store).step()
        assert w.grad is None
