"""Trainable layers: parameter store, linear, embedding, and stacked GRU.

All weight matrices are initialised uniform(-1/sqrt(fan_in), +1/sqrt(fan_in))
with zero biases.  Layers operate on batched 2-D tensors; sequences are
``(T, B, features)`` and get sliced per step.
"""

from __future__ import annotations

import numpy as np

from . import tensor as T
from .rng import RngStream
from .tensor import Tensor


class ParameterStore:
    """Named map of trainable tensors plus their gradient buffers."""

    def __init__(self, seed: int | None = None, initializer: str = "uniform_fan_in"):
        self._params: dict[str, Tensor] = {}
        self.metadata = {"initializer": initializer, "seed": seed}

    def add(self, name: str, data: np.ndarray, requires_grad: bool = True) -> Tensor:
        if name in self._params:
            raise ValueError(f"duplicate parameter name: {name}")
        t = Tensor(data, requires_grad=requires_grad)
        self._params[name] = t
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def names(self) -> list[str]:
        return list(self._params.keys())

    def items(self):
        return self._params.items()

    def tensors(self) -> list[Tensor]:
        return list(self._params.values())

    def zero_grad(self) -> None:
        for t in self._params.values():
            t.grad = None

    def set_trainable(self, flag: bool) -> None:
        """Freeze (False) or unfreeze (True) every parameter in the store."""
        for t in self._params.values():
            t.requires_grad = flag

    def num_values(self) -> int:
        return sum(t.data.size for t in self._params.values())

    def copy_values_from(self, other: "ParameterStore") -> None:
        for name, t in self._params.items():
            t.data = other[name].data.astype(t.data.dtype).copy()

    def state_arrays(self) -> dict[str, np.ndarray]:
        return {name: t.data for name, t in self._params.items()}


def uniform_init(rng: RngStream, shape: tuple[int, ...], fan_in: int) -> np.ndarray:
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(T.get_dtype())


class Linear:
    """y = x @ W + b over the trailing feature dimension of a 2-D input."""

    def __init__(self, store: ParameterStore, prefix: str, in_dim: int, out_dim: int,
                 rng: RngStream):
        self.in_dim = in_dim
        self.out_dim = out_dim
        self.W = store.add(f"{prefix}.W", uniform_init(rng, (in_dim, out_dim), in_dim))
        self.b = store.add(f"{prefix}.b", np.zeros(out_dim, dtype=T.get_dtype()))

    def __call__(self, x: Tensor) -> Tensor:
        return T.matmul(x, self.W) + self.b


class Embedding:
    """Token index -> learned vector lookup."""

    def __init__(self, store: ParameterStore, prefix: str, num_rows: int, dim: int,
                 rng: RngStream):
        self.num_rows = num_rows
        self.dim = dim
        self.table = store.add(f"{prefix}.E", uniform_init(rng, (num_rows, dim), dim))

    def __call__(self, indices) -> Tensor:
        return T.embedding(self.table, indices)


class GRUCellWeights:
    """Per-gate weight bundle for one GRU cell (one layer, one direction)."""

    __slots__ = ("Wr", "Wu", "Wc", "Ur", "Uu", "Uc", "br", "bu", "bc")

    def __init__(self, store: ParameterStore, prefix: str, in_dim: int, hid: int,
                 rng: RngStream):
        dt = T.get_dtype()
        self.Wr = store.add(f"{prefix}.Wr", uniform_init(rng, (in_dim, hid), in_dim))
        self.Wu = store.add(f"{prefix}.Wu", uniform_init(rng, (in_dim, hid), in_dim))
        self.Wc = store.add(f"{prefix}.Wc", uniform_init(rng, (in_dim, hid), in_dim))
        self.Ur = store.add(f"{prefix}.Ur", uniform_init(rng, (hid, hid), hid))
        self.Uu = store.add(f"{prefix}.Uu", uniform_init(rng, (hid, hid), hid))
        self.Uc = store.add(f"{prefix}.Uc", uniform_init(rng, (hid, hid), hid))
        self.br = store.add(f"{prefix}.br", np.zeros(hid, dtype=dt))
        self.bu = store.add(f"{prefix}.bu", np.zeros(hid, dtype=dt))
        self.bc = store.add(f"{prefix}.bc", np.zeros(hid, dtype=dt))


def gru_cell(x: Tensor, h: Tensor, w: GRUCellWeights) -> Tensor:
    """One GRU step:

        r = sigmoid(x Wr + h Ur + br)
        u = sigmoid(x Wu + h Uu + bu)
        c = tanh(x Wc + (r * h) Uc + bc)
        h' = (1 - u) * h + u * c
    """
    if x.shape[-1] != w.Wr.shape[0] or h.shape[-1] != w.Ur.shape[0]:
        raise T.ShapeMismatch(
            f"gru_cell got x {x.shape}, h {h.shape} for weights "
            f"{w.Wr.shape[0]}->{w.Ur.shape[0]}"
        )
    r = T.sigmoid(T.matmul(x, w.Wr) + T.matmul(h, w.Ur) + w.br)
    u = T.sigmoid(T.matmul(x, w.Wu) + T.matmul(h, w.Uu) + w.bu)
    c = T.tanh(T.matmul(x, w.Wc) + T.matmul(r * h, w.Uc) + w.bc)
    return h + u * (c - h)


class GRU:
    """Stacked, optionally bidirectional GRU over (T, B, input) sequences.

    Dropout (inverted, probability ``dropout``) is applied to the output of
    every layer except the last, during training only.
    """

    def __init__(self, store: ParameterStore, prefix: str, input_size: int,
                 hidden_size: int, num_layers: int, rng: RngStream,
                 bidirectional: bool = False, dropout: float = 0.0):
        self.input_size = input_size
        self.hidden_size = hidden_size
        self.num_layers = num_layers
        self.bidirectional = bidirectional
        self.num_directions = 2 if bidirectional else 1
        self.dropout = dropout
        self.weights: list[GRUCellWeights] = []
        for layer in range(num_layers):
            in_dim = input_size if layer == 0 else hidden_size * self.num_directions
            for d in range(self.num_directions):
                tag = f"{prefix}.l{layer}" + (".rev" if d == 1 else "")
                self.weights.append(GRUCellWeights(store, tag, in_dim, hidden_size, rng))

    def _cell(self, layer: int, direction: int, x: Tensor, h: Tensor) -> Tensor:
        return gru_cell(x, h, self.weights[layer * self.num_directions + direction])

    def forward(self, seq: Tensor, h0: list[Tensor] | None = None, train: bool = False,
                rng: RngStream | None = None):
        """Run the stack over ``seq`` of shape (T, B, input).

        Returns ``(outputs, final)`` where outputs is (T, B, D*hidden) and
        final is a list of (B, hidden) tensors indexed by layer*D + direction.
        A zero-length sequence returns empty outputs and ``final == h0``.
        """
        tlen, batch = seq.shape[0], seq.shape[1]
        if h0 is None:
            zeros = Tensor(np.zeros((batch, self.hidden_size), dtype=T.get_dtype()))
            h0 = [zeros] * (self.num_layers * self.num_directions)
        if len(h0) != self.num_layers * self.num_directions:
            raise T.ShapeMismatch("h0 must provide one state per layer and direction")
        if tlen == 0:
            empty = Tensor(np.zeros((0, batch, self.hidden_size * self.num_directions),
                                    dtype=T.get_dtype()))
            return empty, list(h0)

        steps = [seq[t] for t in range(tlen)]
        final: list[Tensor] = [None] * (self.num_layers * self.num_directions)
        for layer in range(self.num_layers):
            fwd = []
            h = h0[layer * self.num_directions]
            for t in range(tlen):
                h = self._cell(layer, 0, steps[t], h)
                fwd.append(h)
            final[layer * self.num_directions] = h
            if self.bidirectional:
                bwd = [None] * tlen
                h = h0[layer * self.num_directions + 1]
                for t in range(tlen - 1, -1, -1):
                    h = self._cell(layer, 1, steps[t], h)
                    bwd[t] = h
                final[layer * self.num_directions + 1] = h
                steps = [T.concat([f, b], axis=1) for f, b in zip(fwd, bwd)]
            else:
                steps = fwd
            if layer < self.num_layers - 1 and self.dropout > 0.0 and train:
                stacked = T.dropout(T.stack(steps, axis=0), self.dropout, rng, train)
                steps = [stacked[t] for t in range(tlen)]
        return T.stack(steps, axis=0), final
