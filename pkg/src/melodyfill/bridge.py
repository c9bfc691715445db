"""Latent-space bridging: predict the latent vectors of missing measures.

Two bidirectional context GRUs (identical architecture, separate weights)
summarise the latent sequences of the measures before and after the gap.
Their final forward/backward hidden states are concatenated and used to
initialise a generation GRU, which is unrolled once per missing measure on a
constant input; at each step the concatenation of all its layer states is
projected down to one latent vector.  Decoding those latents through a frozen
measure autoencoder yields the inpainted tokens.

Ablation modes drop one context branch: "past-only" and "future-only" models
see a single context embedding, linearly projected up to the generation
GRU's initial-state size.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .nn import tensor as T
from .nn.layers import GRU, Linear, ParameterStore
from .nn.rng import RngStream
from .nn.tensor import Tensor
from .vae import MeasureAutoencoder

MODE_BOTH = "both"
MODE_PAST_ONLY = "past-only"
MODE_FUTURE_ONLY = "future-only"
MODES = (MODE_BOTH, MODE_PAST_ONLY, MODE_FUTURE_ONLY)


class InfeasibleBounds(ValueError):
    pass


class EmptyContext(ValueError):
    pass


class ModeContextMismatch(ValueError):
    pass


@dataclass(frozen=True)
class SplitSpec:
    """A (past, gap, future) partition of an N-measure window."""

    n_p: int
    n_i: int
    n_f: int

    def __post_init__(self):
        if self.n_p < 1 or self.n_i < 1 or self.n_f < 1:
            raise InfeasibleBounds(f"all parts must be >= 1 measure, got {self}")

    @property
    def total(self) -> int:
        return self.n_p + self.n_i + self.n_f


@dataclass(frozen=True)
class SplitBounds:
    n_i_min: int = 2
    n_i_max: int = 6


def stochastic_split(total: int, bounds: SplitBounds, rng: RngStream) -> SplitSpec:
    """Sample n_i uniformly from the bounds, then n_p uniformly from what fits.

    n_i ~ U{n_i_min .. min(n_i_max, total-2)}, n_p ~ U{1 .. total-1-n_i},
    n_f = total - n_i - n_p, so past and future always keep >= 1 measure.
    """
    if total < bounds.n_i_min + 2:
        raise InfeasibleBounds(
            f"window of {total} measures cannot fit n_i >= {bounds.n_i_min} "
            "plus one measure of context on each side"
        )
    n_i = int(rng.integers(bounds.n_i_min, min(bounds.n_i_max, total - 2)))
    n_p = int(rng.integers(1, total - 1 - n_i))
    return SplitSpec(n_p=n_p, n_i=n_i, n_f=total - n_i - n_p)


def centered_split(total: int, n_i: int) -> SplitSpec:
    """Fixed split with the gap centred; used for comparable evaluations."""
    n_p = (total - n_i) // 2
    return SplitSpec(n_p=n_p, n_i=n_i, n_f=total - n_i - n_p)


@dataclass
class BridgeConfig:
    latent_dim: int = 256
    ctx_hidden: int = 512
    ctx_layers: int = 2
    gen_hidden: int = 1024
    gen_layers: int = 2
    dropout: float = 0.5
    mode: str = MODE_BOTH

    def __post_init__(self):
        if self.mode not in MODES:
            raise ModeContextMismatch(f"unknown mode {self.mode!r}")
        if self.mode == MODE_BOTH and self.context_embedding_dim != self.gen_state_dim:
            raise ValueError(
                "in mode 'both' the concatenated context embedding "
                f"({self.context_embedding_dim}) must equal the generation GRU's "
                f"initial state size ({self.gen_state_dim})"
            )

    @property
    def gen_state_dim(self) -> int:
        return self.gen_layers * self.gen_hidden

    @property
    def single_context_dim(self) -> int:
        return 2 * self.ctx_hidden  # final forward + backward states, last layer

    @property
    def context_embedding_dim(self) -> int:
        return self.single_context_dim * (2 if self.mode == MODE_BOTH else 1)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "BridgeConfig":
        return cls(**d)


def ablation_config(mode: str, **kwargs) -> BridgeConfig:
    """Config for a context-ablated variant ('past-only' / 'future-only')."""
    return BridgeConfig(mode=mode, **kwargs)


class LatentBridge:
    def __init__(self, config: BridgeConfig, seed: int = 0):
        self.config = config
        self.params = ParameterStore(seed=seed)
        rng = RngStream(seed)
        c = config
        if c.mode != MODE_FUTURE_ONLY:
            self.past_gru = GRU(self.params, "past", c.latent_dim, c.ctx_hidden,
                                c.ctx_layers, rng, bidirectional=True, dropout=c.dropout)
        if c.mode != MODE_PAST_ONLY:
            self.future_gru = GRU(self.params, "future", c.latent_dim, c.ctx_hidden,
                                  c.ctx_layers, rng, bidirectional=True, dropout=c.dropout)
        if c.mode != MODE_BOTH:
            self.context_proj = Linear(self.params, "ctx_proj", c.single_context_dim,
                                       c.gen_state_dim, rng)
        self.gen_gru = GRU(self.params, "gen", 1, c.gen_hidden, c.gen_layers,
                           rng, dropout=c.dropout)
        self.out_proj = Linear(self.params, "out", c.gen_layers * c.gen_hidden,
                               c.latent_dim, rng)

    def _summarise(self, gru: GRU, latents: Tensor, train: bool,
                   rng: RngStream | None) -> Tensor:
        """(T, B, latent) -> (B, 2*ctx_hidden) final states of the last layer."""
        _, final = gru.forward(latents, train=train, rng=rng)
        last = 2 * (self.config.ctx_layers - 1)
        return T.concat([final[last], final[last + 1]], axis=1)

    def encode_contexts(self, past: Tensor | None, future: Tensor | None,
                        train: bool = False, rng: RngStream | None = None) -> Tensor:
        """Context latent sequences -> generation initial-state embedding."""
        mode = self.config.mode
        if mode == MODE_BOTH:
            if past is None or past.shape[0] == 0 or future is None or future.shape[0] == 0:
                raise EmptyContext("mode 'both' needs at least one measure on each side")
            p = self._summarise(self.past_gru, past, train, rng)
            f = self._summarise(self.future_gru, future, train, rng)
            return T.concat([p, f], axis=1)
        if mode == MODE_PAST_ONLY:
            if past is None or past.shape[0] == 0:
                raise EmptyContext("past-only mode needs a past context")
            return self.context_proj(self._summarise(self.past_gru, past, train, rng))
        if future is None or future.shape[0] == 0:
            raise EmptyContext("future-only mode needs a future context")
        return self.context_proj(self._summarise(self.future_gru, future, train, rng))

    def generate_latents(self, embedding: Tensor, count: int, train: bool = False,
                         rng: RngStream | None = None) -> Tensor:
        """Unroll the generation GRU ``count`` steps; returns (count, B, latent)."""
        c = self.config
        batch = embedding.shape[0]
        h0 = [embedding[:, i * c.gen_hidden: (i + 1) * c.gen_hidden]
              for i in range(c.gen_layers)]
        dummy = Tensor(np.ones((count, batch, 1), dtype=T.get_dtype()))
        # per-step latents come from the concatenation of every layer's state,
        # so the generation loop is stepped manually
        hidden = list(h0)
        outs: list[Tensor] = []
        for step in range(count):
            x = dummy[step]
            for layer in range(c.gen_layers):
                hidden[layer] = self.gen_gru._cell(layer, 0, x, hidden[layer])
                x = hidden[layer]
                if train and c.dropout > 0 and layer < c.gen_layers - 1:
                    x = T.dropout(x, c.dropout, rng, train)
            feature = T.concat(hidden, axis=1)
            outs.append(self.out_proj(feature))
        return T.stack(outs, axis=0)

    def state_arrays(self) -> dict[str, np.ndarray]:
        return self.params.state_arrays()

    def load_state_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        for name, tensor in self.params.items():
            tensor.data = arrays[name].astype(tensor.data.dtype)


Z_MODE_SAMPLE = "sample"
Z_MODE_MEAN = "mean"


class InpaintModel:
    """A frozen measure autoencoder plus a latent bridge, glued end to end."""

    def __init__(self, vae: MeasureAutoencoder, bridge: LatentBridge):
        if vae.config.latent_dim != bridge.config.latent_dim:
            raise ValueError("autoencoder and bridge latent dimensions differ")
        self.vae = vae
        self.bridge = bridge

    def context_latents(self, tokens: np.ndarray, rng: RngStream | None,
                        z_mode: str) -> Tensor:
        """Encode (n, 24) measures to an (n, 1, latent) sequence tensor."""
        post = self.vae.encode(tokens)
        z = post.mu if z_mode == Z_MODE_MEAN else self.vae.reparameterize(post, rng)
        return T.reshape(z, (tokens.shape[0], 1, self.vae.config.latent_dim))

    def inpaint(self, past_tokens: np.ndarray, future_tokens: np.ndarray, count: int,
                rng: RngStream | None = None, z_mode: str = Z_MODE_SAMPLE,
                sampling: bool = True):
        """Fill ``count`` measures between the given context token grids.

        Returns (latents (count, latent_dim), tokens (count, 24)); decoding is
        free-running.  ``z_mode='mean'`` with ``sampling=False`` makes the
        whole call deterministic.
        """
        if z_mode == Z_MODE_SAMPLE and rng is None:
            raise ValueError("z_mode 'sample' needs an RngStream")
        mode = self.bridge.config.mode
        with T.no_grad():
            past = future = None
            if mode != MODE_FUTURE_ONLY:
                past = self.context_latents(np.atleast_2d(past_tokens), rng, z_mode)
            if mode != MODE_PAST_ONLY:
                future = self.context_latents(np.atleast_2d(future_tokens), rng, z_mode)
            embedding = self.bridge.encode_contexts(past, future)
            latents = self.bridge.generate_latents(embedding, count)
            z = T.reshape(latents, (count, self.vae.config.latent_dim))
            _, tokens = self.vae.decode(z, rng=rng, sampling=sampling)
        return z.data.copy(), tokens

    def freeze_vae(self) -> None:
        self.vae.params.set_trainable(False)


def gap_loss(model: InpaintModel, windows: np.ndarray, split: SplitSpec,
             rng: RngStream | None, train: bool = True,
             z_mode: str = Z_MODE_SAMPLE,
             posteriors: tuple[np.ndarray, np.ndarray] | None = None):
    """Teacher-forced cross entropy (nats/token) over the gap of each window.

    ``windows`` is (B, N, 24) token indices.  With a frozen autoencoder the
    per-measure posteriors never change, so callers may pass precomputed
    (mu, sigma) arrays of shape (B, N, latent) to skip the encoder pass.
    Gradients always flow through the decoder back to the bridge; a frozen
    autoencoder simply accumulates none of them into its own parameters.
    """
    windows = np.asarray(windows, dtype=np.int64)
    batch, total, tpm = windows.shape
    if split.total != total:
        raise ValueError(f"split {split} does not partition {total} measures")
    dz = model.vae.config.latent_dim
    c_p = windows[:, : split.n_p]
    target = windows[:, split.n_p: split.n_p + split.n_i]
    c_f = windows[:, split.n_p + split.n_i:]

    def encode_block(block: np.ndarray, mu_part, sigma_part) -> Tensor:
        n = block.shape[1]
        if posteriors is None:
            post = model.vae.encode(block.reshape(batch * n, tpm))
            mu, sigma = post.mu, post.sigma
        else:
            mu = Tensor(mu_part.reshape(batch * n, dz))
            sigma = Tensor(sigma_part.reshape(batch * n, dz))
        if z_mode == Z_MODE_MEAN:
            z = mu
        else:
            eps = rng.normal(size=(batch * n, dz), dtype=mu.data.dtype)
            z = mu + sigma * Tensor(eps)
        # (B*n, dz) -> (n, B, dz) sequence
        return T.swapaxes01(T.reshape(z, (batch, n, dz)))

    mu_all, sigma_all = (None, None) if posteriors is None else posteriors
    mode = model.bridge.config.mode
    past = future = None
    if mode != MODE_FUTURE_ONLY:
        past = encode_block(c_p, None if mu_all is None else mu_all[:, : split.n_p],
                            None if sigma_all is None else sigma_all[:, : split.n_p])
    if mode != MODE_PAST_ONLY:
        sl = slice(split.n_p + split.n_i, None)
        future = encode_block(c_f, None if mu_all is None else mu_all[:, sl],
                              None if sigma_all is None else sigma_all[:, sl])

    embedding = model.bridge.encode_contexts(past, future, train=train, rng=rng)
    latents = model.bridge.generate_latents(embedding, split.n_i, train=train, rng=rng)
    z_flat = T.reshape(latents, (split.n_i * batch, dz))
    # latents come out (n_i, B, dz); line the teacher tokens up the same way
    teacher = np.swapaxes(target, 0, 1).reshape(split.n_i * batch, tpm)
    logits = model.vae.decode(z_flat, teacher=teacher, train=train, rng=rng)
    flat = T.reshape(logits, (split.n_i * batch * tpm, model.vae.config.vocab_size))
    return T.tmean(T.softmax_cross_entropy(flat, teacher.reshape(-1)))


def precompute_posteriors(vae: MeasureAutoencoder, windows: np.ndarray,
                          batch_size: int = 256):
    """Frozen-encoder (mu, sigma) for every measure of every window."""
    windows = np.asarray(windows, dtype=np.int64)
    batch, total, tpm = windows.shape
    flat = windows.reshape(batch * total, tpm)
    mus, sigmas = [], []
    with T.no_grad():
        for start in range(0, flat.shape[0], batch_size):
            post = vae.encode(flat[start: start + batch_size])
            mus.append(post.mu.data)
            sigmas.append(post.sigma.data)
    dz = vae.config.latent_dim
    mu = np.concatenate(mus).reshape(batch, total, dz)
    sigma = np.concatenate(sigmas).reshape(batch, total, dz)
    return mu, sigma
