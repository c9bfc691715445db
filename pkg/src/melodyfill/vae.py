"""Variational autoencoder over single 24-tick measures.

The encoder embeds each tick token, runs a bidirectional GRU stack, and maps
the concatenated final hidden states through two parallel linear stacks to a
Gaussian posterior (mu, sigma) over the latent space.  The decoder is
hierarchical: the latent initialises a beat-level GRU unrolled once per beat
on a constant input; each beat output initialises a tick-level GRU unrolled
once per tick, whose input is the previous tick's token embedding
concatenated with the beat output.  A reserved start symbol (one extra
embedding row past the vocabulary) seeds the first tick.

Teacher forcing feeds ground-truth previous tokens during training;
free-running decoding feeds back the model's own argmax or sampled tokens.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .nn import tensor as T
from .nn.layers import GRU, Embedding, Linear, ParameterStore
from .nn.rng import RngStream
from .nn.tensor import Tensor


@dataclass
class AutoencoderConfig:
    vocab_size: int
    latent_dim: int = 256
    embed_dim: int = 10
    enc_hidden: int = 512
    enc_layers: int = 2
    beat_hidden: int = 512
    beat_layers: int = 2
    tick_hidden: int = 512
    tick_layers: int = 2
    dropout: float = 0.5
    beta: float = 1e-3
    beats: int = 4
    ticks_per_beat: int = 6

    @property
    def tokens_per_measure(self) -> int:
        return self.beats * self.ticks_per_beat

    @property
    def tick_input_dim(self) -> int:
        # previous-token embedding concatenated with the current beat output
        return self.embed_dim + self.beat_hidden

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "AutoencoderConfig":
        return cls(**d)


@dataclass
class Posterior:
    """Per-measure Gaussian q(z|x); both tensors are (batch, latent_dim)."""

    mu: Tensor
    sigma: Tensor


def kl_divergence(post: Posterior) -> Tensor:
    """KL(N(mu, sigma^2) || N(0, I)) per batch row, summed over dimensions."""
    mu, sigma = post.mu, post.sigma
    return 0.5 * T.tsum(T.square(mu) + T.square(sigma) - 1.0 - 2.0 * T.log(sigma), axis=1)


class WrongMeasureLength(ValueError):
    pass


class MissingTeacherTokens(ValueError):
    pass


class MeasureAutoencoder:
    def __init__(self, config: AutoencoderConfig, seed: int = 0):
        self.config = config
        self.params = ParameterStore(seed=seed)
        rng = RngStream(seed)
        c = config
        self.start_index = c.vocab_size  # reserved start symbol, one row past the vocab

        self.embedding = Embedding(self.params, "emb", c.vocab_size + 1, c.embed_dim, rng)
        self.enc_gru = GRU(self.params, "enc", c.embed_dim, c.enc_hidden, c.enc_layers,
                           rng, bidirectional=True, dropout=c.dropout)
        enc_out = 2 * c.enc_hidden
        self.mu_stack = [Linear(self.params, "mu.0", enc_out, enc_out, rng),
                         Linear(self.params, "mu.1", enc_out, c.latent_dim, rng)]
        self.logvar_stack = [Linear(self.params, "logvar.0", enc_out, enc_out, rng),
                             Linear(self.params, "logvar.1", enc_out, c.latent_dim, rng)]

        self.beat_init = Linear(self.params, "dec.beat_init", c.latent_dim,
                                c.beat_layers * c.beat_hidden, rng)
        self.beat_gru = GRU(self.params, "dec.beat", 1, c.beat_hidden, c.beat_layers,
                            rng, dropout=c.dropout)
        self.tick_init = Linear(self.params, "dec.tick_init", c.beat_hidden,
                                c.tick_layers * c.tick_hidden, rng)
        self.tick_gru = GRU(self.params, "dec.tick", c.tick_input_dim, c.tick_hidden,
                            c.tick_layers, rng, dropout=c.dropout)
        self.out_proj = Linear(self.params, "dec.out", c.tick_hidden, c.vocab_size, rng)

    # encoding ---------------------------------------------------------

    def _check_tokens(self, tokens: np.ndarray) -> np.ndarray:
        tokens = np.atleast_2d(np.asarray(tokens, dtype=np.int64))
        if tokens.shape[1] != self.config.tokens_per_measure:
            raise WrongMeasureLength(
                f"expected {self.config.tokens_per_measure} tokens per measure, "
                f"got {tokens.shape[1]}"
            )
        return tokens

    def encode(self, tokens: np.ndarray, train: bool = False,
               rng: RngStream | None = None) -> Posterior:
        """Map (batch, 24) token indices to the Gaussian posterior."""
        tokens = self._check_tokens(tokens)
        emb = self.embedding(tokens.T)  # (24, B, embed)
        _, final = self.enc_gru.forward(emb, train=train, rng=rng)
        last = self.enc_gru.num_directions * (self.config.enc_layers - 1)
        h = T.concat([final[last], final[last + 1]], axis=1)
        pre_mu = T.selu(self.mu_stack[0](h))
        mu = self.mu_stack[1](pre_mu)
        pre_lv = T.selu(self.logvar_stack[0](h))
        logvar = self.logvar_stack[1](pre_lv)
        sigma = T.exp(0.5 * logvar)
        return Posterior(mu=mu, sigma=sigma)

    def reparameterize(self, post: Posterior, rng: RngStream) -> Tensor:
        eps = rng.normal(size=post.mu.shape, dtype=post.mu.data.dtype)
        return post.mu + post.sigma * Tensor(eps)

    # decoding ---------------------------------------------------------

    def _beat_outputs(self, z: Tensor, train: bool, rng: RngStream | None):
        c = self.config
        batch = z.shape[0]
        init = self.beat_init(z)
        h0 = [init[:, i * c.beat_hidden: (i + 1) * c.beat_hidden] for i in range(c.beat_layers)]
        dummy = Tensor(np.ones((c.beats, batch, 1), dtype=T.get_dtype()))
        out, _ = self.beat_gru.forward(dummy, h0=h0, train=train, rng=rng)
        return [out[b] for b in range(c.beats)]

    def _tick_h0(self, beat_out: Tensor) -> list[Tensor]:
        c = self.config
        init = T.relu(self.tick_init(beat_out))
        return [init[:, i * c.tick_hidden: (i + 1) * c.tick_hidden] for i in range(c.tick_layers)]

    def decode(self, z: Tensor, teacher: np.ndarray | None = None,
               rng: RngStream | None = None, sampling: bool = False,
               train: bool = False):
        """Latents to per-tick token logits.

        Teacher mode (``teacher`` given) returns logits (batch, 24, vocab).
        Free-running mode returns (logits, tokens) where tokens are the
        argmax or sampled (``sampling=True``, needs ``rng``) predictions fed
        back into the decoder.
        """
        if train and teacher is None:
            raise MissingTeacherTokens("training-mode decode requires teacher tokens")
        if teacher is not None:
            return self._decode_teacher(z, self._check_tokens(teacher), train, rng)
        return self._decode_free(z, rng, sampling)

    def _decode_teacher(self, z: Tensor, teacher: np.ndarray, train: bool,
                        rng: RngStream | None) -> Tensor:
        c = self.config
        batch = teacher.shape[0]
        prev = np.concatenate(
            [np.full((batch, 1), self.start_index, dtype=np.int64), teacher[:, :-1]], axis=1)
        prev_emb = self.embedding(prev.T)  # (24, B, embed)
        beat_outs = self._beat_outputs(z, train, rng)
        tick_logits: list[Tensor] = []
        for b, beat_out in enumerate(beat_outs):
            h0 = self._tick_h0(beat_out)
            beat_rep = T.stack([beat_out] * c.ticks_per_beat, axis=0)
            emb_slice = prev_emb[b * c.ticks_per_beat: (b + 1) * c.ticks_per_beat]
            tick_in = T.concat([emb_slice, beat_rep], axis=2)
            out, _ = self.tick_gru.forward(tick_in, h0=h0, train=train, rng=rng)
            for t in range(c.ticks_per_beat):
                tick_logits.append(self.out_proj(T.relu(out[t])))
        return T.stack(tick_logits, axis=1)  # (B, 24, V)

    def _decode_free(self, z: Tensor, rng: RngStream | None, sampling: bool):
        if sampling and rng is None:
            raise ValueError("sampled free-running decode needs an RngStream")
        c = self.config
        batch = z.shape[0]
        beat_outs = self._beat_outputs(z, train=False, rng=None)
        tokens = np.zeros((batch, c.tokens_per_measure), dtype=np.int64)
        prev = np.full(batch, self.start_index, dtype=np.int64)
        tick_logits: list[Tensor] = []
        for b, beat_out in enumerate(beat_outs):
            hidden = self._tick_h0(beat_out)
            for t in range(c.ticks_per_beat):
                x = T.concat([self.embedding(prev), beat_out], axis=1)
                for layer in range(c.tick_layers):
                    hidden[layer] = self.tick_gru._cell(layer, 0, x, hidden[layer])
                    x = hidden[layer]
                logits = self.out_proj(T.relu(hidden[-1]))
                tick_logits.append(logits)
                if sampling:
                    probs = T.softmax_probs(logits.data)
                    prev = np.array([rng.choice_index(p) for p in probs], dtype=np.int64)
                else:
                    prev = logits.data.argmax(axis=1).astype(np.int64)
                tokens[:, b * c.ticks_per_beat + t] = prev
        return T.stack(tick_logits, axis=1), tokens

    # objectives ---------------------------------------------------------

    def loss(self, tokens: np.ndarray, rng: RngStream, train: bool = True,
             beta: float | None = None):
        """beta-weighted ELBO: mean per-token cross entropy + beta * KL.

        Returns (loss, recon_nats, kl_nats) with the last two as floats.
        """
        tokens = self._check_tokens(tokens)
        beta = self.config.beta if beta is None else beta
        post = self.encode(tokens, train=train, rng=rng)
        z = self.reparameterize(post, rng)
        logits = self.decode(z, teacher=tokens, train=train, rng=rng)
        batch, tpm = tokens.shape
        flat = T.reshape(logits, (batch * tpm, self.config.vocab_size))
        recon = T.tmean(T.softmax_cross_entropy(flat, tokens.reshape(-1)))
        kl = T.tmean(kl_divergence(post))
        loss = recon + beta * kl
        return loss, float(recon.data), float(kl.data)

    def reconstruction_nll(self, tokens: np.ndarray) -> float:
        """Deterministic teacher-forced NLL (nats/token) with z = mu."""
        with T.no_grad():
            tokens = self._check_tokens(tokens)
            post = self.encode(tokens)
            logits = self.decode(post.mu, teacher=tokens)
            batch, tpm = tokens.shape
            flat = T.reshape(logits, (batch * tpm, self.config.vocab_size))
            ce = T.tmean(T.softmax_cross_entropy(flat, tokens.reshape(-1)))
            return float(ce.data)

    def reconstruction_accuracy(self, tokens: np.ndarray) -> float:
        """Fraction of tokens reproduced exactly, teacher-forced, z = mu."""
        with T.no_grad():
            tokens = self._check_tokens(tokens)
            post = self.encode(tokens)
            logits = self.decode(post.mu, teacher=tokens)
            pred = logits.data.argmax(axis=2)
            return float((pred == tokens).mean())

    # persistence ---------------------------------------------------------

    def state_arrays(self) -> dict[str, np.ndarray]:
        return self.params.state_arrays()

    def load_state_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        for name, tensor in self.params.items():
            tensor.data = arrays[name].astype(tensor.data.dtype)
