"""Training, evaluation, and checkpointing for both models.

Runs are fully determined by (seed, config, corpus): model init, batch
shuffling, posterior sampling, and stochastic splits all draw from streams
derived from the config seed.  Validation NLL uses z = mu, so it is
deterministic and usable for early stopping.
"""

from __future__ import annotations

import json
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .bridge import (
    BridgeConfig,
    InpaintModel,
    LatentBridge,
    SplitBounds,
    SplitSpec,
    centered_split,
    gap_loss,
    precompute_posteriors,
    stochastic_split,
)
from .checkpoint import (
    CheckpointError,
    file_sha256,
    load_checkpoint,
    save_checkpoint,
)
from .codec import Vocabulary
from .nn import tensor as T
from .nn.optim import Adam
from .nn.rng import RngStream
from .vae import AutoencoderConfig, MeasureAutoencoder


class EmptyCorpus(ValueError):
    pass


class CheckpointMismatch(CheckpointError):
    pass


@dataclass
class TrainConfig:
    epochs: int = 100
    batch_size: int = 32
    seed: int = 0
    lr: float = 1e-3
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    beta_kl: float = 1e-3
    patience: int = 10
    grad_clip: float | None = None
    max_steps: int | None = None
    n_i_min: int = 2
    n_i_max: int = 6
    eval_z_mode: str = "mean"
    eval_policy_seed: int = 0

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        return cls(**d)

    @property
    def split_bounds(self) -> SplitBounds:
        return SplitBounds(self.n_i_min, self.n_i_max)


@dataclass
class MetricsLog:
    records: list[dict] = field(default_factory=list)

    def append(self, epoch: int, **fields) -> dict:
        if self.records and epoch <= self.records[-1]["epoch"]:
            raise ValueError("epoch numbers must be strictly increasing")
        record = {"epoch": epoch, **fields}
        self.records.append(record)
        return record

    def save_jsonl(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for record in self.records:
                fh.write(json.dumps(record) + "\n")

    @classmethod
    def load_jsonl(cls, path: str | Path) -> "MetricsLog":
        log = cls()
        for line in Path(path).read_text(encoding="utf-8").splitlines():
            if line.strip():
                log.records.append(json.loads(line))
        return log


class EarlyStopper:
    """Track a to-minimise metric; `should_stop` after `patience` bad epochs."""

    def __init__(self, patience: int):
        self.patience = patience
        self.best = np.inf
        self.best_epoch = -1
        self.bad_epochs = 0

    def update(self, epoch: int, value: float) -> bool:
        """Returns True when this epoch is the new best."""
        if value < self.best:
            self.best = value
            self.best_epoch = epoch
            self.bad_epochs = 0
            return True
        self.bad_epochs += 1
        return False

    @property
    def should_stop(self) -> bool:
        return self.bad_epochs > self.patience


def _batches(count: int, batch_size: int, rng: RngStream):
    """Shuffled full batches; a ragged tail is dropped unless it is all there is."""
    order = np.arange(count)
    rng.shuffle(order)
    if count < batch_size:
        yield order
        return
    for start in range(0, count - batch_size + 1, batch_size):
        yield order[start: start + batch_size]


# autoencoder pre-training ----------------------------------------------


def train_vae(train_measures: np.ndarray, valid_measures: np.ndarray | None,
              model_config: AutoencoderConfig, config: TrainConfig,
              log_every: int | None = None):
    """Pre-train the measure autoencoder on single measures.

    Returns (model, metrics).  The model is left holding the parameters of
    the best validation epoch (or the final step when no validation set is
    given).
    """
    train_measures = np.asarray(train_measures, dtype=np.int64)
    if train_measures.size == 0:
        raise EmptyCorpus("no training measures")
    model = MeasureAutoencoder(model_config, seed=config.seed)
    adam = Adam(model.params, lr=config.lr, beta1=config.adam_beta1,
                beta2=config.adam_beta2, eps=config.adam_eps, grad_clip=config.grad_clip)
    root = RngStream(config.seed)
    metrics = MetricsLog()
    stopper = EarlyStopper(config.patience)
    best: dict[str, np.ndarray] | None = None
    steps = 0
    start = time.time()

    for epoch in range(config.epochs):
        epoch_rng = root.derive(1000 + epoch)
        losses = []
        for idx in _batches(len(train_measures), config.batch_size, epoch_rng):
            loss, recon, kl = model.loss(train_measures[idx], epoch_rng,
                                         train=True, beta=config.beta_kl)
            loss.backward()
            adam.step()
            losses.append((float(loss.data), recon, kl))
            steps += 1
            if config.max_steps is not None and steps >= config.max_steps:
                break
        train_loss = float(np.mean([l[0] for l in losses]))
        record = {"train_loss": train_loss,
                  "train_recon": float(np.mean([l[1] for l in losses])),
                  "train_kl": float(np.mean([l[2] for l in losses])),
                  "wall_time": time.time() - start}
        if valid_measures is not None and len(valid_measures):
            valid_nll = model.reconstruction_nll(valid_measures)
            record["valid_nll"] = valid_nll
            record["valid_acc"] = model.reconstruction_accuracy(valid_measures)
            if stopper.update(epoch, valid_nll):
                best = {k: v.copy() for k, v in model.state_arrays().items()}
        metrics.append(epoch, **record)
        if log_every and (epoch + 1) % log_every == 0:
            print(f"[vae] epoch {epoch + 1}: {record}")
        if (config.max_steps is not None and steps >= config.max_steps) or stopper.should_stop:
            break
    if best is not None:
        model.load_state_arrays(best)
    return model, metrics


# bridge training ---------------------------------------------------------


def train_bridge(train_windows: np.ndarray, valid_windows: np.ndarray | None,
                 vae: MeasureAutoencoder, bridge_config: BridgeConfig,
                 config: TrainConfig, log_every: int | None = None):
    """Train the latent bridge against a frozen autoencoder.

    The encoder never changes, so per-measure posteriors are precomputed once
    and resampled per batch; gradients reach the bridge parameters only.
    """
    train_windows = np.asarray(train_windows, dtype=np.int64)
    if train_windows.size == 0:
        raise EmptyCorpus("no training windows")
    total = train_windows.shape[1]
    vae.params.set_trainable(False)

    bridge = LatentBridge(bridge_config, seed=config.seed)
    model = InpaintModel(vae, bridge)
    adam = Adam(bridge.params, lr=config.lr, beta1=config.adam_beta1,
                beta2=config.adam_beta2, eps=config.adam_eps, grad_clip=config.grad_clip)
    root = RngStream(config.seed)
    train_post = precompute_posteriors(vae, train_windows)
    metrics = MetricsLog()
    stopper = EarlyStopper(config.patience)
    best: dict[str, np.ndarray] | None = None
    steps = 0
    start = time.time()

    for epoch in range(config.epochs):
        epoch_rng = root.derive(2000 + epoch)
        losses = []
        for idx in _batches(len(train_windows), config.batch_size, epoch_rng):
            split = stochastic_split_checked(total, config.split_bounds, epoch_rng)
            batch_post = (train_post[0][idx], train_post[1][idx])
            loss = gap_loss(model, train_windows[idx], split, epoch_rng,
                            train=True, posteriors=batch_post)
            loss.backward()
            adam.step()
            losses.append(float(loss.data))
            steps += 1
            if config.max_steps is not None and steps >= config.max_steps:
                break
        record = {"train_loss": float(np.mean(losses)), "wall_time": time.time() - start}
        if valid_windows is not None and len(valid_windows):
            valid_nll = evaluate_nll(model, valid_windows,
                                     policy=EvalSplitPolicy(seed=config.eval_policy_seed,
                                                            bounds=config.split_bounds),
                                     z_mode=config.eval_z_mode)
            record["valid_nll"] = valid_nll
            if stopper.update(epoch, valid_nll):
                best = {k: v.copy() for k, v in bridge.state_arrays().items()}
        metrics.append(epoch, **record)
        if log_every and (epoch + 1) % log_every == 0:
            print(f"[bridge] epoch {epoch + 1}: {record}")
        if (config.max_steps is not None and steps >= config.max_steps) or stopper.should_stop:
            break
    if best is not None:
        bridge.load_state_arrays(best)
    return model, metrics


def stochastic_split_checked(total: int, bounds: SplitBounds, rng: RngStream) -> SplitSpec:
    split = stochastic_split(total, bounds, rng)
    assert split.total == total and split.n_p >= 1 and split.n_f >= 1
    return split


# evaluation ---------------------------------------------------------------


@dataclass(frozen=True)
class EvalSplitPolicy:
    """Deterministic per-window splits: fixed (n_p, n_i) or seeded by index."""

    n_p: int | None = None
    n_i: int | None = None
    seed: int = 0
    bounds: SplitBounds = SplitBounds()

    def split_for(self, window_index: int, total: int) -> SplitSpec:
        if self.n_p is not None and self.n_i is not None:
            return SplitSpec(self.n_p, self.n_i, total - self.n_p - self.n_i)
        return stochastic_split(total, self.bounds, RngStream(self.seed).derive(window_index))


def evaluate_nll(model: InpaintModel, windows: np.ndarray,
                 policy: EvalSplitPolicy, z_mode: str = "mean") -> float:
    """Mean teacher-forced nats/token over the gap of every window.

    Windows sharing a split are batched together; with z = mu the result is a
    pure function of (model, windows, policy).
    """
    windows = np.asarray(windows, dtype=np.int64)
    count, total, _ = windows.shape
    groups: dict[SplitSpec, list[int]] = {}
    for i in range(count):
        groups.setdefault(policy.split_for(i, total), []).append(i)
    token_sum = 0.0
    token_count = 0
    rng = RngStream(policy.seed).derive(10**9)
    with T.no_grad():
        for split, idx in sorted(groups.items(), key=lambda kv: (kv[0].n_p, kv[0].n_i)):
            batch = windows[np.array(idx)]
            loss = gap_loss(model, batch, split, rng, train=False, z_mode=z_mode)
            n_tokens = len(idx) * split.n_i * batch.shape[2]
            token_sum += float(loss.data) * n_tokens
            token_count += n_tokens
    return token_sum / token_count


def nll_sweep(model: InpaintModel, windows: np.ndarray,
              n_i_values=range(2, 9), z_mode: str = "mean") -> list[tuple[int, float]]:
    """Evaluate with the gap centred, one row per gap size."""
    windows = np.asarray(windows, dtype=np.int64)
    total = windows.shape[1]
    rows = []
    for n_i in n_i_values:
        split = centered_split(total, n_i)
        policy = EvalSplitPolicy(n_p=split.n_p, n_i=split.n_i)
        rows.append((int(n_i), evaluate_nll(model, windows, policy, z_mode=z_mode)))
    return rows


def sweep_to_csv(rows: list[tuple[int, float]]) -> str:
    return "gap_measures,nats_per_token\n" + "".join(f"{n},{v:.6f}\n" for n, v in rows)


# checkpoints ---------------------------------------------------------------


def save_vae_checkpoint(path: str | Path, model: MeasureAutoencoder, vocab: Vocabulary,
                        train_config: TrainConfig | None = None,
                        extra: dict | None = None, optimizer: Adam | None = None) -> str:
    config = {
        "model": model.config.to_dict(),
        "vocab": vocab.tokens(),
        "train": train_config.to_dict() if train_config else None,
    }
    arrays = dict(model.state_arrays())
    extra = dict(extra or {})
    if optimizer is not None:
        arrays.update(optimizer.state_arrays())
        extra["adam_step"] = optimizer.step_count
    return save_checkpoint(path, "measure-vae", arrays, config, extra)


def load_vae_checkpoint(path: str | Path):
    """Returns (model, vocab, config_dict, extra)."""
    _, arrays, config, extra = load_checkpoint(path, expected_kind="measure-vae")
    model = MeasureAutoencoder(AutoencoderConfig.from_dict(config["model"]), seed=0)
    model.load_state_arrays(arrays)
    vocab = Vocabulary.from_state(config["vocab"])
    return model, vocab, config, extra


def save_bridge_checkpoint(path: str | Path, bridge: LatentBridge,
                           vae_path: str | Path, train_config: TrainConfig | None = None,
                           extra: dict | None = None, optimizer: Adam | None = None) -> str:
    vae_path = Path(vae_path)
    config = {
        "model": bridge.config.to_dict(),
        "vae_ref": {"path": vae_path.name, "sha256": file_sha256(vae_path)},
        "train": train_config.to_dict() if train_config else None,
    }
    arrays = dict(bridge.state_arrays())
    extra = dict(extra or {})
    if optimizer is not None:
        arrays.update(optimizer.state_arrays())
        extra["adam_step"] = optimizer.step_count
    return save_checkpoint(path, "latent-bridge", arrays, config, extra)


def load_inpaint_checkpoint(path: str | Path, vae_path: str | Path | None = None):
    """Load a bridge checkpoint plus its referenced, hash-verified autoencoder.

    The reference stores the autoencoder file's name; it is resolved relative
    to the bridge checkpoint unless ``vae_path`` overrides it.  Returns
    (InpaintModel, vocab, info) where info carries both checkpoint hashes.
    """
    path = Path(path)
    _, arrays, config, extra = load_checkpoint(path, expected_kind="latent-bridge")
    ref = config["vae_ref"]
    resolved = Path(vae_path) if vae_path is not None else path.parent / ref["path"]
    if not resolved.exists():
        raise CheckpointMismatch(f"referenced autoencoder checkpoint not found: {resolved}")
    actual = file_sha256(resolved)
    if actual != ref["sha256"]:
        raise CheckpointMismatch(
            f"autoencoder checkpoint hash mismatch: expected {ref['sha256'][:12]}..., "
            f"found {actual[:12]}..."
        )
    vae, vocab, vae_config, _ = load_vae_checkpoint(resolved)
    vae.params.set_trainable(False)
    bridge = LatentBridge(BridgeConfig.from_dict(config["model"]), seed=0)
    bridge.load_state_arrays(arrays)
    info = {
        "bridge_checkpoint_sha256": file_sha256(path),
        "vae_checkpoint_sha256": actual,
        "bridge_config": config["model"],
        "vae_config": vae_config["model"],
        "train_config": config.get("train"),
        "vocab_size": len(vocab),
    }
    return InpaintModel(vae, bridge), vocab, info
