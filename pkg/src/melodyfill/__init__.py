"""melodyfill: measure-grid melody inpainting for monophonic 4/4 scores.

A fixed 24-tick-per-measure token codec, a restricted ABC ingester, a small
numpy autodiff core, a measure-level variational autoencoder, a latent
bridging model that predicts the latents of missing measures from both
surrounding contexts, a training/evaluation harness, and an HTTP service for
interactive use.
"""

__version__ = "0.1.0"

from .bridge import BridgeConfig, InpaintModel, LatentBridge, SplitBounds, SplitSpec
from .codec import (
    NoteEvent,
    TickGrid,
    TokenSequence,
    Vocabulary,
    build_vocabulary,
    decode_measure,
    decode_score,
    encode_measure,
    encode_score,
)
from .vae import AutoencoderConfig, MeasureAutoencoder, Posterior

__all__ = [
    "AutoencoderConfig",
    "BridgeConfig",
    "InpaintModel",
    "LatentBridge",
    "MeasureAutoencoder",
    "NoteEvent",
    "Posterior",
    "SplitBounds",
    "SplitSpec",
    "TickGrid",
    "TokenSequence",
    "Vocabulary",
    "build_vocabulary",
    "decode_measure",
    "decode_score",
    "encode_measure",
    "encode_score",
]
