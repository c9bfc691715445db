"""HTTP service exposing a frozen inpainting model.

Endpoints:
    POST /api/v1/inpaint   fill a contiguous measure range, N samples
    GET  /api/v1/model     checkpoint hashes, dimensions, config snapshot
    GET  /api/v1/health    liveness plus model-loaded flag

The model is loaded once (from ``INPAINT_CHECKPOINT`` unless injected) and
never mutated; every sample draws from its own seeded stream (base seed +
sample index), so a request with a seed maps to a byte-identical response
body.  Wall-clock timing travels in the ``X-Inpaint-Millis`` response header
to keep the body a pure function of (request, seed).

Tokens cross the wire as strings; the server resolves them against its own
vocabulary, so clients never need a vocabulary file.
"""

from __future__ import annotations

import os
import time

import numpy as np
from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field

from .bridge import Z_MODE_MEAN, Z_MODE_SAMPLE, InpaintModel
from .codec import Vocabulary
from .nn.rng import RngStream

TOKENS_PER_MEASURE = 24


class ApiError(Exception):
    def __init__(self, status: int, code: str, message: str, field: str | None = None):
        super().__init__(message)
        self.status = status
        self.code = code
        self.message = message
        self.field = field


class MaskSpec(BaseModel):
    start_measure: int
    count: int


class InpaintRequest(BaseModel):
    measures: list[list[str]]
    mask: MaskSpec
    num_samples: int = Field(default=1)
    seed: int | None = None
    z_mode: str | None = None


class ModelBundle:
    """Everything the handlers need, loaded once and immutable."""

    def __init__(self, model: InpaintModel, vocab: Vocabulary, info: dict):
        self.model = model
        self.vocab = vocab
        self.info = info


def load_bundle(checkpoint_path: str) -> ModelBundle:
    from .training import load_inpaint_checkpoint

    model, vocab, info = load_inpaint_checkpoint(checkpoint_path)
    return ModelBundle(model, vocab, info)


def _validate(req: InpaintRequest, bundle: ModelBundle) -> np.ndarray:
    if not req.measures:
        raise ApiError(400, "WrongMeasureLength", "score must contain measures", "measures")
    for i, measure in enumerate(req.measures):
        if len(measure) != TOKENS_PER_MEASURE:
            raise ApiError(400, "WrongMeasureLength",
                           f"measure {i} has {len(measure)} tokens, expected 24",
                           "measures")
        for tok in measure:
            if tok not in bundle.vocab:
                raise ApiError(400, "UnknownToken",
                               f"measure {i}: token {tok!r} is not in the vocabulary",
                               "measures")
    n = len(req.measures)
    mask = req.mask
    if mask.count < 1:
        raise ApiError(400, "InvalidMask", "mask.count must be >= 1", "mask")
    if mask.start_measure < 1:
        raise ApiError(400, "InvalidMask",
                       "mask must leave at least one past-context measure", "mask")
    if mask.start_measure + mask.count > n - 1:
        raise ApiError(400, "InvalidMask",
                       "mask must leave at least one future-context measure", "mask")
    if req.num_samples < 1:
        raise ApiError(400, "InvalidRequest", "num_samples must be >= 1", "num_samples")
    if req.z_mode not in (None, Z_MODE_SAMPLE, Z_MODE_MEAN):
        raise ApiError(400, "InvalidRequest",
                       f"z_mode must be '{Z_MODE_SAMPLE}' or '{Z_MODE_MEAN}'", "z_mode")
    return np.array([bundle.vocab.encode(m) for m in req.measures], dtype=np.int64)


def run_inpaint(bundle: ModelBundle, tokens: np.ndarray, start: int, count: int,
                num_samples: int, seed: int | None, z_mode: str) -> list[dict]:
    """Run the model ``num_samples`` times and splice results into the score."""
    base_seed = int(np.random.SeedSequence().entropy % (2 ** 31)) if seed is None else int(seed)
    past = tokens[:start]
    future = tokens[start + count:]
    samples = []
    for k in range(num_samples):
        sample_seed = base_seed + k
        rng = RngStream(sample_seed)
        _, generated = bundle.model.inpaint(
            past, future, count, rng=rng, z_mode=z_mode,
            sampling=(z_mode == Z_MODE_SAMPLE))
        full = tokens.copy()
        full[start: start + count] = generated
        samples.append({
            "measures": [bundle.vocab.decode(row) for row in full],
            "seed": sample_seed,
        })
    return samples


def create_app(bundle: ModelBundle | None = None,
               checkpoint_path: str | None = None) -> FastAPI:
    app = FastAPI(title="melodyfill inpainting service")
    if bundle is None:
        checkpoint_path = checkpoint_path or os.environ.get("INPAINT_CHECKPOINT")
        if checkpoint_path:
            bundle = load_bundle(checkpoint_path)
    app.state.bundle = bundle

    @app.exception_handler(ApiError)
    async def on_api_error(request: Request, exc: ApiError):
        return JSONResponse(status_code=exc.status,
                            content={"code": exc.code, "message": exc.message,
                                     "field": exc.field})

    def require_bundle() -> ModelBundle:
        if app.state.bundle is None:
            raise ApiError(503, "ModelNotLoaded", "no checkpoint is loaded")
        return app.state.bundle

    @app.get("/api/v1/health")
    def health():
        return {"status": "ok", "model_loaded": app.state.bundle is not None}

    @app.get("/api/v1/model")
    def model_info():
        b = require_bundle()
        info = b.info
        return {
            "bridge_checkpoint_sha256": info["bridge_checkpoint_sha256"],
            "vae_checkpoint_sha256": info["vae_checkpoint_sha256"],
            "vocab_size": len(b.vocab),
            "latent_dim": b.model.vae.config.latent_dim,
            "context_mode": b.model.bridge.config.mode,
            "bridge_config": info["bridge_config"],
            "vae_config": info["vae_config"],
            "train_config": info["train_config"],
        }

    @app.post("/api/v1/inpaint")
    def inpaint(req: InpaintRequest):
        b = require_bundle()
        started = time.perf_counter()
        tokens = _validate(req, b)
        z_mode = req.z_mode or Z_MODE_SAMPLE
        samples = run_inpaint(b, tokens, req.mask.start_measure, req.mask.count,
                              req.num_samples, req.seed, z_mode)
        body = {
            "samples": samples,
            "mask": {"start_measure": req.mask.start_measure, "count": req.mask.count},
            "z_mode": z_mode,
            "model": {
                "bridge_checkpoint_sha256": b.info["bridge_checkpoint_sha256"],
                "vae_checkpoint_sha256": b.info["vae_checkpoint_sha256"],
            },
        }
        millis = (time.perf_counter() - started) * 1000.0
        return JSONResponse(content=body, headers={"X-Inpaint-Millis": f"{millis:.1f}"})

    return app


def main() -> None:
    import uvicorn

    port = int(os.environ.get("INPAINT_PORT", "8765"))
    uvicorn.run(create_app(), host="0.0.0.0", port=port)


if __name__ == "__main__":
    main()
