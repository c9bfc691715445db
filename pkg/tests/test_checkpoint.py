import numpy as np
import pytest

from melodyfill.bridge import BridgeConfig, LatentBridge
from melodyfill.checkpoint import (
    FORMAT_VERSION,
    CorruptFile,
    VersionMismatch,
    file_sha256,
    load_checkpoint,
    save_checkpoint,
)
from melodyfill.codec import build_vocabulary
from melodyfill.training import (
    CheckpointMismatch,
    load_inpaint_checkpoint,
    load_vae_checkpoint,
    save_bridge_checkpoint,
    save_vae_checkpoint,
)
from melodyfill.vae import AutoencoderConfig, MeasureAutoencoder


def arrays():
    rng = np.random.default_rng(0)
    return {
        "a.W": rng.normal(size=(4, 3)).astype(np.float32),
        "b": rng.normal(size=(7,)).astype(np.float32),
    }


class TestContainer:
    def test_roundtrip(self, tmp_path):
        path = tmp_path / "m.ckpt"
        save_checkpoint(path, "test", arrays(), {"x": 1}, {"note": "hi"})
        kind, loaded, config, extra = load_checkpoint(path)
        assert kind == "test" and config == {"x": 1} and extra == {"note": "hi"}
        for name, arr in arrays().items():
            assert np.array_equal(loaded[name], arr)

    def test_truncated_file_is_corrupt(self, tmp_path):
        path = tmp_path / "m.ckpt"
        save_checkpoint(path, "test", arrays(), {})
        blob = path.read_bytes()
        path.write_bytes(blob[:-10])
        with pytest.raises(CorruptFile):
            load_checkpoint(path)

    def test_flipped_byte_is_corrupt(self, tmp_path):
        path = tmp_path / "m.ckpt"
        save_checkpoint(path, "test", arrays(), {})
        blob = bytearray(path.read_bytes())
        blob[40] ^= 0xFF
        path.write_bytes(bytes(blob))
        with pytest.raises(CorruptFile):
            load_checkpoint(path)

    def test_version_mismatch(self, tmp_path):
        import hashlib
        import struct

        path = tmp_path / "m.ckpt"
        save_checkpoint(path, "test", arrays(), {})
        blob = bytearray(path.read_bytes())[:-32]
        struct.pack_into("<I", blob, 4, FORMAT_VERSION + 1)
        blob += hashlib.sha256(blob).digest()
        path.write_bytes(bytes(blob))
        with pytest.raises(VersionMismatch) as err:
            load_checkpoint(path)
        assert str(FORMAT_VERSION + 1) in str(err.value)

    def test_not_a_checkpoint(self, tmp_path):
        path = tmp_path / "junk"
        path.write_bytes(b"hello world, definitely not a checkpoint")
        with pytest.raises(CorruptFile):
            load_checkpoint(path)


def tiny_vae(vocab_size, seed=0):
    return MeasureAutoencoder(
        AutoencoderConfig(vocab_size=vocab_size, latent_dim=8, embed_dim=4,
                          enc_hidden=12, beat_hidden=12, tick_hidden=12, dropout=0.0),
        seed=seed)


def tiny_bridge(seed=1):
    return LatentBridge(BridgeConfig(latent_dim=8, ctx_hidden=12, ctx_layers=2,
                                     gen_hidden=24, gen_layers=2, dropout=0.0), seed=seed)


class TestModelCheckpoints:
    def test_vae_roundtrip_bit_identical(self, tmp_path):
        vocab = build_vocabulary(["C4", "D4", "E4"])
        model = tiny_vae(len(vocab))
        path = tmp_path / "vae.ckpt"
        save_vae_checkpoint(path, model, vocab)
        again, vocab2, config, _ = load_vae_checkpoint(path)
        assert vocab2.tokens() == vocab.tokens()
        assert again.config == model.config
        for name, t in model.params.items():
            assert np.array_equal(t.data, again.params[name].data)

    def test_inpaint_bundle_verifies_hash(self, tmp_path):
        vocab = build_vocabulary(["C4", "D4"])
        vae = tiny_vae(len(vocab))
        bridge = tiny_bridge()
        vae_path = tmp_path / "vae.ckpt"
        bridge_path = tmp_path / "bridge.ckpt"
        save_vae_checkpoint(vae_path, vae, vocab)
        save_bridge_checkpoint(bridge_path, bridge, vae_path)
        model, vocab2, info = load_inpaint_checkpoint(bridge_path)
        assert info["vae_checkpoint_sha256"] == file_sha256(vae_path)
        assert len(vocab2) == len(vocab)

    def test_tampered_vae_rejected(self, tmp_path):
        vocab = build_vocabulary(["C4", "D4"])
        vae = tiny_vae(len(vocab))
        vae_path = tmp_path / "vae.ckpt"
        bridge_path = tmp_path / "bridge.ckpt"
        save_vae_checkpoint(vae_path, vae, vocab)
        save_bridge_checkpoint(bridge_path, tiny_bridge(), vae_path)
        # legitimately re-save the autoencoder with different weights
        save_vae_checkpoint(vae_path, tiny_vae(len(vocab), seed=9), vocab)
        with pytest.raises(CheckpointMismatch):
            load_inpaint_checkpoint(bridge_path)

    def test_optimizer_state_round_trip(self, tmp_path):
        from melodyfill.checkpoint import load_checkpoint
        from melodyfill.nn.optim import Adam

        vocab = build_vocabulary(["C4"])
        model = tiny_vae(len(vocab))
        adam = Adam(model.params, lr=1e-3)
        for t in model.params.tensors():
            t.grad = np.ones_like(t.data)
        adam.step()
        path = tmp_path / "vae.ckpt"
        save_vae_checkpoint(path, model, vocab, optimizer=adam)

        again, _, _, extra = load_vae_checkpoint(path)
        _, arrays, _, _ = load_checkpoint(path)
        resumed = Adam(again.params, lr=1e-3)
        resumed.load_state_arrays(arrays, extra["adam_step"])
        assert resumed.step_count == 1
        for name in again.params.names():
            assert np.allclose(resumed.m[name], adam.m[name])
            assert np.allclose(resumed.v[name], adam.v[name])

    def test_missing_vae_reference(self, tmp_path):
        vocab = build_vocabulary(["C4"])
        vae = tiny_vae(len(vocab))
        vae_path = tmp_path / "vae.ckpt"
        save_vae_checkpoint(vae_path, vae, vocab)
        bridge_path = tmp_path / "bridge.ckpt"
        save_bridge_checkpoint(bridge_path, tiny_bridge(), vae_path)
        vae_path.unlink()
        with pytest.raises(CheckpointMismatch):
            load_inpaint_checkpoint(bridge_path)
