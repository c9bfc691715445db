"""Command-line interface.

Subcommands: ingest, train-vae, train-inpaint, eval, sweep, inpaint, serve.
Training options come from an optional JSON config file (``--config``) whose
top-level keys are "train", "vae", and "bridge"; individual flags override
the "train" section.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .abc_ingest import ingest_directory, load_corpus_dir, save_corpus_dir
from .bridge import MODES, BridgeConfig
from .codec import TokenSequence, dump_token_lines, load_token_text
from .training import (
    EvalSplitPolicy,
    TrainConfig,
    evaluate_nll,
    load_inpaint_checkpoint,
    load_vae_checkpoint,
    nll_sweep,
    save_bridge_checkpoint,
    save_vae_checkpoint,
    sweep_to_csv,
    train_bridge,
    train_vae,
)
from .vae import AutoencoderConfig


def _load_config_file(path: str | None) -> dict:
    if not path:
        return {}
    return json.loads(Path(path).read_text(encoding="utf-8"))


def _train_config(args, file_config: dict) -> TrainConfig:
    cfg = TrainConfig.from_dict({**TrainConfig().to_dict(), **file_config.get("train", {})})
    for name in ("epochs", "batch_size", "seed", "lr", "patience", "max_steps"):
        value = getattr(args, name, None)
        if value is not None:
            setattr(cfg, name, value)
    return cfg


def _add_train_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON config file (train/vae/bridge sections)")
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--patience", type=int)
    p.add_argument("--max-steps", dest="max_steps", type=int)


def cmd_ingest(args) -> int:
    ratios = tuple(float(r) for r in args.ratios.split(","))
    split, manifest = ingest_directory(args.directory, measures=args.measures,
                                       stride=args.stride, ratios=ratios, seed=args.seed)
    from .codec import build_vocabulary

    tokens = []
    for group in (split.train, split.valid, split.test):
        for win in group:
            tokens.extend(win.tokens)
    vocab = build_vocabulary(tokens)
    save_corpus_dir(split, vocab, args.out, args.measures, manifest)
    accepted = sum(1 for m in manifest if m["accepted"])
    print(f"ingested {len(manifest)} tunes: {accepted} accepted, "
          f"{len(manifest) - accepted} rejected")
    print(f"windows: train={len(split.train)} valid={len(split.valid)} "
          f"test={len(split.test)}  vocab={len(vocab)} tokens")
    print(f"corpus written to {args.out}")
    return 0


def cmd_train_vae(args) -> int:
    windows, vocab, _ = load_corpus_dir(args.corpus)
    file_config = _load_config_file(args.config)
    tc = _train_config(args, file_config)
    vae_cfg = AutoencoderConfig(**{"vocab_size": len(vocab),
                                   **file_config.get("vae", {})})
    train = windows["train"].reshape(-1, 24)
    valid = windows["valid"].reshape(-1, 24)
    model, metrics = train_vae(train, valid if len(valid) else None, vae_cfg, tc,
                               log_every=args.log_every)
    digest = save_vae_checkpoint(args.out, model, vocab, tc)
    if args.metrics:
        metrics.save_jsonl(args.metrics)
    print(f"saved {args.out} (sha256 {digest[:12]}...)")
    return 0


def cmd_train_inpaint(args) -> int:
    windows, _, _ = load_corpus_dir(args.corpus)
    file_config = _load_config_file(args.config)
    tc = _train_config(args, file_config)
    vae, _, _, _ = load_vae_checkpoint(args.vae)
    bridge_cfg = BridgeConfig(**{"latent_dim": vae.config.latent_dim,
                                 "mode": args.mode,
                                 **file_config.get("bridge", {})})
    valid = windows["valid"] if len(windows["valid"]) else None
    model, metrics = train_bridge(windows["train"], valid, vae, bridge_cfg, tc,
                                  log_every=args.log_every)
    digest = save_bridge_checkpoint(args.out, model.bridge, args.vae, tc)
    if args.metrics:
        metrics.save_jsonl(args.metrics)
    print(f"saved {args.out} (sha256 {digest[:12]}...)")
    return 0


def cmd_eval(args) -> int:
    windows, _, _ = load_corpus_dir(args.corpus)
    model, _, _ = load_inpaint_checkpoint(args.checkpoint, vae_path=args.vae)
    if args.n_p is not None and args.n_i is not None:
        policy = EvalSplitPolicy(n_p=args.n_p, n_i=args.n_i)
    else:
        policy = EvalSplitPolicy(seed=args.policy_seed)
    nll = evaluate_nll(model, windows[args.split], policy, z_mode=args.z_mode)
    print(f"{nll:.6f} nats/token over {len(windows[args.split])} {args.split} windows")
    return 0


def cmd_sweep(args) -> int:
    windows, _, _ = load_corpus_dir(args.corpus)
    model, _, _ = load_inpaint_checkpoint(args.checkpoint, vae_path=args.vae)
    total = windows[args.split].shape[1]
    top = min(8, total - 2)  # one context measure must remain on each side
    rows = nll_sweep(model, windows[args.split], n_i_values=range(2, top + 1),
                     z_mode=args.z_mode)
    csv = sweep_to_csv(rows)
    if args.out:
        Path(args.out).write_text(csv, encoding="utf-8")
        print(f"wrote {args.out}")
    else:
        sys.stdout.write(csv)
    return 0


def cmd_inpaint(args) -> int:
    from .service import ModelBundle, run_inpaint

    model, vocab, info = load_inpaint_checkpoint(args.checkpoint, vae_path=args.vae)
    bundle = ModelBundle(model, vocab, info)
    seq = load_token_text(args.score, vocab)
    tokens = np.array(vocab.encode(seq.tokens), dtype=np.int64).reshape(-1, 24)
    n = tokens.shape[0]
    start, count = args.from_measure, args.count
    if not (1 <= start and start + count <= n - 1):
        print(f"error: mask [{start}, {start + count}) must leave context on both "
              f"sides of the {n}-measure score", file=sys.stderr)
        return 2
    samples = run_inpaint(bundle, tokens, start, count, args.samples, args.seed,
                          args.z_mode)
    for k, sample in enumerate(samples):
        text = dump_token_lines(
            TokenSequence([t for row in sample["measures"] for t in row], vocab))
        if args.out_dir:
            out = Path(args.out_dir)
            out.mkdir(parents=True, exist_ok=True)
            (out / f"sample_{k}_seed{sample['seed']}.tokens").write_text(
                text, encoding="utf-8")
        else:
            sys.stdout.write(f"# sample {k} seed {sample['seed']}\n" + text)
    if args.out_dir:
        print(f"wrote {len(samples)} samples to {args.out_dir}")
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    app = create_app(checkpoint_path=args.checkpoint)
    uvicorn.run(app, host=args.host, port=args.port)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="melodyfill",
                                     description="measure-grid melody inpainting")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="parse and window a directory of .abc files")
    p.add_argument("directory")
    p.add_argument("--out", required=True)
    p.add_argument("--measures", type=int, default=16)
    p.add_argument("--stride", type=int, default=16)
    p.add_argument("--ratios", default="0.8,0.1,0.1")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("train-vae", help="pre-train the measure autoencoder")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--metrics")
    p.add_argument("--log-every", dest="log_every", type=int, default=1)
    _add_train_flags(p)
    p.set_defaults(func=cmd_train_vae)

    p = sub.add_parser("train-inpaint", help="train the latent bridge on a frozen autoencoder")
    p.add_argument("--corpus", required=True)
    p.add_argument("--vae", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--mode", choices=MODES, default="both")
    p.add_argument("--metrics")
    p.add_argument("--log-every", dest="log_every", type=int, default=1)
    _add_train_flags(p)
    p.set_defaults(func=cmd_train_inpaint)

    p = sub.add_parser("eval", help="token-wise NLL over gap tokens")
    p.add_argument("--corpus", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--vae", help="override the referenced autoencoder path")
    p.add_argument("--split", choices=("train", "valid", "test"), default="test")
    p.add_argument("--z-mode", dest="z_mode", default="mean")
    p.add_argument("--policy-seed", dest="policy_seed", type=int, default=0)
    p.add_argument("--n-p", dest="n_p", type=int)
    p.add_argument("--n-i", dest="n_i", type=int)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", help="NLL for gap sizes 2..8, centred")
    p.add_argument("--corpus", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--vae")
    p.add_argument("--split", choices=("train", "valid", "test"), default="test")
    p.add_argument("--z-mode", dest="z_mode", default="mean")
    p.add_argument("--out")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("inpaint", help="fill measures of a token text score")
    p.add_argument("score")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--vae")
    p.add_argument("--from", dest="from_measure", type=int, required=True)
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--samples", type=int, default=1)
    p.add_argument("--seed", type=int)
    p.add_argument("--z-mode", dest="z_mode", default="sample")
    p.add_argument("--out-dir", dest="out_dir")
    p.set_defaults(func=cmd_inpaint)

    p = sub.add_parser("serve", help="run the HTTP inpainting service")
    p.add_argument("--checkpoint", help="defaults to $INPAINT_CHECKPOINT")
    p.add_argument("--host", default="0.0.0.0")
    p.add_argument("--port", type=int,
                   default=int(os.environ.get("INPAINT_PORT", "8765")))
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
