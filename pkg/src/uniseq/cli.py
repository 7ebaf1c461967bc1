"""Command-line entry point.

Subcommands: codec-train, codec-encode, codec-decode, train, generate,
bench, multitask, inspect. Configuration is a JSON document with
sections codec/vocab/model/train/sample/bench; flags override config
fields and --seed (or UNISEQ_SEED) controls all randomness. Exit codes:
0 success, 1 usage error, 2 data or format error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import bench as bench_mod
from . import codec as codec_mod
from .bench import SyntheticTaskSpec, bench_vocab, gen_synthetic_task
from .layouts import LAYOUT_NAMES, get_layout, render_layout
from .model import ModelConfig, load_model, save_model
from .sampling import SamplingConfig, generate as generate_tokens
from .taskformat import default_templates, dump_tokens, serialize_prefix

DEFAULTS: dict = {
    "codec": {"hop": 320, "latent_dim": 320, "n_q": 3, "codebook_size": 1024,
              "transform_seed": 0, "kmeans_iters": 25},
    "vocab": {"codebook_size": 32},
    "model": {"d_global": 64, "global_layers": 4, "global_heads": 4,
              "d_local": 64, "local_layers": 2, "local_heads": 4,
              "cont_dim": 16, "max_patches": 3000},
    "train": {"task": "token_tts", "steps": 3000, "batch_size": 8,
              "n_train": 2000, "n_eval": 200, "T": 16, "alphabet": 32,
              "peak_lr": 2e-3, "warmup": 200, "alpha": 0.05,
              "loss_mask_mode": "target-only"},
    "sample": {"k": 30, "temperature": 0.8, "max_patches": 3000,
               "constrained": True},
    "bench": {"codebook_size": 64, "iters": 20, "warmup": 3},
}


class UsageError(Exception):
    pass


def load_config(path: str | None) -> dict:
    cfg = {sec: dict(vals) for sec, vals in DEFAULTS.items()}
    if path is None:
        return cfg
    with open(path) as f:
        doc = json.load(f)
    for sec, vals in doc.items():
        if sec not in cfg:
            raise UsageError(f"unknown config section {sec!r}")
        for key, val in vals.items():
            if key not in cfg[sec]:
                raise UsageError(f"unknown config key {sec}.{key}")
            cfg[sec][key] = val
    return cfg


def _seed(args) -> int:
    if args.seed is not None:
        return args.seed
    env = os.environ.get("UNISEQ_SEED")
    return int(env) if env else 0


def _codec_config(cfg: dict) -> codec_mod.CodecConfig:
    c = cfg["codec"]
    return codec_mod.CodecConfig(hop=c["hop"], latent_dim=c["latent_dim"],
                                 n_q=c["n_q"], codebook_size=c["codebook_size"],
                                 transform_seed=c["transform_seed"])


def cmd_codec_train(args, cfg) -> int:
    config = _codec_config(cfg)
    paths = sorted(Path(args.inp).glob("*.wav")) if Path(args.inp).is_dir() \
        else [Path(args.inp)]
    frames = []
    for p in paths:
        frames.append(codec_mod.analyze(codec_mod.read_wav(p), config))
    corpus = np.vstack(frames)
    books = codec_mod.train_codebooks(corpus, config,
                                      iters=cfg["codec"]["kmeans_iters"],
                                      seed=_seed(args))
    codec_mod.save_codebooks(args.out, books)
    print(f"trained {books.n_q}x{books.size} codebooks on "
          f"{corpus.shape[0]} frames -> {args.out}")
    return 0


def cmd_codec_encode(args, cfg) -> int:
    config = _codec_config(cfg)
    books = codec_mod.load_codebooks(args.books)
    sig = codec_mod.read_wav(args.inp)
    grid = codec_mod.rvq_encode(codec_mod.analyze(sig, config), books)
    codec_mod.save_grid(args.out, grid)
    print(f"{args.inp}: {grid.shape[0]} frames x {grid.shape[1]} levels "
          f"-> {args.out}")
    return 0


def cmd_codec_decode(args, cfg) -> int:
    config = _codec_config(cfg)
    books = codec_mod.load_codebooks(args.books)
    grid = codec_mod.load_grid(args.inp)
    frames = codec_mod.rvq_decode(grid, books)
    codec_mod.write_wav(args.out, codec_mod.synthesize(frames, config,
                                                       args.rate))
    print(f"{args.inp}: decoded {grid.shape[0]} frames -> {args.out}")
    return 0


def _model_config(cfg, vocab, n_q: int) -> ModelConfig:
    m = cfg["model"]
    return ModelConfig(n_q=n_q, vocab_size=vocab.total, **m)


def _task_spec(cfg, seed: int) -> SyntheticTaskSpec:
    t = cfg["train"]
    return SyntheticTaskSpec(task=t["task"], n_train=t["n_train"],
                             n_eval=t["n_eval"], T=t["T"],
                             n_q=cfg["codec"]["n_q"], alphabet=t["alphabet"],
                             codebook_size=cfg["vocab"]["codebook_size"],
                             seed=seed)


def cmd_train(args, cfg) -> int:
    seed = _seed(args)
    spec = _task_spec(cfg, seed)
    vocab = bench_vocab(spec.n_q, spec.codebook_size, spec.alphabet)
    config = _model_config(cfg, vocab, spec.n_q)
    train, evals = gen_synthetic_task(spec, vocab)
    t = cfg["train"]
    params, losses = bench_mod.train_on_corpora(
        {spec.task: train}, config, t["steps"], t["batch_size"], t["alpha"],
        peak_lr=t["peak_lr"], warmup=t["warmup"], seed=seed,
        loss_mask_mode=t["loss_mask_mode"],
        log_every=100 if args.verbose else 0)
    acc = bench_mod.token_accuracy(params, config, evals)
    save_model(args.out, params, config)
    print(f"final loss {losses[-1]:.4f}, held-out token accuracy {acc:.3f} "
          f"-> {args.out}")
    return 0


def cmd_generate(args, cfg) -> int:
    seed = _seed(args)
    params, config = load_model(args.model)
    spec = _task_spec(cfg, seed)
    vocab = bench_vocab(spec.n_q, spec.codebook_size, spec.alphabet)
    _, evals = gen_synthetic_task(spec, vocab)
    templates = default_templates()
    from .taskformat import parse_task

    task, payloads, _ = parse_task(vocab, templates, evals[args.index])
    prefix = serialize_prefix(vocab, templates[task], payloads, spec.n_q)
    s = cfg["sample"]
    result = generate_tokens(params, config, vocab, prefix, SamplingConfig(
        k=s["k"], temperature=s["temperature"], seed=seed,
        max_patches=min(s["max_patches"], config.max_patches),
        constrained=s["constrained"]))
    codec_mod.save_grid(args.out, result.grid)
    print(f"generated {result.grid.shape[0]} frames ({result.status}) "
          f"-> {args.out}")
    if args.wav:
        books = codec_mod.load_codebooks(args.books)
        frames = codec_mod.rvq_decode(result.grid, books)
        codec_mod.write_wav(args.wav, codec_mod.synthesize(
            frames, _codec_config(cfg)))
        print(f"synthesized waveform -> {args.wav}")
    return 0


def cmd_bench(args, cfg) -> int:
    archs = args.archs.split(",")
    ts = [int(x) for x in args.T.split(",")]
    nqs = [int(x) for x in args.nq.split(",")]
    grid = [(t, n) for t in ts for n in nqs]
    b = cfg["bench"]
    records = bench_mod.run_benchmark(archs, grid,
                                      codebook_size=b["codebook_size"],
                                      seed=_seed(args), iters=b["iters"],
                                      warmup=b["warmup"])
    bench_mod.write_csv(args.out, records)
    for r in records:
        print(f"{r.arch:>12} T={r.T:<5} n_q={r.n_q} "
              f"{r.ms_per_iter:8.2f} ms/iter  pairs={r.attn_pairs}")
    print(f"wrote {len(records)} records -> {args.out}")
    return 0


def cmd_multitask(args, cfg) -> int:
    seed = _seed(args)
    t = cfg["train"]
    specs = [
        SyntheticTaskSpec(task="token_tts", n_train=t["n_train"],
                          n_eval=t["n_eval"], T=t["T"],
                          n_q=cfg["codec"]["n_q"], alphabet=t["alphabet"],
                          codebook_size=cfg["vocab"]["codebook_size"],
                          seed=seed),
        SyntheticTaskSpec(task="denoise", n_train=t["n_train"],
                          n_eval=t["n_eval"], T=t["T"],
                          n_q=cfg["codec"]["n_q"], alphabet=t["alphabet"],
                          codebook_size=cfg["vocab"]["codebook_size"],
                          seed=seed + 1),
    ]
    result = bench_mod.run_multitask_study(specs, alpha=t["alpha"],
                                           steps=t["steps"],
                                           batch_size=t["batch_size"],
                                           seed=seed)
    with open(args.out, "w") as f:
        json.dump(result, f, indent=2)
    for task, accs in result.items():
        print(f"{task}: joint {accs['joint']:.3f}  single {accs['single']:.3f}")
    return 0


def cmd_inspect(args, cfg) -> int:
    if args.layout:
        print(render_layout(get_layout(args.layout, args.T, args.nq)))
        return 0
    if args.task:
        seed = _seed(args)
        spec = _task_spec(cfg, seed)
        spec.task = args.task
        vocab = bench_vocab(spec.n_q, spec.codebook_size, spec.alphabet)
        train, _ = gen_synthetic_task(spec, vocab)
        print(dump_tokens(vocab, train[args.index]))
        return 0
    raise UsageError("inspect requires --layout or --task")


def build_parser() -> argparse.ArgumentParser:
    defaults_doc = json.dumps(DEFAULTS, indent=2)
    parser = argparse.ArgumentParser(
        prog="uniseq",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        description="Residual-VQ audio token pipeline with a multi-scale "
                    "causal transformer.",
        epilog="Config keys and defaults (JSON, flags override):\n"
               + defaults_doc)
    parser.add_argument("--config", help="JSON config file")
    parser.add_argument("--seed", type=int, default=None,
                        help="RNG seed (fallback: UNISEQ_SEED, then 0)")
    parser.add_argument("--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("codec-train", help="fit RVQ codebooks on WAV data")
    p.add_argument("--in", dest="inp", required=True,
                   help="WAV file or directory of WAV files")
    p.add_argument("--out", required=True, help="output UAC1 codebook file")

    p = sub.add_parser("codec-encode", help="WAV -> UAG1 token grid")
    p.add_argument("--books", required=True)
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("codec-decode", help="UAG1 token grid -> WAV")
    p.add_argument("--books", required=True)
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--rate", type=int, default=16000)

    p = sub.add_parser("train", help="train the multi-scale model on a "
                                     "synthetic task")
    p.add_argument("--out", required=True, help="output UAW1 checkpoint")

    p = sub.add_parser("generate", help="autoregressive generation from a "
                                        "held-out condition prefix")
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True, help="output UAG1 token grid")
    p.add_argument("--index", type=int, default=0,
                   help="held-out example index for the prefix")
    p.add_argument("--wav", help="also synthesize a waveform here")
    p.add_argument("--books", help="UAC1 codebooks (required with --wav)")

    p = sub.add_parser("bench", help="complexity benchmark -> CSV")
    p.add_argument("--archs", required=True,
                   help="comma list: flatten,coarse_first,parallel,delay,"
                        "multiscale")
    p.add_argument("--T", required=True, help="comma list of frame counts")
    p.add_argument("--nq", required=True, help="comma list of n_q values")
    p.add_argument("--out", required=True)

    p = sub.add_parser("multitask", help="joint vs single-task study -> JSON")
    p.add_argument("--out", required=True)

    p = sub.add_parser("inspect", help="render a layout or dump a sequence")
    p.add_argument("--layout", choices=LAYOUT_NAMES)
    p.add_argument("--T", type=int, default=3)
    p.add_argument("--nq", type=int, default=3)
    p.add_argument("--task", help="dump a serialized synthetic sequence")
    p.add_argument("--index", type=int, default=0)
    return parser


_COMMANDS = {
    "codec-train": cmd_codec_train,
    "codec-encode": cmd_codec_encode,
    "codec-decode": cmd_codec_decode,
    "train": cmd_train,
    "generate": cmd_generate,
    "bench": cmd_bench,
    "multitask": cmd_multitask,
    "inspect": cmd_inspect,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 1 if exc.code not in (0, None) else 0
    try:
        cfg = load_config(args.config)
        return _COMMANDS[args.command](args, cfg)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except (ValueError, KeyError, OSError, FloatingPointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
