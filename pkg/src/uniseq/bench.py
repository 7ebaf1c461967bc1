"""Synthetic corpora, training drivers, and the complexity benchmark.

Corpora are generated from pure seeded rules so train/eval splits are
reproducible and disjoint. The benchmark times training iterations of
each architecture on identical grids, records exact attention-pair
counters, and checks them against the closed-form costs.
"""

from __future__ import annotations

import csv
import hashlib
import time
from dataclasses import dataclass

import numpy as np

from . import nn
from .baselines import baseline_loss, baseline_train_step, make_baseline
from .layouts import attention_cost
from .model import (
    ModelConfig,
    PatchBatch,
    attach_counter,
    forward_loss,
    init_params,
    make_optimizer,
    predict_tokens,
    stack_patches,
    train_step,
)
from .nn import AttentionCounter, parameter_count
from .taskformat import (
    KIND_AUDIO,
    TaskSequence,
    Vocabulary,
    build_vocab,
    default_templates,
    resample_weights,
    serialize_task,
    SPECIAL_SIZE,
)

__all__ = [
    "SyntheticTaskSpec",
    "bench_vocab",
    "mixture_corpus",
    "gen_synthetic_task",
    "BenchRecord",
    "run_benchmark",
    "fit_scaling_exponent",
    "run_multitask_study",
    "write_csv",
    "token_accuracy",
    "train_on_corpora",
]


# ---------------------------------------------------------------------------
# Synthetic tasks
# ---------------------------------------------------------------------------

@dataclass
class SyntheticTaskSpec:
    task: str = "token_tts"       # token_tts | denoise
    n_train: int = 2000
    n_eval: int = 200
    T: int = 16
    n_q: int = 3
    alphabet: int = 32
    codebook_size: int = 32
    seed: int = 0


def bench_vocab(n_q: int, codebook_size: int, alphabet: int = 32) -> Vocabulary:
    return build_vocab([
        ("special", SPECIAL_SIZE),
        ("audio", n_q * codebook_size),
        ("semantic", 16),
        ("phoneme", max(alphabet, 1)),
        ("midi", 16),
    ])


def mixture_corpus(n_frames: int = 2048, latent_dim: int = 16,
                   seed: int = 101) -> np.ndarray:
    """Mixture of eight collinear Gaussians used to probe quantization.

    The component means are equally spaced along one latent direction and
    the component widths overlap, so the 1-D marginal is close to uniform.
    On such a corpus residual quantization is nearly idempotent: decoded
    frames re-encode to their own codes except at cell-boundary near-ties.
    The end components are narrowed and down-weighted to tame the tails,
    which would otherwise widen the outermost quantizer cells.
    """
    rng = np.random.default_rng(seed)
    d = rng.normal(size=latent_dim)
    d /= np.linalg.norm(d)
    center = rng.normal(0.0, 1.0, size=latent_dim)
    sig = np.full(8, 0.5)
    sig[0] = sig[7] = 0.35
    w = np.ones(8)
    w[0] = w[7] = 0.7
    w /= w.sum()
    comp = rng.choice(8, size=n_frames, p=w)
    coef = (comp - 3.5) + rng.normal(0.0, 1.0, size=n_frames) * sig[comp]
    return center + coef[:, None] * d


def _dedup_rows(rows: np.ndarray) -> np.ndarray:
    seen = set()
    keep = []
    for i, row in enumerate(rows):
        h = hashlib.sha1(row.tobytes()).digest()
        if h not in seen:
            seen.add(h)
            keep.append(i)
    return rows[keep]


def gen_synthetic_task(spec: SyntheticTaskSpec, vocab: Vocabulary
                       ) -> tuple[list[TaskSequence], list[TaskSequence]]:
    """Deterministic (train, eval) corpora; the eval set never overlaps
    the train set (sequences are deduplicated before the split)."""
    if spec.alphabet > vocab.size_of("phoneme"):
        raise ValueError("alphabet exceeds the phoneme vocabulary range")
    templates = default_templates()
    rng = np.random.default_rng(spec.seed)
    total = spec.n_train + spec.n_eval
    v = spec.codebook_size

    if spec.task == "token_tts":
        # target code z_t^k = f(symbol_t, k) for a seeded permutation table
        table = np.stack([rng.permutation(v)[: spec.alphabet]
                          if v >= spec.alphabet else
                          rng.integers(0, v, spec.alphabet)
                          for _ in range(spec.n_q)], axis=1)  # (alphabet, n_q)
        symbols = _dedup_rows(rng.integers(0, spec.alphabet, (2 * total, spec.T)))
        if symbols.shape[0] < total:
            raise ValueError("not enough distinct sequences for this spec")
        symbols = symbols[:total]
        template = templates["tts"]
        prompt = np.zeros((1, spec.n_q), dtype=np.int64)
        seqs = [serialize_task(vocab, template,
                               {"phoneme": list(row), "prompt": prompt},
                               table[row], spec.n_q)
                for row in symbols]
    elif spec.task == "denoise":
        # clean codes live in [0, v/2); corruption adds v/2 at 20% of cells
        half = v // 2
        clean = _dedup_rows(rng.integers(0, half, (2 * total, spec.T * spec.n_q)))
        if clean.shape[0] < total:
            raise ValueError("not enough distinct sequences for this spec")
        clean = clean[:total].reshape(total, spec.T, spec.n_q)
        template = templates["se"]
        seqs = []
        for grid in clean:
            corrupt = grid.copy()
            hits = rng.random(grid.shape) < 0.2
            corrupt[hits] += half
            seqs.append(serialize_task(vocab, template, {"acond": corrupt},
                                       grid, spec.n_q))
    else:
        raise ValueError(f"unknown synthetic task {spec.task!r}")
    return seqs[: spec.n_train], seqs[spec.n_train:]


# ---------------------------------------------------------------------------
# Training / evaluation drivers
# ---------------------------------------------------------------------------

def train_on_corpora(corpora: dict[str, list[TaskSequence]], config: ModelConfig,
                     steps: int, batch_size: int = 8, alpha: float = 0.05,
                     peak_lr: float = 2e-3, warmup: int = 200, seed: int = 0,
                     loss_mask_mode: str = "target-only", log_every: int = 0):
    """Train one model over one or more task corpora with task resampling."""
    names = sorted(corpora)
    probs = resample_weights([len(corpora[n]) for n in names], alpha)
    params = init_params(config, seed=seed)
    state = make_optimizer(params, peak_lr=peak_lr, warmup=warmup)
    rng = np.random.default_rng(seed + 1)
    losses = []
    for step in range(steps):
        task = names[rng.choice(len(names), p=probs)]
        pool = corpora[task]
        idx = rng.choice(len(pool), size=min(batch_size, len(pool)), replace=False)
        batch = stack_patches([_patchify(pool[i], config) for i in idx],
                              config.cont_dim)
        losses.append(train_step(batch, params, state, config, loss_mask_mode))
        if log_every and (step + 1) % log_every == 0:
            recent = np.mean(losses[-log_every:])
            print(f"step {step + 1}/{steps} loss {recent:.4f}")
    return params, losses


def _patchify(seq: TaskSequence, config: ModelConfig):
    from .taskformat import to_patches

    return to_patches(seq, config.n_q, cont_dim=config.cont_dim,
                      max_patches=config.max_patches)


def token_accuracy(params, config: ModelConfig, seqs: list[TaskSequence],
                   batch_size: int = 32) -> float:
    """Teacher-forced exact-match accuracy over target-span audio cells."""
    correct = total = 0
    for i in range(0, len(seqs), batch_size):
        batch = stack_patches([_patchify(s, config) for s in seqs[i:i + batch_size]],
                              config.cont_dim)
        pred = predict_tokens(batch, params, config)
        for b in range(batch.B):
            start = batch.target_start[b]
            frames = batch.kinds[b] == KIND_AUDIO
            frames[:start] = False
            sel = pred[b][frames] == batch.targets[b][frames]
            correct += sel.sum()
            total += sel.size
    return correct / total


# ---------------------------------------------------------------------------
# Complexity benchmark
# ---------------------------------------------------------------------------

@dataclass
class BenchRecord:
    arch: str
    T: int
    n_q: int
    ms_per_iter: float
    attn_pairs: int
    param_count: int


def _audio_batch(t: int, n_q: int, codebook_size: int, audio_offset: int,
                 rng: np.random.Generator, cont_dim: int) -> PatchBatch:
    codes = rng.integers(0, codebook_size, (t, n_q))
    levels = np.arange(n_q)[None, :]
    ids = audio_offset + levels * codebook_size + codes
    return PatchBatch(
        kinds=np.zeros((1, t), dtype=np.int8),
        targets=ids[None],
        cont=np.zeros((1, t, cont_dim)),
        n_q=n_q,
        target_start=np.array([0]),
    )


def _multiscale_config(t: int, n_q: int, vocab: Vocabulary,
                       width: int = 64) -> ModelConfig:
    return ModelConfig(n_q=n_q, vocab_size=vocab.total, d_global=width,
                       global_layers=4, global_heads=4, d_local=width,
                       local_layers=2, local_heads=4, cont_dim=16,
                       max_patches=max(t, 8))


def _matched_baseline(arch: str, t: int, n_q: int, vocab: Vocabulary,
                      codebook_size: int, budget: int, width: int = 64,
                      seed: int = 0):
    """Baseline with the feed-forward width solved so its parameter count
    lands within the shared budget."""
    layers = 6  # matches the multiscale 4 global + 2 local layers
    max_len = t * n_q + n_q
    audio_offset = SPECIAL_SIZE

    def build(ff):
        return make_baseline(arch, n_q, vocab.total, codebook_size, audio_offset,
                             width, 4, layers, max_len, ff=ff, seed=seed)

    base = parameter_count(build(1))
    per_ff = (parameter_count(build(2)) - base)  # params per ff unit
    ff = max(1, round((budget - base) / per_ff))
    return build(ff)


def run_benchmark(archs: list[str], grid: list[tuple[int, int]],
                  codebook_size: int = 64, seed: int = 0, iters: int = 20,
                  warmup: int = 3) -> list[BenchRecord]:
    """Median per-iteration training time and exact cost counters for each
    architecture at each (T, n_q) cell. All architectures at one cell are
    built to the multiscale parameter budget (asserted within 10%)."""
    records = []
    for t, n_q in grid:
        vocab = bench_vocab(n_q, codebook_size)
        rng = np.random.default_rng(seed)
        config = _multiscale_config(t, n_q, vocab)
        ms_params = init_params(config, seed=seed)
        budget = parameter_count(ms_params)
        for arch in archs:
            counter = AttentionCounter()
            if arch == "multiscale":
                params = ms_params
                attach_counter(params, None)
                state = make_optimizer(params, peak_lr=1e-4, warmup=1000)
                batch = _audio_batch(t, n_q, codebook_size, SPECIAL_SIZE, rng,
                                     config.cont_dim)
                n_params = budget

                def iteration():
                    train_step(batch, params, state, config)

                attach_counter(params, counter)
                forward_loss(batch, params, config)
                attach_counter(params, None)
                expect, _ = attention_cost("multiscale", t, n_q,
                                           (config.global_layers,
                                            config.local_layers))
            else:
                model = _matched_baseline(arch, t, n_q, vocab, codebook_size,
                                          budget, seed=seed)
                n_params = parameter_count(model)
                if abs(n_params - budget) > 0.1 * budget:
                    raise AssertionError(
                        f"{arch}: parameter budget {n_params} outside 10% of "
                        f"{budget}")
                state = nn.OptimizerState.for_params(nn.flatten_params(model),
                                                     peak_lr=1e-4, warmup=1000)
                codes = rng.integers(0, codebook_size, (t, n_q))

                def iteration(model=model, codes=codes, state=state):
                    baseline_train_step(model, codes, state)

                model.stack.counter = counter
                baseline_loss(model, codes)
                model.stack.counter = None
                expect, _ = attention_cost(arch, t, n_q, 6)

            if counter.pairs != expect:
                raise AssertionError(
                    f"{arch} T={t} n_q={n_q}: counted {counter.pairs} attention "
                    f"pairs, closed form {expect}")
            for _ in range(warmup):
                iteration()
            times = []
            for _ in range(iters):
                t0 = time.perf_counter()
                iteration()
                times.append((time.perf_counter() - t0) * 1e3)
            records.append(BenchRecord(arch, t, n_q, float(np.median(times)),
                                       expect, n_params))
    return records


def fit_scaling_exponent(records: list[BenchRecord],
                         cost=lambda r: r.attn_pairs) -> float:
    """Least-squares slope of log(cost) against log(T)."""
    ts = np.array([r.T for r in records], dtype=np.float64)
    cs = np.array([cost(r) for r in records], dtype=np.float64)
    if np.unique(ts).size < 3:
        raise ValueError("need at least 3 distinct T values")
    if np.all(cs == cs[0]):
        return 0.0
    slope, _ = np.polyfit(np.log(ts), np.log(cs), 1)
    return float(slope)


def write_csv(path, records: list[BenchRecord]) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["arch", "T", "n_q", "ms_per_iter", "attn_pairs",
                    "param_count"])
        for r in records:
            w.writerow([r.arch, r.T, r.n_q, f"{r.ms_per_iter:.3f}",
                        r.attn_pairs, r.param_count])


# ---------------------------------------------------------------------------
# Multi-task study
# ---------------------------------------------------------------------------

def run_multitask_study(specs: list[SyntheticTaskSpec], alpha: float = 0.05,
                        steps: int = 3000, batch_size: int = 8,
                        config: ModelConfig | None = None, seed: int = 0
                        ) -> dict[str, dict[str, float]]:
    """Joint model with task resampling vs one model per task, equal step
    budget; returns held-out accuracies keyed by task."""
    if len(specs) < 2:
        raise ValueError("need at least two tasks")
    if len({(s.n_q, s.codebook_size) for s in specs}) != 1:
        raise ValueError("tasks must share the audio vocabulary")
    vocab = bench_vocab(specs[0].n_q, specs[0].codebook_size,
                        max(s.alphabet for s in specs))
    if config is None:
        config = ModelConfig(n_q=specs[0].n_q, vocab_size=vocab.total,
                             max_patches=512)
    train: dict[str, list[TaskSequence]] = {}
    evals: dict[str, list[TaskSequence]] = {}
    for s in specs:
        tr, ev = gen_synthetic_task(s, vocab)
        train[s.task], evals[s.task] = tr, ev

    joint, _ = train_on_corpora(train, config, steps, batch_size, alpha,
                                seed=seed)
    result = {task: {"joint": token_accuracy(joint, config, evals[task])}
              for task in train}
    for task in train:
        single, _ = train_on_corpora({task: train[task]}, config, steps,
                                     batch_size, alpha, seed=seed)
        result[task]["single"] = token_accuracy(single, config, evals[task])
    return result
