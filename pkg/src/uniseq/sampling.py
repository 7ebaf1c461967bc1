"""Top-k temperature sampling and the two-level generation loop.

The global model advances frame by frame; all sampling happens in the
local model, token by token within the current patch. Decoding is
range-constrained by default: inside the target span only audio codes of
the right level (or the end marker at the patch boundary) can be drawn.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autograd import Tensor
from .model import (
    ModelConfig,
    ModelParams,
    PatchBatch,
    global_forward,
    patch_embed,
)
from .nn import transformer_stack
from .taskformat import (
    KIND_AUDIO,
    KIND_DISCRETE,
    SPECIAL,
    TaskSequence,
    Vocabulary,
    to_patches,
)

__all__ = ["SamplingConfig", "top_k_sample", "generate", "GenerationResult"]


@dataclass
class SamplingConfig:
    k: int = 30
    temperature: float = 0.8
    seed: int = 0
    max_patches: int = 3000
    constrained: bool = True

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.temperature <= 0:
            raise ValueError("temperature must be > 0")


def top_k_sample(logits: np.ndarray, cfg: SamplingConfig,
                 rng: np.random.Generator) -> int:
    """Sample from the softmax of the k largest temperature-scaled logits.

    Ties at the cutoff keep the lower index; everything outside the kept
    set has probability exactly 0.
    """
    logits = np.asarray(logits, dtype=np.float64)
    if not np.all(np.isfinite(logits)):
        raise FloatingPointError("non-finite logits")
    if cfg.k > logits.size:
        raise ValueError(f"k={cfg.k} exceeds vocabulary {logits.size}")
    scaled = logits / cfg.temperature
    kept = np.argsort(-scaled, kind="stable")[: cfg.k]
    z = scaled[kept]
    p = np.exp(z - z.max())
    p /= p.sum()
    return int(kept[rng.choice(cfg.k, p=p)])


@dataclass
class GenerationResult:
    grid: np.ndarray  # (T, n_q) local audio codes
    status: str       # "ok" | "length-limit"


def _sample_patch(ctx_vec: np.ndarray, params: ModelParams, config: ModelConfig,
                  vocab: Vocabulary, cfg: SamplingConfig, n_codebook: int,
                  rng: np.random.Generator) -> list[int]:
    """Sample one patch token-by-token through the local model."""
    proj = ctx_vec @ params.w_ctx.data
    sampled: list[int] = []
    end_tok = SPECIAL["<audio_end>"]
    for j in range(config.n_q):
        d_l = config.d_local
        x = np.empty((1, j + 1, d_l))
        x[0, 0] = params.start_emb.data
        for i, tok in enumerate(sampled):
            x[0, i + 1] = params.e_local.data[tok]
        x += proj
        x += params.pos_local.data[: j + 1]
        y = transformer_stack(Tensor(x, requires_grad=False), params.local_stack)
        logits = (y.data[0, -1] @ params.out_w.data) + params.out_b.data

        if cfg.constrained:
            if j == 0:
                allowed = np.array([vocab.audio_id(0, c, config.n_q)
                                    for c in range(n_codebook)] + [end_tok])
            elif sampled[0] == end_tok:
                sampled.append(end_tok)  # end marker fills the whole patch
                continue
            else:
                allowed = np.array([vocab.audio_id(j, c, config.n_q)
                                    for c in range(n_codebook)])
            sub = SamplingConfig(k=min(cfg.k, allowed.size),
                                 temperature=cfg.temperature,
                                 constrained=cfg.constrained)
            sampled.append(int(allowed[top_k_sample(logits[allowed], sub, rng)]))
        else:
            sub = SamplingConfig(k=min(cfg.k, logits.size),
                                 temperature=cfg.temperature, constrained=False)
            sampled.append(top_k_sample(logits, sub, rng))
    return sampled


def generate(params: ModelParams, config: ModelConfig, vocab: Vocabulary,
             prefix: TaskSequence, cfg: SamplingConfig) -> GenerationResult:
    """Autoregressive decode: global context per patch, local sampling of
    the n_q codes, stopping at a sampled <audio_end> patch or the patch
    budget."""
    patches = to_patches(prefix, config.n_q, cont_dim=config.cont_dim,
                         max_patches=config.max_patches)
    if patches.kinds[-1] != KIND_DISCRETE or \
            patches.targets[-1, 0] != SPECIAL["<audio_start>"]:
        raise ValueError("prefix must end at the <audio_start> marker")
    if cfg.max_patches > config.max_patches:
        raise ValueError("max_patches exceeds model context")

    kinds = list(patches.kinds)
    targets = [list(row) for row in patches.targets]
    cont = [row for row in patches.cont]
    n_codebook = vocab.size_of("audio") // config.n_q
    rng = np.random.default_rng(cfg.seed)
    frames: list[list[int]] = []
    status = "length-limit"

    while len(kinds) < cfg.max_patches:
        batch = PatchBatch(
            kinds=np.array([kinds], dtype=np.int8),
            targets=np.array([targets], dtype=np.int64),
            cont=np.stack(cont)[None],
            n_q=config.n_q,
            target_start=np.array([-1]),
        )
        h = patch_embed(batch, params)
        ctx_vec = global_forward(h, params).data[0, -1]
        sampled = _sample_patch(ctx_vec, params, config, vocab, cfg,
                                n_codebook, rng)
        if sampled[0] == SPECIAL["<audio_end>"]:
            status = "ok"
            break
        frames.append([vocab.audio_code(t, config.n_q)[1] for t in sampled])
        kinds.append(KIND_AUDIO)
        targets.append(sampled)
        cont.append(np.zeros(config.cont_dim))

    grid = (np.array(frames, dtype=np.int64) if frames
            else np.zeros((0, config.n_q), dtype=np.int64))
    return GenerationResult(grid=grid, status=status)
