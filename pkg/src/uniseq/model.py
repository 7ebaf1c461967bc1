"""Multi-scale causal transformer over patch sequences.

A global transformer runs over patches (one patch per audio frame or per
repeated non-audio token); its output at patch t-1, linearly projected,
is injected as context into a local transformer that predicts the n_q
tokens of patch t autoregressively. Audio patches embed as the sum of
their code embeddings; repeated discrete patches as the single token
embedding; continuous patches as a linear projection of their vector.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from . import nn
from .autograd import Tensor, concat, softmax_cross_entropy, take
from .nn import AttentionCounter, Stack, transformer_stack
from .taskformat import (
    KIND_CONTINUOUS,
    KIND_DISCRETE,
    PatchSequence,
    TaskSequence,
    to_patches,
)

__all__ = [
    "ModelConfig",
    "ModelParams",
    "init_params",
    "PatchBatch",
    "stack_patches",
    "patch_embed",
    "global_forward",
    "local_forward",
    "forward_loss",
    "train_step",
    "save_model",
    "load_model",
]


@dataclass
class ModelConfig:
    n_q: int = 3
    vocab_size: int = 4212
    d_global: int = 64
    global_layers: int = 4
    global_heads: int = 4
    d_local: int = 64
    local_layers: int = 2
    local_heads: int = 4
    ff_global: int | None = None
    ff_local: int | None = None
    cont_dim: int = 16
    max_patches: int = 3000

    def __post_init__(self):
        if self.d_global % self.global_heads or self.d_local % self.local_heads:
            raise ValueError("width must be divisible by head count")
        if self.n_q < 1:
            raise ValueError("n_q must be >= 1")


@dataclass
class ModelParams:
    e_global: Tensor      # (V, D_g) token embeddings for the patch embedder
    e_local: Tensor       # (V, D_l) token embeddings for the local model
    pos_global: Tensor    # (max_patches, D_g)
    pos_local: Tensor     # (n_q, D_l)
    global_stack: Stack
    local_stack: Stack
    w_ctx: Tensor         # (D_g, D_l) patch-context projection
    cont_proj: Tensor     # (E, D_g) continuous payload projection
    out_w: Tensor         # (D_l, V)
    out_b: Tensor         # (V,)
    start_emb: Tensor     # (D_l,) start-of-patch input embedding
    init_ctx: Tensor      # (D_g,) context for the first patch


def init_params(config: ModelConfig, seed: int = 0) -> ModelParams:
    rng = np.random.default_rng(seed)
    dg, dl, v = config.d_global, config.d_local, config.vocab_size

    def emb(n, d, scale=0.02):
        return Tensor(rng.normal(0.0, scale, size=(n, d)))

    return ModelParams(
        e_global=emb(v, dg),
        e_local=emb(v, dl),
        pos_global=emb(config.max_patches, dg),
        pos_local=emb(config.n_q, dl),
        global_stack=nn.init_stack(rng, dg, config.global_heads,
                                   config.global_layers, config.ff_global),
        local_stack=nn.init_stack(rng, dl, config.local_heads,
                                  config.local_layers, config.ff_local),
        w_ctx=Tensor(rng.normal(0.0, 1.0 / np.sqrt(dg), size=(dg, dl))),
        cont_proj=Tensor(rng.normal(0.0, 1.0 / np.sqrt(config.cont_dim),
                                    size=(config.cont_dim, dg))),
        out_w=Tensor(rng.normal(0.0, 1.0 / np.sqrt(dl), size=(dl, v))),
        out_b=Tensor(np.zeros(v)),
        start_emb=Tensor(rng.normal(0.0, 0.02, size=dl)),
        init_ctx=Tensor(rng.normal(0.0, 0.02, size=dg)),
    )


def attach_counter(params: ModelParams, counter: AttentionCounter | None) -> None:
    params.global_stack.counter = counter
    params.local_stack.counter = counter


@dataclass
class PatchBatch:
    """Same-shape patch sequences stacked along a batch axis."""

    kinds: np.ndarray        # (B, K)
    targets: np.ndarray      # (B, K, n_q)
    cont: np.ndarray         # (B, K, E)
    n_q: int
    target_start: np.ndarray  # (B,) first target-frame patch per sequence

    @property
    def B(self) -> int:
        return self.kinds.shape[0]

    @property
    def K(self) -> int:
        return self.kinds.shape[1]


def stack_patches(seqs: list[PatchSequence], cont_dim: int) -> PatchBatch:
    if not seqs:
        raise ValueError("empty batch")
    k = seqs[0].K
    if any(s.K != k or s.n_q != seqs[0].n_q for s in seqs):
        raise ValueError("batched patch sequences must share shape")
    cont = np.zeros((len(seqs), k, cont_dim))
    for i, s in enumerate(seqs):
        if s.cont.shape[1] == cont_dim:
            cont[i] = s.cont
    return PatchBatch(
        kinds=np.stack([s.kinds for s in seqs]),
        targets=np.stack([s.targets for s in seqs]),
        cont=cont,
        n_q=seqs[0].n_q,
        target_start=np.array([s.target_start for s in seqs]),
    )


def _as_batch(x, config: ModelConfig) -> PatchBatch:
    if isinstance(x, PatchBatch):
        return x
    if isinstance(x, TaskSequence):
        x = to_patches(x, config.n_q, cont_dim=config.cont_dim,
                       max_patches=config.max_patches)
    if isinstance(x, PatchSequence):
        return stack_patches([x], config.cont_dim)
    raise TypeError(f"cannot batch {type(x).__name__}")


def patch_embed(batch: PatchBatch, params: ModelParams) -> Tensor:
    """(B, K, D_g) patch vectors with patch-position embeddings added."""
    if batch.targets.max() >= params.e_global.shape[0]:
        raise ValueError("token id out of vocabulary range")
    if batch.K > params.pos_global.shape[0]:
        raise ValueError(f"{batch.K} patches exceed max context "
                         f"{params.pos_global.shape[0]}")
    n_q = batch.n_q
    summed = take(params.e_global, batch.targets).sum(axis=2)  # (B, K, D_g)
    scale = np.ones(batch.kinds.shape)
    scale[batch.kinds == KIND_DISCRETE] = 1.0 / n_q  # mean of the n_q repeats
    scale[batch.kinds == KIND_CONTINUOUS] = 0.0      # replaced by the projection
    h = summed * Tensor(scale[..., None], requires_grad=False)
    if (batch.kinds == KIND_CONTINUOUS).any():
        cmask = (batch.kinds == KIND_CONTINUOUS).astype(float)[..., None]
        cont = Tensor(batch.cont * cmask, requires_grad=False)
        h = h + cont @ params.cont_proj
    return h + params.pos_global[: batch.K]


def global_forward(h: Tensor, params: ModelParams) -> Tensor:
    """Causal transformer over patches: (B, K, D_g) -> (B, K, D_g)."""
    if h.shape[-2] > params.pos_global.shape[0]:
        raise ValueError(f"{h.shape[-2]} patches exceed max context "
                         f"{params.pos_global.shape[0]}")
    return transformer_stack(h, params.global_stack)


def _shift_contexts(global_out: Tensor, params: ModelParams, b: int) -> Tensor:
    """Context for patch t is the global output at t-1; patch 0 gets the
    learned initial context."""
    first = params.init_ctx.reshape(1, 1, -1) * Tensor(np.ones((b, 1, 1)),
                                                       requires_grad=False)
    return concat([first, global_out[:, :-1]], axis=1)


def local_forward(ctx: Tensor, targets: np.ndarray, params: ModelParams) -> Tensor:
    """Per-patch logits (B, K, n_q, V) from shifted within-patch inputs
    plus the projected global context."""
    b, k, n_q = targets.shape
    in_ids = np.zeros_like(targets)
    in_ids[..., 1:] = targets[..., :-1]
    emb = take(params.e_local, in_ids)                       # (B, K, n_q, D_l)
    keep = np.ones((1, 1, n_q, 1))
    keep[0, 0, 0, 0] = 0.0  # position 0 uses the start-of-patch embedding
    emb = emb * Tensor(keep, requires_grad=False) + params.start_emb * Tensor(
        1.0 - keep, requires_grad=False)
    x = emb + (ctx @ params.w_ctx).reshape(b, k, 1, -1) + params.pos_local
    dl = params.pos_local.shape[-1]
    y = transformer_stack(x.reshape(b * k, n_q, dl), params.local_stack)
    logits = y @ params.out_w + params.out_b
    return logits.reshape(b, k, n_q, -1)


def loss_mask(batch: PatchBatch, mode: str = "all") -> np.ndarray:
    """(B, K, n_q) boolean mask of supervised positions."""
    b, k = batch.kinds.shape
    mask = np.ones((b, k, batch.n_q), dtype=bool)
    mask[:, 0] = False  # never predict the <start> patch
    if mode == "target-only":
        for i, start in enumerate(batch.target_start):
            if start < 0:
                raise ValueError("sequence has no target span")
            mask[i, :start] = False
    elif mode != "all":
        raise ValueError(f"unknown loss mask mode {mode!r}")
    return mask


def forward_loss(x, params: ModelParams, config: ModelConfig,
                 loss_mask_mode: str = "all"):
    """Teacher-forced loss and logits for a TaskSequence, PatchSequence
    or PatchBatch."""
    batch = _as_batch(x, config)
    h = patch_embed(batch, params)
    ctx = _shift_contexts(global_forward(h, params), params, batch.B)
    logits = local_forward(ctx, batch.targets, params)
    mask = loss_mask(batch, loss_mask_mode)
    loss = softmax_cross_entropy(logits, batch.targets, mask)
    return loss, logits


def train_step(x, params: ModelParams, state: nn.OptimizerState,
               config: ModelConfig, loss_mask_mode: str = "all") -> float:
    """One optimizer step on the mean batch loss; returns the loss value."""
    flat = nn.flatten_params(params)
    for p in flat.values():
        p.grad = None
    loss, _ = forward_loss(x, params, config, loss_mask_mode)
    loss.backward()
    nn.optimizer_step(flat, nn.collect_grads(flat), state)
    return loss.item()


def make_optimizer(params: ModelParams, peak_lr: float = 1e-3,
                   warmup: int = 100) -> nn.OptimizerState:
    return nn.OptimizerState.for_params(nn.flatten_params(params),
                                        peak_lr=peak_lr, warmup=warmup)


def predict_tokens(x, params: ModelParams, config: ModelConfig) -> np.ndarray:
    """Teacher-forced argmax prediction: (B, K, n_q) token ids."""
    _, logits = forward_loss(x, params, config)
    return np.argmax(logits.data, axis=-1)


def save_model(path, params: ModelParams, config: ModelConfig) -> None:
    nn.save_checkpoint(path, nn.flatten_params(params))
    with open(str(path) + ".json", "w") as f:
        json.dump(config.__dict__, f, indent=2)


def load_model(path) -> tuple[ModelParams, ModelConfig]:
    with open(str(path) + ".json") as f:
        config = ModelConfig(**json.load(f))
    params = init_params(config, seed=0)
    nn.load_into(params, nn.load_checkpoint(path))
    return params, config
