"""Unified task serialization: joint vocabulary, templates, patching.

Every task is one token sequence shaped [conditions, target]: a start
token, a task-identifier token, each condition sub-sequence bracketed by
its own start/end markers, then the target audio grid flattened
frame-major inside audio markers, and a final end token. Continuous
text payloads travel out-of-band; the in-band stream holds one
<continuous_token> placeholder per vector so it stays integer-typed.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

__all__ = [
    "SPECIAL",
    "TASK_NAMES",
    "Vocabulary",
    "build_vocab",
    "default_vocab",
    "Slot",
    "TaskTemplate",
    "default_templates",
    "load_templates",
    "save_templates",
    "TaskSequence",
    "serialize_task",
    "serialize_prefix",
    "parse_task",
    "PatchSequence",
    "to_patches",
    "resample_weights",
    "dump_tokens",
]

# ---------------------------------------------------------------------------
# Special tokens: the first 128 vocabulary ids. Layout: control tokens,
# 11 task identifiers, then start/end marker pairs per sub-sequence kind;
# the rest of the 128 ids stay reserved.
# ---------------------------------------------------------------------------

TASK_NAMES = [
    "tts", "vc", "se", "tse", "svs", "music",
    "sound", "a_edit", "sd", "i_tts", "s_edit",
]

_SLOT_KINDS = ["text", "phoneme", "midi", "semantic", "prompt", "acond", "audio"]

SPECIAL: dict[str, int] = {"<start>": 0, "<end>": 1, "<continuous_token>": 2, "<empty>": 3}
for _i, _t in enumerate(TASK_NAMES):
    SPECIAL[f"<{_t}_task>"] = 4 + _i
_next = 4 + len(TASK_NAMES)
for _s in _SLOT_KINDS:
    SPECIAL[f"<{_s}_start>"] = _next
    SPECIAL[f"<{_s}_end>"] = _next + 1
    _next += 2

SPECIAL_SIZE = 128
_SPECIAL_NAMES = {v: k for k, v in SPECIAL.items()}


@dataclass
class Vocabulary:
    """Contiguous modality ranges over one joint id space."""

    ranges: list[tuple[str, int, int]]  # (name, offset, size)

    def __post_init__(self):
        self._offset = {name: off for name, off, _ in self.ranges}
        self._size = {name: size for name, _, size in self.ranges}

    @property
    def total(self) -> int:
        name, off, size = self.ranges[-1]
        return off + size

    def size_of(self, name: str) -> int:
        return self._size[name]

    def global_id(self, modality: str, local: int) -> int:
        if not 0 <= local < self._size[modality]:
            raise ValueError(f"local id {local} out of range for {modality}")
        return self._offset[modality] + local

    def to_local(self, gid: int) -> tuple[str, int]:
        for name, off, size in self.ranges:
            if off <= gid < off + size:
                return name, gid - off
        raise ValueError(f"token id {gid} outside vocabulary (total {self.total})")

    def audio_id(self, level: int, code: int, n_q: int) -> int:
        v = self._size["audio"] // n_q
        if not 0 <= code < v:
            raise ValueError(f"audio code {code} out of range")
        return self.global_id("audio", level * v + code)

    def audio_code(self, gid: int, n_q: int) -> tuple[int, int]:
        name, local = self.to_local(gid)
        if name != "audio":
            raise ValueError(f"token {gid} is not an audio token")
        v = self._size["audio"] // n_q
        return local // v, local % v


def build_vocab(spec: list[tuple[str, int]]) -> Vocabulary:
    """Assign cumulative offsets; the special range must come first."""
    if not spec:
        raise ValueError("empty vocabulary spec")
    if spec[0][0] != "special" or spec[0][1] != SPECIAL_SIZE:
        raise ValueError(f"first range must be ('special', {SPECIAL_SIZE})")
    seen = set()
    ranges = []
    offset = 0
    for name, size in spec:
        if name in seen:
            raise ValueError(f"duplicate range name {name}")
        if size < 1:
            raise ValueError(f"zero-size range {name}")
        seen.add(name)
        ranges.append((name, offset, size))
        offset += size
    return Vocabulary(ranges)


def default_vocab(n_q: int = 3, codebook_size: int = 1024) -> Vocabulary:
    """Shipped decomposition; totals 4212 at the default configuration."""
    return build_vocab([
        ("special", SPECIAL_SIZE),
        ("audio", n_q * codebook_size),
        ("semantic", 500),
        ("phoneme", 256),
        ("midi", 256),
    ])


# ---------------------------------------------------------------------------
# Task templates
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Slot:
    name: str        # marker kind, one of _SLOT_KINDS (except "audio")
    kind: str        # "discrete" | "audio_grid" | "continuous"
    modality: str = ""  # vocabulary range for discrete slots


@dataclass(frozen=True)
class TaskTemplate:
    name: str
    slots: tuple[Slot, ...]  # condition slots in order; target is always audio

    @property
    def task_token(self) -> int:
        return SPECIAL[f"<{self.name}_task>"]


def default_templates() -> dict[str, TaskTemplate]:
    """Condition layouts for the 11 tasks.

    TTS and VC follow the appendix layout (conditions, then speaker
    prompt, then target); the rest are reconstructed from the task
    definitions: corrupted-audio conditions use the acond markers,
    reference audio uses the prompt markers, instructions are continuous
    text.
    """
    audio = Slot("prompt", "audio_grid")
    spec = {
        "tts": [Slot("phoneme", "discrete", "phoneme"), audio],
        "vc": [Slot("semantic", "discrete", "semantic"), audio],
        "se": [Slot("acond", "audio_grid")],
        "tse": [Slot("acond", "audio_grid"), audio],
        "svs": [Slot("phoneme", "discrete", "phoneme"),
                Slot("midi", "discrete", "midi"), audio],
        "music": [Slot("text", "continuous")],
        "sound": [Slot("text", "continuous")],
        "a_edit": [Slot("text", "continuous"), Slot("acond", "audio_grid")],
        "sd": [Slot("acond", "audio_grid")],
        "i_tts": [Slot("text", "continuous"), Slot("phoneme", "discrete", "phoneme")],
        "s_edit": [Slot("phoneme", "discrete", "phoneme"), Slot("acond", "audio_grid")],
    }
    return {name: TaskTemplate(name, tuple(slots)) for name, slots in spec.items()}


def save_templates(path, templates: dict[str, TaskTemplate]) -> None:
    doc = {
        name: [{"slot": s.name, "kind": s.kind, "modality": s.modality}
               for s in tpl.slots]
        for name, tpl in templates.items()
    }
    with open(path, "w") as f:
        json.dump({"tasks": doc}, f, indent=2)


def load_templates(path) -> dict[str, TaskTemplate]:
    with open(path) as f:
        doc = json.load(f)
    out = {}
    for name, slots in doc["tasks"].items():
        if name not in TASK_NAMES:
            raise ValueError(f"unknown task {name} in template registry")
        out[name] = TaskTemplate(name, tuple(
            Slot(s["slot"], s["kind"], s.get("modality", "")) for s in slots))
    return out


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------

@dataclass
class TaskSequence:
    tokens: np.ndarray                     # global token ids
    spans: list[tuple[str, str, int, int]]  # (slot name, kind, start, end)
    continuous: dict[str, np.ndarray]      # slot name -> (n, E) vectors
    n_q: int

    def __post_init__(self):
        self.tokens = np.asarray(self.tokens, dtype=np.int64)


def serialize_task(vocab: Vocabulary, template: TaskTemplate,
                   payloads: dict, target: np.ndarray, n_q: int) -> TaskSequence:
    """[conditions, target] token stream with bracketing markers."""
    target = np.asarray(target)
    if target.size == 0:
        raise ValueError("empty target grid")
    if target.ndim != 2 or target.shape[1] != n_q:
        raise ValueError("target grid must be T x n_q")
    if set(payloads) != {s.name for s in template.slots}:
        raise ValueError(f"payloads {sorted(payloads)} do not match template "
                         f"slots {[s.name for s in template.slots]}")

    toks: list[int] = [SPECIAL["<start>"], template.task_token]
    spans: list[tuple[str, str, int, int]] = []
    continuous: dict[str, np.ndarray] = {}
    for slot in template.slots:
        payload = payloads[slot.name]
        toks.append(SPECIAL[f"<{slot.name}_start>"])
        start = len(toks)
        if slot.kind == "discrete":
            toks.extend(vocab.global_id(slot.modality, int(t)) for t in payload)
        elif slot.kind == "audio_grid":
            grid = np.asarray(payload)
            if grid.ndim != 2 or grid.shape[1] != n_q:
                raise ValueError(f"slot {slot.name}: condition grid must be T x n_q")
            for t in range(grid.shape[0]):
                for k in range(n_q):
                    toks.append(vocab.audio_id(k, int(grid[t, k]), n_q))
        elif slot.kind == "continuous":
            vecs = np.asarray(payload, dtype=np.float64)
            if vecs.ndim != 2:
                raise ValueError(f"slot {slot.name}: continuous payload must be (n, E)")
            continuous[slot.name] = vecs
            toks.extend([SPECIAL["<continuous_token>"]] * vecs.shape[0])
        else:
            raise ValueError(f"unknown slot kind {slot.kind}")
        spans.append((slot.name, slot.kind, start, len(toks)))
        toks.append(SPECIAL[f"<{slot.name}_end>"])

    toks.append(SPECIAL["<audio_start>"])
    start = len(toks)
    for t in range(target.shape[0]):
        for k in range(n_q):
            toks.append(vocab.audio_id(k, int(target[t, k]), n_q))
    spans.append(("audio", "audio_grid", start, len(toks)))
    toks.append(SPECIAL["<audio_end>"])
    toks.append(SPECIAL["<end>"])
    return TaskSequence(np.array(toks, dtype=np.int64), spans, continuous, n_q)


def serialize_prefix(vocab: Vocabulary, template: TaskTemplate,
                     payloads: dict, n_q: int) -> TaskSequence:
    """Condition-only stream ending at <audio_start>, ready for generation."""
    dummy = np.zeros((1, n_q), dtype=np.int64)
    full = serialize_task(vocab, template, payloads, dummy, n_q)
    cut = int(np.where(full.tokens == SPECIAL["<audio_start>"])[0][-1]) + 1
    return TaskSequence(full.tokens[:cut], full.spans[:-1], full.continuous, n_q)


def _grid_from_span(vocab: Vocabulary, tokens: np.ndarray, n_q: int,
                    what: str) -> np.ndarray:
    if tokens.size % n_q != 0:
        raise ValueError(f"{what}: span of {tokens.size} tokens not divisible by n_q={n_q}")
    grid = np.empty((tokens.size // n_q, n_q), dtype=np.int64)
    for i, gid in enumerate(tokens):
        level, code = vocab.audio_code(int(gid), n_q)
        if level != i % n_q:
            raise ValueError(f"{what}: token at offset {i} carries level {level}, "
                             f"expected {i % n_q}")
        grid[i // n_q, i % n_q] = code
    return grid


def parse_task(vocab: Vocabulary, templates: dict[str, TaskTemplate],
               seq: TaskSequence):
    """Inverse of serialize_task: (task name, payloads, target grid)."""
    toks = seq.tokens
    n_q = seq.n_q
    if toks.size < 4 or toks[0] != SPECIAL["<start>"]:
        raise ValueError("sequence does not begin with <start>")
    if toks[-1] != SPECIAL["<end>"]:
        raise ValueError("unterminated sequence: missing <end>")
    task = next((t for t in TASK_NAMES if SPECIAL[f"<{t}_task>"] == toks[1]), None)
    if task is None or task not in templates:
        raise ValueError(f"unknown task token {toks[1]}")
    template = templates[task]

    pos = 2
    payloads: dict = {}
    for slot in template.slots:
        open_tok = SPECIAL[f"<{slot.name}_start>"]
        close_tok = SPECIAL[f"<{slot.name}_end>"]
        if toks[pos] != open_tok:
            raise ValueError(f"expected <{slot.name}_start> at position {pos}")
        pos += 1
        start = pos
        while pos < toks.size and toks[pos] != close_tok:
            pos += 1
        if pos == toks.size:
            raise ValueError(f"unbalanced markers: <{slot.name}_end> missing")
        body = toks[start:pos]
        pos += 1
        if slot.kind == "discrete":
            payloads[slot.name] = [vocab.to_local(int(t))[1] for t in body]
        elif slot.kind == "audio_grid":
            payloads[slot.name] = _grid_from_span(vocab, body, n_q, slot.name)
        else:
            vecs = seq.continuous.get(slot.name)
            if vecs is None or vecs.shape[0] != body.size:
                raise ValueError(f"slot {slot.name}: continuous payload does not "
                                 f"match {body.size} placeholders")
            payloads[slot.name] = vecs

    if toks[pos] != SPECIAL["<audio_start>"]:
        raise ValueError(f"expected <audio_start> at position {pos}")
    pos += 1
    start = pos
    while pos < toks.size and toks[pos] != SPECIAL["<audio_end>"]:
        pos += 1
    if pos >= toks.size - 1:
        raise ValueError("unbalanced markers: <audio_end> missing")
    target = _grid_from_span(vocab, toks[start:pos], n_q, "target audio")
    if toks[pos + 1] != SPECIAL["<end>"]:
        raise ValueError("trailing tokens after <audio_end>")
    return task, payloads, target


# ---------------------------------------------------------------------------
# Patching
# ---------------------------------------------------------------------------

KIND_AUDIO, KIND_DISCRETE, KIND_CONTINUOUS = 0, 1, 2


@dataclass
class PatchSequence:
    kinds: np.ndarray       # (K,) patch kind codes
    targets: np.ndarray     # (K, n_q) global token ids the patch predicts
    cont: np.ndarray        # (K, E) vectors, zero rows off continuous patches
    n_q: int
    target_start: int       # patch index of the first target audio frame
    target_end: int         # patch index one past the last target frame

    @property
    def K(self) -> int:
        return self.kinds.shape[0]


def to_patches(seq: TaskSequence, n_q: int, cont_dim: int = 0,
               max_patches: int = 3000) -> PatchSequence:
    """Patch view: one patch per audio frame, per discrete token (its id
    repeated n_q times), or per continuous vector (<continuous_token>
    targets)."""
    grid_spans = [(s, e) for _, kind, s, e in seq.spans if kind == "audio_grid"]
    cont_rows: dict[int, np.ndarray] = {}
    for name, kind, s, e in seq.spans:
        if kind == "continuous":
            vecs = seq.continuous[name]
            for i in range(e - s):
                cont_rows[s + i] = vecs[i]
            if cont_dim == 0 and vecs.size:
                cont_dim = vecs.shape[1]

    kinds: list[int] = []
    targets: list[list[int]] = []
    cont: list[np.ndarray] = []
    zero = np.zeros(max(cont_dim, 1))
    target_span = seq.spans[-1] if seq.spans and seq.spans[-1][0] == "audio" else None
    target_token_start = target_span[2] if target_span is not None else -1
    target_start = target_end = -1

    pos = 0
    toks = seq.tokens
    while pos < toks.size:
        span = next(((s, e) for s, e in grid_spans if s <= pos < e), None)
        if span is not None:
            s, e = span
            if pos == target_token_start:
                target_start = len(kinds)
            for frame in range(s, e, n_q):
                kinds.append(KIND_AUDIO)
                targets.append([int(t) for t in toks[frame:frame + n_q]])
                cont.append(zero)
            if pos == target_token_start:
                target_end = len(kinds)
            pos = e
        elif pos in cont_rows:
            kinds.append(KIND_CONTINUOUS)
            targets.append([SPECIAL["<continuous_token>"]] * n_q)
            cont.append(cont_rows[pos])
            pos += 1
        else:
            kinds.append(KIND_DISCRETE)
            targets.append([int(toks[pos])] * n_q)
            cont.append(zero)
            pos += 1

    if len(kinds) > max_patches:
        raise ValueError(f"{len(kinds)} patches exceed max context {max_patches}")
    return PatchSequence(
        kinds=np.array(kinds, dtype=np.int8),
        targets=np.array(targets, dtype=np.int64),
        cont=np.stack(cont),
        n_q=n_q,
        target_start=target_start,
        target_end=target_end,
    )


def resample_weights(counts, alpha: float) -> np.ndarray:
    """Task sampling probabilities p_i proportional to n_i^alpha."""
    counts = np.asarray(counts, dtype=np.float64)
    if np.any(counts <= 0):
        raise ValueError("task example counts must be > 0")
    if alpha < 0:
        raise ValueError("alpha must be >= 0")
    w = counts**alpha
    return w / w.sum()


def dump_tokens(vocab: Vocabulary, seq: TaskSequence) -> str:
    """One token name per line, for inspection."""
    lines = []
    for gid in seq.tokens:
        gid = int(gid)
        if gid in _SPECIAL_NAMES:
            lines.append(_SPECIAL_NAMES[gid])
        else:
            name, local = vocab.to_local(gid)
            lines.append(f"{name}:{local}")
    return "\n".join(lines)
