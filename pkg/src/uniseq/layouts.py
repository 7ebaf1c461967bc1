"""Prediction-order layouts over the T x n_q code grid.

Each layout is an ordered list of emission steps (sets of grid cells
predicted concurrently) plus a visibility map: for every cell, the set
of cells its prediction may condition on. Cells co-emitted in one step
see neither each other nor themselves. Cells are (t, k) pairs with
1-based frame t and level k, matching the usual grid notation.
"""

from __future__ import annotations

from dataclasses import dataclass, field

__all__ = [
    "LayoutSpec",
    "layout_flatten",
    "layout_coarse_first",
    "layout_parallel",
    "layout_delay",
    "layout_multiscale",
    "get_layout",
    "visible_set",
    "brute_force_visibility",
    "attention_cost",
    "attention_cost_multiscale",
    "render_layout",
    "LAYOUT_NAMES",
]

Cell = tuple[int, int]


@dataclass
class LayoutSpec:
    name: str
    T: int
    n_q: int
    steps: list[frozenset[Cell]]
    visibility: dict[Cell, frozenset[Cell]]
    padding: set[Cell] = field(default_factory=set)  # empty-token cells (delay)

    def cells(self) -> set[Cell]:
        return {(t, k) for t in range(1, self.T + 1) for k in range(1, self.n_q + 1)}

    @property
    def sequence_length(self) -> int:
        return len(self.steps)


def _check_args(t: int, n_q: int) -> None:
    if t < 1 or n_q < 1:
        raise ValueError("T and n_q must be >= 1")


def _from_steps(name: str, t: int, n_q: int, steps: list[frozenset[Cell]],
                padding: set[Cell] | None = None) -> LayoutSpec:
    """Visibility = everything emitted at a strictly earlier step."""
    vis: dict[Cell, frozenset[Cell]] = {}
    earlier: set[Cell] = set()
    for step in steps:
        for cell in step:
            vis[cell] = frozenset(earlier)
        earlier |= step
    return LayoutSpec(name, t, n_q, steps, vis, padding or set())


def layout_flatten(t: int, n_q: int) -> LayoutSpec:
    """Frame-major, one cell per step: (t, k) at step (t-1)*n_q + k."""
    _check_args(t, n_q)
    steps = [frozenset({(f, k)}) for f in range(1, t + 1) for k in range(1, n_q + 1)]
    return _from_steps("flatten", t, n_q, steps)


def layout_coarse_first(t: int, n_q: int) -> LayoutSpec:
    """Level-major: all of level 1 autoregressively, then level 2, ..."""
    _check_args(t, n_q)
    steps = [frozenset({(f, k)}) for k in range(1, n_q + 1) for f in range(1, t + 1)]
    return _from_steps("coarse_first", t, n_q, steps)


def layout_parallel(t: int, n_q: int) -> LayoutSpec:
    """T steps; step t co-emits the whole frame, seeing earlier frames only."""
    _check_args(t, n_q)
    steps = [frozenset({(f, k) for k in range(1, n_q + 1)}) for f in range(1, t + 1)]
    return _from_steps("parallel", t, n_q, steps)


def layout_delay(t: int, n_q: int) -> LayoutSpec:
    """Diagonal shift: cell (t, k) emitted at step t + k - 1, so level k
    trails level 1 by k-1 steps. Positions of a row before its first
    emission carry the empty token; those padding cells are tracked but
    never supervised."""
    _check_args(t, n_q)
    n_steps = t + n_q - 1
    steps = []
    padding: set[Cell] = set()
    for s in range(1, n_steps + 1):
        cells = set()
        for k in range(1, n_q + 1):
            f = s - k + 1
            if 1 <= f <= t:
                cells.add((f, k))
            else:
                padding.add((s, k))  # (step, level) slot holding the empty token
        steps.append(frozenset(cells))
    return _from_steps("delay", t, n_q, steps, padding)


def layout_multiscale(t: int, n_q: int) -> LayoutSpec:
    """The visibility relation realized by the global/local split: token
    (t, k) conditions on all earlier frames plus earlier levels of its
    own frame — identical to flattening."""
    spec = layout_flatten(t, n_q)
    return LayoutSpec("multiscale", t, n_q, spec.steps, spec.visibility)


LAYOUT_NAMES = ["flatten", "coarse_first", "parallel", "delay", "multiscale"]

_BUILDERS = {
    "flatten": layout_flatten,
    "coarse_first": layout_coarse_first,
    "parallel": layout_parallel,
    "delay": layout_delay,
    "multiscale": layout_multiscale,
}


def get_layout(name: str, t: int, n_q: int) -> LayoutSpec:
    if name not in _BUILDERS:
        raise ValueError(f"unknown layout {name!r}; choose from {LAYOUT_NAMES}")
    return _BUILDERS[name](t, n_q)


def visible_set(layout: LayoutSpec, cell: Cell) -> frozenset[Cell]:
    if cell not in layout.visibility:
        raise ValueError(f"cell {cell} outside the {layout.T}x{layout.n_q} grid")
    return layout.visibility[cell]


def brute_force_visibility(layout: LayoutSpec, cell: Cell) -> frozenset[Cell]:
    """Independent derivation from the emission steps alone."""
    out: set[Cell] = set()
    for step in layout.steps:
        if cell in step:
            return frozenset(out)
        out |= step
    raise ValueError(f"cell {cell} never emitted")


def attention_cost(layout_name: str, t: int, n_q: int, layers) -> tuple[int, int]:
    """(score-matrix entries, sequence length) closed forms.

    `layers` is an int for the single-stack layouts and a
    (global, local) pair for the multiscale architecture.
    """
    if t < 1 or n_q < 1:
        raise ValueError("T and n_q must be positive")
    if layout_name == "multiscale":
        lg, ll = layers
        return attention_cost_multiscale(t, n_q, lg, ll)
    if layout_name in ("flatten", "coarse_first"):
        length = t * n_q
    elif layout_name == "parallel":
        length = t
    elif layout_name == "delay":
        length = t + n_q - 1
    else:
        raise ValueError(f"unknown layout {layout_name!r}")
    return length * length * layers, length


def attention_cost_multiscale(t: int, n_q: int, layers_global: int,
                              layers_local: int) -> tuple[int, int]:
    """Global stack sees T patches, local stack sees n_q tokens per patch."""
    entries = t * t * layers_global + t * n_q * n_q * layers_local
    return entries, t


def render_layout(layout: LayoutSpec) -> str:
    """Text grid of emission step numbers, one row per level."""
    step_of = {}
    for i, step in enumerate(layout.steps, 1):
        for cell in step:
            step_of[cell] = i
    width = max(2, len(str(len(layout.steps))))
    lines = [f"{layout.name}: T={layout.T} n_q={layout.n_q} "
             f"steps={len(layout.steps)}"]
    for k in range(1, layout.n_q + 1):
        row = " ".join(f"{step_of[(t, k)]:>{width}}" for t in range(1, layout.T + 1))
        lines.append(f"k={k} | {row}")
    return "\n".join(lines)
