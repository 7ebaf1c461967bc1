"""Shared helpers for the test suite."""

import numpy as np

from uniseq.taskformat import TaskTemplate, Vocabulary


def random_payloads(vocab: Vocabulary, template: TaskTemplate, n_q: int,
                    rng: np.random.Generator, cont_dim: int = 16) -> dict:
    """Random well-formed condition payloads for one task template."""
    payloads = {}
    for slot in template.slots:
        n = int(rng.integers(1, 7))
        if slot.kind == "discrete":
            size = vocab.size_of(slot.modality)
            payloads[slot.name] = [int(x) for x in rng.integers(0, size, n)]
        elif slot.kind == "audio_grid":
            v = vocab.size_of("audio") // n_q
            payloads[slot.name] = rng.integers(0, v, size=(n, n_q))
        else:
            payloads[slot.name] = rng.normal(size=(n, cont_dim))
    return payloads


def payloads_equal(a: dict, b: dict) -> bool:
    if set(a) != set(b):
        return False
    for name in a:
        x, y = np.asarray(a[name]), np.asarray(b[name])
        if x.shape != y.shape or not np.array_equal(x, y):
            return False
    return True
