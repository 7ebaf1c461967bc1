"""Render every prediction-order layout and compare attention costs.

Each layout assigns the (T, n_q) token grid to emission steps; the
rendered digit at row k, column t is the step at which cell (t, k) is
produced. The closed-form attention-pair counts show why the two-level
model scales with T rather than T * n_q.
"""

from uniseq.layouts import LAYOUT_NAMES, attention_cost, get_layout, render_layout

T, N_Q = 4, 3


def main():
    for name in LAYOUT_NAMES:
        print(render_layout(get_layout(name, T, N_Q)))
        print()

    print(f"attention pairs for one pass (T={T}, n_q={N_Q}):")
    for name in LAYOUT_NAMES:
        layers = (4, 2) if name == "multiscale" else 6
        pairs, length = attention_cost(name, T, N_Q, layers)
        print(f"{name:>14}: {pairs:>6} pairs, sequence length {length}")

    print("\nscaling in T (flatten vs multiscale, n_q=8):")
    for t in (64, 128, 256):
        flat, _ = attention_cost("flatten", t, 8, 6)
        multi, _ = attention_cost("multiscale", t, 8, (4, 2))
        print(f"T={t:>4}: flatten {flat:>12,}   multiscale {multi:>12,}   "
              f"ratio {flat / multi:.1f}x")


if __name__ == "__main__":
    main()
