"""Time the architectures and check counters against closed forms.

Runs the instrumented benchmark on a small grid, prints per-iteration
medians, and fits the log-log scaling exponent of the flattened
baseline's attention cost in T (expected: 2.0).
"""

from uniseq.bench import fit_scaling_exponent, run_benchmark, write_csv

ARCHS = ["flatten", "delay", "multiscale"]
GRID = [(t, 3) for t in (32, 64, 128)]


def main():
    records = run_benchmark(ARCHS, GRID, iters=5, warmup=2)
    print(f"{'arch':>12} {'T':>5} {'n_q':>4} {'ms/iter':>9} {'pairs':>10} "
          f"{'params':>8}")
    for r in records:
        print(f"{r.arch:>12} {r.T:>5} {r.n_q:>4} {r.ms_per_iter:>9.2f} "
              f"{r.attn_pairs:>10,} {r.param_count:>8,}")

    flat = [r for r in records if r.arch == "flatten"]
    print(f"\nflatten attention-cost slope in log T: "
          f"{fit_scaling_exponent(flat):.3f} (closed form: 2.0)")
    write_csv("bench.csv", records)
    print("records -> bench.csv")


if __name__ == "__main__":
    main()
