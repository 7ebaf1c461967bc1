"""Walk through the residual quantizer: depth, distortion, idempotency.

Trains depth-8 codebooks on the synthetic 8-Gaussian corpus, then shows
how reconstruction error falls with quantizer depth and how often
decoded frames re-encode to their own codes.
"""

import numpy as np

from uniseq.bench import mixture_corpus
from uniseq.codec import (
    CodebookSet,
    CodecConfig,
    rvq_decode,
    rvq_encode,
    token_rate,
    train_codebooks,
)


def main():
    fps, tps = token_rate(CodecConfig(hop=320, n_q=3), 16000)
    print(f"reference config: {fps:g} frames/s, {tps:g} tokens/s\n")

    corpus = mixture_corpus(2048, 16, seed=101)
    config = CodecConfig(latent_dim=16, n_q=8, codebook_size=64)
    books = train_codebooks(corpus, config, iters=60, seed=0)

    print("depth   mean MSE       drop vs depth 1")
    mse1 = None
    for n_q in range(1, 9):
        sub = CodebookSet(books.vectors[:n_q])
        z = rvq_encode(corpus, sub)
        mse = float(np.mean((corpus - rvq_decode(z, sub)) ** 2))
        mse1 = mse1 or mse
        print(f"{n_q:>5}   {mse:.6e}   {100 * (1 - mse / mse1):6.2f}%")

    sub = CodebookSet(books.vectors[:3])
    z = rvq_encode(corpus, sub)
    z2 = rvq_encode(rvq_decode(z, sub), sub)
    frac = np.mean(np.all(z == z2, axis=1))
    print(f"\nre-encode fixpoint at depth 3: {100 * frac:.2f}% of frames")
    flips = np.where(~np.all(z == z2, axis=1))[0]
    print(f"flipped frames: {flips.size} (cell-boundary near-ties)")


if __name__ == "__main__":
    main()
