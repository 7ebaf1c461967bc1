"""Desk-scale residual-VQ audio token pipeline.

Subpackages:
  autograd   -- reverse-mode autodiff over float64 numpy arrays
  nn         -- causal transformer blocks, loss, Adam, Noam schedule
  codec      -- orthogonal framing transform + residual vector quantization
  modality   -- phoneme/MIDI/semantic/text condition tokenizers
  taskformat -- joint vocabulary, task serialization, patching
  model      -- the multi-scale global/local transformer
  layouts    -- prediction-order layouts and complexity closed forms
  baselines  -- runnable single-stack models for the baseline layouts
  sampling   -- top-k temperature sampling and the generation loop
  bench      -- synthetic corpora, training drivers, benchmark harness
  cli        -- the `uniseq` command
"""

__version__ = "0.1.0"
