"""Single-pass inference against power iteration on a 100k-node graph.

With one degree feature the two GCN layers produce a rank-one embedding
s u^T, so the decoder is a scalar piecewise-linear function of s.  The "pwl"
engine compiles that function once and applies it to s, which is two sparse
products and a sorted lookup.
"""

import time

import numpy as np

from ecgnn import Checkpoint, GeneratorSpec, generate, infer_scores, power_iteration_ec
from ecgnn.training import compile_scalar_decoder

g = generate(GeneratorSpec("ba", 100_000, 4, seed=77))
ckpt = Checkpoint.init("gcn", seed=0)

u = (ckpt.encoder.weights["W0"] @ ckpt.encoder.weights["W1"])[0]
h = compile_scalar_decoder(u, ckpt.decoder)
print(f"decoder compiled to {len(h.slope)} linear pieces")

for engine in ("pwl", "dense"):
    infer_scores(ckpt, g, engine=engine)
    t = min(infer_scores(ckpt, g, engine=engine)[1] for _ in range(3))
    print(f"model, {engine:5s} engine: {t * 1e3:8.1f} ms")

for mode in ("sequential", "fast"):
    t0 = time.perf_counter()
    ec = power_iteration_ec(g, mode=mode)
    print(f"power iteration ({mode}): {(time.perf_counter() - t0) * 1e3:8.1f} ms, {ec.iterations_used} iterations")

a, b = infer_scores(ckpt, g, engine="pwl")[0], infer_scores(ckpt, g, engine="dense")[0]
print("max relative difference between engines:", float(np.abs(a - b).max() / np.abs(b).max()))
