"""Joint loss versus the objective term alone.

Dropping the norm reward is expected to let Y drift to zero.  Here both runs
end with a similar ||Y||: with the target held fixed, the objective term pulls
Y towards A Y / ||A Y||, which has unit norm, and Y = 0 costs a full 1.0.
The joint loss history does show the damped up-and-down swing.
"""

import numpy as np

from ecgnn import GeneratorSpec, LossVariant, TrainConfig, generate, train_cul
from ecgnn.training import model_forward

train = [generate(GeneratorSpec("ba", 200, 4, seed=300 + i)) for i in range(5)]
held = generate(GeneratorSpec("ba", 200, 4, seed=399))

runs = {}
for kind in ("joint", "obj-only"):
    res = train_cul(TrainConfig(loss=LossVariant(kind), seed=0), train)
    y = model_forward(res.checkpoint, held)[0]
    runs[kind] = res.loss_history
    print(f"{kind:9s} final loss {res.loss_history[-1]:+.4f}   ||Y|| on held-out graph {np.linalg.norm(y):.3f}")

hist = np.array(runs["joint"])
d = np.diff(hist)
print("\njoint loss, every 10th epoch:")
print(np.round(hist[::10], 3))
print("direction changes in", f"{np.mean(np.sign(d[1:]) != np.sign(d[:-1])):.0%}", "of epochs")
print(f"max |loss| first 30 epochs {np.abs(hist[:30]).max():.2f}, last 30 {np.abs(hist[-30:]).max():.2f}")
