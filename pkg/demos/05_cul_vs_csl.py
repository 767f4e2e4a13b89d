"""Unsupervised versus supervised training, compared with a Mann-Whitney U test.

CSL regresses onto power-iteration labels with MSE; CUL never sees them.  The
one-sided p-value is for "CUL accuracies tend to exceed CSL accuracies".
With GCN and a lone degree feature both models score nodes through the same
scalar s = Abar(Abar d), so two decoders that are increasing in s rank the
nodes identically and the accuracies can tie exactly.
Takes a couple of minutes.
"""

import numpy as np

from ecgnn import GeneratorSpec, TrainConfig, evaluate, generate, mann_whitney_u, train_csl, train_cul

train = [generate(GeneratorSpec("pl", 1000, 4, 0.05, seed=s)) for s in range(10)]
held = [generate(GeneratorSpec("pl", 1000, 4, 0.05, seed=500 + s)) for s in range(10)]

cul = train_cul(TrainConfig(mode="cul", seed=0), train).checkpoint
csl = train_csl(TrainConfig(mode="csl", seed=0), train).checkpoint

acc = {}
for name, ckpt in (("CUL", cul), ("CSL", csl)):
    acc[name] = np.array([r.accuracies[10] for r in evaluate(ckpt, held, n_list=(10,))])
    print(f"{name} top-10%: {acc[name].mean():.3f} +- {acc[name].std():.3f}")

res = mann_whitney_u(acc["CUL"], acc["CSL"])
print(f"U = {res.u}, p = {res.p_value:.3g} ({res.method})")
