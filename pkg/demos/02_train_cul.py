"""Train the unsupervised model on small BA graphs and rank held-out nodes.

No labels are used: the model output Y is pulled towards one power-iteration
step of itself, A Y / ||A Y||, while a reward on ||Y|| keeps it from vanishing.
Takes about a minute.
"""

from ecgnn import GeneratorSpec, TrainConfig, evaluate, generate, train_cul
from ecgnn.metrics import format_table

train = [generate(GeneratorSpec("ba", 1000, 4, seed=s)) for s in range(10)]
held_out = [generate(GeneratorSpec("ba", 1000, 4, seed=100 + s)) for s in range(5)]

cfg = TrainConfig(encoder="gcn", mode="cul", epochs=150, lr=1e-3, seed=0)
result = train_cul(cfg, train, on_epoch=lambda e, v: e % 25 == 0 and print(f"epoch {e:3d}  loss {v:+.4f}"))
print("final loss", round(result.loss_history[-1], 4))

reports = evaluate(result.checkpoint, held_out)
print()
print(format_table(reports))
