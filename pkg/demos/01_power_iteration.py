"""Eigenvector centrality by power iteration, checked against a dense solver."""

import numpy as np

from ecgnn import GeneratorSpec, dense_eigen_oracle, generate, power_iteration_ec
from ecgnn.graph import path_graph, star_graph

# A star: the hub gets 1/sqrt(2), every leaf 1/sqrt(6), eigenvalue sqrt(3).
ec = power_iteration_ec(star_graph(3))
print("star S3:", np.round(ec.values, 5), "lambda =", round(ec.eigenvalue, 5))

# Paths are bipartite, so -lambda is an eigenvalue too and the iterates swing
# between two vectors.  The swing is detected and the two are averaged.
ec = power_iteration_ec(path_graph(3))
print("path P3:", np.round(ec.values, 5), "averaged:", ec.oscillation_averaged)

# A preferential-attachment graph: a handful of early nodes dominate.
g = generate(GeneratorSpec("ba", 400, 4, seed=1))
ec = power_iteration_ec(g)
oracle = dense_eigen_oracle(g)
print(f"\nBA n={g.n}, |E|={g.num_edges}: {ec.iterations_used} iterations, converged={ec.converged}")
print("cosine with dense eigh:", float(ec.values @ oracle.values))

top = np.argsort(-ec.values)[:8]
print("\nnode  degree  centrality")
for v in top:
    print(f"{v:4d}  {g.degrees[v]:6d}  {ec.values[v]:.4f}")
