"""Classical random walks on a cycle, the baseline every quantum walk is compared to.

A walker on cycle(8) starts at node 0. The discrete-time walk flips between
even and odd nodes forever (the cycle is bipartite), while the continuous-time
walk relaxes to the uniform distribution. The latter is the "classical" mode
of the pipeline.
"""
import numpy as np

from qwdiff import graphs, metrics

g = graphs.cycle_graph(8)
s = graphs.transition_matrix(g)
p0 = np.eye(8)[0]
uniform = graphs.stationary_distribution(g)

print("discrete-time walk, KL to uniform per step")
for t, p in enumerate(graphs.crw_evolve(p0, s, 8)):
    print(f"  t={t:2d}  {np.array2string(p, precision=3)}  "
          f"KL={metrics.kl_divergence(p, uniform):.3f}")

print("\ncontinuous-time walk, 0.6 time units per step")
k = graphs.ctrw_kernel(g, 0.6)
p = p0
for t in range(1, 21):
    p = k @ p
    if t in (1, 5, 10, 20):
        print(f"  t={t:2d}  KL={metrics.kl_divergence(p, uniform):.2e}")
