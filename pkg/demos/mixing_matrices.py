"""
Gossip matrices and their spectral gap
======================================

Each model-group averages its replicas through a symmetric, doubly
stochastic matrix built from the communication graph.  How fast replicas
agree is governed by the spectral gap gamma: smaller is faster.
"""

import numpy as np

from stalesgd import build_mixing_matrix
from stalesgd.topology import complete_edges, path_edges, ring_edges

S = 8

# a path, a ring and a complete graph over the same eight nodes
for name, edges in (("path", path_edges(S)), ("ring", ring_edges(S)), ("complete", complete_edges(S))):
    m = build_mixing_matrix(edges, S)
    print(f"{name:<9} alpha={m.alpha:.4f}  gamma={m.gamma:.6f}")

# the matrix for a small ring, printed in full
m = build_mixing_matrix(ring_edges(4), 4, alpha=0.25)
print(m.P)

# repeated gossip drives any starting vector to its average at rate gamma
v = np.array([4.0, 0.0, 0.0, 0.0])
for step in range(6):
    print(step, np.round(v, 4), "spread", np.round(np.linalg.norm(v - v.mean()), 5))
    v = m.P @ v
