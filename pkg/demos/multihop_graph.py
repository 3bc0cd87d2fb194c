"""Exact-distance hop masks for a small skeleton, including a disconnected one.

Run: python3 demos/multihop_graph.py
"""

import numpy as np

from partseg.graph import build_multihop

# a 6-joint chain with a branch at joint 2:  0-1-2-3   and   2-4-5
edges = [(0, 1), (1, 2), (2, 3), (2, 4), (4, 5)]
g = build_multihop(edges, 6, 4)
print("shortest-path distances\n", g.distances)
for z, mask in enumerate(g.hop_masks, 1):
    pairs = [(int(i), int(j)) for i, j in zip(*np.nonzero(mask)) if i < j]
    print(f"A({z}) off-diagonal pairs: {pairs}")

# two disconnected components never share a mask entry
g = build_multihop([(0, 1), (2, 3)], 4, 2)
print("disconnected distances (-1 = unreachable)\n", g.distances)
