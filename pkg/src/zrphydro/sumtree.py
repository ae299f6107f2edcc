"""Binary sum tree over per-site event rates.

Layout: a flat float64 array of length 2*capacity with capacity the smallest
power of two >= n_leaves; node 1 is the root, node p has children 2p and
2p+1, leaf i lives at capacity + i. Updates recompute each ancestor as the
sum of its two children (never incrementally), so internal nodes equal the
sum of their children exactly and a full rebuild reproduces every node
bit-for-bit. Since leaves are nonnegative, no cancellation can occur and the
root total is always >= 0.

The kinetic Monte Carlo kernel manipulates the same layout through the
njit-compiled helpers at the bottom.
"""

from __future__ import annotations

import numpy as np
from numba import njit

__all__ = ["SumTree", "tree_build", "tree_set", "tree_sample"]


class SumTree:
    def __init__(self, values: np.ndarray):
        values = np.asarray(values, dtype=np.float64)
        self.n = len(values)
        cap = 1
        while cap < max(self.n, 1):
            cap *= 2
        self.capacity = cap
        self.tree = np.zeros(2 * cap, dtype=np.float64)
        self.tree[cap:cap + self.n] = values
        tree_build(self.tree, cap)

    @property
    def total(self) -> float:
        return float(self.tree[1])

    def get(self, i: int) -> float:
        return float(self.tree[self.capacity + i])

    def set(self, i: int, value: float):
        tree_set(self.tree, self.capacity, i, value)

    def sample(self, u: float) -> int:
        """Index i with probability value[i] / total, by inversion of u in [0, 1)."""
        return int(tree_sample(self.tree, self.capacity, u))

    def leaves(self) -> np.ndarray:
        return self.tree[self.capacity:self.capacity + self.n]

    def rebuilt(self) -> np.ndarray:
        """Fresh tree array built from the current leaves (integrity checks)."""
        fresh = np.zeros_like(self.tree)
        fresh[self.capacity:self.capacity + self.n] = self.leaves()
        tree_build(fresh, self.capacity)
        return fresh


@njit(cache=True)
def tree_build(tree, capacity):
    for p in range(capacity - 1, 0, -1):
        tree[p] = tree[2 * p] + tree[2 * p + 1]


@njit(cache=True)
def tree_set(tree, capacity, i, value):
    node = capacity + i
    tree[node] = value
    node >>= 1
    while node >= 1:
        tree[node] = tree[2 * node] + tree[2 * node + 1]
        node >>= 1


@njit(cache=True)
def tree_sample(tree, capacity, u):
    target = u * tree[1]
    node = 1
    while node < capacity:
        left = tree[2 * node]
        if target < left:
            node = 2 * node
        else:
            target -= left
            node = 2 * node + 1
    idx = node - capacity
    if tree[node] <= 0.0:
        # float boundary landed on a zero leaf: walk to the nearest positive one
        for step in range(1, capacity):
            if idx + step < capacity and tree[capacity + idx + step] > 0.0:
                return idx + step
            if idx - step >= 0 and tree[capacity + idx - step] > 0.0:
                return idx - step
    return idx
