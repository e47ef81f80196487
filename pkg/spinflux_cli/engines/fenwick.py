"""
Fenwick tree over non-negative weights
──────────────────────────────────────
Array layout is 1-based: tree[k] holds the sum of weights (k − lowbit(k), k].
The kernels are plain numba functions. evolve calls them directly from the
compiled Gillespie loop and never builds an EventTree; EventTree is the
Python-facing wrapper over the same kernels for tests and interactive use.
"""

import numpy as np
from numba import njit


@njit(nogil=True)
def tree_build(values):
    n = values.shape[0]
    tree = np.zeros(n + 1)
    for k in range(1, n + 1):
        tree[k] += values[k - 1]
        parent = k + (k & -k)
        if parent <= n:
            tree[parent] += tree[k]
    return tree


@njit(nogil=True)
def tree_add(tree, index, delta):
    """Add delta to the weight at 0-based index."""
    n = tree.shape[0] - 1
    k = index + 1
    while k <= n:
        tree[k] += delta
        k += k & -k


@njit(nogil=True)
def tree_prefix(tree, count):
    """Sum of the first count weights."""
    total = 0.0
    k = count
    while k > 0:
        total += tree[k]
        k -= k & -k
    return total


@njit(nogil=True)
def tree_find(tree, values, target):
    """
    Smallest 0-based index i with prefix(i + 1) > target, for 0 ≤ target < total.
    Zero weights are never returned.
    """
    n = values.shape[0]
    step = 1
    while step * 2 <= n:
        step *= 2
    pos = 0
    remaining = target
    while step > 0:
        nxt = pos + step
        if nxt <= n and tree[nxt] <= remaining:
            pos = nxt
            remaining -= tree[nxt]
        step //= 2
    # rounding can push a target at the very top past the last weight
    if pos >= n:
        pos = n - 1
    while values[pos] <= 0.0 and pos > 0:
        pos -= 1
    return pos


class EventTree:
    """Weighted sampling with O(log N) updates; weights are the nearest-neighbour pair rates."""

    def __init__(self, values):
        self.values = np.array(values, dtype=float)
        if self.values.ndim != 1 or len(self.values) == 0:
            raise ValueError("EventTree needs a non-empty 1-D array of weights")
        if np.any(self.values < 0) or not np.all(np.isfinite(self.values)):
            raise ValueError("weights must be finite and non-negative")
        self.tree = tree_build(self.values)

    def __len__(self) -> int:
        return len(self.values)

    def total(self) -> float:
        return float(tree_prefix(self.tree, len(self.values)))

    def prefix(self, count: int) -> float:
        return float(tree_prefix(self.tree, count))

    def find(self, target: float) -> int:
        return int(tree_find(self.tree, self.values, float(target)))

    def update(self, index: int, value: float) -> None:
        delta = float(value) - self.values[index]
        self.values[index] = value
        tree_add(self.tree, index, delta)

    def drift(self) -> float:
        """Relative gap between the tree total and an exact re-summation."""
        exact = float(self.values.sum())
        return abs(self.total() - exact) / exact if exact > 0 else abs(self.total())

    def rebuild(self) -> None:
        self.tree = tree_build(self.values)
