"""Pure-Python fallback for the mining hot kernels.

Same API as the compiled ``_heapcore`` extension: a fixed-capacity min-heap
over (score, packed-id) keys and a packed-id membership set. Selection
between the two happens in :mod:`pkgc.heapcore`.

Ordering: entry A is *worse* than B when A.score < B.score, or scores tie and
A.packed > B.packed. The heap root is the worst kept entry, so the final
content is exactly the top-k under (score desc, packed asc) — the tie-break
the miner's oracle equivalence relies on.
"""

from __future__ import annotations

import numpy as np

IMPLEMENTATION = "python"

NEG_INF = float("-inf")
DUMMY_PACKED = 1 << 62  # sorts after every real id on score ties


class PackedSet:
    """Hash set of packed triple ids with bulk loading."""

    __slots__ = ("_items",)

    def __init__(self):
        self._items: set[int] = set()

    def add(self, packed: int) -> None:
        self._items.add(packed)

    def add_array(self, packed: np.ndarray) -> None:
        self._items.update(packed.tolist())

    def contains(self, packed: int) -> bool:
        return packed in self._items

    def __contains__(self, packed: int) -> bool:
        return packed in self._items

    def __len__(self) -> int:
        return len(self._items)


def _worse(s_a: float, p_a: int, s_b: float, p_b: int) -> bool:
    return s_a < s_b or (s_a == s_b and p_a > p_b)


class TopKHeap:
    """Fixed-capacity min-heap seeded with -inf dummy entries.

    Supports replace-root insertion and in-place key increase for an id
    already present (a candidate reachable through both query directions
    keeps the larger of its two scores).
    """

    __slots__ = ("capacity", "scores", "packed", "pos", "filled")

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ValueError("heap capacity must be >= 1")
        self.capacity = capacity
        self.scores = [NEG_INF] * capacity
        self.packed = [DUMMY_PACKED] * capacity
        self.pos: dict[int, int] = {}
        self.filled = 0

    def root_score(self) -> float:
        return self.scores[0]

    def root_key(self) -> tuple[float, int]:
        return self.scores[0], self.packed[0]

    def _sift_down(self, i: int) -> None:
        scores, packed, pos = self.scores, self.packed, self.pos
        n = self.capacity
        s, p = scores[i], packed[i]
        while True:
            left = 2 * i + 1
            if left >= n:
                break
            worst = left
            right = left + 1
            if right < n and _worse(scores[right], packed[right], scores[left], packed[left]):
                worst = right
            if _worse(scores[worst], packed[worst], s, p):
                scores[i], packed[i] = scores[worst], packed[worst]
                if packed[i] != DUMMY_PACKED:
                    pos[packed[i]] = i
                i = worst
            else:
                break
        scores[i], packed[i] = s, p
        if p != DUMMY_PACKED:
            pos[p] = i

    def offer(self, packed: int, score: float) -> int:
        """Insert, update, or reject one candidate.

        Returns 1 for a root replacement, 2 for an in-place score increase,
        0 for a rejection.
        """
        at = self.pos.get(packed)
        if at is not None:
            if score > self.scores[at]:
                self.scores[at] = score
                self._sift_down(at)
                return 2
            return 0
        root_s, root_p = self.scores[0], self.packed[0]
        if _worse(root_s, root_p, score, packed):
            if root_p != DUMMY_PACKED:
                del self.pos[root_p]
            else:
                self.filled += 1
            self.scores[0] = score
            self.packed[0] = packed
            self._sift_down(0)
            return 1
        return 0

    def push_batch(self, scores: np.ndarray, packed: np.ndarray, visited: PackedSet) -> tuple[int, int]:
        """Offer every candidate not in ``visited``; returns (inserted, updated)."""
        inserted = updated = 0
        vis = visited._items
        offer = self.offer
        for s, p in zip(scores.tolist(), packed.tolist()):
            if p in vis:
                continue
            res = offer(p, s)
            if res == 1:
                inserted += 1
            elif res == 2:
                updated += 1
        return inserted, updated

    def contents(self) -> tuple[np.ndarray, np.ndarray]:
        """Non-dummy entries sorted by (score desc, packed asc)."""
        pairs = [
            (self.packed[i], self.scores[i])
            for i in range(self.capacity)
            if self.packed[i] != DUMMY_PACKED
        ]
        pairs.sort(key=lambda ps: (-ps[1], ps[0]))
        ids = np.array([p for p, _ in pairs], np.int64)
        scs = np.array([s for _, s in pairs], np.float64)
        return ids, scs

    def __len__(self) -> int:
        return self.filled
