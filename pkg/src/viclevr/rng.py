"""Deterministic PRNG used everywhere a seed appears.

splitmix64 is chosen so that split assignments and generated datasets are
bit-exact reproducible regardless of platform or Python version.
"""

from __future__ import annotations

_MASK = (1 << 64) - 1


class SplitMix64:
    """64-bit splitmix64 stream."""

    def __init__(self, seed: int):
        self._state = seed & _MASK

    def next_u64(self) -> int:
        self._state = (self._state + 0x9E3779B97F4A7C15) & _MASK
        z = self._state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
        return z ^ (z >> 31)

    def next_below(self, k: int) -> int:
        """Uniform integer in [0, k) via 128-bit multiply-high."""
        if k <= 0:
            raise ValueError("k must be positive")
        return (self.next_u64() * k) >> 64

    def next_float(self) -> float:
        """Uniform float in [0, 1) with 53 bits of entropy."""
        return (self.next_u64() >> 11) * (1.0 / (1 << 53))

    def shuffle(self, items: list) -> None:
        """In-place Fisher-Yates shuffle."""
        for i in range(len(items) - 1, 0, -1):
            j = self.next_below(i + 1)
            items[i], items[j] = items[j], items[i]

    def choice_weighted(self, labels: list, weights: list) -> object:
        """Pick a label proportionally to its non-negative weight."""
        total = float(sum(weights))
        if total <= 0:
            raise ValueError("weights must have positive sum")
        r = self.next_float() * total
        acc = 0.0
        for label, w in zip(labels, weights):
            acc += w
            if r < acc:
                return label
        return labels[-1]
