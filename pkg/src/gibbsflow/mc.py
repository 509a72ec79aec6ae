"""Small Monte Carlo plumbing: chunked, order-deterministic accumulation."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import NumericalGuardError


def chunk_sizes(total: int, chunk: int) -> list[int]:
    """Deterministic chunk layout: fixed-size chunks plus a remainder."""
    if total < 1:
        raise ValueError("need at least one sample")
    if chunk < 1:
        raise ValueError("chunk must be >= 1")
    out = [chunk] * (total // chunk)
    if total % chunk:
        out.append(total % chunk)
    return out


@dataclass
class RunningMoments:
    """Streaming mean/variance via pairwise (Chan) combination.

    Results depend only on the order in which chunks are pushed, not on
    how many workers produced them, which is what the reproducibility
    contract needs.
    """

    count: int = 0
    mean: float = 0.0
    m2: float = 0.0

    def push_array(self, samples: np.ndarray) -> None:
        samples = np.asarray(samples, dtype=float)
        if not np.all(np.isfinite(samples)):
            raise NumericalGuardError("non-finite Monte Carlo sample encountered")
        n = samples.size
        if n == 0:
            return
        mean = float(samples.mean())
        m2 = float(((samples - mean) ** 2).sum())
        self._combine(n, mean, m2)

    def _combine(self, n: int, mean: float, m2: float) -> None:
        if self.count == 0:
            self.count, self.mean, self.m2 = n, mean, m2
            return
        delta = mean - self.mean
        total = self.count + n
        self.mean += delta * n / total
        self.m2 += m2 + delta * delta * self.count * n / total
        self.count = total

    @property
    def variance(self) -> float:
        if self.count < 2:
            return 0.0
        return self.m2 / (self.count - 1)

    @property
    def std_error(self) -> float:
        return math.sqrt(self.variance / self.count) if self.count else 0.0
