"""Trial loop shared by every Monte Carlo estimator.

Trial ``i`` always draws from ``rng.spawn(i)`` and trials are grouped in
fixed-size chunks, so results do not depend on how many worker threads run
the chunks.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .linalg import SingularGram

CHUNK = 64
MAX_REDRAWS = 100


def run_chunks(chunk_fn, n_trials, threads=1):
    """Call ``chunk_fn(start, stop)`` over fixed chunks and return results in order."""
    bounds = [(s, min(s + CHUNK, n_trials)) for s in range(0, n_trials, CHUNK)]
    if threads > 1 and len(bounds) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(lambda b: chunk_fn(*b), bounds))
    return [chunk_fn(*b) for b in bounds]


def with_redraw(draw, build, stream):
    """Draw a realization and build on it, redrawing on a singular Gram."""
    for _ in range(MAX_REDRAWS):
        sample = draw(stream)
        try:
            return sample, build(sample)
        except SingularGram:
            continue
    raise SingularGram(f"{MAX_REDRAWS} consecutive singular draws on {stream!r}")


class Moments:
    """Running first/second moment of a per-trial quantity (any shape)."""

    def __init__(self):
        self.n = 0
        self.total = 0.0
        self.total_sq = 0.0

    def add(self, x):
        x = np.asarray(x)
        self.n += 1
        self.total = self.total + x
        self.total_sq = self.total_sq + np.abs(x) ** 2

    def merge(self, other):
        self.n += other.n
        self.total = self.total + other.total
        self.total_sq = self.total_sq + other.total_sq
        return self

    @property
    def mean(self):
        return self.total / self.n

    @property
    def std_error(self):
        """Standard error of the sample mean (unbiased variance)."""
        if self.n < 2:
            return np.full(np.shape(self.total), np.inf)
        var = (self.total_sq - self.n * np.abs(self.mean) ** 2) / (self.n - 1)
        return np.sqrt(np.maximum(var, 0.0) / self.n)


def merge_all(parts):
    out = parts[0]
    for p in parts[1:]:
        out.merge(p)
    return out
