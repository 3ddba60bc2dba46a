"""Mergeable moment accumulators and batch-means confidence intervals."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

DEFAULT_BATCHES = 30
DEFAULT_LEVEL = 0.99


@dataclass(frozen=True)
class BlockSums:
    count: int
    total: np.ndarray  # (k,)
    cross: np.ndarray  # (k, k)
    max_abs: np.ndarray  # (k,)

    @classmethod
    def from_samples(cls, samples: np.ndarray) -> "BlockSums":
        x = np.asarray(samples, dtype=float)
        if x.ndim != 2:
            raise ValueError("samples must be (replicas, observables)")
        return cls(x.shape[0], x.sum(axis=0), x.T @ x,
                   np.abs(x).max(axis=0) if x.size else np.zeros(x.shape[1]))


@dataclass
class EstimatorState:
    """Sums per independent block, keyed by block id.

    Merging is a union of blocks, so it is exact, associative and
    commutative; totals are always summed in block-id order, which makes
    every derived number independent of how the blocks were scheduled.
    """

    names: tuple
    blocks: dict = field(default_factory=dict)

    def add_block(self, block_id: int, samples) -> None:
        if block_id in self.blocks:
            raise KeyError(f"block {block_id} already recorded")
        sums = BlockSums.from_samples(samples)
        if sums.total.size != len(self.names):
            raise ValueError("sample width does not match observable names")
        self.blocks[int(block_id)] = sums

    def merge(self, other: "EstimatorState") -> "EstimatorState":
        if tuple(other.names) != tuple(self.names):
            raise ValueError("cannot merge states over different observables")
        clash = self.blocks.keys() & other.blocks.keys()
        if clash:
            raise KeyError(f"blocks recorded twice: {sorted(clash)[:5]}")
        return EstimatorState(self.names, {**self.blocks, **other.blocks})

    @property
    def replicas(self) -> int:
        return sum(b.count for b in self.blocks.values())

    def index(self, name) -> int:
        return self.names.index(name)

    def _sum(self, ids):
        k = len(self.names)
        n, tot, cross = 0, np.zeros(k), np.zeros((k, k))
        for i in ids:
            b = self.blocks[i]
            n += b.count
            tot = tot + b.total
            cross = cross + b.cross
        return n, tot, cross

    def totals(self):
        return self._sum(sorted(self.blocks))

    def max_abs(self) -> np.ndarray:
        out = np.zeros(len(self.names))
        for i in sorted(self.blocks):
            out = np.maximum(out, self.blocks[i].max_abs)
        return out

    def mean(self) -> np.ndarray:
        n, tot, _ = self.totals()
        return tot / n

    def covariance(self) -> np.ndarray:
        n, tot, cross = self.totals()
        return _cov(n, tot, cross)

    def batches(self, n_batches: int = DEFAULT_BATCHES) -> list:
        """Contiguous groups of block ids; at most one batch per block."""
        ids = sorted(self.blocks)
        n_batches = min(n_batches, len(ids))
        return [list(part) for part in np.array_split(np.array(ids), n_batches)]

    def estimate(self, statistic, n_batches: int = DEFAULT_BATCHES,
                 level: float = DEFAULT_LEVEL) -> tuple[float, float]:
        """Pooled value of ``statistic(n, total, cross)`` and its batch-means half-width."""
        point = float(statistic(*self.totals()))
        groups = self.batches(n_batches)
        if len(groups) < 2:
            return point, math.inf
        vals = np.array([statistic(*self._sum(g)) for g in groups], dtype=float)
        half = t_half_width(vals, level)
        return point, half

    def mean_ci(self, i: int, **kw):
        return self.estimate(lambda n, tot, cross: tot[i] / n, **kw)

    def cov_ci(self, i: int, j: int, **kw):
        return self.estimate(lambda n, tot, cross: _cov(n, tot, cross)[i, j], **kw)


def _cov(n, tot, cross):
    if n < 2:
        return np.full_like(cross, np.nan)
    mu = tot / n
    return (cross - n * np.outer(mu, mu)) / (n - 1)


def t_half_width(values, level: float = DEFAULT_LEVEL) -> float:
    """Student-t half-width of the mean of i.i.d. batch values."""
    v = np.asarray(values, dtype=float)
    B = v.size
    if B < 2:
        return math.inf
    q = stats.t.ppf(0.5 + level / 2, B - 1)
    return float(q * v.std(ddof=1) / math.sqrt(B))


def mean_ci(values, n_batches: int = DEFAULT_BATCHES, level: float = DEFAULT_LEVEL):
    """Batch-means CI for a plain sample of i.i.d. values."""
    v = np.asarray(values, dtype=float)
    groups = np.array_split(v, min(n_batches, v.size))
    return float(v.mean()), t_half_width([g.mean() for g in groups], level)
