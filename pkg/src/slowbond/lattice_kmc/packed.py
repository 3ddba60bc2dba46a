"""Bit-packed block of up to 64 trajectories driven by one set of bond clocks.

Under the stirring construction a bond ring swaps site contents whatever
they are, so the contents of 64 lattices can be stored as the bits of one
``uint64`` per site and moved with a single word swap.  Lanes differ in
their initial configuration; the clocks are shared, so lanes within a block
are exchangeable but not independent.  Blocks are independent.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .config import SimulationConfig
from .state import replica_rng

LANES = 64


def pack_bits(bits: np.ndarray) -> np.ndarray:
    """(sites, <=64) 0/1 array -> uint64 word per site, lane k in bit k."""
    sites, lanes = bits.shape
    padded = np.zeros((sites, LANES), dtype=np.uint8)
    padded[:, :lanes] = bits
    return np.packbits(padded, axis=1, bitorder="little").view("<u8").reshape(sites).astype(
        np.uint64)


def unpack_bits(words: np.ndarray, lanes: int = LANES) -> np.ndarray:
    """uint64 word per site -> (lanes, sites) uint8 occupation matrix."""
    raw = np.ascontiguousarray(words.astype("<u8")).view(np.uint8).reshape(words.size, 8)
    bits = np.unpackbits(raw, axis=1, bitorder="little")
    return np.ascontiguousarray(bits[:, :lanes].T)


@dataclass
class PackedLattice:
    words: np.ndarray
    tags: np.ndarray
    n: int
    alpha: float
    beta: float
    lanes: int
    rng: np.random.Generator
    process_time: float = 0.0
    track_tags: bool = False

    @property
    def L(self) -> int:
        return self.words.size // 2

    @property
    def slow_rate(self) -> float:
        if math.isinf(self.beta):
            return 0.0
        return self.alpha * float(self.n) ** (-self.beta)

    @property
    def total_rate(self) -> float:
        return (self.words.size - 2) + self.slow_rate

    @property
    def macro_time(self) -> float:
        return self.process_time / self.n**2

    def occupations(self) -> np.ndarray:
        return unpack_bits(self.words, self.lanes)

    def tag_positions(self) -> np.ndarray:
        """Site of each lane's tagged particle (requires tag tracking)."""
        pos = np.full(self.lanes, np.iinfo(np.int64).min, dtype=np.int64)
        nz = np.flatnonzero(self.tags)
        if nz.size:
            bits = unpack_bits(self.tags[nz], self.lanes)  # (lanes, len(nz))
            lane, col = np.nonzero(bits)
            pos[lane] = nz[col] - self.L
        return pos


def sample_packed(config: SimulationConfig, block: int, lanes: int = LANES,
                  condition_site: int | None = None, profile=None) -> PackedLattice:
    """Fresh block ``block`` with its own RNG stream.

    Each lane is an independent product Bernoulli(rho) draw, or a draw with
    site densities ``profile(x / n)`` when a profile is given.
    """
    if not 1 <= lanes <= LANES:
        raise ValueError(f"lanes must be in 1..{LANES}")
    L = config.L
    if condition_site is not None and not -L <= condition_site < L:
        raise IndexError(f"condition site {condition_site} outside lattice")
    rng = replica_rng(config.seed, block)
    if profile is None:
        p = np.full(2 * L, config.rho)
    else:
        p = np.clip(np.asarray(profile(np.arange(-L, L) / config.n), dtype=float), 0.0, 1.0)
    bits = (rng.random((2 * L, lanes)) < p[:, None]).astype(np.uint8)
    tags = np.zeros(2 * L, dtype=np.uint64)
    track = condition_site is not None
    if track:
        bits[condition_site + L, :] = 1
        tags[condition_site + L] = np.uint64((1 << lanes) - 1) if lanes < 64 else ~np.uint64(0)
    return PackedLattice(pack_bits(bits), tags, config.n, config.alpha, config.beta, lanes,
                         rng, track_tags=track)


class PackedCounters:
    """Per-lane signed currents for a fixed set of bonds (left sites)."""

    def __init__(self, left_sites, L: int):
        self.left_sites = np.asarray(left_sites, dtype=np.int64)
        self.map = np.full(2 * L - 1, -1, dtype=np.int64)
        for i, x in enumerate(self.left_sites):
            if not -L <= x < L - 1:
                raise IndexError(f"bond ({x}, {x + 1}) outside lattice")
            self.map[x + L] = i
        self.values = np.zeros((self.left_sites.size, LANES), dtype=np.int64)


def advance_packed(state: PackedLattice, target_macro_time: float,
                   counters: PackedCounters | None = None) -> PackedLattice:
    """Exact evolution to ``target_macro_time``.

    The number of rings in the interval is Poisson(R * dt) and rings are
    i.i.d. bond picks, which is the same law as exponential waiting times
    with the final overshooting event discarded.
    """
    target = target_macro_time * state.n**2
    dt = target - state.process_time
    if dt < -1e-9 * max(1.0, target):
        raise ValueError("target time precedes current time")
    if counters is None:
        counters = PackedCounters([], state.L)
    if dt > 0:
        n_events = int(state.rng.poisson(state.total_rate * dt))
        _kernels.run_packed_count(state.words, state.tags, counters.map, counters.values,
                                  state.L - 1, state.slow_rate, n_events, state.rng,
                                  state.track_tags)
    state.process_time = max(target, state.process_time)
    return state


def advance_packed_timed(state: PackedLattice, target_macro_time: float, win_lo: int,
                         occ: np.ndarray, last: np.ndarray,
                         counters: PackedCounters | None = None) -> PackedLattice:
    """Evolution with exact per-lane occupation times of a site window.

    ``win_lo`` is a site (not an index); ``occ`` has shape (window, 64) and
    collects micro-time occupation; ``last`` holds the window's last update
    times and must start at the current process time.
    """
    target = target_macro_time * state.n**2
    if counters is None:
        counters = PackedCounters([], state.L)
    _kernels.run_packed_timed(state.words, state.tags, counters.map, counters.values,
                              state.L - 1, state.slow_rate, state.process_time, target,
                              state.rng, state.track_tags, win_lo + state.L, occ, last)
    state.process_time = target
    return state


def advance_packed_integrals(state: PackedLattice, target_macro_time: float,
                             site_time: np.ndarray, disc_time: np.ndarray) -> PackedLattice:
    """Evolution accumulating per-lane occupation and discordance times (micro units)."""
    target = target_macro_time * state.n**2
    site_last = np.full(state.words.size, state.process_time)
    disc_last = np.full(state.words.size - 1, state.process_time)
    _kernels.run_packed_integrals(state.words, state.L - 1, state.slow_rate, state.process_time,
                                  target, state.rng, site_time, site_last, disc_time, disc_last)
    state.process_time = target
    return state
