"""Single-configuration lattice state and its exact time evolution."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .config import SimulationConfig


def replica_rng(seed: int, replica: int) -> np.random.Generator:
    """Independent stream for ``replica``; the pair is hashed by SeedSequence."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(replica)]))


@dataclass
class EventLog:
    """Effective hops (occupations differed) as (micro time, bond index)."""

    times: np.ndarray = field(default_factory=lambda: np.empty(0))
    bonds: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.int64))

    def __len__(self):
        return self.times.size


@dataclass
class LatticeState:
    occupations: np.ndarray  # uint8, position i holds site i - L
    n: int
    alpha: float
    beta: float
    rng: np.random.Generator
    process_time: float = 0.0

    @property
    def L(self) -> int:
        return self.occupations.size // 2

    @property
    def macro_time(self) -> float:
        return self.process_time / self.n**2

    @property
    def slow_rate(self) -> float:
        if math.isinf(self.beta):
            return 0.0
        return self.alpha * float(self.n) ** (-self.beta)

    @property
    def slow_index(self) -> int:
        return self.L - 1

    def index(self, x: int) -> int:
        if not -self.L <= x < self.L:
            raise IndexError(f"site {x} outside lattice {-self.L}..{self.L - 1}")
        return x + self.L

    def sites(self) -> np.ndarray:
        return np.arange(-self.L, self.L)

    def copy(self) -> "LatticeState":
        rng = np.random.Generator(type(self.rng.bit_generator)())
        rng.bit_generator.state = self.rng.bit_generator.state
        return LatticeState(self.occupations.copy(), self.n, self.alpha, self.beta, rng,
                            self.process_time)


def conductance(state: LatticeState, x: int) -> float:
    """Rate of the bond (x, x+1)."""
    if not -state.L <= x < state.L - 1:
        raise IndexError(f"bond ({x}, {x + 1}) outside lattice")
    return state.slow_rate if x == -1 else 1.0


def sample_bernoulli_product(config: SimulationConfig, condition_site: int | None = None,
                             rng: np.random.Generator | None = None,
                             replica: int = 0) -> LatticeState:
    """Draw from the product Bernoulli(rho) law, optionally forcing a particle at a site."""
    L = config.L
    if condition_site is not None and not -L <= condition_site < L:
        raise IndexError(f"condition site {condition_site} outside lattice {-L}..{L - 1}")
    if rng is None:
        rng = replica_rng(config.seed, replica)
    eta = (rng.random(2 * L) < config.rho).astype(np.uint8)
    if condition_site is not None:
        eta[condition_site + L] = 1
    return LatticeState(eta, config.n, config.alpha, config.beta, rng)


def sample_profile(config: SimulationConfig, profile, rng: np.random.Generator | None = None,
                   replica: int = 0) -> LatticeState:
    """Product measure with site x occupied with probability ``profile(x / n)``."""
    L = config.L
    if rng is None:
        rng = replica_rng(config.seed, replica)
    x = np.arange(-L, L) / config.n
    p = np.clip(np.asarray(profile(x), dtype=float), 0.0, 1.0)
    eta = (rng.random(2 * L) < p).astype(np.uint8)
    return LatticeState(eta, config.n, config.alpha, config.beta, rng)


def step_to_time(state: LatticeState, target_macro_time: float, *, ledger=None, track=None,
                 log: EventLog | None = None) -> LatticeState:
    """Evolve ``state`` in place to ``target_macro_time`` and return it.

    ``ledger`` (a CurrentLedger) accumulates signed bond currents, ``track`` (a
    TaggedTrack) follows a tagged particle and ``log`` collects effective hops.
    """
    target = target_macro_time * state.n**2
    if target < state.process_time - 1e-9 * max(1.0, target):
        raise ValueError(
            f"target time {target_macro_time} precedes current time {state.macro_time}")
    target = max(target, state.process_time)
    n_bonds = state.occupations.size - 1
    if ledger is not None:
        mon_of_bond = ledger.bond_map(state.L, n_bonds)
        counters = ledger.counters
    else:
        mon_of_bond = np.full(n_bonds, -1, dtype=np.int64)
        counters = np.zeros(0, dtype=np.int64)
    tag = np.array([track.current_index(state.L) if track is not None else -10], dtype=np.int64)

    logging = log is not None
    if logging:
        expected = (n_bonds - 1 + state.slow_rate) * (target - state.process_time)
        cap = int(expected + 8 * math.sqrt(expected) + 64)
        buf_t = np.empty(cap)
        buf_b = np.empty(cap, dtype=np.int64)
    else:
        buf_t = np.empty(0)
        buf_b = np.empty(0, dtype=np.int64)
    used = 0
    now = state.process_time
    while True:
        now, used, done = _kernels.run_scalar(
            state.occupations, state.slow_index, state.slow_rate, now, target, state.rng,
            mon_of_bond, counters, tag, buf_t, buf_b, used, logging)
        if done:
            break
        buf_t = np.concatenate([buf_t, np.empty(buf_t.size)])
        buf_b = np.concatenate([buf_b, np.empty(buf_b.size, dtype=np.int64)])
    state.process_time = now
    if track is not None:
        track.set_index(int(tag[0]), state.L)
    if logging:
        log.times = np.concatenate([log.times, buf_t[:used]])
        log.bonds = np.concatenate([log.bonds, buf_b[:used]])
    return state
