"""Replica campaigns: run independent blocks, accumulate moments, compare with the limits."""

from __future__ import annotations

import csv
import json
import math
import multiprocessing as mp
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .. import analytics as an
from ..lattice_kmc.config import ConfigError, SimulationConfig
from ..lattice_kmc.packed import LANES, PackedCounters, advance_packed, sample_packed
from ..observables import TestFunction, bond_of, lattice_values, tagged_from_current
from .estimators import DEFAULT_BATCHES, EstimatorState

GATE_SIGMAS = 3.0


@dataclass
class Campaign:
    config: SimulationConfig
    currents: tuple = (0.0,)
    tagged: float | None = None
    fields: tuple = ()  # (name, TestFunction) pairs
    time_grid: tuple = (1.0,)
    out_dir: str | None = None
    batches: int = DEFAULT_BATCHES

    def __post_init__(self):
        self.currents = tuple(float(u) for u in self.currents)
        self.time_grid = tuple(float(t) for t in self.time_grid)
        self.fields = tuple(self.fields)

    @property
    def regime(self) -> an.RegimeParams:
        c = self.config
        return an.RegimeParams.from_beta(c.beta, c.rho, c.alpha)

    @property
    def n_blocks(self) -> int:
        return math.ceil(self.config.replicas / LANES)

    @property
    def tagged_site(self) -> int | None:
        return None if self.tagged is None else math.floor(self.tagged * self.config.n)

    def problems(self) -> list[str]:
        out = self.config.problems()
        if out:
            return out
        c = self.config
        grid = self.time_grid
        if not grid:
            out.append("time grid is empty")
        if any(b <= a for a, b in zip(grid[:-1], grid[1:])):
            out.append("time grid must be strictly ascending")
        if grid and (grid[0] < 0 or grid[-1] > c.horizon_t + 1e-12):
            out.append(f"time grid must lie in [0, horizon_t={c.horizon_t}]")
        L = c.L
        for u in self.currents:
            x = bond_of(u, c.n)
            if not -L <= x < L - 1:
                out.append(f"current point u={u} maps to bond ({x}, {x + 1}) outside the lattice")
        if self.tagged is not None:
            x0 = self.tagged_site
            if not -L + 1 <= x0 < L:
                out.append(f"tagged site {x0} outside the lattice")
            if c.rho == 0:
                out.append("a tagged particle needs rho > 0")
        want = an._CLASS_OF[self.regime.regime]
        for name, H in self.fields:
            if not isinstance(H, TestFunction):
                out.append(f"field {name!r} is not a TestFunction")
            elif H.beta_class != want or (want == "robin" and H.alpha != c.alpha):
                out.append(f"field {name!r} has class {H.beta_class!r}; regime needs {want!r}")
        return out

    def validate(self) -> "Campaign":
        problems = self.problems()
        if problems:
            raise ConfigError(problems)
        return self

    def observable_names(self) -> tuple:
        names = []
        for t in self.time_grid:
            names += [("J", f"{u:g}", t) for u in self.currents]
            if self.tagged is not None:
                names.append(("X", f"{self.tagged:g}", t))
            names += [("Y", name, t) for name, _ in self.fields]
        return tuple(names)


def observable_id(name) -> str:
    kind, label, _ = name
    return f"{kind}[{label}]"


# --------------------------------------------------------------------------
# one block

def run_block(c: Campaign, block: int):
    """Simulate block ``block``; returns (samples (lanes, k), tagged mismatches)."""
    cfg = c.config
    n = cfg.n
    lanes = min(LANES, cfg.replicas - LANES * block)
    x0 = c.tagged_site
    st = sample_packed(cfg, block, lanes, condition_site=x0)
    L = st.L
    wanted = [bond_of(u, n) for u in c.currents] + ([x0 - 1] if x0 is not None else [])
    uniq = sorted(set(wanted))
    slot = [uniq.index(x) for x in wanted]  # a bond may serve several observables
    counters = PackedCounters(uniq, L)
    weights = np.array([lattice_values(H, L, n) for _, H in c.fields]).T if c.fields else None
    rows, mismatches = [], 0
    scale = 1 / math.sqrt(n)
    for t in c.time_grid:
        advance_packed(st, t, counters)
        cols = [counters.values[slot[: len(c.currents)], :lanes].T * scale]
        occ = None
        if x0 is not None or c.fields:
            occ = st.occupations()
        if x0 is not None:
            pos = st.tag_positions()[:lanes]
            rebuilt = tagged_from_current(occ, counters.values[slot[-1], :lanes], x0)
            mismatches += int(np.count_nonzero(pos != rebuilt))
            cols.append(((pos - x0) * scale)[:, None])
        if c.fields:
            cols.append(((occ - cfg.rho) @ weights) * scale)
        rows.append(np.hstack(cols))
    return np.hstack(rows), mismatches


_ACTIVE: Campaign | None = None


def _worker(block: int):
    samples, mism = run_block(_ACTIVE, block)
    return block, samples, mism


def _iter_blocks(c: Campaign, workers: int):
    global _ACTIVE
    blocks = range(c.n_blocks)
    if workers <= 1:
        for b in blocks:
            yield (b, *run_block(c, b))
        return
    _ACTIVE = c  # inherited by forked workers; test functions need not pickle
    ctx = mp.get_context("fork")
    with ProcessPoolExecutor(max_workers=workers, mp_context=ctx) as pool:
        yield from pool.map(_worker, blocks, chunksize=1)
    _ACTIVE = None


# --------------------------------------------------------------------------
# campaign

@dataclass
class Gate:
    name: str
    passed: bool
    detail: str = ""

    def as_dict(self):
        return {"name": self.name, "passed": bool(self.passed), "detail": self.detail}


@dataclass
class CampaignResult:
    campaign: Campaign
    state: EstimatorState
    tables: dict = field(default_factory=dict)  # observable id -> CovarianceTable
    gates: list = field(default_factory=list)
    mismatches: int = 0

    @property
    def passed(self) -> bool:
        return all(g.passed for g in self.gates)

    def entry(self, obs: str, t: float, s: float):
        for e in self.tables[obs].entries:
            if math.isclose(e.t, t) and math.isclose(e.s, s):
                return e
        raise KeyError((obs, t, s))

    def summary(self) -> dict:
        cfg = self.campaign.config
        return {
            "config": {"n": cfg.n, "alpha": cfg.alpha, "beta": _json_float(cfg.beta),
                       "rho": cfg.rho, "horizon_t": cfg.horizon_t, "L": cfg.L,
                       "seed": cfg.seed, "replicas": cfg.replicas},
            "regime": self.campaign.regime.regime,
            "tables": {k: [_json_entry(e) for e in tab.entries] for k, tab in self.tables.items()},
            "gates": [g.as_dict() for g in self.gates],
            "passed": self.passed,
        }


def _json_float(x):
    return "inf" if isinstance(x, float) and math.isinf(x) else x


def _json_entry(e):
    d = {k: getattr(e, k) for k in an.CSV_HEADER}
    return {k: (None if isinstance(v, float) and math.isnan(v) else _json_float(v))
            for k, v in d.items()}


def _analytic(c: Campaign, kind: str, label: str, t: float, s: float, other=None) -> float:
    reg = c.regime
    if kind == "J":
        return an.current_cov(reg, t, s, float(label))
    if kind == "X":
        return an.tagged_covariance(t, s, float(label), reg.rho, reg)
    H = dict(c.fields)[label]
    G = dict(c.fields)[other]
    return an.ou_covariance(H, G, t, s, reg)


def build_tables(c: Campaign, state: EstimatorState) -> dict:
    reg = c.regime
    alpha = reg.alpha if reg.regime == an.CRITICAL else math.nan
    names = state.names
    tables = {}
    grid = c.time_grid
    pairs = [(t, s) for t in grid for s in grid if s <= t and s > 0]
    by = {nm: i for i, nm in enumerate(names)}
    for kind, label in {(k, l) for k, l, _ in names if k in "JX"}:
        tab = an.CovarianceTable()
        for t, s in pairs:
            i, j = by[(kind, label, t)], by[(kind, label, s)]
            emp, ci = state.cov_ci(i, j, n_batches=c.batches)
            tab.add(regime=reg.regime, alpha=alpha, rho=reg.rho, u=float(label), t=t, s=s,
                    analytic=_analytic(c, kind, label, t, s), empirical=emp, ci=ci,
                    replicas=state.replicas)
        tables[f"{kind}[{label}]"] = tab
    for hname, _ in c.fields:
        for gname, _ in c.fields:
            tab = an.CovarianceTable()
            for t, s in pairs:
                i, j = by[("Y", hname, t)], by[("Y", gname, s)]
                emp, ci = state.cov_ci(i, j, n_batches=c.batches)
                tab.add(regime=reg.regime, alpha=alpha, rho=reg.rho, u=math.nan, t=t, s=s,
                        analytic=_analytic(c, "Y", hname, t, s, gname), empirical=emp, ci=ci,
                        replicas=state.replicas)
            tables[f"Y[{hname},{gname}]"] = tab
    return tables


def evaluate_gates(c: Campaign, res: CampaignResult) -> list:
    gates = []
    for obs, tab in res.tables.items():
        for e in tab.entries:
            ok = abs(e.empirical - e.analytic) <= GATE_SIGMAS * e.ci
            gates.append(Gate(f"cov {obs} t={e.t:g} s={e.s:g}", ok,
                              f"empirical={e.empirical:.5g} analytic={e.analytic:.5g} "
                              f"ci={e.ci:.3g}"))
    st = res.state
    for i, nm in enumerate(st.names):
        if nm[0] == "J":
            m, ci = st.mean_ci(i, n_batches=c.batches)
            gates.append(Gate(f"mean {observable_id(nm)} t={nm[2]:g}", abs(m) <= GATE_SIGMAS * ci,
                              f"mean={m:.4g} ci={ci:.3g}"))
    cfg = c.config
    for i, nm in enumerate(st.names):
        if nm[0] == "J" and cfg.slow_rate == 0 and bond_of(float(nm[1]), cfg.n) == -1:
            mx = float(st.max_abs()[i])
            gates.append(Gate(f"null current {observable_id(nm)} t={nm[2]:g}", mx == 0.0,
                              f"max |J|={mx:g}"))
    if c.tagged is not None:
        gates.append(Gate("tagged reconstruction", res.mismatches == 0,
                          f"mismatches={res.mismatches}"))
    return gates


def run_campaign(c: Campaign, workers: int = 1) -> CampaignResult:
    c.validate()
    names = c.observable_names()
    state = EstimatorState(names)
    mismatches = 0
    raw = [] if c.out_dir else None
    for block, samples, mism in _iter_blocks(c, workers):
        state.add_block(block, samples)
        mismatches += mism
        if raw is not None:
            raw.append((block, samples))
    res = CampaignResult(c, state, mismatches=mismatches)
    res.tables = build_tables(c, state)
    res.gates = evaluate_gates(c, res)
    if c.out_dir:
        write_outputs(res, raw)
    return res


def write_outputs(res: CampaignResult, raw) -> None:
    out = Path(res.campaign.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    names = res.state.names
    with open(out / "observables.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["replica", "macro_time", "observable_id", "value"])
        for block, samples in sorted(raw, key=lambda r: r[0]):
            for lane, row in enumerate(samples):
                rep = block * LANES + lane
                for nm, v in zip(names, row):
                    w.writerow([rep, repr(nm[2]), observable_id(nm), repr(float(v))])
    for obs, tab in res.tables.items():
        safe = obs.replace("[", "_").replace("]", "").replace(",", "_")
        tab.write_csv(out / f"covariance_{safe}.csv")
    with open(out / "summary.json", "w") as fh:
        json.dump(res.summary(), fh, indent=2)


def default_workers() -> int:
    return max(1, len(os.sched_getaffinity(0)))
