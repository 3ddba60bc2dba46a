"""Simulation diagnostics behind the limit theorems.

All three run on bit-packed blocks (64 lanes sharing bond clocks) and use
blocks as the independent units for confidence intervals.
"""

from __future__ import annotations

import math

import numpy as np

from .. import analytics as an
from ..lattice_kmc.config import SimulationConfig
from ..lattice_kmc.packed import (PackedCounters, advance_packed, advance_packed_integrals,
                                  advance_packed_timed, sample_packed)
from ..observables import (TestFunction, bond_of, expected_quadratic_variation, heaviside_approximant,
                           lattice_values, martingale_weights)
from .campaign import GATE_SIGMAS, Gate
from .estimators import DEFAULT_BATCHES, EstimatorState, t_half_width


def _block_ci(block_means, level=0.99):
    v = np.asarray(block_means, dtype=float)
    return float(v.mean()), t_half_width(v, level)


# --------------------------------------------------------------------------
# local replacement

def local_replacement_bound(t: float, n: int, alpha: float, beta: float, rho: float, ell: int,
                            x: int = -1) -> float:
    """80 t chi (alpha n^beta + ell) / n^2 at x = -1; the slow-bond term drops at x = 0."""
    slow = 0.0
    if x == -1:
        slow = math.inf if math.isinf(beta) else alpha * float(n) ** beta
    return 80 * t * an.chi(rho) * (slow + ell) / n**2


def local_replacement_diagnostic(config: SimulationConfig, ell: int, t: float, x: int = -1,
                                 blocks: int = DEFAULT_BATCHES) -> dict:
    """Monte Carlo E[(int_0^t eta(x) - mean of eta over x..x+ell-1 ds)^2] against its bound.

    The time integrals are exact: occupation times are accumulated between
    events by the timed kernel.
    """
    if ell < 1:
        raise ValueError("ell must be >= 1")
    if x not in (-1, 0):
        raise ValueError("the bound is stated for x = -1 and x = 0")
    if t > config.horizon_t:
        raise ValueError("t exceeds the configuration horizon")
    n = config.n
    means = []
    for b in range(blocks):
        st = sample_packed(config, b)
        occ = np.zeros((ell, 64))
        last = np.zeros(ell)
        advance_packed_timed(st, t, x, occ, last)
        diff = (occ[0] - occ.mean(axis=0))[: st.lanes] / n**2
        means.append(float(np.mean(diff**2)))
    est, ci = _block_ci(means)
    bound = local_replacement_bound(t, n, config.alpha, config.beta, config.rho, ell, x)
    return {"n": n, "beta": config.beta, "ell": ell, "x": x, "t": t, "estimate": est, "ci": ci,
            "bound": bound, "replicas": blocks * 64,
            "passed": bool(est <= bound + GATE_SIGMAS * ci)}


# --------------------------------------------------------------------------
# martingale

def martingale_samples(config: SimulationConfig, H: TestFunction, t: float, block: int):
    """Per-lane (M_t^2, <M>_t) for one block, with M from the Dynkin decomposition."""
    n = config.n
    st = sample_packed(config, block)
    L = st.L
    field_w, site_w, bond_w = martingale_weights(H, L, n, config.alpha, config.beta)
    lanes = st.lanes
    y0 = st.occupations() @ field_w
    site_time = np.zeros((2 * L, 64))
    disc_time = np.zeros((2 * L - 1, 64))
    advance_packed_integrals(st, t, site_time, disc_time)
    y1 = st.occupations() @ field_w
    comp = site_time[:, :lanes].T @ site_w / n**2
    qv = disc_time[:, :lanes].T @ bond_w / n**2
    m = y1 - y0 - comp
    return np.column_stack([m * m, qv, m * m - qv, m])


def martingale_diagnostic(config: SimulationConfig, H: TestFunction, t: float,
                          ns=(50, 100, 200), blocks: int = DEFAULT_BATCHES,
                          log_events: bool = True) -> dict:
    """Martingale isometry and convergence of the quadratic variation over n.

    For each n: E[M_t^2] and E[<M>_t] with CIs, the exact finite-n mean of
    <M>_t, and the limit 2 chi t ||grad H||^2 in the weighted norm.
    """
    if not log_events:
        raise ValueError("the martingale diagnostic needs event integration (log_events)")
    reg = an.RegimeParams.from_beta(config.beta, config.rho, config.alpha)
    limit = 2 * reg.chi * t * an.weighted_norm(an.gradient(H), reg) ** 2
    chain_limit = an.quadratic_variation_limit(H, reg, t) if H.reach > 0 else 0.0
    rows = []
    for n in ns:
        cfg = config.with_(n=n, horizon_t=t, lattice_half_width=None)
        state = EstimatorState(("M2", "QV", "D", "M"))
        for b in range(blocks):
            state.add_block(b, martingale_samples(cfg, H, t, b))
        m2, m2_ci = state.mean_ci(0)
        qv, qv_ci = state.mean_ci(1)
        d, d_ci = state.mean_ci(2)
        exact = expected_quadratic_variation(H, cfg.L, n, cfg.alpha, cfg.beta, cfg.rho, t)
        rows.append({"n": n, "E_M2": m2, "E_M2_ci": m2_ci, "E_QV": qv, "E_QV_ci": qv_ci,
                     "isometry_gap": d, "isometry_ci": d_ci, "exact_E_QV": exact,
                     "replicas": state.replicas})
    gates = []
    for r in rows:
        gates.append(Gate(f"isometry n={r['n']}", abs(r["isometry_gap"]) <= GATE_SIGMAS * r["isometry_ci"],
                          f"E[M^2]-E<M>={r['isometry_gap']:.3g} ci={r['isometry_ci']:.3g}"))
    dist = [abs(r["E_QV"] - limit) for r in rows]
    trend = all(b < a for a, b in zip(dist[:-1], dist[1:])) or max(dist) == 0.0
    gates.append(Gate("quadratic variation trend", trend,
                      "|E<M> - limit| = " + ", ".join(f"{d:.3g}" for d in dist)))
    last = rows[-1]
    gates.append(Gate(f"E[M^2] near limit n={last['n']}",
                      abs(last["E_M2"] - limit) <= GATE_SIGMAS * last["E_M2_ci"] or limit == last["E_M2"],
                      f"E[M^2]={last['E_M2']:.4g} limit={limit:.4g} ci={last['E_M2_ci']:.3g}"))
    return {"t": t, "limit": limit, "chain_limit": chain_limit, "rows": rows,
            "gates": [g.as_dict() for g in gates], "passed": all(g.passed for g in gates)}


# --------------------------------------------------------------------------
# current versus fields of Heaviside approximants

def current_field_diagnostic(config: SimulationConfig, u: float, j_grid, t: float,
                             blocks: int = DEFAULT_BATCHES) -> dict:
    """E[(J_u(t)/sqrt n - (Y_t(G) - Y_0(G)))^2] for the ramps G of length j.

    The lattice is widened to hold every ramp.  With the exact truncated
    step 1{x >= floor(un)} the difference vanishes identically; this is
    checked on every lane.
    """
    j_grid = [int(j) for j in j_grid]
    if any(b <= a for a, b in zip(j_grid[:-1], j_grid[1:])):
        raise ValueError("j grid must be ascending")
    n = config.n
    need = math.ceil(n * (abs(u) + j_grid[-1])) + math.ceil(8 * n * math.sqrt(t)) + 2
    cfg = config.with_(horizon_t=max(config.horizon_t, t),
                       lattice_half_width=max(config.L, need))
    L = cfg.L
    x = np.arange(-L, L)
    x0 = math.floor(u * n)
    step = (x >= x0).astype(float)
    ramps = np.array([lattice_values(heaviside_approximant(u, j), L, n) for j in j_grid]).T
    state = EstimatorState(tuple(f"j={j}" for j in j_grid))
    worst = 0.0
    for b in range(blocks):
        st = sample_packed(cfg, b)
        lanes = st.lanes
        occ0 = st.occupations().astype(float)
        counters = PackedCounters([bond_of(u, n)], L)
        advance_packed(st, t, counters)
        delta = st.occupations() - occ0
        J = counters.values[0, :lanes].astype(float)
        worst = max(worst, float(np.abs(J - delta @ step).max()))
        err = (J[:, None] - delta @ ramps) / math.sqrt(n)
        state.add_block(b, err**2)
    est = [state.mean_ci(i) for i in range(len(j_grid))]
    values = np.array([e[0] for e in est])
    cis = np.array([e[1] for e in est])
    inv = 1.0 / np.array(j_grid, dtype=float)
    slope = float(np.polyfit(inv, values, 1)[0])
    ratios = {}
    for a, j in enumerate(j_grid):
        if 2 * j in j_grid:
            ratios[j] = float(values[a] / values[j_grid.index(2 * j)])
    gates = [
        Gate("exact step identity", worst == 0.0, f"max |J - dY(step)|={worst:g}"),
        Gate("positive slope in 1/j", slope > 0, f"slope={slope:.4g}"),
        Gate("smallest j dominates", bool(np.all(values[0] > values[1:])), ""),
    ]
    for j, r in ratios.items():
        gates.append(Gate(f"ratio j={j}/{2 * j}", 1.5 <= r <= 3.0, f"ratio={r:.3f}"))
    return {"n": n, "u": u, "t": t, "j": j_grid, "estimate": values.tolist(), "ci": cis.tolist(),
            "slope": slope, "ratios": ratios, "replicas": state.replicas,
            "gates": [g.as_dict() for g in gates], "passed": all(g.passed for g in gates)}
