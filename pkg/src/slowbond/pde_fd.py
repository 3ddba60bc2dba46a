"""Finite-difference solvers for the heat equation with an interface at 0.

The interface grids carry two nodes at the origin, 0- and 0+, each closed
with a second-order ghost value built from the interface flux.  Far ends are
reflecting.  With trapezoid weights the schemes conserve total mass exactly,
and each half's mass when the flux vanishes.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

SCHEMES = ("crank-nicolson", "explicit")


class SchemeError(RuntimeError):
    pass


@dataclass(frozen=True)
class FdGrid:
    h: float
    k: float
    X: float
    scheme: str = "crank-nicolson"
    startup: int = 4  # backward-Euler half steps before Crank-Nicolson

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ValueError(f"scheme must be one of {SCHEMES}")
        if self.h <= 0 or self.k <= 0 or self.X <= 0:
            raise ValueError("h, k and X must be positive")
        if self.scheme == "explicit" and self.k > self.h**2 / 2:
            raise SchemeError(f"explicit scheme needs k <= h^2/2, got k={self.k}, h={self.h}")

    @property
    def m(self) -> int:
        """Number of steps from 0 to X."""
        return int(round(self.X / self.h))

    @property
    def interface_index(self) -> tuple[int, int]:
        """Positions of the 0- and 0+ nodes in the stacked interface vector."""
        return self.m, self.m + 1

    @classmethod
    def for_problem(cls, h: float, T: float, reach: float = 5.0, k: float | None = None,
                    scheme: str = "crank-nicolson", tail: float = 9.0) -> "FdGrid":
        """Grid wide enough that reflection at +-X is below 1e-8 over [0, T]."""
        X = math.ceil((reach + tail * math.sqrt(4 * T)) / h) * h
        if k is None:
            k = h / 4 if scheme == "crank-nicolson" else h * h / 2.5
        return cls(h=h, k=k, X=X, scheme=scheme)


@dataclass
class Profile:
    t: float
    x_left: np.ndarray  # -X..0 ascending; last entry is 0- (or the shared 0)
    u_left: np.ndarray
    x_right: np.ndarray  # 0..X ascending; first entry is 0+
    u_right: np.ndarray

    @property
    def h(self) -> float:
        return float(self.x_right[1] - self.x_right[0])

    def jump(self) -> float:
        return float(self.u_right[0] - self.u_left[-1])

    def mass_left(self) -> float:
        return _trapz(self.u_left, self.h)

    def mass_right(self) -> float:
        return _trapz(self.u_right, self.h)

    def mass(self) -> float:
        return self.mass_left() + self.mass_right()

    def __call__(self, x):
        """Linear interpolation, right branch at 0."""
        x = np.asarray(x, dtype=float)
        r = np.interp(x, self.x_right, self.u_right)
        l = np.interp(x, self.x_left, self.u_left)
        out = np.where(x >= 0, r, l)
        return out if out.ndim else float(out)

    def one_sided_slopes(self) -> tuple[float, float]:
        """Second-order one-sided derivative at 0- and 0+."""
        h = self.h
        ur, ul = self.u_right, self.u_left
        dr = (-3 * ur[0] + 4 * ur[1] - ur[2]) / (2 * h)
        dl = (3 * ul[-1] - 4 * ul[-2] + ul[-3]) / (2 * h)
        return dl, dr

    def rows(self):
        for x, u in zip(self.x_left, self.u_left):
            yield self.t, float(x), float(u)
        for x, u in zip(self.x_right, self.u_right):
            yield self.t, float(x), float(u)


def _trapz(u, h):
    return float(h * (u.sum() - 0.5 * (u[0] + u[-1])))


def write_profiles(profiles, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "x", "u"])
        for p in profiles:
            for row in p.rows():
                w.writerow([repr(v) for v in row])


# --------------------------------------------------------------------------
# operators

def _line_operator(n_nodes: int, h: float) -> sp.csc_matrix:
    """Second difference with reflecting ghosts at both ends."""
    main = np.full(n_nodes, -2.0)
    up = np.ones(n_nodes - 1)
    lo = np.ones(n_nodes - 1)
    up[0] = 2.0
    lo[-1] = 2.0
    return sp.diags([lo, main, up], [-1, 0, 1], format="csc") / h**2


def _interface_operator(m: int, h: float, alpha: float) -> sp.csc_matrix:
    """Stacked (left -X..0-, right 0+..X) operator with flux alpha * jump at 0."""
    N = 2 * (m + 1)
    main = np.full(N, -2.0)
    up = np.ones(N - 1)
    lo = np.ones(N - 1)
    up[0] = 2.0  # reflecting end at -X
    lo[-1] = 2.0  # reflecting end at +X
    i0, j0 = m, m + 1
    # 0- : (2 u(-h) - 2 u(0-) + 2 h alpha (u(0+) - u(0-))) / h^2
    lo[i0 - 1] = 2.0
    main[i0] = -2.0 - 2 * h * alpha
    up[i0] = 2 * h * alpha
    # 0+ : (2 u(h) - 2 u(0+) - 2 h alpha (u(0+) - u(0-))) / h^2
    up[j0] = 2.0
    main[j0] = -2.0 - 2 * h * alpha
    lo[j0 - 1] = 2 * h * alpha
    return sp.diags([lo, main, up], [-1, 0, 1], format="csc") / h**2


def _march(A, u0, T, grid: FdGrid, output_times=None):
    """Time stepping; returns {time: vector} for the requested times (T included)."""
    times = sorted(set([float(T)] + [float(t) for t in (output_times or [])]))
    if times[0] < 0:
        raise ValueError("output times must be nonnegative")
    N = u0.size
    eye = sp.identity(N, format="csc")
    u = u0.copy()
    bound = np.abs(u0).max() * (1 + 1e-8) + 1e-12
    out = {}
    now = 0.0
    solvers = {}

    def implicit(k, theta):
        key = (round(k, 15), theta)
        if key not in solvers:
            lhs = (eye - theta * k * A).tocsc()
            rhs = (eye + (1 - theta) * k * A).tocsr()
            solvers[key] = (splu(lhs), rhs)
        lu, rhs = solvers[key]
        return lambda v: lu.solve(rhs @ v)

    half_steps = grid.startup if grid.scheme == "crank-nicolson" else 0
    for target in times:
        while now < target - 1e-12:
            if grid.scheme == "explicit":
                k = min(grid.k, target - now)
                u = u + k * (A @ u)
            elif half_steps > 0:
                k = min(grid.k / 2, target - now)
                u = implicit(k, 1.0)(u)
                half_steps -= 1
            else:
                k = min(grid.k, target - now)
                u = implicit(k, 0.5)(u)
            now += k
            if not np.all(np.isfinite(u)) or np.abs(u).max() > 10 * bound:
                raise SchemeError(f"unstable growth at t={now:.4g}")
        out[target] = u.copy()
    return out


# --------------------------------------------------------------------------
# solvers

def solve_heat(g, T: float, grid: FdGrid, output_times=None):
    """Free heat equation on [-X, X] with a single node at 0.

    Returns the Profile at T, or a list of Profiles when ``output_times`` is given.
    """
    m = grid.m
    x = grid.h * np.arange(-m, m + 1)
    u0 = np.asarray(g(x), dtype=float)
    res = _march(_line_operator(x.size, grid.h), u0, T, grid, output_times)
    profs = [Profile(t, x[: m + 1], v[: m + 1], x[m:], v[m:]) for t, v in res.items()]
    return profs if output_times is not None else profs[-1]


def _interface_initial(g, grid: FdGrid):
    m = grid.m
    xr = grid.h * np.arange(0, m + 1)
    xl = -xr[::-1]
    ur = np.asarray(g(xr), dtype=float)
    left = getattr(g, "value_left", None)
    if left is not None:
        ul = np.asarray(left(np.minimum(xl, -0.0)), dtype=float)
    else:
        ul = np.asarray(g(xl), dtype=float)
        ul[-1] = float(np.asarray(g(np.array([-1e-300])))[0])
    return xl, xr, np.concatenate([ul, ur])


def solve_robin_interface(g, T: float, alpha: float, grid: FdGrid, output_times=None):
    """Heat equation on both half-lines coupled through u'(0+-) = alpha (u(0+) - u(0-))."""
    if alpha < 0:
        raise ValueError("alpha must be nonnegative")
    if grid.scheme == "explicit" and grid.k * (2 / grid.h**2 + 2 * alpha / grid.h) > 1:
        raise SchemeError("explicit step too large for the interface coupling")
    xl, xr, u0 = _interface_initial(g, grid)
    m = grid.m
    res = _march(_interface_operator(m, grid.h, alpha), u0, T, grid, output_times)
    profs = [Profile(t, xl, v[: m + 1], xr, v[m + 1:]) for t, v in res.items()]
    return profs if output_times is not None else profs[-1]


def solve_neumann_interface(g, T: float, grid: FdGrid, output_times=None):
    """Two decoupled half-lines with zero flux at 0."""
    return solve_robin_interface(g, T, 0.0, grid, output_times)


def solve_for_beta(g, T: float, beta: float, alpha: float, grid: FdGrid):
    if beta < 1:
        return solve_heat(g, T, grid)
    if beta == 1:
        return solve_robin_interface(g, T, alpha, grid)
    return solve_neumann_interface(g, T, grid)


# --------------------------------------------------------------------------
# comparison with the particle system

def step_profile(left: float, right: float):
    """left on x < 0, right on x >= 0."""
    return lambda x: np.where(np.asarray(x, dtype=float) >= 0, right, left)


def hydrodynamic_check(config, g, T: float, eps: float = 0.05, window: float = 1.0,
                       blocks: int = 4, h: float = 2.5e-3) -> dict:
    """L1 distance on [-window, window] between box-averaged density and the PDE solution.

    Runs ``blocks`` independent blocks of 64 lanes from the product measure
    with densities g(x/n); boxes of width eps*n sites are averaged over lanes.
    The box edges never straddle the slow bond.
    """
    from .lattice_kmc.packed import advance_packed, sample_packed

    n = config.n
    L = config.L
    width = max(1, int(round(eps * n)))
    n_box = int(window * n) // width
    edges = np.arange(-n_box, n_box + 1) * width  # site edges; 0 is an edge
    occ_sum = np.zeros(2 * L)
    lanes = 0
    for b in range(blocks):
        st = sample_packed(config, b, profile=g)
        advance_packed(st, T)
        occ_sum += st.occupations().sum(axis=0)
        lanes += st.lanes
    dens = occ_sum / lanes
    emp = np.array([dens[a + L: c + L].mean() for a, c in zip(edges[:-1], edges[1:])])
    grid = FdGrid.for_problem(h, T, reach=window + 1.0)
    prof = solve_for_beta(g, T, config.beta, config.alpha, grid)
    # box average of the PDE profile over the same macroscopic cells
    sites = np.arange(-n_box * width, n_box * width)
    pde_site = prof(sites / n)
    pde = pde_site.reshape(-1, width).mean(axis=1)
    centers = (edges[:-1] + edges[1:]) / 2 / n
    l1 = float(np.abs(emp - pde).sum() * width / n)
    return {"n": n, "T": T, "lanes": lanes, "centers": centers, "empirical": emp,
            "pde": pde, "l1": l1}
