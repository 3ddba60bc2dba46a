"""Instruments on trajectories: bond currents, tagged particle, density fields."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.special import erfc

from .lattice_kmc import _kernels
from .lattice_kmc.state import EventLog, LatticeState

FULL_LINE = "full-line"
ROBIN = "robin"
NEUMANN = "neumann"

_SQRT_PI = math.sqrt(math.pi)


def regime_class(beta: float) -> str:
    if beta < 1:
        return FULL_LINE
    if beta == 1:
        return ROBIN
    return NEUMANN


@dataclass(frozen=True)
class TestFunction:
    """Function smooth off the origin, given by its two sides and their derivatives.

    Evaluation at 0 uses the right branch (right continuity), which also gives
    the right-limit convention for the first and second derivative operators.
    ``reach`` bounds the support numerically: |H| is below 1e-16 beyond it.
    """

    __test__ = False  # not a pytest class

    value_right: Callable
    value_left: Callable
    d1_right: Callable
    d1_left: Callable
    d2_right: Callable
    d2_left: Callable
    beta_class: str | None = FULL_LINE
    alpha: float | None = None
    reach: float = 10.0
    decay: tuple[int, int] = (2, 2)
    name: str = "H"

    def _branch(self, right, left, x):
        x = np.asarray(x, dtype=float)
        out = np.where(x >= 0, right(np.maximum(x, 0.0)), left(np.minimum(x, -0.0)))
        return out if out.ndim else float(out)

    def __call__(self, x):
        return self._branch(self.value_right, self.value_left, x)

    def d1(self, x):
        return self._branch(self.d1_right, self.d1_left, x)

    def d2(self, x):
        return self._branch(self.d2_right, self.d2_left, x)

    def limits(self, k: int = 0) -> tuple[float, float]:
        """(left, right) limits of the k-th derivative at 0."""
        pairs = [(self.value_left, self.value_right), (self.d1_left, self.d1_right),
                 (self.d2_left, self.d2_right)]
        left, right = pairs[k]
        return float(left(np.array(-0.0))), float(right(np.array(0.0)))

    @property
    def jump(self) -> float:
        left, right = self.limits(0)
        return right - left

    def even(self) -> Callable:
        return lambda x: 0.5 * (self(x) + self(-np.asarray(x, dtype=float)))

    def odd(self) -> Callable:
        return lambda x: 0.5 * (self(x) - self(-np.asarray(x, dtype=float)))

    def scaled(self, a: float) -> "TestFunction":
        return combine([(a, self)], name=f"{a:g}*{self.name}")

    def __add__(self, other: "TestFunction") -> "TestFunction":
        return combine([(1.0, self), (1.0, other)], name=f"{self.name}+{other.name}")

    def __rmul__(self, a: float) -> "TestFunction":
        return self.scaled(a)

    def boundary_residuals(self, h: float = 1e-5) -> dict[str, float]:
        """Numerical residuals of the class conditions at 0, from one-sided differences."""
        f_r = self.value_right
        f_l = self.value_left
        # second-order one-sided differences
        dr = (-3 * f_r(0.0) + 4 * f_r(h) - f_r(2 * h)) / (2 * h)
        dl = (3 * f_l(-0.0) - 4 * f_l(-h) + f_l(-2 * h)) / (2 * h)
        jump = float(f_r(0.0) - f_l(-0.0))
        res = {"derivative_mismatch": float(dr - dl)}
        if self.beta_class == FULL_LINE:
            res["jump"] = jump
        elif self.beta_class == ROBIN:
            res["robin"] = float(dr - self.alpha * jump)
        elif self.beta_class == NEUMANN:
            res["neumann"] = float(dr)
        return res

    def check_class(self, tol: float = 1e-8) -> bool:
        """Exact-derivative check of the class conditions, relative to the function scale."""
        v_l, v_r = self.limits(0)
        d_l, d_r = self.limits(1)
        scale = max(1.0, abs(v_l), abs(v_r), abs(d_l), abs(d_r))
        ok = abs(d_r - d_l) <= tol * scale
        if self.beta_class == FULL_LINE:
            ok &= abs(v_r - v_l) <= tol * scale
            s2 = self.limits(2)
            ok &= abs(s2[1] - s2[0]) <= tol * scale
        elif self.beta_class == ROBIN:
            ok &= abs(d_r - self.alpha * (v_r - v_l)) <= tol * scale
        elif self.beta_class == NEUMANN:
            ok &= abs(d_r) <= tol * scale
        return bool(ok)


def combine(terms, name: str = "H") -> TestFunction:
    """Linear combination sum a_i * H_i; the class is kept when all terms share it."""
    terms = list(terms)
    classes = {(h.beta_class, h.alpha) for _, h in terms}
    cls, alpha = classes.pop() if len(classes) == 1 else (None, None)

    def lin(attr):
        return lambda x: sum(a * getattr(h, attr)(x) for a, h in terms)

    return TestFunction(lin("value_right"), lin("value_left"), lin("d1_right"), lin("d1_left"),
                        lin("d2_right"), lin("d2_left"), beta_class=cls, alpha=alpha,
                        reach=max(h.reach for _, h in terms), name=name)


def zero_function() -> TestFunction:
    z = lambda x: np.zeros_like(np.asarray(x, dtype=float))
    return TestFunction(z, z, z, z, z, z, reach=0.0, name="0")


def gaussian_bump(center: float = 0.0, width: float = 1.0, amplitude: float = 1.0,
                  name: str | None = None) -> TestFunction:
    """amplitude * exp(-(x - center)^2 / (2 width^2)); smooth across 0."""
    c, w, a = float(center), float(width), float(amplitude)

    def v(x):
        return a * np.exp(-((x - c) ** 2) / (2 * w * w))

    def d1(x):
        return -(x - c) / (w * w) * v(x)

    def d2(x):
        return ((x - c) ** 2 / w**4 - 1 / (w * w)) * v(x)

    return TestFunction(v, v, d1, d1, d2, d2, beta_class=FULL_LINE,
                        reach=abs(c) + 9.5 * w, name=name or f"gauss({c:g},{w:g})")


def _odd_profile(a: float, alpha: float, s: float):
    """Right branch f with f(0)=a, f'(0)=2*alpha*a and f - a odd in x.

    f(x) = a*erfc(x/s) + c*(x/s)*exp(-(x/s)^2).  Because f - a is odd, all even
    derivatives of f vanish at 0, so the odd extension -f(-x) has matching
    one-sided derivatives of every order >= 1.
    """
    c = 2 * alpha * a * s + 2 * a / _SQRT_PI

    def v(x):
        y = x / s
        return a * erfc(y) + c * y * np.exp(-y * y)

    def d1(x):
        y = x / s
        return (-2 * a / _SQRT_PI + c * (1 - 2 * y * y)) * np.exp(-y * y) / s

    def d2(x):
        y = x / s
        return (4 * a / _SQRT_PI * y + c * (4 * y**3 - 6 * y)) * np.exp(-y * y) / (s * s)

    return v, d1, d2


def interface_bump(beta_class: str, alpha: float | None = None, center: float = 0.5,
                   width: float = 0.4, jump_amplitude: float = 0.5, odd_scale: float = 0.5,
                   amplitude: float = 1.0, name: str | None = None) -> TestFunction:
    """Gaussian bump pair (even part) plus an odd part carrying the jump at 0.

    Even part: amplitude * (g(x - center) + g(x + center)), g Gaussian of the
    given width.  Odd part: sign(x) * f(|x|) with f(0+) = jump_amplitude, so
    H(0+) - H(0-) = 2 * jump_amplitude, and H'(0+-) = alpha * jump (Robin) or
    0 (Neumann).  For the full-line class the odd part is dropped.
    """
    if beta_class == ROBIN:
        if alpha is None or alpha <= 0:
            raise ValueError("robin class needs alpha > 0")
        a_odd = jump_amplitude
        al = float(alpha)
    elif beta_class == NEUMANN:
        a_odd = jump_amplitude
        al = 0.0
    elif beta_class == FULL_LINE:
        a_odd = 0.0
        al = 0.0
    else:
        raise ValueError(f"unknown class {beta_class!r}")
    c, w, amp = float(center), float(width), float(amplitude)

    def g(x):
        return amp * (np.exp(-((x - c) ** 2) / (2 * w * w)) + np.exp(-((x + c) ** 2) / (2 * w * w)))

    def g1(x):
        return -amp * ((x - c) * np.exp(-((x - c) ** 2) / (2 * w * w))
                       + (x + c) * np.exp(-((x + c) ** 2) / (2 * w * w))) / (w * w)

    def g2(x):
        return amp * (((x - c) ** 2 / w**4 - 1 / w**2) * np.exp(-((x - c) ** 2) / (2 * w * w))
                      + ((x + c) ** 2 / w**4 - 1 / w**2) * np.exp(-((x + c) ** 2) / (2 * w * w)))

    f, f1, f2 = _odd_profile(a_odd, al, odd_scale)
    reach = max(abs(c) + 9.5 * w, 7.5 * odd_scale)
    return TestFunction(
        lambda x: g(x) + f(x), lambda x: g(x) - f(-x),
        lambda x: g1(x) + f1(x), lambda x: g1(x) + f1(-x),
        lambda x: g2(x) + f2(x), lambda x: g2(x) - f2(-x),
        beta_class=beta_class, alpha=alpha if beta_class == ROBIN else None, reach=reach,
        name=name or f"{beta_class}-bump")


def heaviside_approximant(u: float, j: float) -> TestFunction:
    """(1 - (x - u)/j)^+ on [u, inf): ramps from 1 at u to 0 at u + j."""
    if j < 1:
        raise ValueError("j must be >= 1")
    u, j = float(u), float(j)

    def v(x):
        x = np.asarray(x, dtype=float)
        return np.where(x >= u, np.clip(1 - (x - u) / j, 0.0, 1.0), 0.0)

    def d1(x):
        x = np.asarray(x, dtype=float)
        return np.where((x >= u) & (x < u + j), -1.0 / j, 0.0)

    zero = lambda x: np.zeros_like(np.asarray(x, dtype=float))
    return TestFunction(v, v, d1, d1, zero, zero, beta_class=None, reach=abs(u) + j,
                        name=f"G[{u:g},{j:g}]")


def heaviside(u: float) -> TestFunction:
    u = float(u)
    v = lambda x: (np.asarray(x, dtype=float) >= u).astype(float)
    zero = lambda x: np.zeros_like(np.asarray(x, dtype=float))
    return TestFunction(v, v, zero, zero, zero, zero, beta_class=None, reach=np.inf,
                        name=f"H[{u:g}]")


# --------------------------------------------------------------------------
# fields

def lattice_values(H: TestFunction, L: int, n: int) -> np.ndarray:
    return np.asarray(H(np.arange(-L, L) / n), dtype=float)


def fluctuation_field(state, H: TestFunction, rho: float, n: int | None = None):
    """n^(-1/2) sum_x H(x/n)(eta(x) - rho) over the finite lattice.

    ``state`` may be a LatticeState or an occupation array of shape
    (..., 2L); in the latter case ``n`` is required and one value per row is
    returned.
    """
    if isinstance(state, LatticeState):
        occ, n = state.occupations, state.n
    else:
        occ = np.asarray(state)
        if n is None:
            raise ValueError("n is required for raw occupation arrays")
    L = occ.shape[-1] // 2
    hv = lattice_values(H, L, n)
    return ((occ - rho) @ hv) / math.sqrt(n)


# --------------------------------------------------------------------------
# currents

def bond_of(u: float, n: int) -> int:
    """Left site of the bond associated with the macroscopic point u."""
    return math.floor(u * n) - 1


@dataclass
class CurrentLedger:
    """Signed jump counters for bonds attached to macroscopic points."""

    points: tuple
    n: int
    counters: np.ndarray = field(default=None)
    sample_times: list = field(default_factory=list)
    samples: list = field(default_factory=list)

    def __post_init__(self):
        self.points = tuple(float(u) for u in self.points)
        if self.counters is None:
            self.counters = np.zeros(len(self.points), dtype=np.int64)

    @property
    def left_sites(self) -> list[int]:
        return [bond_of(u, self.n) for u in self.points]

    def bond_map(self, L: int, n_bonds: int) -> np.ndarray:
        m = np.full(n_bonds, -1, dtype=np.int64)
        for i, x in enumerate(self.left_sites):
            if not -L <= x < L - 1:
                raise IndexError(f"monitored bond ({x}, {x + 1}) outside lattice")
            m[x + L] = i
        return m

    def record(self, macro_time: float) -> None:
        if self.sample_times and macro_time < self.sample_times[-1]:
            raise ValueError("sample times must be ascending")
        self.sample_times.append(float(macro_time))
        self.samples.append(self.counters.copy())


def current_at(ledger: CurrentLedger, u: float, t: float) -> int:
    """Raw signed current through the bond of u at sample time t."""
    try:
        i = ledger.points.index(float(u))
    except ValueError:
        raise KeyError(f"point u={u} is not monitored") from None
    for ts, row in zip(ledger.sample_times, ledger.samples):
        if math.isclose(ts, t, rel_tol=1e-12, abs_tol=1e-12):
            return int(row[i])
    raise KeyError(f"time {t} is not on the sample grid")


# --------------------------------------------------------------------------
# tagged particle

@dataclass
class TaggedTrack:
    label: int  # rank among particles, left to right, at time 0
    start_site: int
    site: int
    times: list = field(default_factory=list)
    positions: list = field(default_factory=list)

    def current_index(self, L: int) -> int:
        return self.site + L

    def set_index(self, index: int, L: int) -> None:
        self.site = index - L

    def record(self, macro_time: float) -> None:
        self.times.append(float(macro_time))
        self.positions.append(self.site)


def tag_particle(state: LatticeState, u: float) -> TaggedTrack:
    """Tag the particle at site floor(u n); the site must be occupied."""
    x0 = math.floor(u * state.n)
    i = state.index(x0)
    if state.occupations[i] != 1:
        raise ValueError(f"site {x0} is empty; sample with the conditioned measure")
    label = int(state.occupations[:i].sum())
    track = TaggedTrack(label=label, start_site=x0, site=x0)
    track.record(state.macro_time)
    return track


def tagged_from_current(occupations: np.ndarray, current, start_site: int) -> np.ndarray:
    """Tagged position rebuilt from the current through (x0-1, x0) and the configuration.

    Uses order preservation: for k >= 1, X >= x0 + k iff J >= sum of eta over
    x0..x0+k-1, and X <= x0 - k iff J <= -1 - sum of eta over x0-k+1..x0-1.
    Works row-wise on (..., 2L) occupation arrays.
    """
    occ = np.atleast_2d(np.asarray(occupations, dtype=np.int64))
    J = np.atleast_1d(np.asarray(current, dtype=np.int64))
    L = occ.shape[-1] // 2
    i0 = start_site + L
    out = np.empty(occ.shape[0], dtype=np.int64)
    for r in range(occ.shape[0]):
        if J[r] >= 0:
            S = np.concatenate([[0], np.cumsum(occ[r, i0:])])
            k = np.searchsorted(S, J[r], side="right") - 1
            out[r] = start_site + k
        else:
            T = np.concatenate([[0], np.cumsum(occ[r, i0 - 1::-1])])
            c = np.searchsorted(T, -J[r] - 1, side="right")
            out[r] = start_site - c
    return out


# --------------------------------------------------------------------------
# martingale and quadratic variation from an event log

def _rates(L: int, n: int, alpha: float, beta: float) -> np.ndarray:
    xi = np.ones(2 * L - 1)
    xi[L - 1] = 0.0 if math.isinf(beta) else alpha * float(n) ** (-beta)
    return xi


def martingale_weights(H: TestFunction, L: int, n: int, alpha: float, beta: float):
    """Site weights of the field, of n^2 L_n Y(H) and bond weights of the quadratic variation."""
    hv = lattice_values(H, L, n)
    xi = _rates(L, n, alpha, beta)
    dh = np.diff(hv)  # H((x+1)/n) - H(x/n) per bond
    gen = np.zeros(2 * L)
    gen[:-1] += xi * dh
    gen[1:] -= xi * dh
    site_w = n**1.5 * gen  # n^2 * L_n H(x/n) / sqrt(n)
    field_w = hv / math.sqrt(n)
    bond_w = n * xi * dh**2
    return field_w, site_w, bond_w


def martingale_decomposition(eta0: np.ndarray, log: EventLog, H: TestFunction, n: int,
                             alpha: float, beta: float, sample_times) -> dict[str, np.ndarray]:
    """Dynkin martingale M_t(H) and its predictable quadratic variation along a logged run.

    Returns arrays over ``sample_times`` (macro) for the field Y_t(H) with
    the rho centring omitted (it cancels in differences), the compensator
    integral, M_t = Y_t - Y_0 - integral, and <M>_t.
    """
    L = eta0.size // 2
    field_w, site_w, bond_w = martingale_weights(H, L, n, alpha, beta)
    ts = np.asarray(sample_times, dtype=float) * n**2
    f, lin_int, quad_int = _kernels.replay_log(eta0.astype(np.int64), log.times, log.bonds, ts,
                                               site_w, bond_w, field_w)
    f0 = float(field_w @ eta0)
    integral = lin_int / n**2
    return {"field": f, "compensator": integral, "martingale": f - f0 - integral,
            "quadratic_variation": quad_int / n**2}


def quadratic_variation(eta0: np.ndarray, log: EventLog, H: TestFunction, n: int, alpha: float,
                        beta: float, sample_times) -> np.ndarray:
    """<M^n(H)>_t at each sample time (macro), integrating the bond sums between events."""
    return martingale_decomposition(eta0, log, H, n, alpha, beta,
                                    sample_times)["quadratic_variation"]


def expected_quadratic_variation(H: TestFunction, L: int, n: int, alpha: float, beta: float,
                                 rho: float, t: float) -> float:
    """Equilibrium mean of <M^n(H)>_t: each bond is discordant with probability 2 chi."""
    _, _, bond_w = martingale_weights(H, L, n, alpha, beta)
    return 2 * rho * (1 - rho) * t * float(bond_w.sum())
