"""Heat semigroups on the line with an interface at 0, evaluated by quadrature.

Four kinds are supported: the free heat semigroup, the Dirichlet half-line
semigroup, the Neumann semigroup (two decoupled half-lines) and the Robin
semigroup whose interface flux is proportional to the jump.  All kernels use
the generator d^2/dx^2, i.e. Gaussians of variance 2t.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from numpy.polynomial.chebyshev import chebval
from scipy.fft import dct
from scipy.special import erfc

KINDS = ("heat", "dirichlet", "neumann", "robin")
_CHUNK = 4_000_000  # max matrix entries per quadrature block


class QuadratureError(ArithmeticError):
    def __init__(self, achieved: float, tol: float):
        self.achieved = achieved
        super().__init__(f"quadrature did not converge: achieved {achieved:.3e}, wanted {tol:.1e}")


@dataclass(frozen=True)
class SemigroupSpec:
    kind: str
    alpha: float | None = None
    quad_rel_tol: float = 1e-9
    tail_cut: float = 8.0
    support: float = 50.0  # used when g carries no ``reach`` attribute

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}, got {self.kind!r}")
        if self.kind == "robin" and not (self.alpha is not None and self.alpha > 0):
            raise ValueError("robin semigroup needs alpha > 0")
        if not self.quad_rel_tol > 0:
            raise ValueError("quad_rel_tol must be positive")
        if self.tail_cut < 8:
            raise ValueError("tail_cut must be >= 8")

    def apply(self, g, t: float, x):
        if self.kind == "heat":
            return apply_heat(g, t, x, self)
        if self.kind == "dirichlet":
            return apply_dirichlet(g, t, x, self)
        if self.kind == "neumann":
            return apply_neumann(g, t, x, self)
        return apply_robin_via_formula(g, t, x, self.alpha, self)

    def evolve(self, g, t: float) -> "Evolved":
        return Evolved(self, g, t)


class Evolved:
    """Lazy T_t g, usable as the input of another application.

    The first call tabulates each side of the origin with a piecewise
    Chebyshev interpolant, so nested applications cost one quadrature pass.
    ``exact`` bypasses the tables.
    """

    def __init__(self, spec: SemigroupSpec, g, t: float):
        self.spec, self.g, self.t = spec, g, float(t)
        self.reach = _reach(g, spec) + spec.tail_cut * math.sqrt(4 * self.t)
        self._tables = None

    def exact(self, x):
        return self.spec.apply(self.g, self.t, x)

    def _build(self):
        # tighter than the quadrature tolerance so the tables do not limit convergence
        R, tol = self.reach, max(self.spec.quad_rel_tol * 1e-3, 1e-14)
        width = _base_width(max(self.t, 1e-4))
        right = PanelInterpolant(self.exact, 0.0, R, width, tol)
        left = None
        if self.spec.kind != "dirichlet":
            left = PanelInterpolant(lambda y: self.exact(np.minimum(y, -1e-300)), -R, 0.0, width, tol)
        self._tables = (left, right)

    def __call__(self, x):
        if self.t == 0:
            return self.g(x)
        if self._tables is None:
            self._build()
        left, right = self._tables
        x = np.asarray(x, dtype=float)
        if left is None:
            if np.any(x <= 0):
                raise ValueError("dirichlet semigroup is defined for x > 0")
            return _shape(x, right(x))
        return _shape(x, np.where(x >= 0, right(x), left(x)))


def gaussian_tail(t, x):
    """P(N(0, 2t) > x) = erfc(x / (2 sqrt t)) / 2."""
    t = np.asarray(t, dtype=float)
    if np.any(t <= 0):
        raise ValueError("gaussian_tail needs t > 0")
    out = 0.5 * erfc(np.asarray(x, dtype=float) / (2 * np.sqrt(t)))
    return out if out.ndim else float(out)


# --------------------------------------------------------------------------
# quadrature

@lru_cache(maxsize=8)
def _legendre(order: int):
    return np.polynomial.legendre.leggauss(order)


def panel_rule(breaks, width: float, order: int = 16):
    """Composite Gauss-Legendre nodes and weights on consecutive segments."""
    xg, wg = _legendre(order)
    nodes, weights = [], []
    for a, b in zip(breaks[:-1], breaks[1:]):
        if b <= a:
            continue
        m = max(1, math.ceil((b - a) / width))
        edges = np.linspace(a, b, m + 1)
        half = 0.5 * np.diff(edges)[:, None]
        mid = 0.5 * (edges[1:] + edges[:-1])[:, None]
        nodes.append((mid + half * xg).ravel())
        weights.append((half * wg).ravel())
    if not nodes:
        return np.empty(0), np.empty(0)
    return np.concatenate(nodes), np.concatenate(weights)


def integrate(f, breaks, width: float, tol: float, max_level: int = 10,
              max_nodes: int = 400_000, atol: float = 1e-30):
    """Integrate a vectorized f over the segments in ``breaks``.

    ``f`` maps nodes of shape (m,) to values of shape (..., m).  Panels are
    halved until successive results differ by at most ``tol`` times the
    largest integral of |f| over the components, or by at most ``atol``
    (far tails hold values near underflow whose relative noise is meaningless).
    """
    prev = None
    diff = np.inf
    for level in range(max_level):
        y, w = panel_rule(breaks, width / 2**level)
        if y.size == 0:
            return 0.0
        if y.size > max_nodes:
            break
        vals = f(y)
        cur = vals @ w
        scale = max(float(np.max(np.abs(vals) @ w)), 1e-300)
        if prev is not None:
            gap = float(np.max(np.abs(cur - prev)))
            diff = gap / scale
            if diff <= tol or gap <= atol:
                return cur
        prev = cur
    raise QuadratureError(diff, tol)


def _reach(g, spec: SemigroupSpec) -> float:
    r = getattr(g, "reach", None)
    return spec.support if r is None or not np.isfinite(r) else float(r)


def _as_points(x):
    x = np.asarray(x, dtype=float)
    return x, x.ravel()


def _shape(x, vals):
    vals = np.asarray(vals, dtype=float).reshape(x.shape)
    return vals if vals.ndim else float(vals)


def _chunks(xs, per_row: int):
    step = max(1, _CHUNK // max(per_row, 1))
    for i in range(0, xs.size, step):
        yield slice(i, i + step)


def _base_width(t: float) -> float:
    return min(math.sqrt(2 * t), 0.5)


# --------------------------------------------------------------------------
# kernels

def _full_line(f, t, xs, reach, spec):
    """Gaussian convolution over [-reach, reach], split at 0."""
    out = np.empty(xs.size)
    W = spec.tail_cut * math.sqrt(4 * t)
    c = 1 / math.sqrt(4 * math.pi * t)
    for sl in _chunks(xs, 4096):
        x = xs[sl]
        lo = max(-reach, x.min() - W)
        hi = min(reach, x.max() + W)
        if hi <= lo:
            out[sl] = 0.0
            continue
        breaks = [lo, 0.0, hi] if lo < 0 < hi else [lo, hi]

        def fun(y, x=x):
            return c * np.exp(-((x[:, None] - y) ** 2) / (4 * t)) * f(y)

        out[sl] = integrate(fun, breaks, _base_width(t), spec.quad_rel_tol)
    return out


def _half_line(f, t, xs, sign, reach, spec):
    """Image-kernel integral over (0, reach) for x >= 0; sign=+1 reflects, -1 absorbs."""
    out = np.empty(xs.size)
    W = spec.tail_cut * math.sqrt(4 * t)
    c = 1 / math.sqrt(4 * math.pi * t)
    for sl in _chunks(xs, 4096):
        x = xs[sl]
        lo = max(0.0, x.min() - W)
        hi = min(reach, x.max() + W)
        if hi <= lo:
            out[sl] = 0.0
            continue

        def fun(y, x=x):
            k = np.exp(-((x[:, None] - y) ** 2) / (4 * t))
            k = k + sign * np.exp(-((x[:, None] + y) ** 2) / (4 * t))
            return c * k * f(y)

        out[sl] = integrate(fun, [lo, hi], _base_width(t), spec.quad_rel_tol)
    return out


def apply_heat(g, t: float, x, spec: SemigroupSpec | None = None):
    """Free heat semigroup T_t g(x)."""
    spec = spec or SemigroupSpec("heat")
    x, xs = _as_points(x)
    if t < 0:
        raise ValueError("t must be nonnegative")
    if t == 0:
        return _shape(x, g(xs))
    return _shape(x, _full_line(g, t, xs, _reach(g, spec), spec))


def apply_dirichlet(g, t: float, x, spec: SemigroupSpec | None = None):
    """Half-line semigroup with absorbing boundary at 0; x must be positive."""
    spec = spec or SemigroupSpec("dirichlet")
    x, xs = _as_points(x)
    if np.any(xs <= 0):
        raise ValueError("dirichlet semigroup is defined for x > 0")
    if t == 0:
        return _shape(x, g(xs))
    return _shape(x, _half_line(g, t, xs, -1.0, _reach(g, spec), spec))


def apply_neumann(g, t: float, x, spec: SemigroupSpec | None = None):
    """Each half-line evolves with a reflecting wall at 0; x = 0 means 0+."""
    spec = spec or SemigroupSpec("neumann")
    x, xs = _as_points(x)
    if t == 0:
        return _shape(x, g(xs))
    R = _reach(g, spec)
    out = np.empty(xs.size)
    right = xs >= 0
    if right.any():
        out[right] = _half_line(g, t, xs[right], 1.0, R, spec)
    if (~right).any():
        mirrored = lambda y: g(-y)
        out[~right] = _half_line(mirrored, t, -xs[~right], 1.0, R, spec)
    return _shape(x, out)


# --------------------------------------------------------------------------
# Robin semigroup

def _even_odd(g):
    even = lambda y: 0.5 * (g(y) + g(-y))
    odd = lambda y: 0.5 * (g(y) - g(-y))
    return even, odd


class PanelInterpolant:
    """Piecewise Chebyshev interpolant of a smooth function on [a, b], zero beyond b.

    Panels are halved until the two trailing coefficients on every panel
    fall below ``tol`` times the function's maximum.
    """

    def __init__(self, f, a: float, b: float, width: float, tol: float, degree: int = 24,
                 max_level: int = 8):
        N = degree + 1
        theta = np.pi * (np.arange(N) + 0.5) / N
        xk = np.cos(theta)
        self.a, self.b = a, b
        for _ in range(max_level):
            m = max(1, math.ceil((b - a) / width))
            self.h = (b - a) / m
            left = a + self.h * np.arange(m)
            nodes = left[:, None] + 0.5 * self.h * (xk + 1)
            vals = np.asarray(f(nodes.ravel()), dtype=float).reshape(m, N)
            coef = dct(vals, type=2, axis=1) / N
            coef[:, 0] *= 0.5
            scale = max(float(np.abs(vals).max()), 1e-300)
            if np.abs(coef[:, -2:]).max() <= tol * scale:
                break
            width = self.h / 2
        else:
            raise QuadratureError(float(np.abs(coef[:, -2:]).max() / scale), tol)
        self.coef = coef
        self.m = m

    def __call__(self, z):
        z = np.asarray(z, dtype=float)
        flat = z.ravel()
        idx = np.clip(((flat - self.a) // self.h).astype(np.int64), 0, self.m - 1)
        loc = 2 * (flat - self.a - idx * self.h) / self.h - 1
        out = chebval(loc, self.coef[idx].T, tensor=False)
        out = np.where((flat > self.b) | (flat < self.a), 0.0, out)
        return out.reshape(z.shape)


def _outer_exponential(inner, t, alpha, xs, reach, spec):
    """int_0^S exp(-2 alpha s) inner(x + s) ds for x >= 0.

    ``inner`` is smooth on [0, inf) and negligible beyond reach + tail; it is
    tabulated once on that interval and interpolated at the outer nodes.
    """
    tol = spec.quad_rel_tol
    z_max = reach + spec.tail_cut * math.sqrt(4 * t)
    out = np.zeros(xs.size)
    if xs.size == 0 or xs.min() >= z_max:
        return out
    table = PanelInterpolant(inner, 0.0, z_max, 0.5 * _base_width(t), tol * 0.1)
    s_alpha = -math.log(tol * 1e-3) / (2 * alpha)
    width = min(_base_width(t), 1 / (2 * alpha)) * 2
    for sl in _chunks(xs, 1024):
        x = xs[sl]
        S = min(s_alpha, max(0.0, z_max - x.min()))
        if S <= 0:
            continue

        def fun(s, x=x):
            return np.exp(-2 * alpha * s) * table(x[:, None] + s)

        out[sl] = integrate(fun, [0.0, S], width, tol)
    return out


def _robin_tilde_formula(g_odd, t, alpha, xs, reach, spec):
    c = 1 / math.sqrt(4 * math.pi * t)
    tol = spec.quad_rel_tol * 0.1
    W = spec.tail_cut * math.sqrt(4 * t)

    def inner(z):
        res = np.empty(z.size)
        for sl in _chunks(z, 2048):
            zz = z[sl][:, None]
            hi = min(reach, z[sl].max() + W)
            lo = max(0.0, z[sl].min() - W)

            def fun(y):
                a = (zz - y + 4 * alpha * t) / (2 * t) * np.exp(-((zz - y) ** 2) / (4 * t))
                b = (zz + y - 4 * alpha * t) / (2 * t) * np.exp(-((zz + y) ** 2) / (4 * t))
                return c * (a + b) * g_odd(y)

            res[sl] = integrate(fun, [lo, hi], _base_width(t), tol) if hi > lo else 0.0
        return res

    return _outer_exponential(inner, t, alpha, xs, reach, spec)


def _robin_tilde_ode(g_odd, g_odd_d1, t, alpha, xs, reach, spec):
    v0 = lambda y: 2 * alpha * g_odd(y) - g_odd_d1(y)
    inner_spec = SemigroupSpec("dirichlet", quad_rel_tol=spec.quad_rel_tol * 0.1,
                               tail_cut=spec.tail_cut)
    inner = lambda z: _half_line(v0, t, z, -1.0, reach, inner_spec)
    return _outer_exponential(inner, t, alpha, xs, reach, spec)


def _robin(g, t, x, alpha, spec, tilde):
    if alpha is None or alpha <= 0:
        raise ValueError("alpha must be positive")
    spec = spec or SemigroupSpec("robin", alpha=alpha)
    x, xs = _as_points(x)
    if t == 0:
        return _shape(x, g(xs))
    R = _reach(g, spec)
    even, _ = _even_odd(g)
    base = _full_line(even, t, xs, R, spec)
    tt = tilde(t, alpha, np.abs(xs), R, spec)
    return _shape(x, np.where(xs >= 0, base + tt, base - tt))


def apply_robin_via_formula(g, t: float, x, alpha: float, spec: SemigroupSpec | None = None):
    """Robin semigroup from the closed kernel acting on the odd part (no derivatives of g)."""
    _, odd = _even_odd(g)
    tilde = lambda t, a, xs, R, sp: _robin_tilde_formula(odd, t, a, xs, R, sp)
    return _robin(g, t, x, alpha, spec, tilde)


def apply_robin_via_ode(g, t: float, x, alpha: float, spec: SemigroupSpec | None = None):
    """Robin semigroup through v = 2 alpha u - u', evolved with the Dirichlet semigroup.

    ``g`` must expose ``d1`` (one-sided first derivative).
    """
    if not hasattr(g, "d1"):
        raise TypeError("the ODE route needs g.d1")
    _, odd = _even_odd(g)
    odd_d1 = lambda y: 0.5 * (g.d1(y) + g.d1(-y))
    tilde = lambda t, a, xs, R, sp: _robin_tilde_ode(odd, odd_d1, t, a, xs, R, sp)
    return _robin(g, t, x, alpha, spec, tilde)


def semigroup_limit_sweep(g, t: float, x: float, alpha_grid, spec: SemigroupSpec | None = None):
    """Robin values over an alpha grid next to the free and Neumann values.

    Also returns the interface jump u(0+) - u(0-) for each alpha.
    """
    alphas = np.asarray(alpha_grid, dtype=float)
    if np.any(alphas <= 0) or np.any(np.diff(alphas) <= 0):
        raise ValueError("alpha grid must be positive and strictly increasing")
    spec = spec or SemigroupSpec("robin", alpha=1.0)
    values, jumps = [], []
    for a in alphas:
        sp = SemigroupSpec("robin", alpha=a, quad_rel_tol=spec.quad_rel_tol,
                           tail_cut=spec.tail_cut, support=spec.support)
        values.append(apply_robin_via_formula(g, t, x, a, sp))
        edge = apply_robin_via_formula(g, t, np.array([0.0, -1e-300]), a, sp)
        jumps.append(edge[0] - edge[1])
    heat = apply_heat(g, t, x, SemigroupSpec("heat", quad_rel_tol=spec.quad_rel_tol))
    neu = apply_neumann(g, t, x, SemigroupSpec("neumann", quad_rel_tol=spec.quad_rel_tol))
    values = np.array(values)
    return {"alpha": alphas, "values": values, "heat": heat, "neumann": neu,
            "jump": np.array(jumps), "distance_heat": np.abs(values - heat),
            "distance_neumann": np.abs(values - neu)}
