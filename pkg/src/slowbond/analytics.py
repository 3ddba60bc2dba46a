"""Closed-form limiting covariances and exact finite-lattice counterparts.

Every current covariance here has the form chi * (A(t) + A(s) - A(t - s)),
so Var J(t) = 2 chi A(t).  ``A`` depends on the regime and on |u|; the
system is symmetric under reflection through the slow bond.
"""

from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass, field, fields

import numpy as np
from scipy.linalg import eigh_tridiagonal
from scipy.special import erfc, erfcx

from . import semigroups as sg
from .observables import FULL_LINE, NEUMANN, ROBIN, TestFunction

SUBCRITICAL = "subcritical"
CRITICAL = "critical"
SUPERCRITICAL = "supercritical"
REGIMES = (SUBCRITICAL, CRITICAL, SUPERCRITICAL)
_CLASS_OF = {SUBCRITICAL: FULL_LINE, CRITICAL: ROBIN, SUPERCRITICAL: NEUMANN}
_KIND_OF = {SUBCRITICAL: "heat", CRITICAL: "robin", SUPERCRITICAL: "neumann"}


def chi(rho: float) -> float:
    return rho * (1 - rho)


@dataclass(frozen=True)
class RegimeParams:
    regime: str
    rho: float
    alpha: float | None = None

    def __post_init__(self):
        if self.regime not in REGIMES:
            raise ValueError(f"regime must be one of {REGIMES}")
        if not 0 <= self.rho <= 1:
            raise ValueError("rho must lie in [0, 1]")
        if self.regime == CRITICAL and not (self.alpha and self.alpha > 0):
            raise ValueError("critical regime needs alpha > 0")

    @property
    def chi(self) -> float:
        return chi(self.rho)

    @classmethod
    def from_beta(cls, beta: float, rho: float, alpha: float | None = None) -> "RegimeParams":
        if beta < 1:
            return cls(SUBCRITICAL, rho, alpha)
        if beta == 1:
            return cls(CRITICAL, rho, alpha)
        return cls(SUPERCRITICAL, rho, alpha)

    def semigroup(self, quad_rel_tol: float = 1e-9) -> sg.SemigroupSpec:
        return sg.SemigroupSpec(_KIND_OF[self.regime],
                                alpha=self.alpha if self.regime == CRITICAL else None,
                                quad_rel_tol=quad_rel_tol)


# --------------------------------------------------------------------------
# closed forms

def _tail(t, x):
    """Gaussian tail with the t = 0 limit 1{x<0} + 1{x=0}/2."""
    if t == 0:
        return 1.0 if x < 0 else (0.5 if x == 0 else 0.0)
    return 0.5 * float(erfc(x / (2 * math.sqrt(t))))


def half_variance_subcritical(t: float) -> float:
    return math.sqrt(t / math.pi)


def half_variance_critical(t: float, u: float, alpha: float) -> float:
    """A(t) for the critical regime.

    The product Phi_{2t}(2u + 4 alpha t) * exp(4 alpha u + 4 alpha^2 t) is
    rewritten as erfcx(z) * exp(-u^2/t) / 2 with z = (u + 2 alpha t)/sqrt(t),
    which cannot overflow.
    """
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    u = abs(u)
    if t == 0:
        return 0.0
    z = (u + 2 * alpha * t) / math.sqrt(t)
    prod = 0.5 * float(erfcx(z)) * math.exp(-u * u / t)
    return math.sqrt(t / math.pi) + (prod - _tail(t, 2 * u)) / (2 * alpha)


def half_variance_supercritical(t: float, u: float) -> float:
    u = abs(u)
    if t == 0:
        return 0.0
    return math.sqrt(t / math.pi) * (-math.expm1(-u * u / t)) + 2 * u * _tail(t, 2 * u)


def _check_order(t, s):
    if s > t:
        raise ValueError(f"expected s <= t, got t={t}, s={s}")
    if s < 0:
        raise ValueError("times must be nonnegative")


def current_cov_subcritical(t: float, s: float, rho: float) -> float:
    _check_order(t, s)
    A = half_variance_subcritical
    return chi(rho) * (A(t) + A(s) - A(t - s))


def current_cov_critical(t: float, s: float, u: float, rho: float, alpha: float) -> float:
    _check_order(t, s)
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    A = lambda r: half_variance_critical(r, u, alpha)
    return chi(rho) * (A(t) + A(s) - A(t - s))


def current_cov_supercritical(t: float, s: float, u: float, rho: float) -> float:
    _check_order(t, s)
    A = lambda r: half_variance_supercritical(r, u)
    return chi(rho) * (A(t) + A(s) - A(t - s))


def current_cov(params: RegimeParams, t: float, s: float, u: float) -> float:
    if params.regime == SUBCRITICAL:
        return current_cov_subcritical(t, s, params.rho)
    if params.regime == CRITICAL:
        return current_cov_critical(t, s, u, params.rho, params.alpha)
    return current_cov_supercritical(t, s, u, params.rho)


def tagged_covariance(t: float, s: float, u: float, rho: float, params: RegimeParams) -> float:
    if rho <= 0:
        raise ValueError("rho must be positive for a tagged particle")
    return current_cov(RegimeParams(params.regime, rho, params.alpha), t, s, u) / rho**2


# --------------------------------------------------------------------------
# variance through the semigroup acting on a Heaviside function

def variance_via_semigroup(t: float, u: float, params: RegimeParams,
                           tol: float = 1e-10) -> float:
    """2 chi * int_u^inf (1 - T_t H_u(x)) dx with the inner integrals in closed form.

    Free: 1 - T H_u(x) = Phi(x - u).  Neumann (u >= 0, x > 0): Phi(x-u) - Phi(x+u).
    Robin: the Neumann part halved plus int_0^inf exp(-2 alpha s) w(x + s) ds,
    where w is the odd-part kernel integrated against 1{y >= u}.
    """
    if t <= 0:
        raise ValueError("t must be positive")
    u = abs(u)
    c2 = 2 * params.chi
    W = 10 * math.sqrt(4 * t)
    Phi = lambda x: sg.gaussian_tail(t, x)
    width = min(math.sqrt(2 * t), 0.5)

    if params.regime == SUBCRITICAL:
        inner = lambda x: Phi(x - u)
    elif params.regime == SUPERCRITICAL:
        inner = lambda x: Phi(x - u) - Phi(x + u)
    else:
        alpha = params.alpha
        g = 1 / math.sqrt(4 * math.pi * t)

        def w(z):
            gauss = g * (np.exp(-((z - u) ** 2) / (4 * t)) - np.exp(-((z + u) ** 2) / (4 * t)))
            return 0.5 * (gauss + 2 * alpha * (Phi(z - u) + Phi(z + u)))

        S = min(-math.log(tol * 1e-3) / (2 * alpha), W + u)
        s_width = min(width, 1 / (2 * alpha)) * 2

        def inner(x):
            tail = sg.integrate(
                lambda s: np.exp(-2 * alpha * s) * w(x[:, None] + s), [0.0, S], s_width, tol * 0.1)
            return 0.5 * (Phi(x - u) - Phi(x + u)) + tail

    val = sg.integrate(lambda x: inner(np.asarray(x)), [u, u + W], width, tol)
    return c2 * float(val)


def interpolation_limits(t: float, s: float, u: float, rho: float, alpha_grid,
                         tol: float = 1e-3) -> dict:
    """Critical covariance along an alpha grid against its two extreme regimes."""
    alphas = np.sort(np.asarray(alpha_grid, dtype=float))
    if alphas[0] <= 0:
        raise ValueError("alpha grid must be positive")
    if math.log10(alphas[-1] / alphas[0]) < 4:
        raise ValueError("alpha grid must span at least four decades")
    crit = np.array([current_cov_critical(t, s, u, rho, a) for a in alphas])
    sub = current_cov_subcritical(t, s, rho)
    sup = current_cov_supercritical(t, s, u, rho)
    return {
        "alpha": alphas, "critical": crit, "subcritical": sub, "supercritical": sup,
        "to_subcritical": bool(abs(crit[-1] - sub) < tol),
        "to_supercritical": bool(abs(crit[0] - sup) < tol),
        "monotone": bool(np.all(np.diff(crit) >= -1e-15)),
    }


# --------------------------------------------------------------------------
# fields

def _check_class(H, params: RegimeParams, who: str):
    cls = getattr(H, "beta_class", None)
    want = _CLASS_OF[params.regime]
    if cls != want or (want == ROBIN and not math.isclose(H.alpha, params.alpha)):
        raise ValueError(f"{who} has class {cls!r} but the {params.regime} regime needs {want!r}"
                         + (f" with alpha={params.alpha}" if want == ROBIN else ""))


def _pairing(f, g, reach: float, tol: float) -> float:
    breaks = [-reach, 0.0, reach]
    return float(sg.integrate(lambda x: f(x) * g(x), breaks, 0.1, tol))


def ou_covariance(H: TestFunction, G: TestFunction, t: float, s: float, params: RegimeParams,
                  rho: float | None = None, tol: float = 1e-9) -> float:
    """chi * int (T_{t-s} H) G for the limiting field, t >= s."""
    if t < s:
        raise ValueError("need t >= s")
    _check_class(H, params, "H")
    _check_class(G, params, "G")
    c = chi(params.rho if rho is None else rho)
    reach = G.reach
    if t == s:
        return c * _pairing(H, G, min(H.reach, reach), tol)
    spec = params.semigroup(quad_rel_tol=tol)
    TH = spec.evolve(H, t - s)
    return c * _pairing(TH, G, reach, tol)


def weighted_norm(H, params: RegimeParams, tol: float = 1e-11) -> float:
    """L2 norm, with an extra atom H(0+)^2 in the critical regime."""
    reach = getattr(H, "reach", 50.0)
    if reach == 0:
        return 0.0
    sq = _pairing(H, H, reach, tol)
    if params.regime == CRITICAL:
        sq += float(H(0.0)) ** 2
    return math.sqrt(max(sq, 0.0))


def gradient(H: TestFunction):
    """First derivative as a callable with the same reach (right limit at 0)."""
    class _D:
        reach = H.reach

        def __call__(self, x):
            return H.d1(x)
    return _D()


def quadratic_variation_limit(H: TestFunction, params: RegimeParams, t: float) -> float:
    """Limit of E<M(H)>_t for the slow-bond chain.

    The slow bond contributes alpha * jump^2 = H'(0+)^2 / alpha, so this
    equals 2 chi t times the squared weighted gradient norm only at alpha = 1.
    """
    d = gradient(H)
    bulk = _pairing(d, d, H.reach, 1e-11)
    atom = 0.0
    if params.regime == CRITICAL:
        atom = float(H.d1(0.0)) ** 2 / params.alpha
    return 2 * params.chi * t * (bulk + atom)


# --------------------------------------------------------------------------
# exact finite-lattice values (duality with a single random walk)

@dataclass
class DualWalk:
    """Random walk with the chain's bond rates on sites -L..L-1, diagonalized once."""

    n: int
    L: int
    alpha: float
    beta: float
    evals: np.ndarray = field(init=False, repr=False)
    evecs: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        xi = np.ones(2 * self.L - 1)
        xi[self.L - 1] = 0.0 if math.isinf(self.beta) else self.alpha * float(self.n) ** (-self.beta)
        diag = np.zeros(2 * self.L)
        diag[:-1] -= xi
        diag[1:] -= xi
        self.evals, self.evecs = eigh_tridiagonal(diag, xi)

    def propagate(self, macro_time: float, a: np.ndarray, b: np.ndarray) -> float:
        """a^T P_t b with P_t the walk's transition matrix at micro time t n^2."""
        decay = np.exp(self.evals * macro_time * self.n**2)
        return float((self.evecs.T @ a) @ (decay * (self.evecs.T @ b)))

    def current_variance(self, macro_time: float, u: float, rho: float) -> float:
        """Var J_u(t) / n: 2 chi sum_{x<=b} P_x(X_t > b) / n."""
        b = math.floor(u * self.n) - 1 + self.L  # left index of the bond
        left = np.zeros(2 * self.L)
        left[: b + 1] = 1.0
        return 2 * chi(rho) * self.propagate(macro_time, left, 1.0 - left) / self.n

    def current_cov(self, t: float, s: float, u: float, rho: float) -> float:
        _check_order(t, s)
        V = lambda r: self.current_variance(r, u, rho) if r > 0 else 0.0
        return 0.5 * (V(t) + V(s) - V(t - s))

    def field_cov(self, H, G, t: float, s: float, rho: float) -> float:
        """Cov(Y_t(H), Y_s(G)) = chi/n * H^T P_{t-s} G on the lattice."""
        x = np.arange(-self.L, self.L) / self.n
        return chi(rho) * self.propagate(t - s, np.asarray(H(x)), np.asarray(G(x))) / self.n


# --------------------------------------------------------------------------
# covariance tables

@dataclass
class CovarianceEntry:
    regime: str
    alpha: float
    rho: float
    u: float
    t: float
    s: float
    analytic: float
    empirical: float
    ci: float
    replicas: int

    @property
    def within(self) -> float:
        """|empirical - analytic| in units of the CI half-width."""
        return abs(self.empirical - self.analytic) / self.ci if self.ci > 0 else (
            0.0 if self.empirical == self.analytic else math.inf)


CSV_HEADER = [f.name for f in fields(CovarianceEntry)]


@dataclass
class CovarianceTable:
    entries: list = field(default_factory=list)

    def add(self, **kw) -> CovarianceEntry:
        e = CovarianceEntry(**kw)
        self.entries.append(e)
        return e

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=CSV_HEADER)
            w.writeheader()
            for e in self.entries:
                w.writerow({k: (repr(v) if isinstance(v, float) else v)
                            for k, v in asdict(e).items()})

    @classmethod
    def read_csv(cls, path) -> "CovarianceTable":
        casts = {f.name: f.type for f in fields(CovarianceEntry)}
        table = cls()
        with open(path, newline="") as fh:
            for row in csv.DictReader(fh):
                table.entries.append(CovarianceEntry(**{
                    k: (str(v) if casts[k] == "str" else int(v) if casts[k] == "int" else float(v))
                    for k, v in row.items()}))
        return table
