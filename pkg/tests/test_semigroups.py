import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate
from scipy.special import erfcx

from slowbond import semigroups as sg
from slowbond.observables import ROBIN, gaussian_bump, interface_bump
from slowbond.pde_fd import FdGrid, solve_robin_interface


def p(t, z):
    return np.exp(-z * z / (4 * t)) / math.sqrt(4 * math.pi * t)


def quad(f, a, b):
    return integrate.quad(f, a, b, epsabs=1e-13, epsrel=1e-12, limit=400)[0]


def robin_oracle(g, t, x, alpha):
    """Even part by the free kernel, odd part by the half-line kernel with v'(0) = 2 alpha v(0)."""
    k = 2 * alpha
    even = lambda y: 0.5 * (g(y) + g(-y))
    odd = lambda y: 0.5 * (g(y) - g(-y))
    base = quad(lambda y: p(t, x - y) * even(y), -30, 30)
    z = abs(x)

    def kern(y):
        s = z + y
        return p(t, z - y) + p(t, s) - k * math.exp(-s * s / (4 * t)) * erfcx((s + 2 * k * t) / (2 * math.sqrt(t)))

    tail = quad(lambda y: kern(y) * odd(y), 0, 30)
    return base + (tail if x >= 0 else -tail)


G = gaussian_bump(0.4, 0.5, name="g")


@given(t=st.floats(0.01, 3), x=st.floats(-4, 4), c=st.floats(-1, 1), w=st.floats(0.2, 1.5))
def test_heat_matches_gaussian_closed_form(t, x, c, w):
    g = gaussian_bump(c, w)
    exact = w / math.sqrt(w * w + 2 * t) * math.exp(-(x - c) ** 2 / (2 * (w * w + 2 * t)))
    assert sg.apply_heat(g, t, x) == pytest.approx(exact, rel=1e-8, abs=1e-14)


@pytest.mark.parametrize("t", [0.05, 0.5, 2.0])
@pytest.mark.parametrize("x", [0.05, 0.7, 2.5])
def test_half_line_kernels(t, x):
    neu = quad(lambda y: (p(t, x - y) + p(t, x + y)) * G(y), 0, 30)
    dir_ = quad(lambda y: (p(t, x - y) - p(t, x + y)) * G(y), 0, 30)
    assert sg.apply_neumann(G, t, x) == pytest.approx(neu, rel=1e-8, abs=1e-13)
    assert sg.apply_dirichlet(G, t, x) == pytest.approx(dir_, rel=1e-8, abs=1e-13)
    # Neumann is symmetric across 0
    assert sg.apply_neumann(G, t, -x) == pytest.approx(
        quad(lambda y: (p(t, x - y) + p(t, x + y)) * G(-y), 0, 30), rel=1e-8, abs=1e-13)


def test_dirichlet_rejects_nonpositive_points():
    with pytest.raises(ValueError):
        sg.apply_dirichlet(G, 0.5, [0.0, 1.0])


@pytest.mark.parametrize("alpha", [0.1, 1.0, 7.0])
@pytest.mark.parametrize("x", [-1.3, -0.2, 0.0, 0.4, 1.0])
def test_robin_matches_independent_kernel(alpha, x):
    g = interface_bump(ROBIN, alpha=alpha)
    t = 0.3
    assert sg.apply_robin_via_formula(g, t, x, alpha) == pytest.approx(
        robin_oracle(g, t, x, alpha), rel=1e-7, abs=1e-12)


def test_robin_with_generic_input():
    # smooth input with no interface structure
    assert sg.apply_robin_via_formula(G, 0.5, 0.3, 2.0) == pytest.approx(
        robin_oracle(G, 0.5, 0.3, 2.0), rel=1e-7)


def test_robin_formula_and_ode_paths_agree_on_grid():
    g = interface_bump(ROBIN, alpha=1.0)
    ts = [0.05, 0.2, 0.5, 1.0, 2.0]
    xs = np.array([-1.5, -0.3, 0.2, 0.8, 2.0])
    for alpha in (0.3, 1.0, 3.0):
        for t in ts:
            a = sg.apply_robin_via_formula(g, t, xs, alpha)
            b = sg.apply_robin_via_ode(g, t, xs, alpha)
            assert np.all(np.abs(a - b) <= 1e-6 * np.abs(a))


def test_robin_matches_finite_differences():
    alpha, T = 1.0, 0.5
    g = interface_bump(ROBIN, alpha=alpha)
    prof = solve_robin_interface(g, T, alpha, FdGrid.for_problem(2.5e-3, T, reach=g.reach))
    x = np.array([-1.0, -0.25, 0.25, 1.0])
    assert np.allclose(sg.apply_robin_via_formula(g, T, x, alpha), prof(x), atol=1e-5)


@pytest.mark.parametrize("kind,xs", [("heat", [-1.0, 0.3, 1.2]), ("neumann", [-0.7, 0.4, 1.5]),
                                     ("dirichlet", [0.2, 0.9, 1.7]), ("robin", [-0.8, 0.1, 1.1])])
def test_semigroup_law(kind, xs):
    spec = sg.SemigroupSpec(kind, alpha=1.0 if kind == "robin" else None)
    g = interface_bump(ROBIN, alpha=1.0) if kind == "robin" else G
    xs = np.array(xs)
    direct = spec.apply(g, 0.5, xs)
    twice = spec.apply(spec.evolve(g, 0.2), 0.3, xs)
    assert np.all(np.abs(direct - twice) <= 1e-6 * np.maximum(np.abs(direct), 1e-3))


@given(alpha=st.floats(0.05, 20), t=st.floats(0.05, 2), x=st.floats(-3, 3))
def test_robin_is_positive_and_contractive(alpha, t, x):
    v = sg.apply_robin_via_formula(G, t, x, alpha)
    assert -1e-10 <= v <= 1 + 1e-10


def test_robin_conserves_mass():
    alpha, t = 0.7, 0.8
    g = interface_bump(ROBIN, alpha=alpha)
    # each side separately: both functions jump at 0
    right = np.linspace(0, 15, 3001)
    left = -right[::-1]
    left[-1] = -1e-300

    def mass(f):
        return np.trapezoid(f(left), left) + np.trapezoid(f(right), right)

    after = mass(lambda y: sg.apply_robin_via_formula(g, t, y, alpha))
    assert after == pytest.approx(mass(g), rel=1e-6)


def test_robin_interface_condition():
    alpha, t = 1.3, 0.4
    h = 1e-4
    f = lambda x: sg.apply_robin_via_formula(G, t, np.asarray(x), alpha)
    up, um = f(0.0), f(-1e-300)
    dr = (-3 * up + 4 * f(h) - f(2 * h)) / (2 * h)
    dl = (3 * um - 4 * f(-h) + f(-2 * h)) / (2 * h)
    assert dr == pytest.approx(alpha * (up - um), rel=1e-5)
    assert dl == pytest.approx(dr, rel=1e-5)


def test_limit_sweep():
    res = sg.semigroup_limit_sweep(G, 0.5, 1.0, [1e-4, 1e-2, 1.0, 1e2, 1e3])
    assert res["distance_neumann"][0] < 1e-3
    assert res["distance_heat"][-1] < 1e-2
    assert np.all(np.diff(np.abs(res["jump"])) < 0)
    with pytest.raises(ValueError):
        sg.semigroup_limit_sweep(G, 0.5, 1.0, [1.0, 0.5])


def test_time_zero_is_identity():
    for kind in ("heat", "neumann", "robin"):
        spec = sg.SemigroupSpec(kind, alpha=1.0 if kind == "robin" else None)
        assert spec.apply(G, 0.0, 0.3) == pytest.approx(G(0.3))


def test_spec_validation():
    with pytest.raises(ValueError):
        sg.SemigroupSpec("robin")
    with pytest.raises(ValueError):
        sg.SemigroupSpec("wave")
    with pytest.raises(ValueError):
        sg.SemigroupSpec("heat", quad_rel_tol=0.0)


def test_quadrature_failure_is_reported():
    rough = lambda y: np.abs(np.sin(1e3 * y)) * np.exp(-y * y)
    with pytest.raises(sg.QuadratureError):
        sg.integrate(lambda y: rough(y)[None, :], np.array([-5.0, 5.0]), 5.0, 1e-14, max_level=3)


def test_panel_rule_integrates_polynomials():
    nodes, weights = sg.panel_rule(np.array([0.0, 2.0]), 0.5)
    assert weights @ nodes**7 == pytest.approx(2.0**8 / 8, rel=1e-13)
