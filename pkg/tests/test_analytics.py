import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate

from slowbond import analytics as an
from slowbond.observables import FULL_LINE, NEUMANN, ROBIN, gaussian_bump, interface_bump, zero_function

mp.mp.dps = 40


def mp_tail(t, x):
    return mp.erfc(mp.mpf(x) / (2 * mp.sqrt(t))) / 2


def mp_half_variance_critical(t, u, alpha):
    """Direct high-precision evaluation of the product form."""
    t, u, a = mp.mpf(t), mp.mpf(u), mp.mpf(alpha)
    return (mp.sqrt(t / mp.pi) + mp_tail(t, 2 * u + 4 * a * t) * mp.exp(4 * a * u + 4 * a * a * t) / (2 * a)
            - mp_tail(t, 2 * u) / (2 * a))


def mp_cov_critical(t, s, u, rho, alpha):
    # the product form holds for u >= 0; negative u follows by reflection
    u = abs(u)
    A = lambda r: mp_half_variance_critical(r, u, alpha) if r > 0 else mp.mpf(0)
    return float(rho * (1 - rho) * (A(t) + A(s) - A(t - s)))


SUB = an.RegimeParams(an.SUBCRITICAL, 0.5)
SUP = an.RegimeParams(an.SUPERCRITICAL, 0.5)


def crit(alpha=1.0, rho=0.5):
    return an.RegimeParams(an.CRITICAL, rho, alpha)


def test_subcritical_reference_value():
    assert an.current_cov_subcritical(1, 1, 0.5) == pytest.approx(0.25 * 2 / math.sqrt(math.pi), rel=1e-14)
    assert an.current_cov_subcritical(1, 1, 0.5) == pytest.approx(0.28209, abs=5e-6)
    assert an.current_cov_subcritical(1, 0, 0.5) == 0.0
    assert an.current_cov_subcritical(1, 1, 0.0) == an.current_cov_subcritical(1, 1, 1.0) == 0.0


def test_critical_reference_value():
    assert an.current_cov_critical(1, 1, 0, 0.5, 1.0) == pytest.approx(0.1890, abs=5e-5)


@given(t=st.floats(1e-3, 20), frac=st.floats(0, 1), u=st.floats(-3, 3), alpha=st.floats(1e-3, 1e2))
def test_critical_matches_high_precision(t, frac, u, alpha):
    s = frac * t
    assert an.current_cov_critical(t, s, u, 0.5, alpha) == pytest.approx(
        mp_cov_critical(t, s, u, 0.5, alpha), rel=1e-9, abs=1e-13)


def test_critical_extreme_arguments_stay_finite():
    v = an.current_cov_critical(50.0, 50.0, 3.0, 0.5, 1e3)
    assert math.isfinite(v)
    assert v == pytest.approx(mp_cov_critical(50.0, 50.0, 3.0, 0.5, 1e3), rel=1e-9)


def test_critical_telescopes_at_zero():
    assert an.current_cov_critical(1.3, 0.0, 0.2, 0.5, 2.0) == 0.0
    assert an.half_variance_critical(0.0, 0.3, 1.0) == 0.0


def test_supercritical_cases():
    assert an.current_cov_supercritical(1, 0.5, 0.0, 0.5) == 0.0
    far = an.current_cov_supercritical(1, 1, 50.0, 0.5)
    assert abs(far - an.current_cov_subcritical(1, 1, 0.5)) < 1e-10
    assert an.current_cov_supercritical(1, 1, 0.4, 0.0) == 0.0


@given(t=st.floats(0.01, 5), frac=st.floats(0, 1), u=st.floats(0, 3), alpha=st.floats(0.01, 50))
def test_reflection_symmetry_in_u(t, frac, u, alpha):
    s = frac * t
    assert an.current_cov_critical(t, s, u, 0.5, alpha) == an.current_cov_critical(t, s, -u, 0.5, alpha)
    assert an.current_cov_supercritical(t, s, u, 0.5) == an.current_cov_supercritical(t, s, -u, 0.5)


@given(t=st.floats(0.01, 5), u=st.floats(0, 2))
def test_critical_is_monotone_in_alpha(t, u):
    vals = [an.current_cov_critical(t, t, u, 0.5, a) for a in (0.01, 0.1, 1, 10, 100)]
    assert all(b >= a - 1e-15 for a, b in zip(vals, vals[1:]))
    assert an.current_cov_supercritical(t, t, u, 0.5) <= vals[0] + 1e-12
    assert vals[-1] <= an.current_cov_subcritical(t, t, 0.5) + 1e-12


@given(t=st.floats(0.01, 5), frac=st.floats(0, 1), u=st.floats(0, 2), alpha=st.floats(0.05, 20))
def test_covariance_is_positive_semidefinite(t, frac, u, alpha):
    s = frac * t
    c = lambda a, b: an.current_cov_critical(max(a, b), min(a, b), u, 0.5, alpha)
    M = np.array([[c(t, t), c(t, s)], [c(t, s), c(s, s)]])
    assert np.linalg.eigvalsh(M).min() >= -1e-12


def test_order_is_enforced():
    with pytest.raises(ValueError):
        an.current_cov(SUB, 0.5, 1.0, 0.0)
    with pytest.raises(ValueError):
        an.current_cov_critical(1.0, 0.5, 0.0, 0.5, 0.0)


def test_interpolation_limits():
    res = an.interpolation_limits(1.0, 1.0, 0.3, 0.5, [1e-4, 1e-2, 1, 1e2, 1e4])
    assert res["to_subcritical"] and res["to_supercritical"] and res["monotone"]
    res0 = an.interpolation_limits(1.0, 1.0, 0.0, 0.5, [1e-4, 1e4])
    assert abs(res0["critical"][0]) < 1e-3
    with pytest.raises(ValueError):
        an.interpolation_limits(1.0, 1.0, 0.0, 0.5, [0.1, 10.0])


def test_tagged_covariance():
    assert an.tagged_covariance(1, 1, 0.0, 0.5, SUB) == pytest.approx(4 * 0.28209479, rel=1e-7)
    assert an.tagged_covariance(1, 1, 0.0, 0.5, SUP) == 0.0
    assert an.tagged_covariance(1, 1, 0.0, 1.0, SUB) == 0.0
    with pytest.raises(ValueError):
        an.tagged_covariance(1, 1, 0.0, 0.0, SUB)


@pytest.mark.parametrize("t", [0.1, 0.7, 2.0])
@pytest.mark.parametrize("u", [0.0, 0.4, 1.5])
def test_variance_via_semigroup(t, u):
    for params in (SUB, SUP, crit(0.3), crit(1.0), crit(5.0)):
        closed = an.current_cov(params, t, t, u)
        assert an.variance_via_semigroup(t, u, params) == pytest.approx(closed, abs=1e-5)


def test_variance_via_semigroup_subcritical_reference():
    assert an.variance_via_semigroup(1.0, 0.0, SUB) == pytest.approx(0.28209479, abs=1e-7)


def test_regime_from_beta():
    assert an.RegimeParams.from_beta(0.3, 0.5).regime == an.SUBCRITICAL
    assert an.RegimeParams.from_beta(1.0, 0.5, 2.0).regime == an.CRITICAL
    assert an.RegimeParams.from_beta(math.inf, 0.5).regime == an.SUPERCRITICAL
    with pytest.raises(ValueError):
        an.RegimeParams(an.CRITICAL, 0.5)
    with pytest.raises(ValueError):
        an.RegimeParams(an.SUBCRITICAL, 1.5)


# --------------------------------------------------------------------------
# fields

def heat_gauss(c, w, tau):
    s2 = w * w + 2 * tau
    return lambda x: w / math.sqrt(s2) * np.exp(-(x - c) ** 2 / (2 * s2))


def test_ou_covariance_subcritical_against_quadrature():
    H = gaussian_bump(0.3, 0.5)
    G = gaussian_bump(-0.2, 0.8)
    for t, s in ((0.5, 0.5), (1.0, 0.5), (2.0, 0.3)):
        TH = heat_gauss(0.3, 0.5, t - s)
        exact = 0.25 * integrate.quad(lambda x: TH(x) * G(x), -30, 30, epsabs=1e-14)[0]
        assert an.ou_covariance(H, G, t, s, SUB) == pytest.approx(exact, rel=1e-8)


def test_ou_covariance_equal_times_is_white_noise():
    H = interface_bump(ROBIN, alpha=1.0)
    G = interface_bump(ROBIN, alpha=1.0, center=0.8, width=0.3, jump_amplitude=-0.3)
    pair = integrate.quad(lambda x: H(x) * G(x), -15, 0, epsabs=1e-13)[0] + \
        integrate.quad(lambda x: H(x) * G(x), 0, 15, epsabs=1e-13)[0]
    assert an.ou_covariance(H, G, 0.5, 0.5, crit()) == pytest.approx(0.25 * pair, rel=1e-8)


def test_ou_covariance_bilinear():
    H1 = interface_bump(NEUMANN, center=0.4)
    H2 = interface_bump(NEUMANN, center=1.0, width=0.3, jump_amplitude=-0.2)
    G = interface_bump(NEUMANN, center=0.6, width=0.5)
    a, b = 1.7, -0.4
    lhs = an.ou_covariance(a * H1 + b * H2, G, 1.0, 0.5, SUP)
    rhs = a * an.ou_covariance(H1, G, 1.0, 0.5, SUP) + b * an.ou_covariance(H2, G, 1.0, 0.5, SUP)
    assert lhs == pytest.approx(rhs, abs=1e-10)


def test_ou_covariance_long_lag():
    # heat flow keeps mass, so a bump decays only like lag^(-1/2); a zero-mass
    # function (difference of bumps) decays much faster
    H = gaussian_bump(0.0, 0.5)
    TH = heat_gauss(0.0, 0.5, 50.0)
    exact = 0.25 * integrate.quad(lambda x: TH(x) * H(x), -30, 30, epsabs=1e-15)[0]
    assert an.ou_covariance(H, H, 50.5, 0.5, SUB) == pytest.approx(exact, rel=1e-8)
    D = gaussian_bump(0.5, 0.5) + (-1.0) * gaussian_bump(-0.5, 0.5)
    D = type(D)(*[getattr(D, f) for f in ("value_right", "value_left", "d1_right", "d1_left",
                                          "d2_right", "d2_left")], beta_class=FULL_LINE, reach=5.25)
    assert abs(an.ou_covariance(D, D, 50.5, 0.5, SUB)) < 1e-3


def test_ou_covariance_rejects_wrong_class():
    with pytest.raises(ValueError):
        an.ou_covariance(gaussian_bump(), gaussian_bump(), 1.0, 0.5, crit())
    with pytest.raises(ValueError):
        an.ou_covariance(interface_bump(ROBIN, alpha=2.0), interface_bump(ROBIN, alpha=2.0), 1.0, 0.5,
                         crit(1.0))
    with pytest.raises(ValueError):
        an.ou_covariance(gaussian_bump(), gaussian_bump(), 0.5, 1.0, SUB)


def test_ou_covariance_matches_exact_lattice_value():
    # chi/n H^T P G on the lattice converges to the limit at rate about 1/n
    H = interface_bump(ROBIN, alpha=1.0)
    G = interface_bump(ROBIN, alpha=1.0, center=0.8, width=0.3)
    limit = an.ou_covariance(H, G, 1.0, 0.5, crit())
    gaps = []
    for n in (25, 50, 100):
        walk = an.DualWalk(n, math.ceil(8 * n), 1.0, 1.0)
        gaps.append(abs(walk.field_cov(H, G, 1.0, 0.5, 0.5) - limit))
    assert gaps[0] > gaps[1] > gaps[2]
    assert gaps[2] < 2e-2


def test_weighted_norm():
    assert an.weighted_norm(zero_function(), crit()) == 0.0

    class Fake:
        reach = 10.0

        def __call__(self, x):
            x = np.asarray(x, dtype=float)
            return np.where(x >= 0, 2.0 * np.exp(-x * x / 2 * (4 * math.pi / 9)), 0.0) * 1.0

    # int_0^inf 4 exp(-(4 pi / 9) x^2) dx = 2 sqrt(pi / (4 pi / 9)) = 3, atom 4
    assert an.weighted_norm(Fake(), crit()) == pytest.approx(math.sqrt(7), rel=1e-9)
    assert an.weighted_norm(Fake(), SUB) == pytest.approx(math.sqrt(3), rel=1e-9)


def test_quadratic_variation_limit_at_unit_alpha():
    H = interface_bump(ROBIN, alpha=1.0)
    reg = crit(1.0)
    norm = an.weighted_norm(an.gradient(H), reg)
    assert an.quadratic_variation_limit(H, reg, 0.3) == pytest.approx(2 * 0.25 * 0.3 * norm**2, rel=1e-10)


def test_dual_walk_current_variance_converges():
    limit = an.current_cov_critical(1.0, 1.0, 0.0, 0.5, 1.0)
    gaps = []
    for n in (25, 50, 100):
        walk = an.DualWalk(n, math.ceil(8 * n), 1.0, 1.0)
        gaps.append(walk.current_variance(1.0, 0.0, 0.5) - limit)
    assert gaps[0] > gaps[1] > gaps[2] > 0
    walk = an.DualWalk(20, 160, 1.0, math.inf)
    assert walk.current_variance(1.0, 0.0, 0.5) == pytest.approx(0.0, abs=1e-12)


def test_exact_lattice_variance_is_reflection_symmetric():
    walk = an.DualWalk(40, 320, 1.0, 1.0)
    for u in (0.25, 1.0):
        a = walk.current_variance(1.0, u, 0.5)
        b = walk.current_variance(1.0, -u, 0.5)
        assert a == pytest.approx(b, rel=5e-2)
        assert a == pytest.approx(an.current_cov_critical(1, 1, -u, 0.5, 1.0), abs=1e-2)


def test_dual_walk_covariance_symmetry():
    walk = an.DualWalk(20, 160, 1.0, 0.0)
    c = walk.current_cov(1.0, 0.5, 0.0, 0.5)
    limit = an.current_cov_subcritical(1.0, 0.5, 0.5)
    assert c == pytest.approx(limit, abs=2e-2)


@given(st.lists(st.tuples(st.floats(0, 5), st.floats(0, 5), st.floats(-10, 10), st.floats(0, 1),
                          st.integers(1, 10**6)), min_size=1, max_size=6))
def test_covariance_table_roundtrip(tmp_path_factory, rows):
    tab = an.CovarianceTable()
    for t, s, emp, ci, reps in rows:
        tab.add(regime=an.CRITICAL, alpha=1.0, rho=0.5, u=0.0, t=max(t, s), s=min(t, s),
                analytic=0.1, empirical=emp, ci=ci, replicas=reps)
    path = tmp_path_factory.mktemp("tab") / "cov.csv"
    tab.write_csv(path)
    back = an.CovarianceTable.read_csv(path)
    assert back.entries == tab.entries


def test_entry_within():
    e = an.CovarianceEntry(an.SUBCRITICAL, math.nan, 0.5, 0.0, 1.0, 1.0, 0.28, 0.29, 0.005, 100)
    assert e.within == pytest.approx(2.0)
