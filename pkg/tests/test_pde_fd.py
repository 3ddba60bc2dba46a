import math

import numpy as np
import pytest

from slowbond import semigroups as sg
from slowbond.lattice_kmc import SimulationConfig
from slowbond.observables import FULL_LINE, NEUMANN, ROBIN, gaussian_bump, interface_bump
from slowbond.pde_fd import (FdGrid, Profile, SchemeError, hydrodynamic_check, solve_for_beta,
                             solve_heat, solve_neumann_interface, solve_robin_interface, step_profile,
                             write_profiles)

G = gaussian_bump(0.3, 0.4)


def heat_exact(x, t, c=0.3, w=0.4):
    s2 = w * w + 2 * t
    return w / math.sqrt(s2) * np.exp(-(x - c) ** 2 / (2 * s2))


def sup_error_heat(h, scheme="crank-nicolson", T=0.5):
    grid = FdGrid.for_problem(h, T, reach=G.reach, scheme=scheme)
    p = solve_heat(G, T, grid)
    x = np.concatenate([p.x_left, p.x_right])
    u = np.concatenate([p.u_left, p.u_right])
    return float(np.max(np.abs(u - heat_exact(x, T))))


def test_constant_is_preserved():
    c = lambda x: np.full_like(np.asarray(x, dtype=float), 0.37)
    grid = FdGrid.for_problem(0.02, 0.5)
    for prof in (solve_heat(c, 0.5, grid), solve_robin_interface(c, 0.5, 2.0, grid)):
        assert np.allclose(prof.u_left, 0.37, atol=1e-12)
        assert np.allclose(prof.u_right, 0.37, atol=1e-12)


@pytest.mark.parametrize("scheme", ["crank-nicolson", "explicit"])
def test_heat_accuracy(scheme):
    assert sup_error_heat(1e-2, scheme) < 1e-4


def test_heat_second_order():
    e1, e2 = sup_error_heat(2e-2), sup_error_heat(1e-2)
    assert 3.0 < e1 / e2 < 5.0


def test_heat_conserves_mass():
    grid = FdGrid.for_problem(1e-2, 1.0, reach=G.reach)
    profs = solve_heat(G, 1.0, grid, output_times=[0.0, 0.5, 1.0])
    masses = [p.mass() for p in profs]
    assert max(masses) - min(masses) < 1e-10


def test_even_data_under_robin_follow_heat():
    g = interface_bump(FULL_LINE, center=0.5, width=0.3)
    grid = FdGrid.for_problem(1e-2, 0.5, reach=g.reach)
    a = solve_robin_interface(g, 0.5, 1.0, grid)
    b = solve_heat(g, 0.5, grid)
    x = np.linspace(-2, 2, 81)
    assert np.max(np.abs(a(x) - b(x))) < 1e-4
    assert abs(a.jump()) < 1e-4


def test_robin_against_semigroup():
    g = interface_bump(ROBIN, alpha=1.0)
    T = 0.5
    prof = solve_robin_interface(g, T, 1.0, FdGrid.for_problem(5e-3, T, reach=g.reach))
    keep_l = np.abs(prof.x_left) < 4
    keep_r = prof.x_right < 4
    # the left array ends at 0-, so evaluate the semigroup there from the left
    xl = np.minimum(prof.x_left[keep_l], -1e-300)
    ref = sg.apply_robin_via_formula(g, T, np.concatenate([xl, prof.x_right[keep_r]]), 1.0)
    got = np.concatenate([prof.u_left[keep_l], prof.u_right[keep_r]])
    assert np.max(np.abs(got - ref)) < 1e-3


def test_zero_coupling_is_neumann():
    g = interface_bump(NEUMANN)
    grid = FdGrid.for_problem(1e-2, 0.5, reach=g.reach)
    a = solve_robin_interface(g, 0.5, 0.0, grid)
    b = solve_neumann_interface(g, 0.5, grid)
    assert np.array_equal(a.u_left, b.u_left) and np.array_equal(a.u_right, b.u_right)


def test_neumann_half_masses_conserved():
    g = interface_bump(NEUMANN, jump_amplitude=0.7)
    grid = FdGrid.for_problem(1e-2, 1.0, reach=g.reach)
    profs = solve_neumann_interface(g, 1.0, grid, output_times=[0.0, 1.0])
    assert abs(profs[0].mass_left() - profs[1].mass_left()) < 1e-10
    assert abs(profs[0].mass_right() - profs[1].mass_right()) < 1e-10


def test_neumann_against_semigroup():
    g = interface_bump(NEUMANN, jump_amplitude=0.7)
    T = 0.5
    prof = solve_neumann_interface(g, T, FdGrid.for_problem(5e-3, T, reach=g.reach))
    x = np.array([-1.5, -0.6, -0.1, 0.1, 0.6, 1.5])
    assert np.max(np.abs(prof(x) - sg.apply_neumann(g, T, x))) < 1e-3


def test_right_supported_data_stay_right():
    g = lambda x: np.where(np.asarray(x) > 0, np.exp(-((np.asarray(x) - 1) ** 2) * 4), 0.0)
    prof = solve_neumann_interface(g, 0.5, FdGrid.for_problem(1e-2, 0.5, reach=3.0))
    assert np.all(prof.u_left == 0.0)


@pytest.mark.parametrize("alpha", [0.0, 1.0, 3.0])
def test_interface_residual_second_order(alpha):
    g = interface_bump(ROBIN, alpha=1.0) if alpha else interface_bump(NEUMANN)
    res = []
    for h in (2e-2, 1e-2, 5e-3):
        p = solve_robin_interface(g, 0.3, alpha, FdGrid.for_problem(h, 0.3, reach=g.reach))
        dl, dr = p.one_sided_slopes()
        res.append(max(abs(dr - alpha * p.jump()), abs(dl - alpha * p.jump())))
    # at least second order (the uncoupled case converges faster)
    assert res[0] > res[1] > res[2]
    assert res[1] / res[2] > 3.0


def test_explicit_stability_guard():
    with pytest.raises(SchemeError):
        FdGrid(h=1e-2, k=1e-3, X=5.0, scheme="explicit")
    grid = FdGrid(h=1e-2, k=4.9e-5, X=5.0, scheme="explicit")
    with pytest.raises(SchemeError):
        solve_robin_interface(G, 0.1, 50.0, grid)


def test_solve_for_beta_dispatch():
    g = interface_bump(ROBIN, alpha=2.0)
    grid = FdGrid.for_problem(2e-2, 0.3, reach=g.reach)
    assert solve_for_beta(g, 0.3, 1.0, 2.0, grid).jump() == solve_robin_interface(g, 0.3, 2.0, grid).jump()
    assert solve_for_beta(g, 0.3, math.inf, 2.0, grid).jump() == solve_neumann_interface(g, 0.3, grid).jump()


def test_profile_csv(tmp_path):
    grid = FdGrid.for_problem(5e-2, 0.2, reach=G.reach)
    profs = solve_heat(G, 0.2, grid, output_times=[0.1, 0.2])
    path = tmp_path / "p.csv"
    write_profiles(profs, path)
    rows = path.read_text().splitlines()
    assert rows[0] == "t,x,u"
    assert len(rows) == 1 + sum(len(p.x_left) + len(p.x_right) for p in profs)


# --------------------------------------------------------------------------
# particle system against the equation

def test_flat_profile_stays_flat():
    c = SimulationConfig(n=50, alpha=1.0, beta=1.0, rho=0.5, horizon_t=0.1, seed=1)
    rep = hydrodynamic_check(c, lambda x: np.full_like(x, 0.5), 0.1, blocks=4)
    assert np.all(np.abs(rep["empirical"] - 0.5) < 0.1)
    assert np.allclose(rep["pde"], 0.5)


def test_disconnected_step_keeps_its_jump():
    c = SimulationConfig(n=100, alpha=1.0, beta=math.inf, rho=0.5, horizon_t=0.1, seed=1)
    rep = hydrodynamic_check(c, step_profile(0.8, 0.2), 0.1, blocks=4)
    i = len(rep["centers"]) // 2
    assert rep["empirical"][i - 1] - rep["empirical"][i] > 0.5
    assert rep["pde"][i - 1] - rep["pde"][i] == pytest.approx(0.6)


def test_hydrodynamic_distance_decreases_with_n():
    l1 = []
    for n in (50, 100, 200):
        c = SimulationConfig(n=n, alpha=1.0, beta=1.0, rho=0.5, horizon_t=0.1, seed=2)
        l1.append(hydrodynamic_check(c, step_profile(0.8, 0.2), 0.1, blocks=8)["l1"])
    assert l1[0] > l1[1] > l1[2]
