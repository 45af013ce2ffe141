import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.linalg import solve_banded
from scipy.special import erf

from multisol.errors import SingularSystem, ZeroCharge
from multisol.kgm_coupling import hylomorphy_ratio, kgm_charge, kgm_energy, phi_matrix, solve_phi, thomas
from multisol.nonlinearity import power_well
from multisol.radial_grid import RadialProfile, build_grid, bump, zero

GRID = build_grid(3)
GAUSS = RadialProfile(GRID, np.exp(-GRID.nodes**2 / 2))
T_DEEP = power_well(1.0, 4.0, 0.5, 6.0, omega=1.0)  # minimum -16/27 at s^2 = 4/3


def _dense_stiffness(g):
    n = g.M
    A = np.zeros((n, n))
    a = g.stiffness
    for i in range(n):
        A[i, i] += a[i]
        if i > 0:
            A[i, i] += a[i - 1]
            A[i, i - 1] = A[i - 1, i] = -a[i - 1]
    return A


def test_thomas_matches_banded_solver():
    rng = np.random.default_rng(0)
    n = 50
    lo, up = rng.uniform(-1, 0, n - 1), rng.uniform(-1, 0, n - 1)
    di = 3.0 + rng.uniform(0, 1, n)
    b = rng.normal(size=n)
    ab = np.zeros((3, n))
    ab[0, 1:], ab[1], ab[2, :-1] = up, di, lo
    assert np.allclose(thomas(lo, di, up, b), solve_banded((1, 1), ab, b), rtol=1e-12, atol=1e-14)


def test_thomas_zero_pivot():
    with pytest.raises(SingularSystem):
        thomas(np.array([1.0]), np.array([0.0, 1.0]), np.array([1.0]), np.array([1.0, 1.0]))


def test_zero_profile_gives_zero_potential():
    assert np.all(solve_phi(zero(GRID), 0.3).phi.values == 0.0)


def test_bad_coupling():
    with pytest.raises(ValueError):
        solve_phi(GAUSS, 0.0)


@settings(max_examples=30, deadline=None)
@given(st.floats(1e-3, 10.0), st.floats(0.1, 20.0), st.integers(0, 2**31))
def test_potential_bounds_exact(e, amp, seed):
    g = build_grid(3, 20.0, 256)
    rng = np.random.default_rng(seed)
    v = amp * rng.uniform(0, 1, g.M + 1) * np.exp(-g.nodes / 4)
    phi = solve_phi(RadialProfile(g, v), e).phi.values
    assert np.all(phi >= 0.0)
    assert np.all(phi <= 1.0 / e)


def test_potential_monotone_outside_support():
    g = build_grid(3, 30.0, 512)
    u = bump(g, 1.0, 3.0)
    phi = solve_phi(u, 0.5).phi.values
    outside = g.nodes >= 4.0
    assert np.all(np.diff(phi[outside]) <= 0)


def test_small_coupling_limit_matches_dense_solve():
    e = 1e-4
    phi = solve_phi(GAUSS, e).phi.values[:-1] / e
    ref = np.linalg.solve(_dense_stiffness(GRID), GRID.weights[:-1] * GAUSS.values[:-1] ** 2)
    assert np.max(np.abs(phi - ref)) / np.max(ref) < 1e-7


def test_small_coupling_limit_matches_newtonian_potential():
    # -Delta V = exp(-r^2) in R^3 with V(R) = 0
    e = 1e-4
    r, R = GRID.nodes, GRID.r_max
    with np.errstate(divide="ignore", invalid="ignore"):
        V = np.where(r > 0, np.sqrt(np.pi) * erf(r) / (4 * r), 0.5)
    V = V - np.sqrt(np.pi) * erf(R) / (4 * R)
    phi = solve_phi(GAUSS, e).phi.values / e
    assert np.max(np.abs(phi - V)) / np.max(V) < 1e-4


def test_superposition_at_fixed_coefficient():
    e = 0.7
    rng = np.random.default_rng(4)
    a, b = rng.uniform(0, 1, (2, GRID.M + 1)) * np.exp(-GRID.nodes / 3)
    diag, off = phi_matrix(GAUSS, e)
    solve = lambda src: thomas(off, diag, off, GRID.weights[:-1] * e * src[:-1])
    assert np.allclose(solve(a**2 + b**2), solve(a**2) + solve(b**2), rtol=1e-10, atol=1e-14)


def test_self_adjointness():
    e = 0.7
    rng = np.random.default_rng(5)
    a, b = rng.uniform(0, 1, (2, GRID.M + 1)) * np.exp(-GRID.nodes / 3)
    diag, off = phi_matrix(GAUSS, e)
    wa, wb = GRID.weights[:-1] * e * a[:-1] ** 2, GRID.weights[:-1] * e * b[:-1] ** 2
    lhs = np.dot(thomas(off, diag, off, wa), wb)
    rhs = np.dot(thomas(off, diag, off, wb), wa)
    assert lhs == pytest.approx(rhs, rel=1e-10)


def test_screening_increases_with_coupling():
    vals = [e * solve_phi(GAUSS, e).phi.values[0] for e in np.geomspace(1e-3, 30.0, 25)]
    assert np.all(np.diff(vals) >= 0)


def test_charge_zero_and_upper_bound():
    assert kgm_charge(zero(GRID), 0.1) == 0.0
    half = 0.5 * GRID.inner(GAUSS.values, GAUSS.values)
    for e in (1e-3, 0.1, 1.0, 10.0):
        assert kgm_charge(GAUSS, e) <= half


def test_charge_deficit_is_second_order_in_coupling():
    half = 0.5 * GRID.inner(GAUSS.values, GAUSS.values)
    c = [(half - kgm_charge(GAUSS, e)) / e**2 for e in (1e-1, 1e-2, 1e-3)]
    assert max(c) / min(c) < 1.01


def test_hylomorphy_ratio_below_mass_for_wide_bump():
    s0 = np.sqrt(4.0 / 3.0)
    ratios = [hylomorphy_ratio(bump(GRID, s0, r_n), 1e-2, T_DEEP) for r_n in (1.0, 2.0, 4.0, 8.0, 16.0)]
    assert ratios[0] > 1.0
    assert min(ratios) < T_DEEP.omega**2


def test_hylomorphy_ratio_not_scale_invariant():
    u = bump(GRID, 1.0, 4.0)
    assert hylomorphy_ratio(u, 0.1, T_DEEP) != pytest.approx(hylomorphy_ratio(u.scaled(2.0), 0.1, T_DEEP))


def test_hylomorphy_small_coupling_limit():
    u = bump(GRID, 1.0, 4.0)
    kg = kgm_energy(u, T_DEEP) / (0.5 * GRID.inner(u.values, u.values))
    assert hylomorphy_ratio(u, 1e-4, T_DEEP) == pytest.approx(kg, rel=1e-6)


def test_hylomorphy_zero_charge():
    with pytest.raises(ZeroCharge):
        hylomorphy_ratio(zero(GRID), 0.1, T_DEEP)
