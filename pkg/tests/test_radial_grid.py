import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import gamma

from multisol.errors import BadDimension, PlateauTooLarge
from multisol.radial_grid import (
    RadialProfile,
    ball_volume,
    build_grid,
    bump,
    chi,
    level_measure,
    load_profile,
    norms,
    restrict,
    save_profile,
    sphere_area,
    strauss_ratio,
    tail_ratio,
    zero,
)


@pytest.mark.parametrize("stretch", [1.0, 8.0])
@pytest.mark.parametrize("dim,r_max,M", [(3, 1.0, 1000), (4, 2.0, 512), (5, 60.0, 2048)])
def test_weights_sum_to_ball_volume(dim, r_max, M, stretch):
    g = build_grid(dim, r_max, M, stretch)
    assert np.sum(g.weights) == pytest.approx(ball_volume(dim, r_max), rel=1e-10)


def test_ball_volume_formulas():
    assert ball_volume(3, 1.0) == pytest.approx(4 * np.pi / 3, rel=1e-14)
    assert ball_volume(4, 2.0) == pytest.approx(np.pi**2 * 2**4 / 2, rel=1e-14)


def test_bad_dimension_and_sizes():
    with pytest.raises(BadDimension):
        build_grid(2)
    with pytest.raises(ValueError):
        build_grid(3, M=32)
    with pytest.raises(ValueError):
        build_grid(3, stretch=0.5)


def test_nodes_monotone_and_stretched_toward_origin():
    g = build_grid(3, 60.0, 256, 8.0)
    h = np.diff(g.nodes)
    assert g.nodes[0] == 0.0 and g.nodes[-1] == 60.0
    assert np.all(h > 0)
    assert h[-1] / h[0] == pytest.approx(8.0, rel=1e-10)


@pytest.mark.parametrize("stretch", [1.0, 8.0])
@pytest.mark.parametrize("dim", [3, 4, 5])
def test_linear_functions_integrated_exactly(dim, stretch):
    g = build_grid(dim, 7.0, 128, stretch)
    exact = sphere_area(dim) * 7.0 ** (dim + 1) / (dim + 1)
    assert g.integrate(g.nodes) == pytest.approx(exact, rel=1e-12)


@pytest.mark.parametrize("stretch", [1.0, 8.0])
def test_laplacian_exact_on_r_squared(stretch):
    g = build_grid(4, 5.0, 200, stretch)
    lap = g.laplacian(g.nodes**2)
    assert np.allclose(lap[:-1], 2 * 4, rtol=1e-10)
    u = np.cos(g.nodes)
    assert g.laplacian(u)[0] == pytest.approx(2 * 4 * (u[1] - u[0]) / g.nodes[1] ** 2, rel=1e-12)


def test_stiffness_symmetric_and_is_energy_gradient():
    g = build_grid(3, 10.0, 256)
    rng = np.random.default_rng(0)
    u, v = rng.normal(size=(2, g.M + 1))
    assert np.dot(g.apply_stiffness(u), v) == pytest.approx(np.dot(u, g.apply_stiffness(v)), rel=1e-12)
    eps = 1e-6
    fd = (g.dirichlet_energy(u + eps * v) - g.dirichlet_energy(u - eps * v)) / (2 * eps)
    assert fd == pytest.approx(np.dot(g.apply_stiffness(u), v), rel=1e-8)


@settings(max_examples=25, deadline=None)
@given(st.floats(-50, 50))
def test_dirichlet_energy_is_quadratic(alpha):
    g = build_grid(3, 10.0, 128)
    u = np.exp(-g.nodes)
    assert g.dirichlet_energy(alpha * u) == pytest.approx(alpha**2 * g.dirichlet_energy(u), rel=1e-12, abs=1e-300)


@pytest.mark.parametrize("dim", [3, 4, 5])
def test_gaussian_quadrature_error_quarters_under_refinement(dim):
    ref = sphere_area(dim) * gamma(dim / 2) / 2
    errs = []
    for M in (256, 512, 1024):
        g = build_grid(dim, 10.0, M, 1.0)
        errs.append(abs(g.integrate(np.exp(-g.nodes**2)) - ref) / ref)
    for a, b in zip(errs[:-1], errs[1:]):
        assert 3.8 < a / b < 4.2


def test_gaussian_l2_norm_on_default_grid():
    g = build_grid(3)
    u = RadialProfile(g, np.exp(-g.nodes**2 / 2))
    assert norms(u).l2_sq == pytest.approx(np.pi**1.5, rel=1e-4)


@pytest.mark.parametrize("dim", [3, 4, 5])
def test_gaussian_dirichlet_energy_on_default_grid(dim):
    g = build_grid(dim)
    exact = 0.5 * sphere_area(dim) * gamma((dim + 2) / 2) / 2
    assert g.dirichlet_energy(np.exp(-g.nodes**2 / 2)) == pytest.approx(exact, rel=1e-4)


# -- profiles ----------------------------------------------------------


def test_profile_shape_checked():
    g = build_grid(3, 10.0, 64)
    with pytest.raises(ValueError):
        RadialProfile(g, np.zeros(10))


def test_profile_interpolation_zero_beyond_cutoff():
    g = build_grid(3, 10.0, 64, 1.0)
    u = RadialProfile(g, 10.0 - g.nodes)
    assert u(2.5) == pytest.approx(7.5)
    assert u(11.0) == 0.0


@pytest.mark.parametrize("shape", ["linear", "gaussian"])
def test_bump_sup_norm_and_plateau(shape):
    g = build_grid(3, 60.0, 1024)
    u = bump(g, 1.5, 20.0, shape=shape)
    assert u.linf == 1.5
    assert np.all(u.values[g.nodes <= 20.0] == 1.5)
    assert u.values[-1] == 0.0
    assert norms(u).l2_sq >= 1.5**2 * ball_volume(3, 20.0)


def test_linear_bump_support():
    g = build_grid(3, 60.0, 1024)
    u = bump(g, 2.0, 10.0, width=2.0)
    assert np.all(u.values[g.nodes >= 12.0] == 0.0)
    mid = np.argmin(np.abs(g.nodes - 11.0))
    assert u.values[mid] == pytest.approx(2.0 * (1 - (g.nodes[mid] - 10.0) / 2.0))


def test_bump_errors():
    g = build_grid(3, 20.0, 256)
    with pytest.raises(PlateauTooLarge):
        bump(g, 1.0, 19.5)
    with pytest.raises(ValueError):
        bump(g, -1.0, 5.0)
    with pytest.raises(ValueError):
        bump(g, 1.0, 5.0, shape="square")


def test_restrict_zero_profile():
    g = build_grid(3, 10.0, 64)
    assert np.all(restrict(zero(g), (1.0, 2.0)).values == 0.0)


def test_restrict_bump():
    g = build_grid(3, 60.0, 1024, 1.0)
    u = bump(g, 1.5, 20.0)
    ui = restrict(u, (1.0, 2.0))
    inside = (u.values > 1.0) & (u.values < 2.0)
    assert np.array_equal(ui.values[inside], u.values[inside])
    assert np.all(ui.values[~inside] == 0.0)
    assert np.all(ui.values[g.nodes <= 20.0] == 1.5)
    assert level_measure(u, (1.0, 2.0)) == np.sum(g.weights[inside])
    with pytest.raises(ValueError):
        chi(u, (0.0, 1.0))


def test_norms_zero():
    assert norms(zero(build_grid(3, 10.0, 64))) == (0.0, 0.0, 0.0)


def test_strauss_ratio():
    g = build_grid(3)
    assert strauss_ratio(zero(g), 1.0) == 0.0
    u = RadialProfile(g, np.exp(-g.nodes))
    ratios = [strauss_ratio(u, b) for b in (1.0, 2.0, 4.0, 8.0)]
    assert np.all(np.isfinite(ratios))
    assert np.all(np.diff(ratios) <= 0)
    assert strauss_ratio(u.scaled(2.0), 2.0) == pytest.approx(ratios[1], rel=1e-14)
    with pytest.raises(ValueError):
        strauss_ratio(u, 60.0)


def test_tail_ratio():
    g = build_grid(3)
    assert tail_ratio(zero(g)) == 0.0
    assert tail_ratio(RadialProfile(g, np.exp(-g.nodes))) < 1e-20


def test_profile_csv_round_trip(tmp_path):
    g = build_grid(4, 12.0, 300, 3.0)
    u = RadialProfile(g, np.exp(-g.nodes) * np.cos(g.nodes))
    save_profile(tmp_path / "u.csv", u, {"flag": np.ones(g.M + 1)})
    v = load_profile(tmp_path / "u.csv")
    assert v.grid.dim == 4 and v.grid.M == 300 and v.grid.stretch == 3.0
    assert np.array_equal(v.values, u.values)
    header = (tmp_path / "u.csv").read_text().splitlines()[1]
    assert header == "# r,u,flag"


def test_profile_csv_rejects_mismatched_nodes(tmp_path):
    g = build_grid(3, 10.0, 64)
    save_profile(tmp_path / "u.csv", zero(g))
    text = (tmp_path / "u.csv").read_text().replace("M=64", "M=65")
    (tmp_path / "bad.csv").write_text(text)
    with pytest.raises(ValueError):
        load_profile(tmp_path / "bad.csv")
