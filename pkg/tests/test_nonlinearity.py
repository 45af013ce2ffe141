import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from multisol.errors import LastWellUnbounded, NegativeSlopeAtEndpoint, NoBound, NoWells
from multisol.nonlinearity import (
    Coercivity,
    Growth,
    WellDecomposition,
    detect_wells,
    factored,
    from_callables,
    from_source,
    max_principle_bound,
    piecewise,
    poly_s2,
    power_well,
    translate,
    truncate,
    untruncated,
    verify_growth,
)

ONE_WELL = factored([1.0])  # s^4 (s^2 - 1)
TWO_WELL = factored([1.0, 2.0, 3.0, 4.0], scale=1e-4)

BUILTINS = {
    "poly_s2": poly_s2([0.0, 0.5, -1.0, 0.2]),
    "factored": TWO_WELL,
    "power_well": power_well(1.0, 4.0, 1.0 / 16, 6.0),
    "piecewise": piecewise([0.0, 1.0, 2.0], [[0.0, 0.0, -1.0, 0.5], [-0.5, 0.5, 0.5, 0.1]]),
    "callables": from_callables(lambda s: s**4 - s**2, lambda s: 4 * s**3 - 2 * s, lambda s: 12 * s**2 - 2),
}


@pytest.mark.parametrize("name", sorted(BUILTINS))
def test_evenness_is_exact(name):
    nl = BUILTINS[name]
    s = np.random.default_rng(1).uniform(0, 6, 1000)
    assert np.array_equal(nl.value(-s), nl.value(s))
    assert np.array_equal(nl.deriv(-s), -nl.deriv(s))


@pytest.mark.parametrize("name", ["poly_s2", "factored", "power_well", "callables"])
def test_derivative_consistency(name):
    nl = BUILTINS[name]
    s = np.random.default_rng(2).uniform(0.05, 4, 200)
    eps = 1e-5
    for f, df in ((nl.value, nl.deriv), (nl.deriv, nl.deriv2)):
        fd = (f(s + eps) - f(s - eps)) / (2 * eps)
        assert np.all(np.abs(df(s) - fd) <= 1e-6 * (1 + np.abs(df(s))))


def test_piecewise_continuous_at_break():
    nl = BUILTINS["piecewise"]
    assert nl.value(np.array([1.0 - 1e-12]))[0] == pytest.approx(nl.value(np.array([1.0]))[0], abs=1e-10)


def test_scaled_and_with_mass():
    nl = power_well(1.0, 4.0, omega=2.0)
    s = np.linspace(0, 3, 31)
    assert np.allclose(nl.with_mass().value(s), nl.value(s) + 2.0 * s**2)
    assert np.allclose(nl.scaled(3.0).deriv(s), 3.0 * nl.deriv(s))


def test_from_source_round_trip():
    for nl in (BUILTINS["poly_s2"], TWO_WELL, BUILTINS["power_well"], BUILTINS["piecewise"]):
        again = from_source(nl.source)
        s = np.linspace(0, 5, 101)
        assert np.array_equal(again.value(s), nl.value(s))


def test_from_source_rejects_unknown_type():
    with pytest.raises(ValueError):
        from_source({"type": "nope"})


# -- wells -------------------------------------------------------------


def test_no_wells():
    with pytest.raises(NoWells):
        detect_wells(poly_s2([0.0, 1.0]))


def test_single_well_factored():
    w = detect_wells(ONE_WELL)
    assert w.ell == 1
    assert w.wells[0][0] == 0.0
    assert w.wells[0][1] == pytest.approx(1.0, abs=1e-12)


def test_two_wells_factored():
    w = detect_wells(TWO_WELL)
    assert w.ell == 2
    assert np.allclose(np.ravel(w.wells), [1, 2, 3, 4], atol=1e-12)
    flat = np.ravel(w.wells)
    assert np.all(np.diff(flat) > 0)
    assert w.eta_prev(1) == 0.0 and w.eta_prev(2) == pytest.approx(2.0)


def test_unbounded_last_well():
    w = detect_wells(power_well(1.0, 4.0))
    assert w.unbounded and w.wells == ((0.0, np.inf),)
    assert w.midpoint(1) == 1.0
    with pytest.raises(LastWellUnbounded):
        truncate(power_well(1.0, 4.0), w, 1)


def test_scan_argument_checks():
    with pytest.raises(ValueError):
        detect_wells(ONE_WELL, s_max=0.0)
    with pytest.raises(ValueError):
        detect_wells(ONE_WELL, scan_points=10)


# -- truncation ----------------------------------------------------------


def test_truncation_agreement_and_flat_tail():
    tn = truncate(ONE_WELL, detect_wells(ONE_WELL), 1, blend_window=0.5)
    assert tn.value(np.array([0.5]))[0] == -0.046875
    tail = tn.value(np.linspace(tn.eta + 0.5, 10, 500))
    assert np.ptp(tail) == 0.0
    assert tn.value(np.array([1.5]))[0] == pytest.approx(tail[0], abs=1e-15)
    s = np.linspace(0, 1, 1001)
    assert np.array_equal(tn.value(s[s <= tn.eta]), ONE_WELL.value(s[s <= tn.eta]))


def test_truncation_nonnegative_slope_beyond_eta():
    for j in (1, 2):
        tn = truncate(TWO_WELL, detect_wells(TWO_WELL), j)
        s = np.linspace(tn.eta, 10, 10_000)
        assert np.all(tn.deriv(s) >= 0)
        # R(eta) is zero up to the roundoff of evaluating R at its root
        assert np.all(tn.value(s) >= -1e-10)


def test_two_well_second_truncation_agrees_up_to_four():
    w = detect_wells(TWO_WELL)
    tn = truncate(TWO_WELL, w, 2)
    s = np.linspace(0, 4, 4001)
    s = s[s <= w.eta(2)]
    assert np.array_equal(tn.value(s), TWO_WELL.value(s))
    beyond = tn.value(np.linspace(w.eta(2), 10, 4001))
    assert np.all(np.diff(beyond) >= 0)


@pytest.mark.parametrize("j", [1, 2])
def test_truncation_is_c2_at_eta(j):
    tn = truncate(TWO_WELL, detect_wells(TWO_WELL), j)
    h = 1e-9
    for f in (tn.value, tn.deriv, tn.deriv2):
        lo, hi = f(np.array([tn.eta - h]))[0], f(np.array([tn.eta + h]))[0]
        assert abs(hi - lo) <= 1e-6 * (1 + abs(lo))
    fd = (tn.deriv(np.array([tn.eta + 0.1 + h])) - tn.deriv(np.array([tn.eta + 0.1 - h]))) / (2 * h)
    assert fd[0] == pytest.approx(tn.deriv2(np.array([tn.eta + 0.1]))[0], rel=1e-5, abs=1e-8)


@pytest.mark.xfail(strict=True, reason="a flat tail cannot dominate an unbounded base term; see truncate docs")
def test_truncation_dominates_base():
    tn = truncate(ONE_WELL, detect_wells(ONE_WELL), 1)
    s = np.linspace(0, 10, 10_000)
    assert np.all(tn.value(s) >= ONE_WELL.value(s))


def test_negative_slope_at_endpoint():
    with pytest.raises(NegativeSlopeAtEndpoint):
        truncate(ONE_WELL, WellDecomposition(((0.0, 0.5),)), 1)


def test_bad_well_index():
    with pytest.raises(ValueError):
        truncate(ONE_WELL, detect_wells(ONE_WELL), 2)


def test_untruncated_is_identity():
    s = np.linspace(0, 5, 51)
    assert np.array_equal(untruncated(ONE_WELL, 1).value(s), ONE_WELL.value(s))


def test_translate():
    w = detect_wells(TWO_WELL)
    tn = truncate(TWO_WELL, w, 2)
    s = np.random.default_rng(3).uniform(0, 6, 1000)
    assert np.array_equal(translate(tn, 0.0).value(s), tn.value(s))
    shifted = translate(tn, w.eta(1))
    assert shifted.value(np.array([1.0]))[0] == tn.value(np.array([3.0]))[0]
    tail = np.linspace(w.eta(2) - w.eta(1), 10, 2000)
    assert np.all(shifted.value(tail) >= -1e-10)
    with pytest.raises(ValueError):
        translate(tn, -1.0)


# -- maximum principle ----------------------------------------------------------


def test_bound_quartic():
    sb = max_principle_bound(lambda s: 4 * s**3 - 2 * s, 0.0, 10.0, 1e-12)
    assert sb == pytest.approx(1 / np.sqrt(2), abs=1e-10)


def test_bound_nonnegative_derivative():
    assert max_principle_bound(lambda s: s, 0.0, 10.0) == 0.0


def test_bound_scaling_invariance():
    ref = max_principle_bound(TWO_WELL.deriv, 0.0, 10.0, 0.0)
    assert max_principle_bound(lambda s: 0.7 * TWO_WELL.deriv(s), 0.0, 10.0, 0.0) == ref


def test_no_bound():
    with pytest.raises(NoBound):
        max_principle_bound(lambda s: -s, 0.0, 5.0)


@settings(max_examples=30, deadline=None)
@given(st.floats(1e-12, 1e-2), st.floats(1.0, 100.0))
def test_bound_monotone_in_tol(tol, factor):
    g = lambda s: 4 * s**3 - 2 * s
    assert max_principle_bound(g, 0.0, 10.0, tol * factor) <= max_principle_bound(g, 0.0, 10.0, tol)


# -- growth checks ----------------------------------------------------------


def test_growth_quartic_zero_margin():
    rep = verify_growth(power_well(1.0, 4.0), 3, growth=Growth(p=4.0, q=4.0, c1=12.0, c2=0.0))
    assert rep.h3_violations == []
    assert rep.h3_margin == pytest.approx(0.0, abs=1e-6)


def test_coercivity_violation_reported():
    rep = verify_growth(power_well(1.0, 4.0), 3, coercivity=Coercivity(c3=1.0, c4=1.0, gamma_exp=3.0))
    assert rep.h4_violations and rep.advisory and not rep.ok


def test_truncated_term_has_bounded_second_derivative():
    tn = truncate(ONE_WELL, detect_wells(ONE_WELL), 1)
    c = float(np.max(np.abs(tn.deriv2(np.linspace(0, 10, 20_001)))))
    rep = verify_growth(tn, 3, growth=Growth(p=2.01, q=5.99, c1=2 * c, c2=2 * c))
    assert rep.ok


def test_growth_needs_constants():
    with pytest.raises(ValueError):
        verify_growth(ONE_WELL, 3)
