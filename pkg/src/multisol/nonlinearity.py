"""Scalar nonlinear terms, their negative wells, and the truncated variants.

A nonlinearity is an even C^2 function of the field amplitude, stored as
three vectorised callables (value, first and second derivative) plus the
metadata used by the growth checks.  All built-ins are evaluated through
``|s|`` or ``s**2`` so evenness holds to the last bit.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np
from numpy.polynomial import Polynomial
from scipy.interpolate import PPoly
from scipy.optimize import brentq

from .errors import (
    LastWellUnbounded,
    NegativeSlopeAtEndpoint,
    NoBound,
    NoWells,
    ResolutionTooCoarse,
)

log = logging.getLogger(__name__)

ScalarFn = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class Growth:
    """Constants of the bound |T''(s)| <= c1 s^(p-2) + c2 s^(q-2)."""

    p: float
    q: float
    c1: float
    c2: float


@dataclass(frozen=True)
class Coercivity:
    """Constants of the bound T(s) >= -c3 s^2 - c4 |s|^gamma_exp."""

    c3: float
    c4: float
    gamma_exp: float


@dataclass(frozen=True)
class Nonlinearity:
    value: ScalarFn
    deriv: ScalarFn
    deriv2: ScalarFn
    omega: float = 0.0
    growth: Optional[Growth] = None
    coercivity: Optional[Coercivity] = None
    label: str = "custom"
    # plain-data description used to write the term back into a problem file
    source: Optional[dict] = field(default=None, compare=False)

    def __call__(self, s):
        return self.value(s)

    def with_mass(self) -> "Nonlinearity":
        """Return F(s) = omega^2 s^2 / 2 + T(s) for this T."""
        if self.omega == 0.0:
            return self
        w2 = self.omega**2
        return Nonlinearity(
            value=_AddQuadratic(self.value, w2, 0).__call__,
            deriv=_AddQuadratic(self.deriv, w2, 1).__call__,
            deriv2=_AddQuadratic(self.deriv2, w2, 2).__call__,
            omega=self.omega,
            growth=self.growth,
            coercivity=self.coercivity,
            label=f"{self.label}+mass",
            source=self.source,
        )

    def scaled(self, factor: float) -> "Nonlinearity":
        """The term ``factor * T``; a positive factor keeps the well set."""
        return Nonlinearity(
            value=_Scaled(self.value, factor).__call__,
            deriv=_Scaled(self.deriv, factor).__call__,
            deriv2=_Scaled(self.deriv2, factor).__call__,
            omega=self.omega,
            label=f"{factor:g}*{self.label}",
            source=None if self.source is None else {**self.source, "scale": factor * self.source.get("scale", 1.0)},
        )


class _AddQuadratic:
    def __init__(self, fn, w2, order):
        self.fn, self.w2, self.order = fn, w2, order

    def __call__(self, s):
        s = np.asarray(s, dtype=float)
        extra = (0.5 * self.w2 * s * s, self.w2 * s, self.w2 * np.ones_like(s))[self.order]
        return self.fn(s) + extra


class _Scaled:
    def __init__(self, fn, factor):
        self.fn, self.factor = fn, factor

    def __call__(self, s):
        return self.factor * self.fn(s)


# ---------------------------------------------------------------------------
# built-in terms


class _EvenPoly:
    """R(s) = sum_k a_k s^(2k), evaluated in the variable x = s^2."""

    def __init__(self, coeffs):
        self.p = Polynomial(np.asarray(coeffs, dtype=float))
        self.dp = self.p.deriv()
        self.ddp = self.dp.deriv()

    def value(self, s):
        s = np.asarray(s, dtype=float)
        return self.p(s * s)

    def deriv(self, s):
        s = np.asarray(s, dtype=float)
        return 2.0 * s * self.dp(s * s)

    def deriv2(self, s):
        s = np.asarray(s, dtype=float)
        x = s * s
        return 2.0 * self.dp(x) + 4.0 * x * self.ddp(x)


class _PowerWell:
    """R(s) = -a |s|^p + b |s|^q."""

    def __init__(self, a, p, b, q):
        self.a, self.p, self.b, self.q = float(a), float(p), float(b), float(q)

    def _terms(self, s, k):
        t = np.abs(np.asarray(s, dtype=float))
        out = np.zeros_like(t)
        for coef, e in ((-self.a, self.p), (self.b, self.q)):
            if coef == 0.0:
                continue
            fac = 1.0
            for i in range(k):
                fac *= e - i
            with np.errstate(divide="ignore", invalid="ignore"):
                term = coef * fac * np.power(t, e - k)
            out = out + np.where(t > 0, term, 0.0 if e > k else coef * fac)
        return out

    def value(self, s):
        return self._terms(s, 0)

    def deriv(self, s):
        s = np.asarray(s, dtype=float)
        return np.sign(s) * self._terms(s, 1)

    def deriv2(self, s):
        return self._terms(s, 2)


class _Table:
    """Piecewise polynomial in |s| given per interval in local coordinates."""

    def __init__(self, breaks, coeffs):
        c = np.asarray(coeffs, dtype=float).T  # PPoly wants (degree+1, pieces), highest first
        self.pp = PPoly(c[::-1], np.asarray(breaks, dtype=float), extrapolate=True)
        self.dpp = self.pp.derivative()
        self.ddpp = self.dpp.derivative()

    def value(self, s):
        return self.pp(np.abs(np.asarray(s, dtype=float)))

    def deriv(self, s):
        s = np.asarray(s, dtype=float)
        return np.sign(s) * self.dpp(np.abs(s))

    def deriv2(self, s):
        return self.ddpp(np.abs(np.asarray(s, dtype=float)))


class _Symmetrized:
    def __init__(self, f, df, d2f):
        self.f, self.df, self.d2f = f, df, d2f

    def value(self, s):
        return self.f(np.abs(np.asarray(s, dtype=float)))

    def deriv(self, s):
        s = np.asarray(s, dtype=float)
        return np.sign(s) * self.df(np.abs(s))

    def deriv2(self, s):
        return self.d2f(np.abs(np.asarray(s, dtype=float)))


def _wrap(impl, label, source, omega=0.0, growth=None, coercivity=None, scale=1.0):
    nl = Nonlinearity(impl.value, impl.deriv, impl.deriv2, omega=omega, growth=growth,
                      coercivity=coercivity, label=label, source=source)
    return nl if scale == 1.0 else _rescale_keep_meta(nl, scale)


def _rescale_keep_meta(nl, scale):
    out = nl.scaled(scale)
    return Nonlinearity(out.value, out.deriv, out.deriv2, omega=nl.omega, growth=nl.growth,
                        coercivity=nl.coercivity, label=nl.label, source=nl.source)


def poly_s2(coeffs: Sequence[float], *, omega=0.0, growth=None, coercivity=None, scale=1.0) -> Nonlinearity:
    """Even polynomial ``sum_k coeffs[k] * s**(2k)``."""
    coeffs = [float(c) for c in coeffs]
    src = {"type": "poly_s2", "coeffs": coeffs, "scale": scale}
    return _wrap(_EvenPoly(coeffs), "poly_s2", src, omega, growth, coercivity, scale)


def factored(roots: Sequence[float], *, power: int = 2, scale: float = 1.0, omega=0.0,
             growth=None, coercivity=None) -> Nonlinearity:
    """``scale * s**(2*power) * prod_k (s**2 - roots[k]**2)``."""
    p = Polynomial([0.0] * power + [1.0])
    for rho in roots:
        p = p * Polynomial([-float(rho) ** 2, 1.0])
    src = {"type": "factored", "roots": [float(r) for r in roots], "power": int(power), "scale": scale}
    return _wrap(_EvenPoly(p.coef), "factored", src, omega, growth, coercivity, scale)


def power_well(a: float, p: float, b: float = 0.0, q: float = 6.0, *, omega=0.0, growth=None,
               coercivity=None, scale=1.0) -> Nonlinearity:
    """``-a |s|**p + b |s|**q`` (needs p, q >= 2 for C^2 regularity at 0)."""
    src = {"type": "power_well", "a": float(a), "p": float(p), "b": float(b), "q": float(q), "scale": scale}
    return _wrap(_PowerWell(a, p, b, q), "power_well", src, omega, growth, coercivity, scale)


def piecewise(breaks: Sequence[float], coeffs: Sequence[Sequence[float]], *, omega=0.0,
              growth=None, coercivity=None, scale=1.0) -> Nonlinearity:
    """Piecewise polynomial in |s|.

    ``coeffs[k]`` lists the coefficients (lowest order first) of the piece on
    ``[breaks[k], breaks[k+1])`` in the local variable ``|s| - breaks[k]``; the
    last piece is extended beyond the final break.
    """
    breaks = [float(b) for b in breaks]
    width = max(len(c) for c in coeffs)
    table = [list(map(float, c)) + [0.0] * (width - len(c)) for c in coeffs]
    if len(table) != len(breaks) - 1:
        raise ValueError("piecewise table needs len(breaks) - 1 coefficient rows")
    src = {"type": "piecewise", "breaks": breaks, "coeffs": table, "scale": scale}
    return _wrap(_Table(breaks, table), "piecewise", src, omega, growth, coercivity, scale)


def from_callables(f, df, d2f, *, omega=0.0, growth=None, coercivity=None, label="custom") -> Nonlinearity:
    """Wrap user functions defined for s >= 0; the result is their even extension."""
    return _wrap(_Symmetrized(f, df, d2f), label, None, omega, growth, coercivity)


BUILDERS = {"poly_s2": poly_s2, "factored": factored, "power_well": power_well, "piecewise": piecewise}


def from_source(src: dict, *, omega=0.0, growth=None, coercivity=None) -> Nonlinearity:
    """Rebuild a built-in term from its plain-data description."""
    kind = src.get("type")
    if kind not in BUILDERS:
        raise ValueError(f"unknown nonlinearity type {kind!r}")
    args = {k: v for k, v in src.items() if k != "type"}
    return BUILDERS[kind](**args, omega=omega, growth=growth, coercivity=coercivity)


# ---------------------------------------------------------------------------
# wells


@dataclass(frozen=True)
class WellDecomposition:
    wells: tuple  # ((xi_1, eta_1), ..., (xi_l, eta_l)); only the last eta may be inf

    @property
    def ell(self) -> int:
        return len(self.wells)

    @property
    def unbounded(self) -> bool:
        return bool(self.wells) and np.isinf(self.wells[-1][1])

    def xi(self, j: int) -> float:
        return self.wells[j - 1][0]

    def eta(self, j: int) -> float:
        return self.wells[j - 1][1]

    def eta_prev(self, j: int) -> float:
        return 0.0 if j == 1 else self.wells[j - 2][1]

    def midpoint(self, j: int, s_cap: Optional[float] = None) -> float:
        xi, eta = self.wells[j - 1]
        if np.isinf(eta):
            eta = s_cap if s_cap is not None else xi + 2.0
        return 0.5 * (xi + eta)


def detect_wells(nl: Nonlinearity, s_max: float = 10.0, scan_points: int = 4096,
                 root_tol: float = 1e-12) -> WellDecomposition:
    """Locate the maximal open intervals of (0, s_max) on which nl < 0."""
    if s_max <= 0:
        raise ValueError("s_max must be positive")
    if scan_points < 64:
        raise ValueError("scan_points must be at least 64")
    s = np.linspace(0.0, s_max, scan_points + 1)[1:]
    neg = np.asarray(nl.value(s)) < 0.0
    if not neg.any():
        raise NoWells(f"R >= 0 on (0, {s_max:g}]")

    f = lambda x: float(nl.value(np.array([x]))[0])
    xtol = max(root_tol, 4 * np.finfo(float).eps)

    def refine(a, b):
        # a and b straddle a sign change of R
        return brentq(f, a, b, xtol=xtol, rtol=4 * np.finfo(float).eps, maxiter=500)

    idx = np.flatnonzero(np.diff(np.concatenate(([0], neg.view(np.int8), [0]))))
    starts, stops = idx[0::2], idx[1::2]  # runs neg[starts[k]:stops[k]]
    wells = []
    for k, (a, b) in enumerate(zip(starts, stops)):
        if a == 0:
            xi = 0.0
        else:
            xi = refine(s[a - 1], s[a])
        if b == len(s):
            eta = np.inf
        else:
            eta = refine(s[b - 1], s[b])
        wells.append((float(xi), float(eta)))

    flat = [x for w in wells for x in w]
    for left, right in zip(flat[:-1], flat[1:]):
        if not right - left > root_tol:
            raise ResolutionTooCoarse(f"well endpoints {left:.6g} and {right:.6g} collide")
    return WellDecomposition(tuple(wells))


# ---------------------------------------------------------------------------
# truncation


_H0 = Polynomial([1.0, 0.0, 0.0, -10.0, 15.0, -6.0])  # quintic Hermite: 1 -> 0, flat ends
_H1 = Polynomial([0.0, 1.0, 0.0, -6.0, 8.0, -3.0])  # unit slope at 0, flat at 1


@dataclass(frozen=True)
class TruncatedNonlinearity:
    """R below eta_j, a nondecreasing C^2 blend above, optionally shifted.

    Instances expose ``value``/``deriv``/``deriv2`` like :class:`Nonlinearity`
    so either can be handed to the functionals.
    """

    base: Nonlinearity
    well_index: int
    blend_window: float
    shift: float = 0.0
    eta: float = np.inf
    slope: float = 0.0
    curvature: float = 0.0
    base_at_eta: float = 0.0

    @property
    def omega(self):
        return self.base.omega

    def _blend_poly(self):
        w = self.blend_window
        p = self.slope * _H0 + self.curvature * w * _H1  # f'(eta + w t)
        return p, p.integ() * w, p.deriv() / w

    def _eval(self, s, order):
        s = np.asarray(s, dtype=float)
        t_abs = np.abs(s) + self.shift
        sign = np.sign(s) if order == 1 else 1.0
        fn = (self.base.value, self.base.deriv, self.base.deriv2)[order]
        inside = fn(t_abs)
        if np.isinf(self.eta):
            return inside * sign if order == 1 else inside
        fp, f, fpp = self._blend_poly()
        t = np.clip((t_abs - self.eta) / self.blend_window, 0.0, 1.0)
        blend = (self.base_at_eta + f(t), fp(t), fpp(t))[order]
        if order == 2:
            blend = np.where(t_abs >= self.eta + self.blend_window, 0.0, blend)
        out = np.where(t_abs <= self.eta, inside, blend)
        return out * sign if order == 1 else out

    def value(self, s):
        return self._eval(s, 0)

    def deriv(self, s):
        return self._eval(s, 1)

    def deriv2(self, s):
        return self._eval(s, 2)

    def __call__(self, s):
        return self.value(s)


def truncate(nl: Nonlinearity, wells: WellDecomposition, j: int,
             blend_window: Optional[float] = None, root_tol: float = 1e-9) -> TruncatedNonlinearity:
    """Modify R above the right end of well j so that it is nondecreasing there."""
    if not 1 <= j <= wells.ell:
        raise ValueError(f"well index {j} outside 1..{wells.ell}")
    xi, eta = wells.wells[j - 1]
    if np.isinf(eta):
        raise LastWellUnbounded("the last well is unbounded and is used untruncated")
    if blend_window is None:
        blend_window = 0.25 * (eta - xi)
    e = np.array([eta])
    slope = float(nl.deriv(e)[0])
    if slope < -root_tol:
        raise NegativeSlopeAtEndpoint(f"R'({eta:.6g}) = {slope:.3g} < 0; the well is mis-detected")
    slope = max(slope, 0.0)
    curv = float(nl.deriv2(e)[0])
    window = float(blend_window)
    # the blended derivative must stay >= 0; shrink the window when a strongly
    # concave endpoint would pull it below zero
    t = np.linspace(0.0, 1.0, 2049)
    for _ in range(60):
        if np.all(slope * _H0(t) + curv * window * _H1(t) >= -1e-14 * max(slope, 1.0)):
            break
        window *= 0.5
    if window != blend_window:
        log.warning("blend window for well %d reduced from %g to %g", j, blend_window, window)
    return TruncatedNonlinearity(base=nl, well_index=j, blend_window=window, eta=eta,
                                 slope=slope, curvature=curv, base_at_eta=float(nl.value(e)[0]))


def untruncated(nl: Nonlinearity, j: int) -> TruncatedNonlinearity:
    """The identity modification used for an unbounded last well."""
    return TruncatedNonlinearity(base=nl, well_index=j, blend_window=1.0)


def translate(tn: TruncatedNonlinearity, eta_prev: float) -> TruncatedNonlinearity:
    """Return s -> R~_j(s + eta_prev) for s >= 0 (even extension for s < 0)."""
    if eta_prev < 0:
        raise ValueError("eta_prev must be nonnegative")
    return replace(tn, shift=tn.shift + float(eta_prev))


# ---------------------------------------------------------------------------
# maximum principle and growth checks


def max_principle_bound(g_deriv: ScalarFn, s_lo: float, s_max: float, tol: float = 1e-12,
                        scan_points: int = 4096) -> float:
    """Smallest s_bar in [s_lo, s_max] with g_deriv >= -tol on [s_bar, s_max]."""
    s = np.linspace(s_lo, s_max, scan_points + 1)
    bad = np.asarray(g_deriv(s)) < -tol
    if not bad.any():
        return float(s_lo)
    k = int(np.flatnonzero(bad)[-1])
    if k == len(s) - 1:
        raise NoBound(f"G' < -tol at s_max = {s_max:g}")
    a, b = s[k], s[k + 1]
    pred = lambda x: float(np.asarray(g_deriv(np.array([x])))[0]) < -tol
    for _ in range(200):
        m = 0.5 * (a + b)
        if m <= a or m >= b:
            break
        if pred(m):
            a = m
        else:
            b = m
    return float(b)


@dataclass
class GrowthReport:
    h3_margin: Optional[float] = None
    h3_violations: list = field(default_factory=list)
    h4_margin: Optional[float] = None
    h4_violations: list = field(default_factory=list)
    exponent_issues: list = field(default_factory=list)
    advisory: bool = True

    @property
    def ok(self) -> bool:
        return not (self.h3_violations or self.h4_violations or self.exponent_issues)


def verify_growth(nl, dim: int, samples: int = 2000, s_min: float = 1e-3, s_max: float = 1e4,
                  growth: Optional[Growth] = None, coercivity: Optional[Coercivity] = None) -> GrowthReport:
    """Sample the (H3) and (H4) inequalities on a log-spaced grid.

    The result is advisory: solves always run on truncated terms, which
    satisfy both bounds regardless of the raw term.
    """
    growth = growth or getattr(nl, "growth", None)
    coercivity = coercivity or getattr(nl, "coercivity", None)
    if growth is None and coercivity is None:
        raise ValueError("no growth or coercivity constants supplied")
    s = np.geomspace(s_min, s_max, samples)
    rep = GrowthReport()
    crit = 2.0 * dim / (dim - 2.0)
    if growth is not None:
        for name, e in (("p", growth.p), ("q", growth.q)):
            if not 2.0 < e < crit:
                rep.exponent_issues.append(f"{name}={e:g} outside (2, {crit:g})")
        bound = growth.c1 * s ** (growth.p - 2) + growth.c2 * s ** (growth.q - 2)
        margin = bound - np.abs(nl.deriv2(s))
        rep.h3_margin = float(margin.min())
        rep.h3_violations = s[margin < 0].tolist()
    if coercivity is not None:
        lim = 2.0 + 4.0 / dim
        if not 2.0 <= coercivity.gamma_exp < lim:
            rep.exponent_issues.append(f"gamma={coercivity.gamma_exp:g} outside [2, {lim:g})")
        lower = -coercivity.c3 * s**2 - coercivity.c4 * s**coercivity.gamma_exp
        margin = nl.value(s) - lower
        rep.h4_margin = float(margin.min())
        rep.h4_violations = s[margin < 0].tolist()
    return rep
