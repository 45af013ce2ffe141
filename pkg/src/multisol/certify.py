"""Independent checks of solver output and a radial shooting oracle."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np
from scipy.integrate import solve_ivp
from scipy.interpolate import CubicSpline
from scipy.special import ive, kve

from . import functionals as fn
from .errors import NoBound, NoSignChange, NotConverged
from .functionals import Kind, ProblemSpec
from .kgm_coupling import solve_phi
from .nonlinearity import WellDecomposition, max_principle_bound
from .radial_grid import RadialProfile

SCHEMA = "multisol.certificates/1"


@dataclass(frozen=True)
class Thresholds:
    el: float = 1e-6
    pohozaev: float = 1e-2
    constraint: float = 1e-8
    max_principle: float = 1e-6


@dataclass
class SolutionCertificate:
    well_index: int
    el_residual_rel: float
    pohozaev_rel: float
    linf: float
    localization_ok: bool
    multiplier: float
    multiplier_sign_ok: bool
    max_principle_ok: bool
    hylomorphy_ok: Optional[bool]
    constraint_err: float
    s_bar: Optional[float] = None
    interval: tuple = (0.0, float("inf"))
    kind: str = ""
    el_ok: bool = False
    pohozaev_ok: bool = False
    constraint_ok: bool = False
    phi_bounds_ok: Optional[bool] = None
    hylomorphy_value: Optional[float] = None

    @property
    def passed(self) -> bool:
        flags = [self.localization_ok, self.multiplier_sign_ok, self.max_principle_ok, self.el_ok,
                 self.pohozaev_ok, self.constraint_ok]
        if self.hylomorphy_ok is not None:
            flags.append(self.hylomorphy_ok)
        return all(flags)

    def as_record(self) -> dict:
        d = asdict(self)
        d["interval"] = [_json_float(x) for x in self.interval]
        d["passed"] = self.passed
        return d

    def summary(self) -> str:
        lo, hi = self.interval
        return (f"well {self.well_index}: |u|_inf={self.linf:.6g} in ({lo:g}, {hi:g}) "
                f"multiplier={self.multiplier:.6g} el={self.el_residual_rel:.2e} "
                f"pohozaev={self.pohozaev_rel:.2e} {'PASS' if self.passed else 'FAIL'}")


def _json_float(x):
    return None if x is None or not np.isfinite(x) else float(x)


def write_report(path, certificates, extra: Optional[dict] = None) -> None:
    rec = {"schema": SCHEMA, "certificates": [c.as_record() for c in certificates]}
    if extra:
        rec.update(extra)
    with open(path, "w") as fh:
        json.dump(rec, fh, indent=2, default=_json_float)


# ---------------------------------------------------------------------------
# residuals


def _terms(spec: ProblemSpec, v, multiplier, nl_override, phi):
    """The separate terms of the strong equation; their sum is the residual."""
    R = spec.nl if nl_override is None else nl_override
    lap = -spec.grid.laplacian(v)
    w2 = spec.omega**2
    if spec.kind is Kind.ELLIPTIC:
        return [lap, (1.0 - multiplier) * R.deriv(v)]
    if spec.kind is Kind.NLS:
        return [lap, R.deriv(v), -multiplier * v]
    if spec.kind is Kind.KG:
        return [lap, R.deriv(v) + w2 * v, -multiplier**2 * v]
    p = phi if phi is not None else solve_phi(RadialProfile(spec.grid, v), spec.e_charge).phi.values
    return [lap, R.deriv(v) + w2 * v, -multiplier**2 * (1.0 - spec.e_charge * p) ** 2 * v]


def el_residual(spec: ProblemSpec, u, multiplier: float, nl_override=None, phi=None) -> float:
    """Relative L^2 residual of the strong equation on the free nodes.

    ``multiplier`` is lambda (elliptic) or omega (NLS, KG, KGM).
    """
    v = u.values if isinstance(u, RadialProfile) else np.asarray(u, dtype=float)
    terms = _terms(spec, v, multiplier, nl_override, phi)
    g = spec.grid
    mask = np.ones_like(v)
    mask[-1] = 0.0
    scale = max(g.norm(t * mask) for t in terms)
    if scale == 0.0:
        return 0.0
    return g.norm(sum(terms) * mask) / scale


# ---------------------------------------------------------------------------
# shooting oracle


def _shoot_rhs(N, gprime, extra):
    def rhs(r, y):
        u, du = y
        f = gprime(u)
        if extra is not None:
            f = f + extra(r) * u
        return [du, f - (N - 1) / r * du]

    return rhs


def _decay_shape(N, kappa, r, r_end):
    """Decaying solution of the linearised equation vanishing at r_end."""
    nu = (N - 2) / 2.0
    if kappa == 0.0:
        return r ** (2 - N) - r_end ** (2 - N)
    x, X = kappa * r, kappa * r_end
    ratio = ive(nu, x) * kve(nu, X) / ive(nu, X) * np.exp(x - 2 * X)
    return r ** (-nu) * (kve(nu, x) * np.exp(-x) - ratio)


def shooting_oracle(spec: ProblemSpec, multiplier: float, alpha_bracket, nl_override=None,
                    phi: Optional[RadialProfile] = None, rtol: float = 1e-12, atol: float = 1e-14,
                    split_tol: float = 1e-9, max_bisect: int = 200) -> RadialProfile:
    """Separatrix of ``u'' + (N-1)/r u' = G'(u)`` with ``u(0) = alpha``, ``u'(0) = 0``.

    Amplitudes that make ``u`` cross zero before ``r_max`` (or stay on a plateau)
    count as overshoot; amplitudes for which ``u`` turns upward while positive,
    or ends positive, count as undershoot.  The bracket is bisected to machine
    precision; the decaying tail beyond the point where the two bracketing
    trajectories separate is continued with the linearised Dirichlet solution.
    KGM uses the supplied (or solved) potential ``phi`` frozen.
    """
    grid = spec.grid
    N = grid.dim
    r_end = grid.r_max
    _, gprime, g2 = fn.effective_potential(spec, multiplier, nl_override)
    extra = None
    if spec.kind is Kind.KGM:
        if phi is None:
            raise ValueError("the KGM oracle needs a frozen potential profile")
        cs = CubicSpline(grid.nodes, phi.values)
        e, w2 = spec.e_charge, multiplier**2
        extra = lambda r: -w2 * (1.0 - e * cs(r)) ** 2
    rhs = _shoot_rhs(N, gprime, extra)
    kappa2 = float(g2(np.array([0.0]))[0]) + (extra(r_end) if extra is not None else 0.0)
    kappa = np.sqrt(max(kappa2, 0.0))
    r0 = 1e-6 * r_end

    def ev_cross(r, y):
        return y[0]

    ev_cross.terminal, ev_cross.direction = True, -1

    def ev_turn(r, y):
        return y[1]

    ev_turn.terminal, ev_turn.direction = True, 1

    def run(alpha, dense=False):
        a0 = float(gprime(np.array([alpha]))[0]) + (extra(0.0) * alpha if extra is not None else 0.0)
        y0 = [alpha + a0 * r0**2 / (2 * N), a0 * r0 / N]
        sol = solve_ivp(rhs, (r0, r_end), y0, method="DOP853", rtol=rtol, atol=atol,
                        events=[ev_cross, ev_turn], dense_output=dense)
        if sol.t_events[0].size:
            kind = 1
        elif sol.t_events[1].size or a0 > 0:
            kind = -1
        else:
            kind = 1 if sol.y[0, -1] > 0.5 * alpha else -1
        return kind, sol

    lo, hi = map(float, alpha_bracket)
    k_lo, _ = run(lo)
    k_hi, _ = run(hi)
    if k_lo == k_hi:
        raise NoSignChange(f"shooting map has the same sign at {lo:g} and {hi:g}")
    for _ in range(max_bisect):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        k_mid, _ = run(mid)
        if k_mid == k_lo:
            lo = mid
        else:
            hi = mid
    _, s_lo = run(lo, dense=True)
    _, s_hi = run(hi, dense=True)
    r = grid.nodes
    t_stop = min(s_lo.t[-1], s_hi.t[-1])
    rr = np.linspace(r0, t_stop, 20001)
    ua, ub = s_lo.sol(rr)[0], s_hi.sol(rr)[0]
    alpha = 0.5 * (lo + hi)
    sep = np.flatnonzero(np.abs(ua - ub) > split_tol * alpha)
    r_split = rr[sep[0] - 1] if sep.size and sep[0] > 0 else t_stop
    # keep the split where the profile is still decreasing and positive
    r_split = min(r_split, t_stop)
    out = np.zeros_like(r)
    inner = r <= r_split
    rin = np.maximum(r[inner], r0)
    out[inner] = 0.5 * (s_lo.sol(rin)[0] + s_hi.sol(rin)[0])
    out[r <= r0] = alpha
    u_s = 0.5 * (s_lo.sol(r_split)[0] + s_hi.sol(r_split)[0])
    outer = (~inner) & (r < r_end)
    if outer.any():
        out[outer] = u_s * _decay_shape(N, kappa, r[outer], r_end) / _decay_shape(N, kappa, r_split, r_end)
    out[-1] = 0.0
    return RadialProfile(grid, out)


# ---------------------------------------------------------------------------
# certificates


def _gprime_truncated(spec: ProblemSpec, multiplier, term):
    if spec.kind is Kind.KGM:
        # 0 <= Phi <= 1/e bounds the coupling term, so the KG form is the worst case
        q = spec.omega**2 - multiplier**2
        return lambda s: term.deriv(s) + q * s
    _, gp, _ = fn.effective_potential(spec, multiplier, term)
    return gp


def certify(spec: ProblemSpec, result, wells: WellDecomposition, thresholds: Thresholds = Thresholds(),
            bound_tol: float = 1e-10) -> SolutionCertificate:
    """Fill every certificate field for a converged well solve."""
    from .minimizer import Status

    if result.status is not Status.CONVERGED:
        raise NotConverged(f"well {result.well_index} finished with status {result.status.value}")
    j = result.well_index
    u = result.profile
    v = u.values
    term = result.term
    lam = result.multiplier
    xi, eta = wells.wells[j - 1]
    phi = None
    phi_ok = None
    if spec.kind is Kind.KGM:
        phi = solve_phi(u, spec.e_charge).phi.values
        phi_ok = bool(np.all(phi >= 0.0) and np.all(phi <= 1.0 / spec.e_charge))
    el = el_residual(spec, u, lam, term, phi)
    poh = fn.pohozaev_residual(spec, u, lam, term, None if phi is None else _phi_wrap(spec, u, phi))
    linf = u.linf
    loc = bool(xi < linf < eta)
    W = spec.omega
    if spec.kind is Kind.ELLIPTIC:
        sign_ok = lam < 1.0
    elif spec.kind is Kind.NLS:
        sign_ok = lam < 0.0
    else:
        sign_ok = 0.0 < lam < W
        if phi_ok is not None:
            sign_ok = bool(sign_ok and phi_ok)
    gp = _gprime_truncated(spec, lam, term)
    s_top = (eta + term.blend_window + 1.0) if np.isfinite(eta) else max(2.0 * linf, 10.0)
    try:
        s_bar = max_principle_bound(gp, 0.0, s_top, bound_tol)
        mp_ok = bool(linf <= s_bar + thresholds.max_principle)
    except NoBound:
        s_bar, mp_ok = None, False
    hyl = hyl_val = None
    if spec.kind is Kind.KG:
        hyl_val = fn.eval_H(spec, u, term)
        hyl = bool(hyl_val < W * spec.constraint_value)
    elif spec.kind is Kind.KGM:
        q = 0.5 * spec.grid.integrate((1.0 - spec.e_charge * phi) * v * v)
        hyl_val = fn.eval_H(spec, u, term) / q
        hyl = bool(hyl_val < W**2)
    if spec.has_constraint:
        g = fn.constraint_g(spec, u, term, None if phi is None else _phi_wrap(spec, u, phi))
        cerr = abs(g - spec.target) / (1.0 + abs(spec.target))
    else:
        cerr = 0.0
    return SolutionCertificate(
        well_index=j, el_residual_rel=float(el), pohozaev_rel=float(poh), linf=linf, localization_ok=loc,
        multiplier=float(lam), multiplier_sign_ok=bool(sign_ok), max_principle_ok=mp_ok, hylomorphy_ok=hyl,
        constraint_err=float(cerr), s_bar=s_bar, interval=(float(xi), float(eta)), kind=spec.kind.value,
        el_ok=bool(el <= thresholds.el), pohozaev_ok=bool(poh <= thresholds.pohozaev),
        constraint_ok=bool(cerr <= thresholds.constraint), phi_bounds_ok=phi_ok,
        hylomorphy_value=None if hyl_val is None else float(hyl_val))


def _phi_wrap(spec, u, phi_values):
    from .kgm_coupling import PhiSolution

    return PhiSolution(RadialProfile(spec.grid, phi_values), spec.e_charge, u)
