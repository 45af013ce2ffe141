"""Energies, constraints, gradients and identities for the four problem kinds.

Every gradient is the discrete L^2 Riesz representative: for a direction ``v``
with ``v_M = 0`` the directional derivative equals ``sum_i w_i grad_i v_i``.
The Dirichlet node always carries a zero gradient.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from enum import Enum
from typing import Optional

import numpy as np

from .errors import DegenerateConstraintGradient, ZeroProfile
from .kgm_coupling import PhiSolution, solve_phi
from .radial_grid import RadialGrid, RadialProfile


class Kind(str, Enum):
    ELLIPTIC = "elliptic"
    NLS = "nls"
    KG = "kg"
    KGM = "kgm"


@dataclass(frozen=True, eq=False)
class ProblemSpec:
    """A problem instance.

    ``nl`` is F for the elliptic kind and T (with ``nl.omega`` = Omega) for the
    others.  ``constraint_value`` is c (elliptic, NLS, KGM) or sigma (KG).
    """

    kind: Kind
    nl: object
    constraint_value: float
    grid: RadialGrid
    e_charge: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "kind", Kind(self.kind))
        c = self.constraint_value
        if self.kind is Kind.ELLIPTIC and not c < 0:
            raise ValueError("the elliptic constraint value must be negative")
        if self.kind in (Kind.NLS, Kind.KG, Kind.KGM) and not c > 0:
            raise ValueError(f"the {self.kind.value} constraint value must be positive")
        if self.kind is Kind.KGM:
            if not self.e_charge > 0:
                raise ValueError("KGM needs a positive coupling e")
            if self.grid.dim != 3:
                raise ValueError("KGM is posed in three dimensions")

    @property
    def omega(self) -> float:
        return float(getattr(self.nl, "omega", 0.0))

    @property
    def has_constraint(self) -> bool:
        return self.kind is not Kind.KG

    @property
    def target(self) -> Optional[float]:
        """Value of g on the constraint manifold (None for KG)."""
        c = self.constraint_value
        return {Kind.ELLIPTIC: c, Kind.NLS: c * c, Kind.KG: None, Kind.KGM: c * c}[self.kind]

    def with_constraint(self, value: float) -> "ProblemSpec":
        return ProblemSpec(self.kind, self.nl, value, self.grid, self.e_charge)


@dataclass
class EnergyBreakdown:
    j_value: float
    k_value: float
    h_value: float
    constraint_g: Optional[float]
    multiplier_estimate: Optional[float]

    def as_record(self) -> dict:
        return asdict(self)


def _vals(u) -> np.ndarray:
    return u.values if isinstance(u, RadialProfile) else np.asarray(u, dtype=float)


def _density(spec: ProblemSpec, nl_override):
    return spec.nl if nl_override is None else nl_override


# ---------------------------------------------------------------------------
# energies


def eval_J(spec: ProblemSpec, u, nl_override=None) -> float:
    v = _vals(u)
    R = _density(spec, nl_override)
    return spec.grid.dirichlet_energy(v) + spec.grid.integrate(R.value(v))


def eval_J_restricted(spec: ProblemSpec, u, interval, nl_override=None) -> float:
    """J over the set ``{u in I}``.

    The potential counts at nodes with ``u_i`` in I; an edge's gradient energy
    counts when its midpoint value lies in I.
    """
    a, b = interval
    if not a > 0:
        raise ValueError("restriction intervals must have a > 0")
    v = _vals(u)
    g = spec.grid
    R = _density(spec, nl_override)
    node = (v > a) & (v < b)
    mid = 0.5 * (v[:-1] + v[1:])
    edge = (mid > a) & (mid < b)
    pot = R.value(v)
    return float(np.sum(g.edge_energy(v)[edge]) + np.dot(g.weights[node], pot[node]))


def _mass(spec, v) -> float:
    return spec.grid.inner(v, v)


def eval_K(spec: ProblemSpec, u) -> float:
    v = _vals(u)
    if spec.kind in (Kind.ELLIPTIC, Kind.NLS):
        return 0.0
    m = _mass(spec, v)
    w2 = spec.omega**2
    if spec.kind is Kind.KGM:
        return 0.5 * w2 * m
    if m == 0.0:
        raise ZeroProfile("K is singular at u = 0")
    return 0.5 * w2 * m + 0.5 * spec.constraint_value**2 / m


def eval_H(spec: ProblemSpec, u, nl_override=None) -> float:
    return eval_J(spec, u, nl_override) + eval_K(spec, u)


def grad_J(spec: ProblemSpec, u, nl_override=None) -> np.ndarray:
    v = _vals(u)
    R = _density(spec, nl_override)
    g = -spec.grid.laplacian(v) + R.deriv(v)
    g[-1] = 0.0
    return g


def grad_K(spec: ProblemSpec, u) -> np.ndarray:
    v = _vals(u)
    if spec.kind in (Kind.ELLIPTIC, Kind.NLS):
        return np.zeros_like(v)
    w2 = spec.omega**2
    if spec.kind is Kind.KGM:
        out = w2 * v
    else:
        m = _mass(spec, v)
        if m == 0.0:
            raise ZeroProfile("K is singular at u = 0")
        out = (w2 - spec.constraint_value**2 / m**2) * v
    out = out.copy()
    out[-1] = 0.0
    return out


def grad_H(spec: ProblemSpec, u, nl_override=None) -> np.ndarray:
    return grad_J(spec, u, nl_override) + grad_K(spec, u)


# ---------------------------------------------------------------------------
# constraints


def _phi(spec, v, phi):
    if phi is not None:
        return phi.phi.values
    return solve_phi(RadialProfile(spec.grid, v), spec.e_charge).phi.values


def constraint_g(spec: ProblemSpec, u, nl_override=None, phi: Optional[PhiSolution] = None) -> Optional[float]:
    v = _vals(u)
    g = spec.grid
    if spec.kind is Kind.ELLIPTIC:
        return g.integrate(_density(spec, nl_override).value(v))
    if spec.kind is Kind.NLS:
        return g.inner(v, v)
    if spec.kind is Kind.KGM:
        return 0.5 * g.integrate((1.0 - spec.e_charge * _phi(spec, v, phi)) * v * v)
    return None


def grad_g(spec: ProblemSpec, u, nl_override=None, phi: Optional[PhiSolution] = None) -> np.ndarray:
    v = _vals(u)
    if spec.kind is Kind.ELLIPTIC:
        out = _density(spec, nl_override).deriv(v)
    elif spec.kind is Kind.NLS:
        out = 2.0 * v
    elif spec.kind is Kind.KGM:
        out = (1.0 - spec.e_charge * _phi(spec, v, phi)) ** 2 * v
    else:
        out = np.zeros_like(v)
    out = np.array(out, dtype=float)
    out[-1] = 0.0
    return out


def multiplier_estimate(spec: ProblemSpec, u, nl_override=None, phi: Optional[PhiSolution] = None) -> float:
    """Least-squares multiplier of ``grad_H = lambda grad_g`` (KG: sigma / ||u||^2).

    The raw value is returned: lambda for the elliptic kind, omega / 2 for
    NLS and omega^2 for KGM.  :func:`physical_multiplier` converts.
    """
    v = _vals(u)
    if spec.kind is Kind.KG:
        m = _mass(spec, v)
        if m == 0.0:
            raise ZeroProfile("omega(u) is undefined at u = 0")
        return spec.constraint_value / m
    gg = grad_g(spec, v, nl_override, phi)
    den = spec.grid.inner(gg, gg)
    if not den > 0:
        raise DegenerateConstraintGradient("the constraint gradient vanishes")
    return spec.grid.inner(grad_H(spec, v, nl_override), gg) / den


def physical_multiplier(spec: ProblemSpec, raw: float) -> float:
    """lambda (elliptic), omega (NLS, KG) or signed sqrt of omega^2 (KGM)."""
    if spec.kind is Kind.NLS:
        return 2.0 * raw
    if spec.kind is Kind.KGM:
        return float(np.sign(raw) * np.sqrt(abs(raw)))
    return float(raw)


def raw_multiplier(spec: ProblemSpec, physical: float) -> float:
    if spec.kind is Kind.NLS:
        return 0.5 * physical
    if spec.kind is Kind.KGM:
        return float(np.sign(physical) * physical**2)
    return float(physical)


def stationarity_residual(spec: ProblemSpec, u, raw: float, nl_override=None,
                          phi: Optional[PhiSolution] = None) -> np.ndarray:
    """``grad_H - raw * grad_g`` (KG: ``grad_H`` itself)."""
    r = grad_H(spec, u, nl_override)
    if spec.has_constraint:
        r = r - raw * grad_g(spec, u, nl_override, phi)
    return r


def energy_breakdown(spec: ProblemSpec, u, nl_override=None) -> EnergyBreakdown:
    j = eval_J(spec, u, nl_override)
    k = eval_K(spec, u)
    try:
        lam = physical_multiplier(spec, multiplier_estimate(spec, u, nl_override))
    except (DegenerateConstraintGradient, ZeroProfile):
        lam = None
    return EnergyBreakdown(j, k, j + k, constraint_g(spec, u, nl_override), lam)


# ---------------------------------------------------------------------------
# Derrick-Pohozaev identity


def effective_potential(spec: ProblemSpec, multiplier: float, nl_override=None):
    """``G`` with ``G'`` the zeroth-order part of the strong equation (KGM: Phi-free part)."""
    R = _density(spec, nl_override)
    w2 = spec.omega**2
    if spec.kind is Kind.ELLIPTIC:
        k = 1.0 - multiplier
        return (lambda s: k * R.value(s)), (lambda s: k * R.deriv(s)), (lambda s: k * R.deriv2(s))
    if spec.kind is Kind.NLS:
        q = -multiplier
    elif spec.kind is Kind.KG:
        q = w2 - multiplier**2
    else:
        q = w2
    return ((lambda s: R.value(s) + 0.5 * q * s * s), (lambda s: R.deriv(s) + q * s),
            (lambda s: R.deriv2(s) + q))


def _boundary_flux_sq(grid: RadialGrid, v: np.ndarray) -> float:
    """``|S^{N-1}| R^N u'(R)^2`` with u'(R) taken from the discrete flux at the cut-off."""
    from .radial_grid import sphere_area

    s = sphere_area(grid.dim)
    R = grid.r_max
    flux = grid.stiffness[-1] * (v[-1] - v[-2])  # = |S| R^{N-1} u'(R)
    return flux * flux / (s * R ** (grid.dim - 2))


def pohozaev_residual(spec: ProblemSpec, u, multiplier: float, nl_override=None,
                      phi: Optional[PhiSolution] = None) -> float:
    """Relative residual of the scaling identity, normalised by ``int |grad u|^2``.

    ``multiplier`` is the physical value (lambda, or omega).  The identity is
    the one on the ball of radius r_max, so the cut-off flux term is included;
    it is negligible for profiles that have decayed.
    """
    v = _vals(u)
    g = spec.grid
    N = g.dim
    grad2 = 2.0 * g.dirichlet_energy(v)
    if grad2 == 0.0:
        return 0.0
    G, _, _ = effective_potential(spec, multiplier, nl_override)
    total = grad2 + 2.0 * N / (N - 2.0) * g.integrate(G(v))
    bnd = _boundary_flux_sq(g, v)
    if spec.kind is Kind.KGM:
        e = spec.e_charge
        p = _phi(spec, v, phi)
        w2 = multiplier**2
        total -= N / (N - 2.0) * w2 * g.integrate((1.0 - e * p) ** 2 * v * v)
        total -= w2 * 2.0 * g.dirichlet_energy(p)
        bnd -= w2 * _boundary_flux_sq(g, p)
    total += bnd / (N - 2.0)
    return float(abs(total) / grad2)
