"""Electrostatic subproblem of the Klein-Gordon-Maxwell system.

For a radial amplitude ``u`` the normalised potential solves

    -Delta Phi + e^2 u^2 Phi = e u^2,   Phi'(0) = 0,  Phi(r_max) = 0,

discretised with the same conservative stencil as the energy.  The matrix
``K + W diag(e^2 u^2)`` is a symmetric tridiagonal M-matrix; the Thomas
elimination below involves only sums and quotients of nonnegative numbers,
so ``Phi >= 0`` holds exactly in floating point.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import SingularSystem, ZeroCharge
from .radial_grid import RadialProfile


def thomas(lower: np.ndarray, diag: np.ndarray, upper: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Solve a tridiagonal system without pivoting.

    ``lower[i]`` multiplies ``x[i]`` in row ``i + 1`` and ``upper[i]`` multiplies
    ``x[i + 1]`` in row ``i``.
    """
    n = len(diag)
    lo, di, up, b = (list(map(float, a)) for a in (lower, diag, upper, rhs))
    cp = [0.0] * n
    dp = [0.0] * n
    denom = di[0]
    if denom == 0.0:
        raise SingularSystem("zero pivot in row 0")
    cp[0] = up[0] / denom if n > 1 else 0.0
    dp[0] = b[0] / denom
    for i in range(1, n):
        denom = di[i] - lo[i - 1] * cp[i - 1]
        if denom == 0.0 or not np.isfinite(denom):
            raise SingularSystem(f"zero pivot in row {i}")
        if i < n - 1:
            cp[i] = up[i] / denom
        dp[i] = (b[i] - lo[i - 1] * dp[i - 1]) / denom
    x = [0.0] * n
    x[-1] = dp[-1]
    for i in range(n - 2, -1, -1):
        x[i] = dp[i] - cp[i] * x[i + 1]
    return np.array(x)


@dataclass(eq=False)
class PhiSolution:
    phi: RadialProfile
    e_charge: float
    source: RadialProfile


def phi_matrix(u: RadialProfile, e: float):
    """Diagonal and off-diagonal of ``K + W diag(e^2 u^2)`` on the free nodes."""
    return u.grid.tridiagonal(e * e * u.values**2)


def solve_phi(u: RadialProfile, e: float) -> PhiSolution:
    """Potential of the charge density ``e u^2`` screened by ``e^2 u^2``."""
    if not e > 0:
        raise ValueError("the coupling constant e must be positive")
    if not np.all(np.isfinite(u.values)):
        raise ValueError("u must be finite")
    g = u.grid
    diag, off = phi_matrix(u, e)
    rhs = g.weights[:-1] * e * u.values[:-1] ** 2
    phi = np.zeros(g.M + 1)
    if np.any(rhs):
        phi[:-1] = thomas(off, diag, off, rhs)
    # under strong screening e * Phi approaches 1 and roundoff can overshoot by
    # a few ulps; larger excesses are left visible
    cap = 1.0 / e
    over = phi > cap
    if np.any(over) and np.max(phi[over] - cap) <= 64 * np.finfo(float).eps * cap:
        phi[over] = cap
    return PhiSolution(RadialProfile(g, phi), float(e), u)


def kgm_charge(u: RadialProfile, e: float, phi: PhiSolution | None = None) -> float:
    """``1/2 int (1 - e Phi_u) u^2``."""
    if phi is None:
        phi = solve_phi(u, e)
    return 0.5 * u.grid.integrate((1.0 - e * phi.phi.values) * u.values**2)


def kgm_energy(u: RadialProfile, nl) -> float:
    """``J(u) + K(u)`` with ``K = Omega^2 ||u||^2 / 2``."""
    g = u.grid
    j = g.dirichlet_energy(u.values) + g.integrate(nl.value(u.values))
    return j + 0.5 * nl.omega**2 * g.inner(u.values, u.values)


def hylomorphy_ratio(u: RadialProfile, e: float, nl) -> float:
    """``(J(u) + K(u)) / charge(u)``; values below Omega^2 satisfy the hylomorphy inequality."""
    q = kgm_charge(u, e)
    if not q > 0:
        raise ZeroCharge("charge vanishes; the ratio is undefined")
    return kgm_energy(u, nl) / q
