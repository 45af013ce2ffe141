"""Radial discretisation of functions on R^N.

A radial function is stored by its nodal values on ``0 = r_0 < ... < r_M``
with piecewise-linear interpolation in between.  Integrals use the exact
integrals of the hat functions against the full measure ``|S^{N-1}| r^{N-1} dr``,
so linear functions of ``r`` are integrated exactly on any node set and the
origin weight is finite.  The Dirichlet form uses the edge coefficients

    a_i = 2N * (w_0 + ... + w_i) / (r_{i+1}^2 - r_i^2),

which makes the conservative Laplacian exact on ``r^2`` at every node and
reduces to ``2N (u_1 - u_0) / r_1^2`` at the origin.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Optional

import numpy as np
from scipy.special import gamma

from .errors import BadDimension, PlateauTooLarge


def sphere_area(dim: int) -> float:
    """Surface area of the unit sphere in R^dim."""
    return 2.0 * np.pi ** (dim / 2.0) / gamma(dim / 2.0)


def ball_volume(dim: int, radius: float) -> float:
    return sphere_area(dim) * radius**dim / dim


@dataclass(frozen=True, eq=False)
class RadialGrid:
    dim: int
    nodes: np.ndarray
    weights: np.ndarray
    stiffness: np.ndarray  # a_i on edge (r_i, r_{i+1}), length M
    stretch: float = 1.0

    @property
    def M(self) -> int:
        return len(self.nodes) - 1

    @property
    def r_max(self) -> float:
        return float(self.nodes[-1])

    def integrate(self, f: np.ndarray) -> float:
        return float(np.dot(self.weights, f))

    def inner(self, u: np.ndarray, v: np.ndarray) -> float:
        return float(np.dot(self.weights, u * v))

    def norm(self, u: np.ndarray) -> float:
        return float(np.sqrt(self.inner(u, u)))

    def dirichlet_energy(self, u: np.ndarray) -> float:
        """Discrete ``1/2 int |u'|^2`` with the Dirichlet end value u_M = 0."""
        du = np.diff(u)
        return 0.5 * float(np.dot(self.stiffness, du * du))

    def edge_energy(self, u: np.ndarray) -> np.ndarray:
        """Per-edge contributions to :meth:`dirichlet_energy`."""
        du = np.diff(u)
        return 0.5 * self.stiffness * du * du

    def apply_stiffness(self, u: np.ndarray) -> np.ndarray:
        """(K u)_i, the gradient of the Dirichlet energy in the Euclidean inner product."""
        flux = self.stiffness * np.diff(u)
        out = np.zeros_like(u, dtype=float)
        out[:-1] -= flux
        out[1:] += flux
        return out

    def laplacian(self, u: np.ndarray) -> np.ndarray:
        """Conservative radial Laplacian; the Dirichlet node returns 0."""
        out = -self.apply_stiffness(u) / self.weights
        out[-1] = 0.0
        return out

    def tridiagonal(self, shift: Optional[np.ndarray] = None):
        """Diagonal and off-diagonal of ``K + diag(w * shift)`` on the free nodes 0..M-1."""
        a = self.stiffness
        diag = np.zeros(self.M)
        diag[:] += a
        diag[1:] += a[:-1]
        if shift is not None:
            diag = diag + self.weights[:-1] * np.broadcast_to(shift, (self.M + 1,))[:-1]
        off = -a[:-1].copy()
        return diag, off


def _hat_weights(dim: int, nodes: np.ndarray) -> np.ndarray:
    x, gw = np.polynomial.legendre.leggauss(dim // 2 + 1)  # exact for degree dim
    left, right = nodes[:-1], nodes[1:]
    h = right - left
    r = 0.5 * (left + right)[:, None] + 0.5 * h[:, None] * x[None, :]
    meas = 0.5 * h[:, None] * gw[None, :] * r ** (dim - 1)
    phi_right = (r - left[:, None]) / h[:, None]
    to_left = np.sum(meas * (1.0 - phi_right), axis=1)
    to_right = np.sum(meas * phi_right, axis=1)
    w = np.zeros(len(nodes))
    w[:-1] += to_left
    w[1:] += to_right
    return sphere_area(dim) * w


def build_grid(dim: int, r_max: float = 60.0, M: int = 2048, stretch: float = 8.0) -> RadialGrid:
    """Build a radial grid with ``M`` cells on ``[0, r_max]``.

    Parameters
    ----------
    dim : int
        Space dimension N >= 3.
    r_max : float
        Radius of the Dirichlet cut-off.
    M : int
        Number of cells (M >= 64).
    stretch : float
        Ratio between the last and the first cell width; 1 gives a uniform grid.
        Larger values concentrate nodes near the origin.
    """
    if int(dim) != dim or dim < 3:
        raise BadDimension(f"dimension {dim} is outside N >= 3")
    dim = int(dim)
    if M < 64:
        raise ValueError("M must be at least 64")
    if not r_max > 0:
        raise ValueError("r_max must be positive")
    if stretch < 1:
        raise ValueError("stretch must be >= 1")
    if stretch == 1.0:
        nodes = np.linspace(0.0, r_max, M + 1)
    else:
        q = stretch ** (1.0 / (M - 1))
        nodes = r_max * (q ** np.arange(M + 1) - 1.0) / (q**M - 1.0)
        nodes[-1] = r_max
    w = _hat_weights(dim, nodes)
    cum = np.cumsum(w)[:-1]
    a = 2.0 * dim * cum / (nodes[1:] ** 2 - nodes[:-1] ** 2)
    for arr in (nodes, w, a):
        arr.setflags(write=False)
    return RadialGrid(dim=dim, nodes=nodes, weights=w, stiffness=a, stretch=float(stretch))


@dataclass(eq=False)
class RadialProfile:
    grid: RadialGrid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != self.grid.nodes.shape:
            raise ValueError("profile length does not match the grid")

    def copy(self) -> "RadialProfile":
        return RadialProfile(self.grid, self.values.copy())

    def scaled(self, alpha: float) -> "RadialProfile":
        return RadialProfile(self.grid, alpha * self.values)

    @property
    def linf(self) -> float:
        return float(np.max(np.abs(self.values)))

    def __call__(self, r):
        """Piecewise-linear evaluation; zero beyond r_max."""
        return np.interp(r, self.grid.nodes, self.values, right=0.0)


def from_function(grid: RadialGrid, f: Callable[[np.ndarray], np.ndarray], dirichlet: bool = True) -> RadialProfile:
    v = np.asarray(f(grid.nodes), dtype=float).copy()
    if dirichlet:
        v[-1] = 0.0
    return RadialProfile(grid, v)


def zero(grid: RadialGrid) -> RadialProfile:
    return RadialProfile(grid, np.zeros(grid.M + 1))


def bump(grid: RadialGrid, s0: float, r_n: float, width: float = 1.0, shape: str = "linear") -> RadialProfile:
    """Plateau ``s0`` on ``[0, r_n]`` followed by a shoulder of the given width.

    ``shape="linear"`` ramps linearly to zero over ``[r_n, r_n + width]``;
    ``shape="gaussian"`` decays as ``s0 exp(-((r - r_n) / width)^2)``.
    """
    if not s0 > 0 or not r_n >= 0 or not width > 0:
        raise ValueError("s0 and width must be positive and r_n nonnegative")
    if r_n + width > grid.r_max:
        raise PlateauTooLarge(f"r_n + width = {r_n + width:g} exceeds r_max = {grid.r_max:g}")
    x = (grid.nodes - r_n) / width
    if shape == "linear":
        v = s0 * np.clip(1.0 - x, 0.0, 1.0)
    elif shape == "gaussian":
        v = s0 * np.exp(-np.maximum(x, 0.0) ** 2)
    else:
        raise ValueError(f"unknown bump shape {shape!r}")
    v[-1] = 0.0
    return RadialProfile(grid, v)


def chi(u: RadialProfile, interval) -> np.ndarray:
    """Nodewise indicator of ``{u in (a, b)}``."""
    a, b = interval
    if not a > 0:
        raise ValueError("restriction intervals must have a > 0")
    return (u.values > a) & (u.values < b)


def restrict(u: RadialProfile, interval) -> RadialProfile:
    """The profile u_I: u where u lies in I, zero elsewhere."""
    return RadialProfile(u.grid, np.where(chi(u, interval), u.values, 0.0))


def level_measure(u: RadialProfile, interval) -> float:
    """Measure of ``{u in I}`` computed with the quadrature weights."""
    return float(np.sum(u.grid.weights[chi(u, interval)]))


class Norms(NamedTuple):
    l2_sq: float
    h1_sq: float
    linf: float


def norms(u: RadialProfile) -> Norms:
    l2 = u.grid.inner(u.values, u.values)
    return Norms(l2, l2 + 2.0 * u.grid.dirichlet_energy(u.values), u.linf)


def strauss_ratio(u: RadialProfile, beta: float) -> float:
    """``max_{r >= beta} |u(r)| r^((N-1)/2) / ||u||_{H^1}`` (zero for u = 0)."""
    if not beta < u.grid.r_max:
        raise ValueError("beta must be below r_max")
    h1 = np.sqrt(norms(u).h1_sq)
    if h1 == 0.0:
        return 0.0
    mask = u.grid.nodes >= beta
    r = u.grid.nodes[mask]
    return float(np.max(np.abs(u.values[mask]) * r ** ((u.grid.dim - 1) / 2.0)) / h1)


def tail_ratio(u: RadialProfile, frac: float = 0.9) -> float:
    """|u| at ``frac * r_max`` relative to the sup norm; used for the cut-off advisory."""
    if u.linf == 0.0:
        return 0.0
    return float(abs(u(frac * u.grid.r_max)) / u.linf)


# ---------------------------------------------------------------------------
# CSV exchange


def save_profile(path, u: RadialProfile, extra: Optional[dict] = None) -> None:
    """Write ``r,u[,extra...]`` columns under a ``# dim=.. r_max=..`` header."""
    g = u.grid
    cols = [g.nodes, u.values]
    names = ["r", "u"]
    for k, v in (extra or {}).items():
        names.append(k)
        cols.append(np.asarray(v, dtype=float))
    header = f"dim={g.dim} r_max={g.r_max!r} M={g.M} stretch={g.stretch!r}\n" + ",".join(names)
    np.savetxt(path, np.column_stack(cols), delimiter=",", header=header, comments="# ", fmt="%.17g")


def load_profile(path) -> RadialProfile:
    with open(path) as fh:
        meta_line = fh.readline()
    meta = dict(tok.split("=", 1) for tok in meta_line.lstrip("#").split())
    data = np.loadtxt(path, delimiter=",", comments="#", ndmin=2)
    grid = build_grid(int(meta["dim"]), float(meta["r_max"]), int(meta["M"]), float(meta.get("stretch", 1.0)))
    if not np.allclose(grid.nodes, data[:, 0], rtol=1e-12, atol=1e-12):
        raise ValueError("node column does not match the grid described in the header")
    return RadialProfile(grid, data[:, 1])
