"""Localized constrained minimization, one negative well at a time.

For well ``j`` the functional is built from the term truncated above
``eta_j`` and minimized over the open set

    O = {J~ < 0}  (and, for j >= 2, J~ restricted to values in
                    (eta_{j-1}, eta_j) also < 0),

starting from plateau profiles retracted onto the constraint.  Each step
tries a Newton direction for the bordered (KKT) system first and falls back
to an H^1-preconditioned projected gradient; the step length comes from
Armijo backtracking with rejection of iterates that leave O.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.interpolate import CubicSpline
from scipy.optimize import brentq
from scipy.sparse.linalg import spsolve
from scipy.linalg import solve_banded

from . import functionals as fn
from .errors import BadMultiplier, PlateauTooLarge, SingularSystem
from .functionals import Kind, ProblemSpec
from .kgm_coupling import phi_matrix, solve_phi
from .nonlinearity import WellDecomposition, detect_wells, truncate, untruncated
from .radial_grid import RadialProfile, bump

log = logging.getLogger(__name__)


class Status(str, Enum):
    CONVERGED = "Converged"
    BOUNDARY_HIT = "BoundaryHit"
    MAX_ITERS = "MaxIters"
    INIT_FAILED = "InitFailed"


@dataclass(frozen=True)
class SolveOptions:
    max_iters: int = 400
    step0: float = 1.0
    step_shrink: float = 0.5
    grad_tol: float = 1e-10
    constraint_tol: float = 1e-11
    boundary_margin: float = 1e-9
    restarts: int = 3
    blend_window: Optional[float] = None
    r_n_schedule: tuple = (0.5, 1.0, 2.0, 4.0, 8.0, 16.0, 32.0)
    widths: tuple = (1.0, 2.0, 4.0, 8.0, 16.0)
    seed: int = 0
    armijo: float = 1e-4
    sobolev_shift: float = 1.0
    newton: bool = True
    localization_tol: float = 1e-6
    s_max: float = 10.0
    scan_points: int = 4096
    root_tol: float = 1e-12

    def __post_init__(self):
        for name in ("step0", "grad_tol", "constraint_tol", "boundary_margin", "sobolev_shift",
                     "localization_tol", "s_max", "root_tol"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if not 0 < self.step_shrink < 1:
            raise ValueError("step_shrink must lie in (0, 1)")
        if self.max_iters < 1 or self.restarts < 0:
            raise ValueError("max_iters must be >= 1 and restarts >= 0")
        if self.blend_window is not None and not self.blend_window > 0:
            raise ValueError("blend_window must be positive")
        object.__setattr__(self, "r_n_schedule", tuple(float(x) for x in self.r_n_schedule))
        object.__setattr__(self, "widths", tuple(float(x) for x in self.widths))
        if not self.r_n_schedule or min(self.r_n_schedule) <= 0 or not self.widths or min(self.widths) <= 0:
            raise ValueError("r_n_schedule and widths must be nonempty and positive")


@dataclass
class WellSolveResult:
    profile: RadialProfile
    well_index: int
    multiplier: Optional[float]
    energy: Optional[fn.EnergyBreakdown]
    iterations: int
    status: Status
    interval: tuple = (0.0, np.inf)
    term: object = None
    raw_multiplier: Optional[float] = None
    residual: Optional[float] = None
    constraint_err: Optional[float] = None
    message: str = ""
    trace: list = field(default_factory=list, repr=False)

    @property
    def converged(self) -> bool:
        return self.status is Status.CONVERGED


# ---------------------------------------------------------------------------
# per-well problem


class _WellProblem:
    def __init__(self, spec: ProblemSpec, wells: WellDecomposition, j: int, opts: SolveOptions):
        self.spec, self.opts, self.j = spec, opts, j
        self.grid = spec.grid
        self.w = spec.grid.weights
        self.xi, self.eta = wells.wells[j - 1]
        self.eta_prev = wells.eta_prev(j)
        if np.isinf(self.eta):
            self.term = untruncated(spec.nl, j)
        else:
            self.term = truncate(spec.nl, wells, j, opts.blend_window)
        self.target = spec.target
        self._phi_key = None
        self._phi = None

    # -- cached pieces -------------------------------------------------
    def phi(self, v):
        if self.spec.kind is not Kind.KGM:
            return None
        key = v.tobytes()
        if key != self._phi_key:
            self._phi = solve_phi(RadialProfile(self.grid, v), self.spec.e_charge)
            self._phi_key = key
        return self._phi

    def H(self, v):
        return fn.eval_H(self.spec, v, self.term)

    def J(self, v):
        return fn.eval_J(self.spec, v, self.term)

    def g(self, v):
        return fn.constraint_g(self.spec, v, self.term, self.phi(v))

    def constraint_error(self, v):
        if not self.spec.has_constraint:
            return 0.0
        return abs(self.g(v) - self.target) / (1.0 + abs(self.target))

    def in_open_set(self, v, margin):
        if not np.max(v) < self.eta:
            return False
        if not self.J(v) < -margin:
            return False
        if self.j >= 2:
            hi = self.eta if np.isfinite(self.eta) else np.inf
            if not fn.eval_J_restricted(self.spec, v, (self.eta_prev, hi), self.term) < -margin:
                return False
        return True

    # -- retraction ----------------------------------------------------
    def retract(self, v):
        kind = self.spec.kind
        if kind is Kind.KG:
            return v
        tol = 0.1 * self.opts.constraint_tol * (1.0 + abs(self.target))
        if kind is Kind.NLS:
            n = np.sqrt(self.grid.inner(v, v))
            return None if n == 0 else v * (self.spec.constraint_value / n)
        if kind is Kind.ELLIPTIC:
            R = self.term
            phi_ = lambda a: self.grid.integrate(R.value(a * v)) - self.target
            dphi = lambda a: self.grid.integrate(R.deriv(a * v) * v)
        else:
            e = self.spec.e_charge

            def phi_(a):
                p = self.phi(a * v).phi.values
                return 0.5 * self.grid.integrate((1.0 - e * p) * (a * v) ** 2) - self.target

            def dphi(a):
                p = self.phi(a * v).phi.values
                return self.grid.integrate((1.0 - e * p) ** 2 * a * v * v)

        a = 1.0
        for _ in range(60):
            f = phi_(a)
            if abs(f) <= tol:
                return a * v
            d = dphi(a)
            if d == 0 or not np.isfinite(d):
                break
            step = f / d
            a_new = a - step
            if not (0.5 * a < a_new < 2.0 * a):
                break
            a = a_new
        if kind is Kind.KGM:
            # the charge of a * v is increasing in a: expand a bracket around 1
            lo, hi = 1.0, 1.0
            while phi_(lo) > 0 and lo > 1e-6:
                lo *= 0.5
            while phi_(hi) < 0 and hi < 1e6:
                hi *= 2.0
            if phi_(lo) > 0 or phi_(hi) < 0:
                return None
            a = brentq(phi_, lo, hi, xtol=1e-15, rtol=1e-15, maxiter=200)
            return a * v if abs(phi_(a)) <= tol else None
        # bracketed fallback: nearest sign change to a = 1 on a log scan
        grid_a = np.geomspace(1e-2, 1e2, 161)
        vals = np.array([phi_(x) for x in grid_a])
        idx = np.flatnonzero(np.sign(vals[:-1]) * np.sign(vals[1:]) <= 0)
        if len(idx) == 0:
            return None
        k = idx[np.argmin(np.abs(np.log(grid_a[idx])))]
        a = brentq(phi_, grid_a[k], grid_a[k + 1], xtol=1e-15, rtol=1e-15, maxiter=200)
        for _ in range(5):
            f = phi_(a)
            if abs(f) <= tol:
                break
            d = dphi(a)
            if d == 0:
                break
            a -= f / d
        return a * v if abs(phi_(a)) <= tol else None

    # -- gradients -----------------------------------------------------
    def gradients(self, v):
        s, t = self.spec, self.term
        gH = fn.grad_H(s, v, t)
        if not s.has_constraint:
            return gH, None, fn.multiplier_estimate(s, v, t), gH
        gg = fn.grad_g(s, v, t, self.phi(v))
        den = self.grid.inner(gg, gg)
        lam = self.grid.inner(gH, gg) / den if den > 0 else 0.0
        return gH, gg, lam, gH - lam * gg

    # -- directions ----------------------------------------------------
    def _tri(self, shift):
        diag, off = self.grid.tridiagonal(shift)
        return sp.diags([off, diag, off], [-1, 0, 1], format="csc")

    def newton_direction(self, v, gH, gg, lam, r):
        s, t = self.spec, self.term
        M = self.grid.M
        w = self.w[:M]
        rhs = -(self.w * r)[:M]
        kind = s.kind
        d2 = t.deriv2(v)
        if kind is Kind.ELLIPTIC:
            A = self._tri((1.0 - lam) * d2)
        elif kind is Kind.NLS:
            A = self._tri(d2 - 2.0 * lam)
        elif kind is Kind.KG:
            m = self.grid.inner(v, v)
            sig2 = s.constraint_value**2
            A = self._tri(d2 + s.omega**2 - sig2 / m**2)
            z = sp.csc_matrix((w * v[:M])[:, None])
            beta = 4.0 * sig2 / m**3
            K = sp.bmat([[A, z], [z.T, sp.csc_matrix([[-1.0 / beta]])]], format="csc")
            sol = spsolve(K, np.concatenate([rhs, [0.0]]))
            return np.append(sol[:M], 0.0)
        else:
            e = s.e_charge
            p = self.phi(v).phi.values
            A = self._tri(d2 + s.omega**2 - lam * (1.0 - e * p) ** 2)
            B = sp.diags(w * 2.0 * e * v[:M] * (1.0 - e * p[:M]), format="csc")
            ld, lo = phi_matrix(RadialProfile(self.grid, v), e)
            L = sp.diags([lo, ld, lo], [-1, 0, 1], format="csc")
            c = sp.csc_matrix((self.w * gg)[:M][:, None])
            K = sp.bmat([[A, lam * B, c], [B, -L, None], [c.T, None, None]], format="csc")
            sol = spsolve(K, np.concatenate([rhs, np.zeros(M), [0.0]]))
            return np.append(sol[:M], 0.0)
        c = sp.csc_matrix((self.w * gg)[:M][:, None])
        K = sp.bmat([[A, c], [c.T, None]], format="csc")
        sol = spsolve(K, np.concatenate([rhs, [0.0]]))
        return np.append(sol[:M], 0.0)

    def sobolev_direction(self, v, gH, gg):
        M = self.grid.M
        diag, off = self.grid.tridiagonal(self.opts.sobolev_shift)
        ab = np.zeros((3, M))
        ab[0, 1:] = off
        ab[1] = diag
        ab[2, :-1] = off
        b1 = (self.w * gH)[:M]
        p1 = solve_banded((1, 1), ab, b1)
        if gg is None:
            d = -p1
        else:
            c = (self.w * gg)[:M]
            p2 = solve_banded((1, 1), ab, c)
            mu = np.dot(c, p1) / np.dot(c, p2)
            d = -(p1 - mu * p2)
        return np.append(d, 0.0)


# ---------------------------------------------------------------------------
# driver


def _candidates(prob: _WellProblem, opts: SolveOptions):
    """Retracted plateau profiles in O, sorted by energy."""
    wells_mid = 0.5 * (prob.xi + (prob.eta if np.isfinite(prob.eta) else prob.xi + 2.0))
    out = []
    shapes = [("linear", r) for r in opts.r_n_schedule]
    shapes += [("gaussian", r) for r in (0.0,) + opts.r_n_schedule]
    for shape, r_n in shapes:
        for width in opts.widths:
            try:
                v0 = bump(prob.grid, wells_mid, r_n, width, shape).values
            except PlateauTooLarge:
                continue
            v = prob.retract(v0)
            if v is None or not np.all(np.isfinite(v)):
                continue
            if prob.in_open_set(v, opts.boundary_margin):
                out.append((prob.H(v), shape, r_n, width, v))
    out.sort(key=lambda x: x[0])
    return out


def _descend(prob: _WellProblem, v, opts: SolveOptions, step0: float, trace: list):
    """Run the constrained descent from v; returns (v, status, iterations, message)."""
    grid = prob.grid
    eps = np.finfo(float).eps
    t_grad = step0
    H = prob.H(v)
    for it in range(opts.max_iters):
        gH, gg, lam, r = prob.gradients(v)
        rnorm = grid.norm(r)
        gnorm = grid.norm(gH)
        cerr = prob.constraint_error(v)
        rec = {"iteration": it, "H": H, "J": prob.J(v), "gradnorm": rnorm, "linf": float(np.max(v)),
               "g": prob.g(v), "phase": "descent"}
        if rnorm <= opts.grad_tol * (1.0 + gnorm) and cerr <= opts.constraint_tol:
            rec["phase"] = "converged"
            trace.append(rec)
            return v, Status.CONVERGED, it, ""
        directions = []
        if opts.newton:
            try:
                with np.errstate(all="ignore"):
                    d = prob.newton_direction(v, gH, gg, lam, r)
                if np.all(np.isfinite(d)):
                    directions.append(("newton", d, 1.0))
            except (RuntimeError, SingularSystem, ValueError):
                pass
        directions.append(("gradient", prob.sobolev_direction(v, gH, gg), t_grad))
        accepted = False
        boundary_rejects = 0
        for phase, d, t in directions:
            slope = grid.inner(gH, d)
            if not slope < 0:
                continue
            roundoff = 64 * eps * (abs(H) + grid.dirichlet_energy(v) + grid.integrate(np.abs(prob.term.value(v))))
            for _ in range(60):
                trial = v + t * d
                np.maximum(trial, 0.0, out=trial)
                trial[-1] = 0.0
                trial = prob.retract(trial)
                if trial is not None:
                    if not prob.in_open_set(trial, opts.boundary_margin):
                        boundary_rejects += 1
                    else:
                        Ht = prob.H(trial)
                        if Ht <= H + opts.armijo * t * slope + roundoff:
                            accepted = True
                            break
                t *= opts.step_shrink
                if t < 1e-14:
                    break
            if accepted:
                if phase == "gradient":
                    t_grad = min(t / opts.step_shrink, 1e6)
                rec["phase"] = phase
                break
        trace.append(rec)
        if not accepted:
            if boundary_rejects:
                return v, Status.BOUNDARY_HIT, it, "descent pinned at the boundary of the admissible set"
            return v, Status.MAX_ITERS, it, "line search stalled"
        v, H = trial, Ht
    return v, Status.MAX_ITERS, opts.max_iters, "iteration budget exhausted"


def _perturbed(prob, v, rng):
    """A smooth random perturbation of v, retracted; used once candidates run out."""
    r = prob.grid.nodes
    k = rng.uniform(0.5, 2.0)
    bumpy = 1.0 + 0.05 * rng.uniform(-1, 1) * np.cos(k * r / max(r[np.argmax(v < 0.5 * v.max())], 1.0))
    return prob.retract(v * bumpy)


def minimize_in_well(spec: ProblemSpec, wells: WellDecomposition, j: int,
                     opts: SolveOptions = SolveOptions()) -> WellSolveResult:
    """Minimize the well-``j`` truncated functional on the constraint inside O."""
    if not 1 <= j <= wells.ell:
        raise ValueError(f"well index {j} outside 1..{wells.ell}")
    prob = _WellProblem(spec, wells, j, opts)
    interval = (prob.xi, prob.eta)
    trace: list = []
    cands = _candidates(prob, opts)
    if not cands:
        return WellSolveResult(RadialProfile(spec.grid, np.zeros(spec.grid.M + 1)), j, None, None, 0,
                               Status.INIT_FAILED, interval, prob.term,
                               message="no plateau initializer lies in the admissible set on the constraint")
    rng = np.random.default_rng(opts.seed)
    total = 0
    step0 = opts.step0
    last = None
    for attempt in range(opts.restarts + 1):
        if attempt < len(cands):
            v0 = cands[attempt][-1]
        else:
            v0 = _perturbed(prob, cands[0][-1], rng)
            if v0 is None or not prob.in_open_set(v0, opts.boundary_margin):
                continue
        start = len(trace)
        v, status, iters, msg = _descend(prob, v0.copy(), opts, step0, trace)
        total += iters
        for rec in trace[start:]:
            rec["attempt"] = attempt
        last = (v, status, msg)
        if status is Status.CONVERGED:
            linf = float(np.max(v))
            if np.isfinite(prob.eta) and linf >= prob.eta - opts.localization_tol:
                status = Status.BOUNDARY_HIT
                last = (v, status, "sup norm converged onto the well endpoint")
                step0 *= opts.step_shrink
                continue
            break
        step0 *= opts.step_shrink
    v, status, msg = last
    prof = RadialProfile(spec.grid, v)
    gH, gg, lam, r = prob.gradients(v)
    energy = fn.energy_breakdown(spec, prof, prob.term)
    phys = fn.physical_multiplier(spec, lam)
    return WellSolveResult(prof, j, phys, energy, total, status, interval, prob.term, lam,
                           prob.grid.norm(r), prob.constraint_error(v), msg, trace)


def find_all(spec: ProblemSpec, opts: SolveOptions = SolveOptions(), jobs: Optional[int] = None,
             wells: Optional[WellDecomposition] = None) -> list:
    """One localized solve per well, run in a thread pool and ordered by well index."""
    if wells is None:
        wells = detect_wells(spec.nl, opts.s_max, opts.scan_points, opts.root_tol)
    idx = range(1, wells.ell + 1)

    def run(j):
        try:
            return minimize_in_well(spec, wells, j, opts)
        except Exception as exc:  # one failing well must not abort the batch
            log.exception("well %d failed", j)
            return WellSolveResult(RadialProfile(spec.grid, np.zeros(spec.grid.M + 1)), j, None, None, 0,
                                   Status.INIT_FAILED, wells.wells[j - 1], message=f"{type(exc).__name__}: {exc}")

    if jobs == 1 or wells.ell == 1:
        return [run(j) for j in idx]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(run, idx))


def rescale_elliptic(u: RadialProfile, lam: float, method: str = "cubic") -> RadialProfile:
    """``u(r / sqrt(1 - lambda))`` resampled on the same grid (zero beyond r_max).

    ``method="cubic"`` uses a spline with ``u'(0) = 0``; piecewise-linear
    resampling (``"linear"``) leaves an O(1) kink pattern in the discrete
    Laplacian that does not vanish under refinement.
    """
    if not lam < 1:
        raise BadMultiplier(f"lambda = {lam:g} is not below 1")
    g = u.grid
    x = g.nodes / np.sqrt(1.0 - lam)
    inside = x <= g.r_max
    v = np.zeros_like(u.values)
    if method == "cubic":
        cs = CubicSpline(g.nodes, u.values, bc_type=((1, 0.0), "not-a-knot"))
        v[inside] = cs(x[inside])
    elif method == "linear":
        v[inside] = np.interp(x[inside], g.nodes, u.values)
    else:
        raise ValueError(f"unknown resampling method {method!r}")
    v[-1] = 0.0
    return RadialProfile(g, v)


@dataclass
class ScanRow:
    value: float
    status: Status
    H: Optional[float]
    J: Optional[float]
    linf: Optional[float]


@dataclass
class ScanReport:
    rows: list
    threshold: Optional[float]


def threshold_scan(spec_template: ProblemSpec, values: Sequence[float], opts: SolveOptions = SolveOptions(),
                   wells: Optional[WellDecomposition] = None) -> ScanReport:
    """Solve well 1 for each constraint value; the threshold is the smallest converged value with J < 0."""
    values = list(values)
    if any(b < a for a, b in zip(values[:-1], values[1:])):
        raise ValueError("scan values must be sorted")
    if not values:
        return ScanReport([], None)
    if wells is None:
        wells = detect_wells(spec_template.nl, opts.s_max, opts.scan_points, opts.root_tol)
    rows = []
    for val in values:
        res = minimize_in_well(spec_template.with_constraint(val), wells, 1, opts)
        e = res.energy
        rows.append(ScanRow(float(val), res.status, e.h_value if e else None, e.j_value if e else None,
                            res.profile.linf if e else None))
    ok = [r.value for r in rows if r.status is Status.CONVERGED and r.J is not None and r.J < 0]
    return ScanReport(rows, min(ok) if ok else None)
