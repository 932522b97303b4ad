"""Dirichlet problems for F_k[u] = psi (+ point masses) and a comparison checker.

Two solvers:

* radial balls in any dimension, by exact flux quadrature;
* planar boxes (n = 2, k = 1, 2), by pseudo-time marching on the k-th root
  equation ``S_k^(1/k)(lam_Gamma(D^2 u)) = psi^(1/k)``, where ``lam_Gamma`` is
  the diagonal shift of the stencil eigenvalues into Gamma_k.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field
from typing import Callable

import numpy as np
from scipy.fft import dstn, idstn

from . import cones
from .analytic import radial_dirichlet_solve, radial_eigen_fk, radial_mesh, sphere_area
from .errors import DomainError, PreconditionError
from .field import (MollifierKernel, ScalarField, hessian_eigenvalues, hessian_operator,
                    kconvexity_report)
from .measures import ConvergenceReport
from .symmetric import _check_order, binom, elem_sym_all


@dataclass
class DirichletProblemSpec:
    """Data of ``F_k[u] = psi + sum_i m_i delta_{c_i}`` with ``u = phi`` on the boundary.

    ``geometry`` is ``"box"`` (n = 2 grid over ``box`` at ``resolution``) or
    ``"radial"`` (ball of radius ``R``).  For radial problems ``psi`` is a
    function of ``r`` and ``phi`` a constant; on boxes ``psi`` and ``phi``
    are functions of points ``(..., n)`` or constants.
    """

    geometry: str
    n: int
    k: int
    psi: object = 0.0
    phi: object = 0.0
    atoms: list = dc_field(default_factory=list)
    box: tuple = ((-1.0, 1.0), (-1.0, 1.0))
    resolution: int = 65
    R: float = 1.0
    tol: float = 1e-10
    max_iter: int = 500
    method: str = "preconditioned"
    mesh: object = None
    atom_h: float | None = None

    def __post_init__(self):
        if self.geometry not in ("box", "radial"):
            raise DomainError("geometry must be 'box' or 'radial'")
        self.k = _check_order(self.k, 1, self.n)
        for c, m in self.atoms:
            if m < 0:
                raise DomainError("atom masses must be nonnegative")
            if len(c) != self.n:
                raise DomainError("atom center has the wrong dimension")
        if self.method not in ("preconditioned", "explicit"):
            raise DomainError(f"unknown method {self.method!r}")
        if self.geometry == "box":
            if self.n != 2 or self.k not in (1, 2):
                raise DomainError("grid solver supports n = 2, k in {1, 2} only")
            if len(self.box) != 2:
                raise DomainError("box must be two-dimensional")
        else:
            if len(self.atoms) > 1 or any(np.any(np.asarray(c) != 0) for c, _ in self.atoms):
                raise DomainError("radial problems allow at most one atom, at the center")


@dataclass
class SolveReport:
    """Solver output.

    ``residual`` is the sup of ``|S_k - psi|`` over interior nodes; radial
    solves divide it pointwise by ``max(|lambda|_max^k, psi)`` so that
    profiles with a pole are judged on relative accuracy.
    """

    solution: object  # ScalarField or RadialProfile
    residual: float
    iterations: int
    convexity_fraction: float
    status: str = "converged"
    history: list = dc_field(default_factory=list)

    def to_dict(self) -> dict:
        return {"residual": self.residual, "iterations": self.iterations,
                "convexity_fraction": self.convexity_fraction, "status": self.status,
                "history": self.history}


# ---------------------------------------------------------------- radial

def _radial_density(psi):
    if callable(psi):
        return psi
    c = float(psi)
    return lambda r: np.full_like(np.asarray(r, dtype=float), c)


def solve_radial(spec: DirichletProblemSpec) -> SolveReport:
    """Radial solve by flux quadrature; the residual is measured by the eigen form."""
    if spec.geometry != "radial":
        raise DomainError("solve_radial needs radial geometry")
    psi = _radial_density(spec.psi)
    mass = sum(m for _, m in spec.atoms)
    prof = radial_dirichlet_solve(spec.n, spec.k, psi, mass, spec.R, float(spec.phi), spec.mesh)
    r = prof.r[1:-1]
    fk = radial_eigen_fk(prof.du[1:-1], prof.d2u[1:-1], r, spec.n, spec.k)
    target = np.asarray(psi(r), dtype=float)
    lam = np.stack([prof.d2u] + [prof.du / prof.r] * (spec.n - 1), axis=-1)
    top = np.abs(lam).max(axis=-1, keepdims=True)
    # relative to the Hessian scale: near a pole the eigenvalues reach 1e18
    scale = np.maximum(top[1:-1, 0] ** spec.k, np.maximum(np.abs(target), 1e-300))
    residual = float(np.max(np.abs(fk - target) / scale))
    lam = lam / np.where(top > 0, top, 1.0)
    frac = float(np.mean(elem_sym_all(lam)[:, 1:spec.k + 1].min(axis=-1) >= -1e-6))
    return SolveReport(prof, residual, 0, frac)


# ---------------------------------------------------------------- grid

def _poisson_solver(shape, spacing):
    """Inverse of the 5-point Laplacian with zero boundary values (DST-I)."""
    m0, m1 = shape
    dx, dy = spacing
    l0 = (2 * np.cos(np.pi * np.arange(1, m0 + 1) / (m0 + 1)) - 2) / dx ** 2
    l1 = (2 * np.cos(np.pi * np.arange(1, m1 + 1) / (m1 + 1)) - 2) / dy ** 2
    eig = l0[:, None] + l1[None, :]

    def solve(rhs):
        return idstn(dstn(rhs, type=1) / eig, type=1)

    return solve


def _as_grid_function(f, pts):
    if isinstance(f, ScalarField):
        return f.values
    if callable(f):
        return np.asarray(f(pts), dtype=float)
    return np.full(pts.shape[:-1], float(f))


def atom_density(atoms, pts, h: float, cell_volume: float) -> np.ndarray:
    """Sum of kernel bumps of radius ``h`` carrying the atom masses on the grid.

    Each bump is renormalized so that its discrete sum times the cell volume
    equals the atom mass exactly.
    """
    n = pts.shape[-1]
    dv = cell_volume
    out = np.zeros(pts.shape[:-1])
    ker = MollifierKernel(h, n)
    for c, m in atoms:
        if m == 0:
            continue
        b = ker(pts - np.asarray(c, dtype=float))
        s = b.sum() * dv
        if s <= 0:
            raise DomainError("atom bump radius below the grid resolution")
        out += m * b / s
    return out


def _residual_parts(u: ScalarField, k: int, root_psi: np.ndarray):
    mask, lam = hessian_eigenvalues(u, exclude_singular=False)
    lam_g, _ = cones.project_to_cone(lam, k)
    sk = elem_sym_all(lam_g)[..., k]
    R = np.zeros(u.resolution)
    R[mask] = np.maximum(sk, 0.0) ** (1.0 / k) - root_psi[mask]
    return R, mask, sk


def solve_grid(spec: DirichletProblemSpec, u0=None) -> SolveReport:
    """Pseudo-time solve of ``F_k[u] = psi`` on the planar box, ``u = phi`` on its edge.

    ``method="preconditioned"`` takes steps ``u <- u - tau c L^-1 R`` with
    ``L`` the 5-point Laplacian (zero boundary values), ``R`` the k-th root
    residual and ``c`` the inverse linearization at an isotropic Hessian; the
    step ``tau`` is halved until the residual decreases.  ``method="explicit"``
    uses ``u <- u + tau R`` with ``tau = c spacing^2 / 4``.
    """
    if spec.geometry != "box":
        raise DomainError("solve_grid needs box geometry")
    n, k = spec.n, spec.k
    N = spec.resolution
    grid = ScalarField.from_function(lambda p: np.zeros(p.shape[:-1]), spec.box, N)
    pts = grid.points
    psi = _as_grid_function(spec.psi, pts)
    if any(m > 0 for _, m in spec.atoms):
        if spec.atom_h is None:
            raise DomainError("grid atoms need a bump radius (atom_h)")
        psi = psi + atom_density(spec.atoms, pts, spec.atom_h, grid.cell_volume)
    if np.any(psi < 0):
        raise DomainError("psi must be nonnegative")
    phi = _as_grid_function(spec.phi, pts)
    root_psi = psi ** (1.0 / k)
    c = k * binom(n, k) ** ((k - 1) / k) / binom(n - 1, k - 1)
    inner = (slice(1, -1),) * n
    solve_poisson = _poisson_solver(tuple(r - 2 for r in grid.resolution), grid.spacing)

    if u0 is None:
        # start from the solution of Laplace u = n (psi / C(n,k))^(1/k), the isotropic guess
        u = phi.copy()
        u[inner] = 0.0
        rhs = n * (psi / binom(n, k)) ** (1.0 / k)
        lap_b = _boundary_lift(u, grid.spacing)
        u[inner] = solve_poisson(rhs[inner] - lap_b)
    else:
        u = np.array(u0, dtype=float, copy=True)
        u[~grid.interior_mask()] = phi[~grid.interior_mask()]

    def residual(vals):
        R, mask, sk = _residual_parts(grid.with_values(vals), k, root_psi)
        return R, float(np.max(np.abs(sk - psi[mask]))) if sk.size else 0.0

    R, res = residual(u)
    history = [res]
    it = 0
    status = "converged" if res < spec.tol else "nonconvergent"
    tau = 1.0
    while res >= spec.tol and it < spec.max_iter:
        it += 1
        if spec.method == "explicit":
            u[inner] += c * grid.spacing.min() ** 2 / 4 * R[inner]
            R, res = residual(u)
        elif spec.method == "preconditioned":
            step = c * solve_poisson(R[inner])
            tau = min(1.0, 2 * tau)
            while True:
                trial = u.copy()
                trial[inner] -= tau * step
                Rt, rt = residual(trial)
                if rt < res or tau < 1e-6:
                    break
                tau *= 0.5
            u, R, res = trial, Rt, rt
        else:
            raise DomainError(f"unknown method {spec.method!r}")
        history.append(res)
        if res < spec.tol:
            status = "converged"
    sol = grid.with_values(u)
    frac = kconvexity_report(sol, k, tol=1e-6).fraction
    return SolveReport(sol, res, it, frac, status, history)


def _boundary_lift(u, spacing):
    """Contribution of the boundary values to the 5-point Laplacian at interior nodes."""
    lift = np.zeros(tuple(r - 2 for r in u.shape))
    dx, dy = spacing
    lift[0, :] += u[0, 1:-1] / dx ** 2
    lift[-1, :] += u[-1, 1:-1] / dx ** 2
    lift[:, 0] += u[1:-1, 0] / dy ** 2
    lift[:, -1] += u[1:-1, -1] / dy ** 2
    return lift


def harmonic_extension(u: ScalarField) -> ScalarField:
    """Discrete harmonic function with the boundary values of ``u`` (n = 2)."""
    if u.n != 2:
        raise DomainError("harmonic extension implemented for n = 2")
    v = u.values.copy()
    v[1:-1, 1:-1] = 0.0
    solve = _poisson_solver(tuple(r - 2 for r in u.resolution), u.spacing)
    v[1:-1, 1:-1] = solve(-_boundary_lift(v, u.spacing))
    return u.with_values(v, singular_points=())


# ---------------------------------------------------------------- measure data

@dataclass
class MeasureDataReport:
    solve: SolveReport
    convergence: ConvergenceReport
    solutions: list

    def to_dict(self) -> dict:
        c = self.convergence
        return {"h": c.schedule, "successive_l1": c.l1,
                "reference_l1": c.pairings[0] if c.pairings else [], "rate": c.trend,
                "verdict": c.verdict, "solves": [s.to_dict() for s in self.solutions]}

    def rows(self) -> list:
        """One row per regularization level."""
        c = self.convergence
        ref = c.pairings[0] if c.pairings else []
        return [{"level": m, "h": h, "l1_to_next": c.l1[m] if m < len(c.l1) else None,
                 "l1_to_reference": ref[m] if m < len(ref) else None}
                for m, h in enumerate(c.schedule)]


def solve_measure_data(spec: DirichletProblemSpec, levels: int = 4, h0=None,
                       reference: Callable | None = None) -> MeasureDataReport:
    """Replace each atom by a kernel bump of equal mass and shrinking radius, and solve.

    Radii are ``h_m = h0 2^-m`` for ``m < levels`` (``h0`` defaults to eight
    grid steps on boxes and ``0.2 R`` on balls).  The report tracks the L1
    distance between successive solutions (``l1``) and, when ``reference``
    is given, to it (``pairings`` slot holds those distances).
    """
    n, k = spec.n, spec.k
    if not spec.atoms or all(m == 0 for _, m in spec.atoms):
        rep = solve_radial(spec) if spec.geometry == "radial" else solve_grid(spec)
        conv = ConvergenceReport([], [], [], [], [], [], 0.0, "converged", 0.0,
                                 notes=["no atoms: single solve"])
        return MeasureDataReport(rep, conv, [rep])
    if spec.geometry == "radial":
        h0 = 0.2 * spec.R if h0 is None else h0
    else:
        spacing = (spec.box[0][1] - spec.box[0][0]) / (spec.resolution - 1)
        h0 = 8 * spacing if h0 is None else h0
    hs = [h0 * 2.0 ** -m for m in range(levels)]
    reports = []
    for h in hs:
        if spec.geometry == "radial":
            psi_m = _radial_bump_density(spec, h)
            sub = DirichletProblemSpec("radial", n, k, psi_m, spec.phi, [], R=spec.R,
                                       mesh=spec.mesh if spec.mesh is not None else _bump_mesh(spec.R, h))
            reports.append(solve_radial(sub))
        else:
            sub = DirichletProblemSpec("box", n, k, spec.psi, spec.phi, list(spec.atoms), spec.box,
                                       spec.resolution, tol=spec.tol, max_iter=spec.max_iter,
                                       method=spec.method, atom_h=h)
            reports.append(solve_grid(sub))
    l1 = [_l1(spec, a.solution, b.solution) for a, b in zip(reports[:-1], reports[1:])]
    ref_l1 = []
    if reference is not None:
        ref_l1 = [_l1_reference(spec, rep.solution, reference) for rep in reports]
    ok = all(b < a for a, b in zip(l1[:-1], l1[1:]))
    rate = float(np.mean([math.log(a / b) / math.log(2) for a, b in zip(l1[:-1], l1[1:])
                          if a > 0 and b > 0])) if len(l1) > 1 else math.nan
    conv = ConvergenceReport([float(h) for h in hs], [f"h={h:.4g}" for h in hs], [], [ref_l1],
                             [], l1, rate, "converged" if ok else "inconclusive", 0.0,
                             notes=["l1: distance between successive solutions; "
                                    "pairings[0]: distance to the reference"])
    return MeasureDataReport(reports[-1], conv, reports)


def _radial_bump_density(spec, h):
    base = _radial_density(spec.psi)
    mass = sum(m for _, m in spec.atoms)
    ker = MollifierKernel(h, spec.n)
    e1 = np.eye(1, spec.n)[0]
    return lambda r: base(r) + mass * ker(np.asarray(r, dtype=float)[..., None] * e1)


def _bump_mesh(R, h):
    """Radial mesh refined inside the bump radius."""
    outer = radial_mesh(R, uniform=4000)
    return np.union1d(radial_mesh(h, uniform=2000), outer[outer > h])


def _l1(spec, a, b):
    if isinstance(a, ScalarField):
        return a.with_values(np.abs(a.values - b.values)).integrate()
    r = a.r
    return sphere_area(spec.n) * _trapezoid(np.abs(a.u - b(r)) * r ** (spec.n - 1), r)


def _l1_reference(spec, sol, reference):
    if isinstance(sol, ScalarField):
        with np.errstate(divide="ignore"):
            ref = np.asarray(reference(sol.points), dtype=float)
        ok = np.isfinite(ref)
        return sol.with_values(np.where(ok, np.abs(sol.values - np.where(ok, ref, 0.0)), 0.0)).integrate()
    r = sol.r
    diff = np.abs(sol.u - reference(r)) * r ** (spec.n - 1)
    return float(sphere_area(spec.n) * _trapezoid(diff, r))


def _trapezoid(y, x):
    return float(np.sum(0.5 * (y[1:] + y[:-1]) * np.diff(x)))


# ---------------------------------------------------------------- comparison

@dataclass
class ComparisonResult:
    passed: bool
    boundary_ordered: bool
    violations: np.ndarray  # grid indices (rows) where u > v + tol inside the sub-box
    max_excess: float


def comparison_check(u: ScalarField, v: ScalarField, sub_box=None, k: int | None = None,
                     tol: float = 1e-8, check_preconditions: bool = True) -> ComparisonResult:
    """Check ``u <= v`` on the boundary of a sub-box implies ``u <= v`` inside.

    With ``check_preconditions`` (and ``k`` given), ``v`` must satisfy
    ``F_k[v] <= tol`` and ``u`` must pass the k-convexity report at fraction
    0.999 on the sub-box; otherwise :class:`PreconditionError` is raised.
    """
    if u.resolution != v.resolution or u.box != v.box:
        raise DomainError("u and v must share a grid")
    pts = u.points
    sub_box = sub_box or u.box
    inside = np.ones(u.resolution, dtype=bool)
    for i, (a, b) in enumerate(sub_box):
        inside &= (pts[..., i] >= a - 1e-12) & (pts[..., i] <= b + 1e-12)
    idx = np.argwhere(inside)
    lo, hi = idx.min(axis=0), idx.max(axis=0)
    ring = inside.copy()
    ring[tuple(slice(l + 1, h) for l, h in zip(lo, hi))] = False
    core = inside & ~ring
    if check_preconditions and k is not None:
        Fv = hessian_operator(v, k, where=core).values
        scale = 1.0 + np.nanmax(np.abs(v.values)) ** k
        if np.nanmax(Fv[core & np.isfinite(Fv)], initial=-np.inf) > tol * scale:
            raise PreconditionError("v does not satisfy F_k[v] <= 0 on the sub-box")
        if kconvexity_report(u, k, tol=1e-6, where=core).fraction < 0.999:
            raise PreconditionError("u is not k-convex on the sub-box")
    diff = u.values - v.values
    boundary_ordered = bool(np.all(diff[ring] <= tol))
    bad = core & (diff > tol)
    excess = float(np.max(diff[core], initial=-np.inf))
    passed = (not boundary_ordered) or not np.any(bad)
    return ComparisonResult(passed, boundary_ordered, np.argwhere(bad), excess)


def radial_comparison_check(report: SolveReport, n: int, half_width: float, N: int = 33):
    """Compare a radial solution with the constant equal to its maximum on a box boundary.

    Grid stencils cannot certify k-convexity where the solution is
    k-harmonic, so the precondition is taken from the solver's exact radial
    eigenvalue check instead.
    """
    if report.convexity_fraction < 1.0:
        raise PreconditionError("radial solution is not k-convex")
    profile = report.solution
    box = [(-half_width, half_width)] * n
    u = ScalarField.from_function(lambda p: profile(np.linalg.norm(p, axis=-1)), box, N)
    edge = ~u.interior_mask()
    v = u.with_values(np.full(u.resolution, float(u.values[edge].max())))
    return comparison_check(u, v, k=profile.k, check_preconditions=False)
