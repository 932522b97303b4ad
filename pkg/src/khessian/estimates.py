"""Verification harness for the interior estimates of k-convex functions.

Each ``verify_*`` function evaluates both sides of one estimate along a
refinement schedule (grid resolution, mollification radius, regularization
parameter, radial mesh or pair distance) and classifies the ratio sequence
as ``bounded``, ``growing`` or ``inconclusive``.  Constants are reported,
never asserted.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field as dc_field

import numpy as np

from . import cones
from .analytic import (AnalyticFunctionSpec, ball_volume, kconvexity_probe, radial_eigen_fk,
                       radial_mesh, sphere_area)
from .dirichlet import DirichletProblemSpec, solve_radial
from .errors import DomainError, PreconditionError
from .field import Ball, Box, pk_hessian_pointwise, weighted_norms
from .measures import measure_approx
from .symmetric import _check_order

ESTIMATES = ("interp_2_12", "holder_2_13", "mass_3_1", "gradbound_3_4", "gradint_4_1",
             "plconvex_4_2", "uq_4_3", "l1bound_6_3")

BOUND_SPREAD = 2.0     # max/min of the last ratios allowed for "bounded"
GROWTH_FACTOR = 2.0    # per-step factor required for "growing"
SANITY_TOL = 0.10      # relative LHS change allowed between two resolutions
WINDOW = 3
NOISE_FLOOR = 1e-12    # LHS values this small (relative to max(|RHS|, 1)) are rounding noise


# ---------------------------------------------------------------- cases and reports

def _as_domain(d, n):
    if d is None or isinstance(d, (Box, Ball)):
        return d
    if np.isscalar(d):
        return Ball(tuple([0.0] * n), float(d))
    if isinstance(d, dict):
        if "box" in d:
            return Box(tuple(tuple(map(float, s)) for s in d["box"]))
        return Ball(tuple(map(float, d["center"])), float(d["radius"]))
    return Box(tuple(tuple(map(float, s)) for s in d))


def _domain_dict(d):
    if d is None:
        return None
    if isinstance(d, Box):
        return {"box": [list(s) for s in d.bounds]}
    return {"center": list(d.center), "radius": d.radius}


def margin(outer, inner) -> float:
    """Distance from ``inner`` to the complement of ``outer`` (negative if not contained)."""
    if isinstance(outer, Ball) and isinstance(inner, Ball):
        gap = np.linalg.norm(np.subtract(outer.center, inner.center))
        return float(outer.radius - gap - inner.radius)
    if isinstance(outer, Box) and isinstance(inner, Box):
        return float(min(min(a2 - a1, b1 - b2)
                         for (a1, b1), (a2, b2) in zip(outer.bounds, inner.bounds)))
    if isinstance(outer, Box):
        c, r = np.asarray(inner.center), inner.radius
        return float(min(min(ci - r - a, b - ci - r) for ci, (a, b) in zip(c, outer.bounds)))
    corners = np.array(np.meshgrid(*inner.bounds, indexing="ij")).reshape(inner.n, -1).T
    far = np.linalg.norm(corners - np.asarray(outer.center), axis=1).max()
    return float(outer.radius - far)


def bounding_box(d) -> tuple:
    if isinstance(d, Box):
        return d.bounds
    return tuple((c - d.radius, c + d.radius) for c in d.center)


@dataclass
class EstimateCase:
    """One estimate evaluated on one function (or family) along a schedule.

    ``domain`` and ``subdomain`` are the pair Omega, Omega' (``Box``,
    ``Ball``, box bounds, or a radius for a ball about the origin).
    ``params`` carries the exponents and orders (``k``, ``l``, ``q``, ``p``,
    ``alpha``, ``sigma``, ...); ``schedule`` the refinement parameters.
    ``probe`` marks a sharpness run, which is expected to grow.
    """

    estimate: str
    function: AnalyticFunctionSpec | None = None
    domain: object = None
    subdomain: object = None
    params: dict = dc_field(default_factory=dict)
    schedule: tuple | None = None
    family: tuple = ()
    probe: bool = False
    seed: int = 0
    label: str = ""

    def __post_init__(self):
        if self.estimate not in ESTIMATES:
            raise DomainError(f"unknown estimate {self.estimate!r}")
        n = self.function.n if self.function is not None else self.params.get("n")
        if self.function is None and self.family:
            n = self.family[0].n
        self.domain = _as_domain(self.domain, n)
        self.subdomain = _as_domain(self.subdomain, n)
        if self.domain is not None and self.subdomain is not None:
            if margin(self.domain, self.subdomain) <= 0:
                raise DomainError("subdomain must lie strictly inside the domain")
        self.family = tuple(self.family)
        if self.schedule is not None:
            self.schedule = tuple(self.schedule)

    def to_dict(self) -> dict:
        return {"estimate": self.estimate, "label": self.label,
                "function": None if self.function is None else self.function.to_dict(),
                "domain": _domain_dict(self.domain), "subdomain": _domain_dict(self.subdomain),
                "params": dict(self.params),
                "schedule": None if self.schedule is None else list(self.schedule),
                "family": [f.to_dict() for f in self.family], "probe": self.probe,
                "seed": self.seed}

    @classmethod
    def from_dict(cls, d: dict) -> "EstimateCase":
        fn = d.get("function")
        return cls(estimate=d["estimate"],
                   function=None if fn is None else AnalyticFunctionSpec.from_dict(fn),
                   domain=d.get("domain"), subdomain=d.get("subdomain"),
                   params=dict(d.get("params") or {}), schedule=d.get("schedule"),
                   family=tuple(AnalyticFunctionSpec.from_dict(f) for f in d.get("family") or ()),
                   probe=bool(d.get("probe", False)), seed=int(d.get("seed", 0)),
                   label=str(d.get("label", "")))


@dataclass
class EstimateReport:
    estimate: str
    steps: list            # dicts with keys param, lhs, rhs, ratio
    constant: float        # largest ratio seen
    verdict: str           # bounded | growing | inconclusive | holds | violated
    growth_rate: float | None
    expected: str
    details: dict = dc_field(default_factory=dict)
    probe: "EstimateReport | None" = None
    label: str = ""

    @property
    def passed(self) -> bool:
        ok = self.verdict == self.expected
        return ok and (self.probe is None or self.probe.passed)

    def to_dict(self) -> dict:
        return {"estimate": self.estimate, "label": self.label, "verdict": self.verdict,
                "expected": self.expected, "passed": self.passed, "constant": self.constant,
                "growth_rate": self.growth_rate, "steps": self.steps, "details": self.details,
                "probe": None if self.probe is None else self.probe.to_dict()}

    def rows(self) -> list:
        """Flat CSV rows, probe steps included."""
        out = [{"estimate": self.estimate, "label": self.label, "kind": "main", **s}
               for s in self.steps]
        if self.probe is not None:
            out += [{"estimate": self.estimate, "label": self.label, "kind": "probe", **s}
                    for s in self.probe.steps]
        return out


# ---------------------------------------------------------------- verdicts

def _spread(v) -> float:
    v = np.abs(np.asarray(v, dtype=float))
    if np.all(v == 0):
        return 1.0
    if np.any(v == 0):
        return math.inf
    return float(v.max() / v.min())


def growth_rate(ratios, window: int = WINDOW):
    """Geometric-mean factor per step over the last ``window`` ratios."""
    r = np.asarray(ratios, dtype=float)[-window:]
    if r.size < 2 or np.any(r <= 0) or not np.all(np.isfinite(r)):
        return None
    return float((r[-1] / r[0]) ** (1.0 / (r.size - 1)))


def classify(ratios, window: int = WINDOW, spread: float = BOUND_SPREAD,
             factor: float = GROWTH_FACTOR) -> tuple:
    """``(verdict, rate)`` for a ratio sequence ordered by refinement.

    ``bounded`` needs the last ``window`` ratios and the window one step
    earlier (the re-run check) to vary by less than ``spread``; ``growing``
    needs a strictly increasing last window with per-step factor at least
    ``factor``.  Anything else is ``inconclusive``.
    """
    r = np.asarray(ratios, dtype=float)
    rate = growth_rate(r, window)
    if r.size < 2 or not np.all(np.isfinite(r)):
        return "inconclusive", rate
    last = r[-window:]
    if np.all(np.diff(last) > 0) and rate is not None and rate >= factor:
        return "growing", rate
    if r.size >= window + 1 and _spread(last) < spread and _spread(r[-window - 1:-1]) < spread:
        return "bounded", rate
    return "inconclusive", rate


def _sanity(coarse: float, fine: float) -> dict:
    scale = max(abs(coarse), abs(fine))
    rel = 0.0 if scale <= NOISE_FLOOR else abs(fine - coarse) / scale
    return {"coarse": coarse, "fine": fine, "relative_change": rel, "ok": rel < SANITY_TOL}


def _ratio(lhs: float, rhs: float) -> float:
    if rhs == 0:
        return 0.0 if lhs == 0 else math.inf
    return lhs / rhs


def _report(estimate, case, steps, expected, details, sanity=None, probe=None) -> EstimateReport:
    ratios = [s["ratio"] for s in steps]
    verdict, rate = classify(ratios)
    if sanity is not None:
        details["sanity"] = sanity
        if not sanity["ok"]:
            verdict = "inconclusive"
    const = float(np.max(ratios)) if ratios else math.nan
    return EstimateReport(estimate, steps, const, verdict, rate, expected, details, probe,
                          case.label)


def _step(param, lhs, rhs, ratio=None) -> dict:
    if ratio is None:
        # a k-harmonic input leaves only stencil rounding on the left
        ratio = 0.0 if abs(lhs) <= NOISE_FLOOR * max(abs(rhs), 1.0) else _ratio(lhs, rhs)
    return {"param": float(param), "lhs": float(lhs), "rhs": float(rhs), "ratio": float(ratio)}


def _require_function(case):
    if case.function is None:
        raise DomainError(f"{case.estimate} needs a function")
    return case.function


# ---------------------------------------------------------------- interpolation

def interpolation_bound(n: int, alpha: float) -> float:
    """A constant for which the interpolation inequality holds for all ``eps <= 1``.

    Averaging ``|u|`` over ``B_rho(x)`` with ``rho = eps d_x 2^(-(n+alpha)/alpha)``
    gives ``2^(n(n+alpha)/alpha) / omega_n``.
    """
    return 2.0 ** (n * (n + alpha) / alpha) / ball_volume(n)


def verify_interpolation(case: EstimateCase) -> EstimateReport:
    """Weighted interpolation inequality on the declared eps grid.

    For each grid resolution, the weighted sup norm ``S``, seminorm ``[u]``
    and ``I = integral |u|`` over Omega give the minimal workable constant
    ``C = max_eps (S - eps^alpha [u]) eps^n / I`` (reported per step).  The
    ratio tracked for the verdict is ``S`` over the right-hand side with
    :func:`interpolation_bound`, minimized over eps.
    """
    u_spec = _require_function(case)
    n = u_spec.n
    p = case.params
    alpha = float(p.get("alpha", 0.5))
    eps = np.geomspace(*p.get("eps_range", (1e-3, 1.0)), int(p.get("eps_count", 41)))
    omega = case.domain or Ball(tuple([0.0] * n), 1.0)
    box = bounding_box(omega)
    c_bound = interpolation_bound(n, alpha)
    steps, lhs_seq = [], []
    for res in case.schedule or (9, 17, 33, 65):
        u = u_spec.sample(box, int(res))
        norms = weighted_norms(u, float(n), alpha, domain=omega, seed=case.seed)
        I = u.integrate(domain=omega, absolute=True)
        S, semi = norms.sup_norm, norms.holder_seminorm
        need = np.max((S - eps ** alpha * semi) * eps ** n)
        C = max(float(need), 0.0) / I if I > 0 else (0.0 if need <= 0 else math.inf)
        rhs = float(np.min(eps ** alpha * semi + c_bound * eps ** (-n) * I))
        steps.append({**_step(res, S, rhs), "minimal_C": C})
        lhs_seq.append(S)
    details = {"alpha": alpha, "derived_bound": c_bound, "eps_range": [eps[0], eps[-1]],
               "seminorm": semi, "integral": I, "minimal_C": C,
               "max_minimal_C": max(s["minimal_C"] for s in steps)}
    return _report(case.estimate, case, steps, "bounded", details,
                   _sanity(lhs_seq[-2], lhs_seq[-1]))


# ---------------------------------------------------------------- Hölder

def _pole(spec: AnalyticFunctionSpec):
    c = spec.radial_center()
    if c is None:
        raise DomainError("pair probe needs a radial function")
    return np.asarray(c, dtype=float)


def holder_pair_probe(spec: AnalyticFunctionSpec, domain, beta: float, deltas, sigma=None):
    """Weighted pair quotients between the pole and the point at distance ``delta``."""
    n = spec.n
    sigma = float(n if sigma is None else sigma)
    x = _pole(spec)
    e = np.zeros(n)
    e[0] = 1.0
    out = []
    for d in deltas:
        y = x + d * e
        w = min(domain.distance(x[None])[0], domain.distance(y[None])[0])
        diff = abs(float(spec(y[None])[0]) - float(spec(x[None])[0]))
        out.append(w ** (sigma + beta) * diff / d ** beta)
    return np.array(out)


def verify_holder(case: EstimateCase) -> EstimateReport:
    """Weighted Hölder norm over Omega' against ``integral_{Omega'} |u|``.

    With ``params["beta"]`` (or ``probe=True``, using ``alpha + 0.1``) a
    sharpness probe is attached: exact pair quotients at exponent ``beta``
    anchored at the pole, with pair distances shrinking by
    ``2^(-1.2/(beta-alpha))`` per step so that a quotient of order
    ``delta^(alpha-beta)`` more than doubles each step.
    """
    u_spec = _require_function(case)
    n = u_spec.n
    p = case.params
    k = _check_order(p.get("k", n), 1, n)
    if 2 * k <= n:
        raise DomainError("the Hölder estimate needs k > n/2")
    alpha = float(p.get("alpha", 2.0 - n / k))
    inner = case.subdomain or Ball(tuple([0.0] * n), 1.0)
    outer = case.domain or Ball(tuple([0.0] * n), 2.0)
    probe_rep = kconvexity_probe(u_spec, k, box=bounding_box(outer))
    if probe_rep.fraction < 1.0:
        raise PreconditionError(f"function is not {k}-convex on the domain "
                                f"(worst margin {probe_rep.worst_margin:.3e})")
    box = bounding_box(inner)
    steps, lhs_seq = [], []
    for res in case.schedule or (9, 17, 33, 65):
        u = u_spec.sample(box, int(res))
        norms = weighted_norms(u, float(n), alpha, domain=inner, seed=case.seed)
        I = u.integrate(domain=inner, absolute=True)
        steps.append(_step(res, norms.norm, I))
        lhs_seq.append(norms.norm)
    details = {"alpha": alpha, "k": k, "integral": I}
    beta = p.get("beta")
    if beta is None and case.probe:
        beta = alpha + 0.1
    probe = None
    if beta is not None and u_spec.radial_center() is not None:
        beta = float(beta)
        if not alpha < beta <= 1:
            raise DomainError("probe exponent must satisfy alpha < beta <= 1")
        d0 = float(p.get("delta0", 0.1))
        deltas = d0 * 2.0 ** (-1.2 / (beta - alpha) * np.arange(4))
        q = holder_pair_probe(u_spec, inner, beta, deltas)
        psteps = [_step(d, qi, I) for d, qi in zip(deltas, q)]
        probe = _report(case.estimate, case, psteps, "growing", {"beta": beta})
        q_alpha = holder_pair_probe(u_spec, inner, alpha, deltas)
        details["pair_quotients_at_alpha"] = q_alpha.tolist()
    return _report(case.estimate, case, steps, "bounded", details,
                   _sanity(lhs_seq[-2], lhs_seq[-1]), probe)


# ---------------------------------------------------------------- local mass

def _mass_in(mu, domain) -> float:
    if isinstance(domain, Box):
        return mu.box_mass(domain.bounds)
    return mu.ball_mass(domain.center, domain.radius)


def _integrity(spec: AnalyticFunctionSpec):
    if spec.kind in ("quadratic", "regularized_radial"):
        return None
    # kinks and poles leave O(1e-4) relative negative noise in single cells
    return lambda total: 1e-3 * (abs(total) + 1.0)


def _local_mass_sweep(spec, k, outer, inner, hs, resolution, seed_tol):
    box = bounding_box(outer)
    u = spec.sample(box, resolution)
    inside = outer.distance(u.points) >= -1e-12
    top = float(np.max(np.where(inside, u.values, -np.inf)))
    if top > 1e-12:
        raise PreconditionError(f"u > 0 in the domain (max {top:.3e}); shift by a constant first")
    dx = float(u.spacing.max())
    room = margin(outer, inner)
    if room < max(hs) + 2 * dx:
        raise DomainError(f"subdomain margin {room:.3g} is below h + 2 cells = "
                          f"{max(hs) + 2 * dx:.3g}")
    tol = seed_tol if seed_tol is not None else _integrity(spec)
    integral = -(u.integrate() if isinstance(outer, Box) and outer.bounds == u.box
                 else u.integrate(domain=outer))
    rhs = integral ** k
    lhs = [_mass_in(measure_approx(u, k, h, tol=tol), inner) for h in hs]
    return lhs, rhs, tol


def verify_local_mass(case: EstimateCase) -> EstimateReport:
    """Hessian measure of Omega' against ``(integral_Omega (-u))^k``.

    Each function is swept over the mollification radii in ``schedule``
    (largest first).  For a family, the ratio at the finest radius forms the
    family sequence and every member's radius sweep must stay bounded too.
    The finest radius is re-run at half resolution as a discretization check.
    """
    members = case.family or (_require_function(case),)
    n = members[0].n
    p = case.params
    k = _check_order(p.get("k", n), 1, n)
    outer = case.domain or Box(tuple([(-1.0, 1.0)] * n))
    inner = case.subdomain or Box(tuple([(-0.5, 0.5)] * n))
    res = int(p.get("resolution", 65))
    hs = sorted(case.schedule or (0.4, 0.3, 0.2, 0.15), reverse=True)
    tol = p.get("integrity_tol")
    tol = None if tol is None else (lambda total, t=float(tol): t * (abs(total) + 1.0))
    sweeps, fam_steps = [], []
    for i, spec in enumerate(members):
        lhs, rhs, used_tol = _local_mass_sweep(spec, k, outer, inner, hs, res, tol)
        steps = [_step(h, a, rhs) for h, a in zip(hs, lhs)]
        verdict, _ = classify([s["ratio"] for s in steps])
        sweeps.append({"member": i, "steps": steps, "verdict": verdict})
        param = p.get("family_params", list(range(len(members))))[i]
        fam_steps.append(_step(param, lhs[-1], rhs))
    spec = members[-1]
    coarse, _, _ = _local_mass_sweep(spec, k, outer, inner, hs[-1:], res // 2 + 1, tol)
    sanity = _sanity(coarse[0], fam_steps[-1]["lhs"])
    details = {"k": k, "resolution": res, "h_sweeps": sweeps}
    if len(members) == 1:
        rep = _report(case.estimate, case, sweeps[0]["steps"], "bounded", details, sanity)
    else:
        rep = _report(case.estimate, case, fam_steps, "bounded", details, sanity)
        if rep.verdict == "bounded" and any(s["verdict"] != "bounded" for s in sweeps):
            rep.verdict = "inconclusive"
    return rep


# ---------------------------------------------------------------- gradient bound

def _radial_subcases(R, balls):
    if balls is None:
        return [((0.25 * R,), 0.4 * R), ((0.5 * R,), 0.4 * R), ((0.0,), 0.5 * R)]
    return [(tuple(c), float(r)) for c, r in balls]


def verify_gradient_bound(case: EstimateCase) -> EstimateReport:
    """``R |Du(y)| / osc_{B_R(y)} u`` over balls and refinements.

    With a function, ``Du(y)`` is exact and the oscillation is sampled on
    grids of the resolutions in ``schedule``.  Without one, radial solutions
    of ``F_k = psi`` on balls of the radii in ``params["radii"]`` are computed
    on meshes with ``schedule`` uniform nodes; off-center balls
    ``B_rho(y)`` use the monotone profile, whose extremes lie at ``|y| + rho``
    and ``max(0, |y| - rho)``.  Solutions with relative residual above
    ``params["residual_tol"]`` are rejected.
    """
    p = case.params
    balls = p.get("balls")
    steps, lhs_seq = [], []
    if case.function is not None:
        spec = case.function
        n = spec.n
        if balls is None:
            R = case.domain.radius if isinstance(case.domain, Ball) else 1.0
            balls = [(tuple([0.0] * n), R)]
        for res in case.schedule or (17, 33, 65, 129):
            best = None
            for y, rho in balls:
                y = np.asarray(y, dtype=float)
                _, g, _ = spec.evaluate(y[None], derivatives=True)
                grad = float(np.linalg.norm(g[0]))
                ball = Ball(tuple(y), rho)
                u = spec.sample(bounding_box(ball), int(res))
                inside = ball.distance(u.points) >= -1e-12
                vals = u.values[inside]
                osc = float(vals.max() - vals.min())
                step = _step(res, rho * grad, osc)
                if best is None or step["ratio"] > best["ratio"]:
                    best = step
            steps.append(best)
            lhs_seq.append(best["lhs"])
        details = {"balls": [[list(map(float, y)), r] for y, r in balls]}
        return _report(case.estimate, case, steps, "bounded", details,
                       _sanity(lhs_seq[-2], lhs_seq[-1]))

    n = int(p.get("n", 3))
    k = _check_order(p.get("k", 2), 1, n)
    psi = float(p.get("psi", 1.0))
    radii = p.get("radii", (0.5, 1.0))
    rtol = float(p.get("residual_tol", 1e-6))
    residuals = []
    for nodes in case.schedule or (500, 1000, 2000, 4000):
        best = None
        for R in radii:
            rep = solve_radial(DirichletProblemSpec("radial", n, k, psi, 0.0, R=R,
                                                    mesh=radial_mesh(R, uniform=int(nodes))))
            rel = rep.residual
            residuals.append(rel)
            if rel > rtol:
                raise PreconditionError(f"radial solution rejected: residual {rel:.3e}")
            prof = rep.solution
            for y, rho in _radial_subcases(R, balls):
                s = float(np.linalg.norm(y))
                if s + rho > R * (1 + 1e-12):
                    raise DomainError("ball leaves the solution domain")
                lo = max(s - rho, prof.r[0])
                osc = float(prof(min(s + rho, prof.r[-1])) - prof(lo))
                grad = float(prof.derivative(max(s, prof.r[0])))
                step = _step(nodes, rho * grad, osc)
                if best is None or step["ratio"] > best["ratio"]:
                    best = step
        steps.append(best)
        lhs_seq.append(best["lhs"])
    details = {"n": n, "k": k, "psi": psi, "radii": list(radii),
               "max_relative_residual": float(max(residuals))}
    return _report(case.estimate, case, steps, "bounded", details,
                   _sanity(lhs_seq[-2], lhs_seq[-1]))


# ---------------------------------------------------------------- radial integral estimates

def radial_quadrature(f, rho: float, n: int, inner_scale: float = 1e-6,
                      panels: int = 64, order: int = 16) -> float:
    """``sigma_{n-1} integral_0^rho f(r) r^(n-1) dr`` by composite Gauss-Legendre.

    Panels are geometric from ``inner_scale * 1e-3`` up to ``rho`` (plus the
    panel touching 0), so features at scale ``inner_scale`` are resolved.
    """
    x, w = np.polynomial.legendre.leggauss(order)
    lo = min(inner_scale * 1e-3, rho * 1e-3)
    edges = np.concatenate([[0.0], np.geomspace(lo, rho, panels + 1)])
    a, b = edges[:-1, None], edges[1:, None]
    r = 0.5 * (b - a) * x + 0.5 * (a + b)
    vals = np.asarray(f(r), dtype=float) * r ** (n - 1)
    return float(sphere_area(n) * np.sum(0.5 * (b - a) * w * vals))


def _approximant(spec: AnalyticFunctionSpec, eps: float) -> AnalyticFunctionSpec:
    """Smooth k-convex approximant at parameter ``eps`` (the function itself if smooth)."""
    if spec.kind in ("radial_power", "log_radial"):
        n = spec.n
        a = spec.params.get("exponent", 0.0)
        k = n / 2 if spec.kind == "log_radial" else n / (2 - a)
        k = int(round(k))
        return AnalyticFunctionSpec.wk_regularized(n, k, eps, spec.params["center"])
    if spec.radial_center() is None:
        raise DomainError("radial integral estimates need a radial function")
    return spec


def _radial_terms(spec, shift):
    def parts(r):
        f, d1, d2 = spec.radial(r)
        return f - shift, d1, d2
    return parts


def _fl(d1, d2, r, n, l):
    if l == 0:
        return np.ones_like(r)
    return radial_eigen_fk(d1, d2, r, n, l)


def _integral_estimate(case, weight, exponent_sum, expected, schedule, panels):
    spec0 = _require_function(case)
    n = spec0.n
    p = case.params
    l = int(p.get("l", 0))
    R = case.domain.radius if case.domain is not None else 1.0
    rho = case.subdomain.radius if case.subdomain is not None else 0.5 * R
    steps, sanity = [], None
    for i, eps in enumerate(schedule):
        spec = _approximant(spec0, eps)
        top = float(spec.radial(np.array([R]))[0][0])
        parts = _radial_terms(spec, max(0.0, top))

        def lhs_f(r):
            f, d1, d2 = parts(r)
            return weight(f, d1) * _fl(d1, d2, r, n, l)

        def mass_f(r):
            return np.abs(parts(r)[0])

        lhs = radial_quadrature(lhs_f, rho, n, eps, panels)
        rhs = radial_quadrature(mass_f, R, n, eps, panels) ** exponent_sum
        steps.append(_step(eps, lhs, rhs))
        if i == len(schedule) - 1:
            sanity = _sanity(radial_quadrature(lhs_f, rho, n, eps, panels // 2), lhs)
    details = {"l": l, "R": R, "rho": rho, "panels": panels}
    return _report(case.estimate, case, steps, expected, details, sanity)


def critical_gradient_exponent(n: int, k: int, l: int) -> float:
    return math.inf if k == n else n * (k - l) / (n - k)


def verify_gradient_integral(case: EstimateCase) -> EstimateReport:
    """``integral_{Omega'} |Du_eps|^q F_l[u_eps]`` against ``(integral_Omega |u_eps|)^(q+l)``.

    ``u_eps`` are the regularized fundamental solutions (or the function
    itself when smooth), shifted down to be nonpositive on Omega, and both
    integrals are exact radial quadratures.  Above the critical exponent
    ``n(k-l)/(n-k)`` the expected verdict is ``growing``; the default
    schedule then shrinks eps by ``2^(-1.2/gamma)`` per step with
    ``gamma = (q - crit)(n-k)/k`` so a divergence ``eps^(-gamma)`` more than
    doubles each step.
    """
    spec = _require_function(case)
    n = spec.n
    p = case.params
    k = _check_order(p.get("k", 1), 1, n)
    l = int(p.get("l", 0))
    if not 0 <= l <= k - 1:
        raise DomainError("need 0 <= l <= k-1")
    q = float(p.get("q", 1.0))
    if q < 0:
        raise DomainError("q must be nonnegative")
    crit = critical_gradient_exponent(n, k, l)
    smooth = spec.kind not in ("radial_power", "log_radial")
    expected = "growing" if (q > crit and not smooth) else "bounded"
    schedule = case.schedule
    if schedule is None:
        if expected == "growing":
            gamma = (q - crit) * (n - k) / k
            schedule = tuple(2.0 ** (-4 - 1.2 / gamma * j) for j in range(4))
        else:
            schedule = tuple(2.0 ** (-2 * j - 2) for j in range(5))
    rep = _integral_estimate(case, lambda f, d1: np.abs(d1) ** q, q + l, expected, schedule,
                             int(p.get("panels", 64)))
    rep.details.update({"k": k, "q": q, "critical_q": crit})
    return rep


def verify_uq_integral(case: EstimateCase) -> EstimateReport:
    """``integral_{Omega'} |u_eps|^q F_l[u_eps]`` against ``(integral_Omega |u_eps|)^(l+q)`` for ``k <= n/2``."""
    spec = _require_function(case)
    n = spec.n
    p = case.params
    k = _check_order(p.get("k", 1), 1, n)
    if 2 * k > n:
        raise DomainError("this estimate needs k <= n/2")
    l = int(p.get("l", 0))
    if not 0 <= l <= k - 1:
        raise DomainError("need 0 <= l <= k-1")
    q = float(p.get("q", 1.0))
    bound = math.inf if 2 * k == n else n * (k - l) / (n - 2 * k)
    if not 0 <= q < bound:
        raise PreconditionError(f"q must lie in [0, {bound})")
    schedule = case.schedule or tuple(2.0 ** (-2 * j - 2) for j in range(5))
    rep = _integral_estimate(case, lambda f, d1: np.abs(f) ** q, l + q, "bounded", schedule,
                             int(p.get("panels", 64)))
    rep.details.update({"k": k, "q": q, "q_bound": bound})
    return rep


# ---------------------------------------------------------------- p-l convexity

def critical_p(n: int, k: int, l: int) -> float:
    if k == n:
        raise DomainError("no finite critical exponent for k = n")
    return 1.0 + k * (n - l) / (l * (n - k))


def _random_rotations(n, size, rng):
    Q, R = np.linalg.qr(rng.standard_normal((size, n, n)))
    return Q * np.sign(np.diagonal(R, axis1=1, axis2=2))[:, None, :]


def pl_samples(n: int, k: int, size: int, rng):
    """Random ``(g, H)`` with ``lambda(H)`` in Gamma_k and random eigenvectors."""
    lam = cones.sample_gamma(n, k, size, rng)
    Q = _random_rotations(n, size, rng)
    H = np.einsum("sij,sj,skj->sik", Q, lam, Q)
    g = rng.standard_normal((size, n)) * rng.choice([1e-2, 1.0, 10.0], size=size)[:, None]
    return g, H


def _pl_values(g, H, l, p):
    vals = pk_hessian_pointwise(g, H, l, p)
    lam_max = np.abs(np.linalg.eigvalsh(H)).max(axis=-1)
    scale = (np.linalg.norm(g, axis=-1) ** (p - 2) * max(1.0, p - 1) * lam_max) ** l
    return np.asarray(vals) / np.maximum(scale, 1e-300)


def verify_pl_convexity(case: EstimateCase) -> EstimateReport:
    """Sampled check that k-convex Hessians are (p, l)-convex up to the critical p.

    Normalized values ``[M]_l / scale`` must be ``>= -tol``; the literal
    exponent ``2 + n(k-l)/(n-k)`` is evaluated too and recorded only.  The
    Frobenius bound ``|H| <= trace H`` is checked on 2-convex samples.
    User samples (``params["samples"]`` as ``[g, H]`` pairs) outside Gamma_k
    are rejected and counted.
    """
    p = case.params
    n = int(p.get("n", 3))
    k = _check_order(p.get("k", 2), 1, n)
    l = _check_order(p.get("l", 1), 1, max(1, k - 1))
    if l > k - 1:
        raise DomainError("need 1 <= l <= k-1")
    pp = float(p["p"]) if p.get("p") is not None else critical_p(n, k, l)
    if pp < 2:
        raise DomainError("p must be >= 2")
    tol = float(p.get("tol", 1e-9))
    size = int(p.get("samples_count", 10_000))
    rng = np.random.default_rng(case.seed)
    rejected = 0
    if p.get("samples") is not None:
        g = np.array([s[0] for s in p["samples"]], dtype=float)
        H = np.array([s[1] for s in p["samples"]], dtype=float)
        H = 0.5 * (H + np.swapaxes(H, -1, -2))
        ok = cones.gamma_margin(np.linalg.eigvalsh(H), k) >= -1e-12
        rejected = int(np.sum(~ok))
        g, H = g[ok], H[ok]
    else:
        g, H = pl_samples(n, k, size, rng)
    vals = _pl_values(g, H, l, pp)
    worst = float(vals.min()) if vals.size else 0.0
    bad = int(np.sum(vals < -tol))
    literal = 2.0 + n * (k - l) / (n - k)
    lit_vals = _pl_values(g, H, l, literal)

    lam2 = cones.sample_gamma(3, 2, size, rng)
    Q = _random_rotations(3, size, rng)
    H2 = np.einsum("sij,sj,skj->sik", Q, lam2, Q)
    fro = np.linalg.norm(H2, axis=(1, 2))
    tr = np.trace(H2, axis1=1, axis2=2)
    frob_bad = int(np.sum(fro > tr + 1e-10 * np.maximum(1.0, fro)))

    steps = [_step(pp, worst, -tol, bad)]
    details = {"n": n, "k": k, "l": l, "p": pp, "samples": int(vals.size), "rejected": rejected,
               "negatives": bad, "literal_p": literal,
               "literal_p_negatives": int(np.sum(lit_vals < -tol)),
               "literal_p_worst": float(lit_vals.min()) if lit_vals.size else 0.0,
               "frobenius_samples": size, "frobenius_violations": frob_bad,
               "frobenius_worst_excess": float((fro - tr).max())}
    verdict = "holds" if bad == 0 and frob_bad == 0 else "violated"
    return EstimateReport(case.estimate, steps, float(bad), verdict, None, "holds", details,
                          None, case.label)


# ---------------------------------------------------------------- L1 bound

def _profile_l1(prof) -> float:
    r, u = prof.r, np.abs(prof.u)
    f = u * r ** (prof.n - 1)
    return float(sphere_area(prof.n) * np.sum(0.5 * np.diff(r) * (f[1:] + f[:-1])))


def verify_l1_bound(case: EstimateCase) -> EstimateReport:
    """``integral |u|`` against ``d^m (max|phi| + d^(2-n/k) nu(Omega)^(1/k))`` on balls ``B_d``.

    For each mesh level in ``schedule`` the radial solver runs on every
    radius ``d`` in ``params["radii"]``; ``log C`` and ``m`` come from a least
    squares fit of ``log(LHS/bracket)`` against ``log d``.  The ratio per
    level is the fitted ``C``.
    """
    p = case.params
    n = int(p.get("n", 3))
    k = _check_order(p.get("k", 1), 1, n)
    psi = float(p.get("psi", 0.0))
    atom = float(p.get("atom", 4 * math.pi))
    phi = float(p.get("phi", 0.0))
    radii = np.asarray(p.get("radii", (0.5, 1.0, 2.0)), dtype=float)
    if radii.size < 2:
        raise DomainError("need at least two radii to fit the exponent")
    rtol = float(p.get("residual_tol", 1e-6))
    steps, fits, lhs_seq = [], [], []
    for nodes in case.schedule or (500, 1000, 2000, 4000):
        lhs, brk = [], []
        for d in radii:
            atoms = [(tuple([0.0] * n), atom)] if atom > 0 else []
            rep = solve_radial(DirichletProblemSpec("radial", n, k, psi, phi, atoms, R=float(d),
                                                    mesh=radial_mesh(float(d), uniform=int(nodes))))
            res = rep.residual
            if res > rtol:
                raise PreconditionError(f"radial solution rejected: residual {res:.3e}")
            lhs.append(_profile_l1(rep.solution))
            nu = atom + psi * ball_volume(n) * d ** n
            brk.append(abs(phi) + d ** (2.0 - n / k) * nu ** (1.0 / k))
        lhs, brk = np.array(lhs), np.array(brk)
        if np.any(brk <= 0):
            raise DomainError("trivial data: the right-hand side vanishes")
        m, logc = np.polyfit(np.log(radii), np.log(lhs / brk), 1)
        C = float(np.exp(logc))
        steps.append(_step(nodes, lhs[-1], C * radii[-1] ** m * brk[-1], C))
        fits.append({"nodes": int(nodes), "m": float(m), "C": C,
                     "lhs": lhs.tolist(), "bracket": brk.tolist()})
        lhs_seq.append(lhs[-1])
    details = {"n": n, "k": k, "radii": radii.tolist(), "fitted_m": fits[-1]["m"],
               "fitted_C": fits[-1]["C"], "fits": fits}
    return _report(case.estimate, case, steps, "bounded", details,
                   _sanity(lhs_seq[-2], lhs_seq[-1]))


# ---------------------------------------------------------------- dispatch

VERIFIERS = {
    "interp_2_12": verify_interpolation,
    "holder_2_13": verify_holder,
    "mass_3_1": verify_local_mass,
    "gradbound_3_4": verify_gradient_bound,
    "gradint_4_1": verify_gradient_integral,
    "plconvex_4_2": verify_pl_convexity,
    "uq_4_3": verify_uq_integral,
    "l1bound_6_3": verify_l1_bound,
}


def verify(case: EstimateCase) -> EstimateReport:
    return VERIFIERS[case.estimate](case)


def run_cases(cases, jobs: int = 1) -> list:
    """Verify independent cases, in a process pool when ``jobs > 1``; order is preserved."""
    cases = list(cases)
    if jobs <= 1 or len(cases) <= 1:
        return [verify(c) for c in cases]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(verify, cases))


def builtin_cases() -> list:
    """The estimate cases of the acceptance suite."""
    W = AnalyticFunctionSpec
    quad = W.quadratic(np.eye(2), c=-1.0)
    levels = (2, 4, 8, 16, 32)
    trunc = tuple(W.truncate(W.wk(3, 1), m) for m in levels)
    return [
        EstimateCase("mass_3_1", quad, params={"k": 2}, label="quadratic n=2 k=2"),
        EstimateCase("mass_3_1", family=trunc, params={"k": 1, "resolution": 96,
                                                       "family_params": list(levels)},
                     schedule=(0.4, 0.3, 0.25, 0.2), label="truncated w1 n=3"),
        EstimateCase("gradint_4_1", W.wk(3, 1), params={"k": 1, "l": 0, "q": 1.0},
                     label="w1 n=3 q=1"),
        EstimateCase("gradint_4_1", W.wk(3, 1), params={"k": 1, "l": 0, "q": 1.6},
                     probe=True, label="w1 n=3 q=1.6 probe"),
        EstimateCase("uq_4_3", W.wk(4, 2), params={"k": 2, "l": 1, "q": 1.0},
                     label="log n=4 k=2 l=1 q=1"),
        EstimateCase("interp_2_12", W.wk(3, 2), params={"alpha": 0.5}, label="w2 n=3"),
        EstimateCase("holder_2_13", W.wk(3, 2), params={"k": 2, "beta": 0.6},
                     label="w2 n=3 with beta=0.6 probe"),
        EstimateCase("gradbound_3_4", params={"n": 3, "k": 2, "psi": 1.0, "radii": [0.5, 1.0]},
                     label="radial F_2 = 1 n=3"),
        EstimateCase("l1bound_6_3", params={"n": 3, "k": 1, "atom": 4 * math.pi},
                     label="atom 4pi n=3 k=1"),
        EstimateCase("plconvex_4_2", params={"n": 3, "k": 2, "l": 1}, label="n=3 k=2 l=1"),
    ]
