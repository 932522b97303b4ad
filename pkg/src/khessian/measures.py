"""Discrete k-Hessian measures and weak-convergence diagnostics.

The measure of a k-convex ``u`` is approximated by ``F_k[u_h] dx`` for a
mollification ``u_h``: mollify on the grid, apply the stencil operator and
multiply by the cell volume.  Point masses therefore show up as concentrated
cell masses.  They are quantified by ball totals.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field
from typing import Sequence

import numpy as np
from scipy.integrate import quad

from .analytic import AnalyticFunctionSpec, sphere_area
from .errors import DomainError, IntegrityError
from .field import MollifierKernel, ScalarField, hessian_operator, mollify
from .symmetric import _check_order, binom


# ---------------------------------------------------------------- measures

@dataclass(frozen=True, eq=False)
class DiscreteMeasure:
    """Cell masses ``F_k[u_h](p) * cell volume`` on a uniform grid.

    ``cell_mass`` has the grid shape; the boundary ring of the grid carries
    zero mass.
    """

    box: tuple
    cell_mass: np.ndarray
    k: int
    h: float

    @property
    def n(self) -> int:
        return self.cell_mass.ndim

    @property
    def resolution(self) -> tuple:
        return self.cell_mass.shape

    @property
    def spacing(self) -> np.ndarray:
        return np.array([(b - a) / (r - 1) for (a, b), r in zip(self.box, self.resolution)])

    @property
    def points(self) -> np.ndarray:
        axes = [np.linspace(a, b, r) for (a, b), r in zip(self.box, self.resolution)]
        return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)

    def total(self) -> float:
        return float(self.cell_mass.sum())

    def min_mass(self) -> float:
        return float(self.cell_mass.min())

    def ball_mass(self, center, radius: float) -> float:
        d = np.linalg.norm(self.points - np.asarray(center, dtype=float), axis=-1)
        return float(self.cell_mass[d <= radius].sum())

    def box_mass(self, sub_box) -> float:
        """Mass of a closed sub-box; nodes on its faces count with trapezoid weights."""
        pts = self.points
        w = np.ones(self.resolution)
        for i, ((a, b), dx) in enumerate(zip(sub_box, self.spacing)):
            x = pts[..., i]
            eps = 1e-9 * dx
            w *= np.where((x < a - eps) | (x > b + eps), 0.0,
                          np.where((np.abs(x - a) <= eps) | (np.abs(x - b) <= eps), 0.5, 1.0))
        return float(np.sum(self.cell_mass * w))


def default_tolerance(total: float) -> float:
    """Negative-mass tolerance for measures of smooth k-convex inputs."""
    return 1e-8 * (abs(total) + 1.0)


def _as_field(u, box, resolution):
    if isinstance(u, ScalarField):
        return u
    if box is None or resolution is None:
        raise DomainError("box and resolution are required to sample a function")
    if isinstance(u, AnalyticFunctionSpec):
        return u.sample(box, resolution)
    return ScalarField.from_function(u, box, resolution)


def measure_approx(u, k: int, h: float, box=None, resolution=None, tol=None,
                   method: str = "minors") -> DiscreteMeasure:
    """Approximate ``mu_k[u]`` by ``F_k[u_h]`` times the cell volume.

    ``u`` is a :class:`ScalarField` or a function (sampled on ``box`` at
    ``resolution``).  ``tol`` bounds how negative a cell may be; it defaults to
    :func:`default_tolerance` of the total mass, and may be a callable of the
    total.  Cells below ``-tol`` raise :class:`IntegrityError`.
    """
    field = _as_field(u, box, resolution)
    k = _check_order(k, 1, field.n)
    uh = mollify(field, MollifierKernel(h, field.n))
    F = hessian_operator(uh, k, method=method)
    mass = np.nan_to_num(F.values, nan=0.0) * uh.cell_volume
    total = float(mass.sum())
    if tol is None:
        tol = default_tolerance(total)
    elif callable(tol):
        tol = tol(total)
    worst = float(mass.min())
    if worst < -tol:
        raise IntegrityError(f"cell mass {worst:.3e} below -{tol:.3e}: input not {k}-convex "
                             f"or grid too coarse for h = {h}")
    return DiscreteMeasure(uh.box, mass, k, float(h))


# ---------------------------------------------------------------- test functions

@dataclass(frozen=True)
class TestFunctionSpec:
    """Compactly supported test function with values in ``[0, 1]``.

    ``bump``:   ``exp(1 - 1/(1 - s^2))``, ``s = |x - center|/radius``
    ``cosine``: ``prod_i cos^2(pi (x_i - c_i) / (2 a_i))`` on ``|x_i - c_i| < a_i``
    """

    __test__ = False  # keep pytest from collecting this class

    kind: str
    center: tuple
    radius: tuple  # one entry for bumps, one per axis for cosine windows

    def __post_init__(self):
        if self.kind not in ("bump", "cosine"):
            raise DomainError(f"unknown test function kind {self.kind!r}")
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))
        rad = np.atleast_1d(np.asarray(self.radius, dtype=float))
        if self.kind == "cosine" and rad.size == 1:
            rad = np.repeat(rad, len(self.center))
        if np.any(rad <= 0):
            raise DomainError("test function radius must be positive")
        object.__setattr__(self, "radius", tuple(float(r) for r in rad))

    @classmethod
    def bump(cls, center, radius):
        return cls("bump", center, (radius,))

    @classmethod
    def cosine(cls, center, half_widths):
        return cls("cosine", center, half_widths)

    @property
    def n(self) -> int:
        return len(self.center)

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        y = x - np.asarray(self.center)
        if self.kind == "bump":
            s2 = (y ** 2).sum(axis=-1) / self.radius[0] ** 2
            out = np.zeros(s2.shape)
            inside = s2 < 1
            out[inside] = np.exp(1.0 - 1.0 / (1.0 - s2[inside]))
            return out
        a = np.asarray(self.radius)
        inside = np.all(np.abs(y) < a, axis=-1)
        vals = np.prod(np.cos(0.5 * math.pi * y / a) ** 2, axis=-1)
        return np.where(inside, vals, 0.0)

    def radial_profile(self, r):
        """Profile ``eta(r)`` of a bump (radial about its center)."""
        if self.kind != "bump":
            raise DomainError("only bumps are radial")
        s2 = np.asarray(r, dtype=float) ** 2 / self.radius[0] ** 2
        with np.errstate(divide="ignore", over="ignore"):
            return np.where(s2 < 1, np.exp(1.0 - 1.0 / (1.0 - np.minimum(s2, 1 - 1e-300))), 0.0)

    def radial_derivative(self, r):
        r = np.asarray(r, dtype=float)
        R2 = self.radius[0] ** 2
        s2 = r * r / R2
        with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
            d = -2.0 * r / R2 / (1.0 - s2) ** 2
            return np.where(s2 < 1, d * self.radial_profile(r), 0.0)

    def support_box(self) -> tuple:
        rad = self.radius * self.n if self.kind == "bump" else self.radius
        return tuple((c - r, c + r) for c, r in zip(self.center, rad))

    def to_dict(self) -> dict:
        return {"kind": self.kind, "center": list(self.center), "radius": list(self.radius)}

    @classmethod
    def from_dict(cls, d) -> "TestFunctionSpec":
        rad = d["radius"]
        return cls(d["kind"], d["center"], rad if np.ndim(rad) else (rad,))


def weak_pairing(mu: DiscreteMeasure, eta: TestFunctionSpec) -> float:
    """``sum_p eta(p) * mass(p)``; the support must lie inside the grid interior."""
    if eta.n != mu.n:
        raise DomainError("test function dimension does not match the measure")
    sp = mu.spacing
    for (a, b), (lo, hi), d in zip(mu.box, eta.support_box(), sp):
        if lo < a + d or hi > b - d:
            raise DomainError("test function support leaves the interior of the measure grid")
    return float(np.sum(eta(mu.points) * mu.cell_mass))


# ---------------------------------------------------------------- schedules

def h_schedule(spacing: float, steps: int = 5, ratio: float = 0.5, cells: float = 8.0,
               h_max: float | None = None) -> list:
    """Geometric mollifier radii whose smallest member spans ``cells`` grid steps.

    The schedule is listed coarse to fine.  Radii above ``h_max`` are
    dropped, so a small box may shorten the schedule.
    """
    finest = cells * spacing
    hs = [finest / ratio ** (steps - 1 - i) for i in range(steps)]
    if h_max is not None:
        hs = [h for h in hs if h <= h_max]
    if not hs:
        raise DomainError("no admissible mollifier radius for this grid")
    return hs


# ---------------------------------------------------------------- atoms

@dataclass(frozen=True)
class AtomMassReport:
    hs: list
    masses: list
    extrapolated: float
    order: float
    verdict: str

    def to_dict(self) -> dict:
        return {"h": self.hs, "mass": self.masses, "extrapolated": self.extrapolated,
                "order": self.order, "verdict": self.verdict}


def richardson(hs: Sequence, values: Sequence, flat_tol: float = 1e-6):
    """Extrapolate ``values(h) -> h = 0`` from the three finest entries.

    The order ``p`` in ``v(h) = v0 + c h^p`` is fitted, not assumed.  Returns
    ``(v0, p, verdict)``; a sequence whose last changes are below ``flat_tol``
    relative is taken as converged without extrapolation, and a non-monotone
    tail is ``"inconclusive"``.
    """
    hs = np.asarray(hs, dtype=float)
    v = np.asarray(values, dtype=float)
    order = np.argsort(-hs)
    hs, v = hs[order], v[order]
    scale = max(abs(v[-1]), 1e-300)
    if v.size >= 2 and np.all(np.abs(np.diff(v[-3:])) <= flat_tol * scale):
        return float(v[-1]), math.nan, "converged"
    if v.size < 3:
        return float(v[-1]), math.nan, "inconclusive"
    d1, d2 = v[-2] - v[-3], v[-1] - v[-2]
    if d1 * d2 <= 0 or abs(d2) >= abs(d1):
        return float(v[-1]), math.nan, "inconclusive"
    q = hs[-2] / hs[-1]
    p = math.log(abs(d1 / d2)) / math.log(q)
    v0 = v[-1] + d2 / (q ** p - 1.0)
    return float(v0), float(p), "converged"


def atom_mass(u, k: int, center, hs: Sequence, radius: float, box, resolution,
              tol=None) -> AtomMassReport:
    """Ball mass of ``mu_k[u]`` around ``center``, extrapolated in ``h``.

    ``u`` is sampled on ``box`` (use an even resolution on a box symmetric
    about ``center`` so the pole sits between nodes).  ``tol`` defaults to a
    relative ``1e-3`` of the total, which accommodates the stencil noise of
    singular inputs.
    """
    if not radius > max(hs):
        raise DomainError("ball radius must exceed the largest mollifier radius")
    field = _as_field(u, box, resolution)
    if tol is None:
        tol = lambda total: 1e-3 * (abs(total) + 1.0)
    masses = []
    for h in hs:
        mu = measure_approx(field, k, h, tol=tol)
        masses.append(mu.ball_mass(center, radius))
    v0, p, verdict = richardson(hs, masses)
    return AtomMassReport([float(h) for h in hs], masses, v0, p, verdict)


# ---------------------------------------------------------------- radial measures

def radial_mass_function(spec: AnalyticFunctionSpec, k: int, r):
    """``mu_k[u](B_r) = sigma_{n-1} C(n-1,k-1)/k * r^(n-k) (phi')^k`` for radial ``u``."""
    n = spec.n
    r = np.asarray(r, dtype=float)
    _, d1, _ = spec.radial(r)
    return sphere_area(n) * binom(n - 1, k - 1) / k * r ** (n - k) * d1 ** k


def radial_pairing(spec: AnalyticFunctionSpec, k: int, eta: TestFunctionSpec,
                   breakpoints=()) -> float:
    """``integral eta dmu_k[u]`` for radial ``u`` and a bump centred at its pole.

    Integration by parts gives ``-integral_0^R M(r) eta'(r) dr`` with
    ``M(r) = mu_k[u](B_r)``, so only ``phi'`` is needed.
    """
    if eta.kind != "bump" or spec.radial_center() is None or \
            not np.allclose(eta.center, spec.radial_center()):
        raise DomainError("radial pairing needs a bump centred at the pole of a radial function")
    R = eta.radius[0]
    f = lambda s: -float(radial_mass_function(spec, k, s)) * float(eta.radial_derivative(s))
    pts = sorted(b for b in breakpoints if 0 < b < R)
    val, _ = quad(f, 0.0, R, points=pts or None, limit=400, epsabs=1e-13, epsrel=1e-12)
    return float(val)


def radial_l1_distance(a: AnalyticFunctionSpec, b: AnalyticFunctionSpec, R: float,
                       breakpoints=()) -> float:
    """``integral_{B_R} |a - b|`` for two functions radial about the same point."""
    n = a.n
    f = lambda s: s ** (n - 1) * abs(float(a.radial(s)[0]) - float(b.radial(s)[0]))
    pts = sorted(p for p in breakpoints if 0 < p < R)
    val, _ = quad(f, 0.0, R, points=pts or None, limit=400, epsabs=1e-13, epsrel=1e-11)
    return sphere_area(n) * float(val)


# ---------------------------------------------------------------- weak continuity

@dataclass
class ConvergenceReport:
    """Pairing discrepancies along a sequence, per mollifier radius and test function.

    ``discrepancy[i][j][m]`` belongs to ``schedule[i]``, test function ``j``
    and sequence member ``m``; ``reference[i][j]`` is the limit pairing.
    """

    schedule: list
    labels: list
    reference: list
    pairings: list
    discrepancy: list
    l1: list
    trend: float
    verdict: str
    tolerance: float
    max_inversions: int = 1
    notes: list = dc_field(default_factory=list)

    def relative_final(self) -> list:
        """Final relative discrepancy at the finest radius, per test function."""
        out = []
        if not self.reference:
            return out
        for ref, disc in zip(self.reference[-1], self.discrepancy[-1]):
            out.append(abs(disc[-1]) / max(abs(ref), 1e-300))
        return out

    def to_dict(self) -> dict:
        return {"schedule": self.schedule, "labels": self.labels, "reference": self.reference,
                "pairings": self.pairings, "discrepancy": self.discrepancy, "l1": self.l1,
                "trend": self.trend, "verdict": self.verdict, "tolerance": self.tolerance,
                "max_inversions": self.max_inversions, "relative_final": self.relative_final(),
                "notes": self.notes}

    def rows(self) -> list:
        """Long format: one row per (member, h, test function)."""
        out = []
        for i, h in enumerate(self.schedule):
            for j, ref in enumerate(self.reference[i]):
                for m, (p, d) in enumerate(zip(self.pairings[i][j], self.discrepancy[i][j])):
                    out.append({"m": m, "label": self.labels[m], "h": h, "eta": j,
                                "pairing": p, "reference": ref, "discrepancy": d,
                                "l1": self.l1[m]})
        return out


def count_inversions(seq) -> int:
    """Number of steps where ``|seq|`` increases."""
    a = np.abs(np.asarray(seq, dtype=float))
    return int(np.sum(np.diff(a) > 0))


def _verdict(reference, discrepancy, l1, tolerance, max_inversions):
    rel_final = [abs(d[-1]) / max(abs(r), 1e-300) for r, d in zip(reference, discrepancy)]
    inv = [count_inversions(d) for d in discrepancy]
    ok = all(x < tolerance for x in rel_final) and all(i <= max_inversions for i in inv)
    tail = [np.abs(np.asarray(d, dtype=float)) for d in discrepancy]
    rates = []
    for t in tail:
        t = t[t > 0]
        if t.size >= 2:
            rates.append(math.log(t[0] / t[-1]) / (t.size - 1))
    trend = float(np.mean(rates)) if rates else math.inf
    return ("converged" if ok else "diverged"), trend, rel_final, inv


def weak_continuity_experiment(sequence: Sequence, limit, k: int, test_functions: Sequence,
                               hs: Sequence, box=None, resolution=None, tolerance: float = 1e-2,
                               max_inversions: int = 1, labels=None, tol=None,
                               l1_growth: float = 1.5) -> ConvergenceReport:
    """Track ``integral eta dmu_k[u_m] - integral eta dmu_k[u]`` along a sequence on a grid.

    Every member and the limit are sampled on the same grid, mollified at
    each radius in ``hs`` and paired with each test function.  The L1
    distances to the limit are computed first; a sequence whose last
    distance exceeds ``l1_growth`` times its first is rejected.
    """
    k = _check_order(k, 1, len(box))
    lim = _as_field(limit, box, resolution)
    fields = [_as_field(s, box, resolution) for s in sequence]
    labels = labels or [str(i) for i in range(len(fields))]
    l1 = [f.with_values(np.abs(np.where((f.values <= f.clamp) | (lim.values <= lim.clamp), 0.0,
                                        f.values - lim.values))).integrate() for f in fields]
    if l1 and l1[-1] > l1_growth * max(l1[0], 1e-300):
        raise DomainError(f"sequence does not approach the limit in L1 (distances {l1})")
    if tol is None:
        tol = lambda total: 1e-3 * (abs(total) + 1.0)
    reference, pairings, discrepancy = [], [], []
    for h in hs:
        mu_lim = measure_approx(lim, k, h, tol=tol)
        ref = [weak_pairing(mu_lim, eta) for eta in test_functions]
        per_eta = [[] for _ in test_functions]
        for f in fields:
            mu = measure_approx(f, k, h, tol=tol)
            for j, eta in enumerate(test_functions):
                per_eta[j].append(weak_pairing(mu, eta))
        reference.append(ref)
        pairings.append(per_eta)
        discrepancy.append([[p - r for p in ps] for ps, r in zip(per_eta, ref)])
    verdict, trend, _, _ = _verdict(reference[-1], discrepancy[-1], l1, tolerance, max_inversions)
    return ConvergenceReport([float(h) for h in hs], labels, reference, pairings, discrepancy,
                             l1, trend, verdict, tolerance, max_inversions)


def radial_weak_continuity(sequence: Sequence, limit: AnalyticFunctionSpec, k: int,
                           test_functions: Sequence, R: float, tolerance: float = 1e-2,
                           max_inversions: int = 1, labels=None,
                           breakpoints=None) -> ConvergenceReport:
    """Weak-continuity experiment for radial functions using exact flux measures.

    Runs in any dimension; ``breakpoints[m]`` lists radii where member ``m``
    has a kink (truncation spheres), for the quadrature.
    """
    labels = labels or [str(i) for i in range(len(sequence))]
    breakpoints = breakpoints or [()] * len(sequence)
    l1 = [radial_l1_distance(s, limit, R, bp) for s, bp in zip(sequence, breakpoints)]
    if l1 and l1[-1] > 1.5 * max(l1[0], 1e-300):
        raise DomainError(f"sequence does not approach the limit in L1 (distances {l1})")
    ref = [radial_pairing(limit, k, eta) for eta in test_functions]
    per_eta = [[radial_pairing(s, k, eta, bp) for s, bp in zip(sequence, breakpoints)]
               for eta in test_functions]
    disc = [[p - r for p in ps] for ps, r in zip(per_eta, ref)]
    verdict, trend, _, _ = _verdict(ref, disc, l1, tolerance, max_inversions)
    return ConvergenceReport([0.0], labels, [ref], [per_eta], [disc], l1, trend, verdict,
                             tolerance, max_inversions, notes=["exact radial measures (h = 0)"])
