"""Closed-form test functions and the exact radial k-Hessian machinery.

Radial functions ``u(x) = phi(|x - c|)`` have Hessian eigenvalues
``(phi'', phi'/r, ..., phi'/r)``, and the k-Hessian can be written as a
derivative::

    F_k[u] = C(n-1, k-1)/k * r^(1-n) * d/dr [ r^(n-k) (phi')^k ]

This flux form turns radial Dirichlet problems and atom masses into
quadratures.  It is checked against the eigenvalue form in the tests.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field
from typing import Callable, Sequence

import numpy as np
from scipy.interpolate import CubicHermiteSpline

from .errors import DomainError
from .field import DEFAULT_CLAMP, KConvexityReport, ScalarField
from .symmetric import _check_order, binom, elem_sym_all

RADIAL_KINDS = ("radial_power", "log_radial", "regularized_radial")
KINDS = ("quadratic",) + RADIAL_KINDS + ("max_composite", "sum_composite", "truncation")


def sphere_area(n: int) -> float:
    """Area of the unit sphere in R^n (``sigma_{n-1} = n * omega_n``)."""
    return 2 * math.pi ** (n / 2) / math.gamma(n / 2)


def ball_volume(n: int) -> float:
    return math.pi ** (n / 2) / math.gamma(n / 2 + 1)


def wk_exponent(n: int, k: int) -> float:
    return 2.0 - n / k


# ---------------------------------------------------------------- function specs

@dataclass(frozen=True, eq=False)
class AnalyticFunctionSpec:
    """A closed-form function of ``x`` in R^n with exact derivatives.

    Kinds and parameters:

    ``quadratic``           ``A`` (n x n), ``b`` (n), ``c``: ``x.A.x/2 + b.x + c``
    ``radial_power``        ``exponent``, ``center``, ``sign``: ``sign |x-c|^exponent``
    ``log_radial``          ``center``: ``log |x-c|``
    ``regularized_radial``  ``exponent``, ``center``, ``sign``, ``eps``:
                            ``sign (|x-c|^2 + eps^2)^(exponent/2)``, or
                            ``log(|x-c|^2 + eps^2)/2`` when ``exponent == 0``
    ``max_composite``       ``members``: pointwise maximum
    ``sum_composite``       ``members``: pointwise sum
    ``truncation``          ``inner``, ``level``: ``max(inner, -level)``
    """

    kind: str
    params: dict = dc_field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise DomainError(f"unknown function kind {self.kind!r}")

    # -- construction helpers
    @classmethod
    def quadratic(cls, A, b=None, c=0.0):
        A = np.atleast_2d(np.asarray(A, dtype=float))
        b = np.zeros(A.shape[0]) if b is None else np.asarray(b, dtype=float)
        return cls("quadratic", {"A": 0.5 * (A + A.T), "b": b, "c": float(c)})

    @classmethod
    def constant(cls, n, c):
        return cls.quadratic(np.zeros((n, n)), None, c)

    @classmethod
    def wk(cls, n: int, k: int, center=None):
        """The fundamental k-convex function with pole at ``center``."""
        k = _check_order(k, 1, n)
        center = tuple(np.zeros(n) if center is None else np.asarray(center, float))
        if 2 * k == n:
            return cls("log_radial", {"center": center})
        sign = 1.0 if 2 * k > n else -1.0
        return cls("radial_power", {"exponent": wk_exponent(n, k), "center": center, "sign": sign})

    @classmethod
    def wk_regularized(cls, n: int, k: int, eps: float, center=None):
        """Smooth k-convex approximant of :meth:`wk`, decreasing to it as ``eps -> 0``."""
        k = _check_order(k, 1, n)
        if not eps > 0:
            raise DomainError("eps must be positive")
        center = tuple(np.zeros(n) if center is None else np.asarray(center, float))
        beta = 0.0 if 2 * k == n else wk_exponent(n, k)
        sign = 1.0 if 2 * k >= n else -1.0
        return cls("regularized_radial",
                   {"exponent": beta, "center": center, "sign": sign, "eps": float(eps)})

    @classmethod
    def maximum(cls, *members):
        return cls("max_composite", {"members": tuple(members)})

    @classmethod
    def total(cls, *members):
        return cls("sum_composite", {"members": tuple(members)})

    @classmethod
    def truncate(cls, inner, level):
        return cls("truncation", {"inner": inner, "level": float(level)})

    # -- structure
    @property
    def n(self) -> int:
        if self.kind == "quadratic":
            return self.params["A"].shape[0]
        if self.kind in RADIAL_KINDS:
            return len(self.params["center"])
        if self.kind == "truncation":
            return self.params["inner"].n
        return self.params["members"][0].n

    @property
    def singular_points(self) -> tuple:
        """Points where the function is ``-inf``."""
        p = self.params
        if self.kind == "log_radial" or (self.kind == "radial_power" and p["exponent"] < 0):
            return (tuple(p["center"]),)
        if self.kind == "sum_composite":
            return tuple(dict.fromkeys(s for m in p["members"] for s in m.singular_points))
        if self.kind == "max_composite":
            sets = [set(m.singular_points) for m in p["members"]]
            common = set.intersection(*sets) if sets else set()
            return tuple(sorted(common))
        return ()

    # -- radial structure
    def radial_parts(self, r):
        """``(phi, phi'/r, phi'')`` for radial kinds, as arrays in ``r``."""
        p = self.params
        r = np.asarray(r, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            if self.kind == "radial_power":
                a, s = p["exponent"], p["sign"]
                return s * r ** a, s * a * r ** (a - 2), s * a * (a - 1) * r ** (a - 2)
            if self.kind == "log_radial":
                return np.log(r), r ** -2.0, -(r ** -2.0)
            if self.kind == "regularized_radial":
                a, s, e2 = p["exponent"], p["sign"], p["eps"] ** 2
                q = r * r + e2
                if a == 0:
                    return 0.5 * np.log(q), 1.0 / q, (e2 - r * r) / q ** 2
                d1 = s * a * q ** (a / 2 - 1)
                return s * q ** (a / 2), d1, d1 + s * a * (a - 2) * r * r * q ** (a / 2 - 2)
        raise DomainError(f"{self.kind} is not a radial kind")

    def radial_center(self):
        """Center if the function is radial about a single point, else ``None``."""
        p = self.params
        if self.kind in RADIAL_KINDS:
            return tuple(p["center"])
        if self.kind == "quadratic":
            A, b = p["A"], p["b"]
            if np.allclose(A, A[0, 0] * np.eye(len(b))) and not np.any(b):
                return tuple(np.zeros(len(b)))
            return None
        if self.kind == "truncation":
            return p["inner"].radial_center()
        centers = set()
        for m in p["members"]:
            if m.kind == "quadratic" and not np.any(m.params["A"]) and not np.any(m.params["b"]):
                continue  # constants are radial about any point
            c = m.radial_center()
            if c is None:
                return None
            centers.add(c)
        if len(centers) > 1:
            return None
        return centers.pop() if centers else tuple(np.zeros(self.n))

    def radial(self, r):
        """``(phi, phi', phi'')`` of a radial function as arrays in ``r``."""
        r = np.asarray(r, dtype=float)
        p = self.params
        if self.kind in RADIAL_KINDS:
            f, d1r, d2 = self.radial_parts(r)
            return f, d1r * r, d2
        if self.kind == "quadratic":
            a, c = p["A"][0, 0], p["c"]
            return 0.5 * a * r * r + c, a * r, np.full_like(r, a)
        if self.radial_center() is None:
            raise DomainError("function is not radial")
        if self.kind == "truncation":
            f, d1, d2 = p["inner"].radial(r)
            low = f < -p["level"]
            return (np.where(low, -p["level"], f), np.where(low, 0.0, d1), np.where(low, 0.0, d2))
        parts = [m.radial(r) for m in p["members"]]
        if self.kind == "sum_composite":
            return tuple(sum(q[i] for q in parts) for i in range(3))
        vals = np.stack([q[0] for q in parts])
        arg = np.argmax(vals, axis=0)
        pick = lambda i: np.take_along_axis(np.stack([q[i] for q in parts]), arg[None], 0)[0]
        return pick(0), pick(1), pick(2)

    # -- evaluation
    def __call__(self, x) -> np.ndarray:
        return self.evaluate(x)[0]

    def evaluate(self, x, derivatives: bool = False):
        """Values (and optionally gradients and Hessians) at points ``(..., n)``.

        Singular points give ``-inf`` values and NaN derivatives.  For
        maximum composites the derivatives of the active member are returned,
        which is correct away from the kink set.
        """
        x = np.asarray(x, dtype=float)
        n = self.n
        if x.shape[-1] != n:
            raise DomainError(f"points must have last axis {n}")
        p = self.params
        if self.kind == "quadratic":
            A, b, c = p["A"], p["b"], p["c"]
            val = 0.5 * np.einsum("...i,ij,...j->...", x, A, x) + x @ b + c
            if not derivatives:
                return (val,)
            return val, x @ A + b, np.broadcast_to(A, x.shape[:-1] + (n, n))
        if self.kind in RADIAL_KINDS:
            y = x - np.asarray(p["center"])
            r = np.linalg.norm(y, axis=-1)
            f, d1r, d2 = self.radial_parts(r)
            if self.kind == "log_radial" or (self.kind == "radial_power" and p["exponent"] < 0):
                f = np.where(r == 0, -np.inf, f)
            elif self.kind == "radial_power":
                f = np.where(r == 0, 0.0, f)
            if not derivatives:
                return (f,)
            with np.errstate(invalid="ignore", divide="ignore"):
                yh = np.where(r[..., None] > 0, y / np.where(r > 0, r, 1.0)[..., None], 0.0)
                P = yh[..., :, None] * yh[..., None, :]
                H = d2[..., None, None] * P + d1r[..., None, None] * (np.eye(n) - P)
                g = d1r[..., None] * y
            if self.kind != "regularized_radial":
                bad = r == 0
                H = np.where(bad[..., None, None], np.nan, H)
                g = np.where(bad[..., None], np.nan, g)
            return f, g, H
        if self.kind == "truncation":
            out = p["inner"].evaluate(x, derivatives)
            low = out[0] < -p["level"]
            val = np.where(low, -p["level"], out[0])
            if not derivatives:
                return (val,)
            return (val, np.where(low[..., None], 0.0, out[1]),
                    np.where(low[..., None, None], 0.0, out[2]))
        outs = [m.evaluate(x, derivatives) for m in p["members"]]
        if self.kind == "sum_composite":
            return tuple(sum(o[i] for o in outs) for i in range(len(outs[0])))
        vals = np.stack([o[0] for o in outs])
        arg = np.argmax(vals, axis=0)
        val = np.max(vals, axis=0)
        if not derivatives:
            return (val,)
        G = np.stack([o[1] for o in outs])
        H = np.stack([np.broadcast_to(o[2], x.shape[:-1] + (n, n)) for o in outs])
        g = np.take_along_axis(G, arg[None, ..., None], 0)[0]
        Hs = np.take_along_axis(H, arg[None, ..., None, None], 0)[0]
        return val, g, Hs

    def sample(self, box, resolution, clamp: float = DEFAULT_CLAMP) -> ScalarField:
        return ScalarField.from_function(self, box, resolution, self.singular_points, clamp)

    # -- serialization
    def to_dict(self) -> dict:
        out = {"kind": self.kind}
        for key, v in self.params.items():
            if key == "members":
                out[key] = [m.to_dict() for m in v]
            elif key == "inner":
                out[key] = v.to_dict()
            elif isinstance(v, np.ndarray):
                out[key] = v.tolist()
            elif isinstance(v, tuple):
                out[key] = [float(c) for c in v]
            else:
                out[key] = v
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "AnalyticFunctionSpec":
        d = dict(d)
        kind = d.pop("kind", None)
        if kind == "wk":
            return cls.wk(int(d["n"]), int(d["k"]), d.get("center"))
        if kind == "wk_regularized":
            return cls.wk_regularized(int(d["n"]), int(d["k"]), float(d["eps"]), d.get("center"))
        if kind == "quadratic":
            return cls.quadratic(d["A"], d.get("b"), d.get("c", 0.0))
        if kind in ("max_composite", "sum_composite"):
            return cls(kind, {"members": tuple(cls.from_dict(m) for m in d["members"])})
        if kind == "truncation":
            return cls.truncate(cls.from_dict(d["inner"]), d["level"])
        if kind in RADIAL_KINDS:
            params = {"center": tuple(float(c) for c in d["center"])}
            if kind != "log_radial":
                params["exponent"] = float(d["exponent"])
                params["sign"] = float(d.get("sign", 1.0))
            if kind == "regularized_radial":
                params["eps"] = float(d["eps"])
            return cls(kind, params)
        raise DomainError(f"unknown function kind {kind!r}")


def wk_value(n: int, k: int, x, center=None, clamp: float = DEFAULT_CLAMP):
    """Value of the fundamental k-convex function; the pole gets ``clamp``."""
    spec = AnalyticFunctionSpec.wk(n, k, center)
    v = spec(np.asarray(x, dtype=float))
    v = np.where(np.isneginf(v), clamp, v)
    return float(v) if np.ndim(v) == 0 else v


def flux_atom_mass(n: int, k: int, scale: float = 1.0) -> float:
    """Raw mass ``integral F_k`` of the atom of ``scale * w_k`` at its pole.

    From the flux form, ``r^(n-k) (phi')^k`` is the constant ``|2 - n/k|^k``
    (1 in the logarithmic case), so the ball mass is that constant times
    ``sigma_{n-1} C(n-1, k-1) / k``.
    """
    k = _check_order(k, 1, n)
    c = 1.0 if 2 * k == n else abs(wk_exponent(n, k)) ** k
    return sphere_area(n) * binom(n - 1, k - 1) / k * c * scale ** k


def literal_atom_mass(n: int, k: int) -> float:
    """The atom coefficient in the normalization stated with the fundamental solutions.

    Recorded next to :func:`flux_atom_mass`; the two use different
    normalizations and are not expected to agree.
    """
    k = _check_order(k, 1, n)
    base = (binom(n, k) * ball_volume(n)) ** (1.0 / k)
    return base if 2 * k == n else wk_exponent(n, k) * base


# ---------------------------------------------------------------- radial profiles

@dataclass(frozen=True, eq=False)
class RadialProfile:
    """``u(r)`` with ``u'`` (and optionally ``u''``) on an increasing mesh."""

    r: np.ndarray
    u: np.ndarray
    du: np.ndarray
    n: int
    k: int
    d2u: np.ndarray | None = None
    func: Callable | None = None

    def __post_init__(self):
        r = np.asarray(self.r, dtype=float)
        if r.ndim != 1 or r.size < 3 or np.any(r <= 0) or np.any(np.diff(r) <= 0):
            raise DomainError("radial mesh must be positive and strictly increasing")
        for name in ("r", "u", "du", "d2u"):
            v = getattr(self, name)
            if v is not None:
                object.__setattr__(self, name, np.asarray(v, dtype=float))
        _check_order(self.k, 1, self.n)

    @classmethod
    def from_function(cls, f: Callable, r_mesh, n: int, k: int) -> "RadialProfile":
        """Profile of a smooth radial function ``f(r)`` (vectorized)."""
        r = np.asarray(r_mesh, dtype=float)
        return cls(r, f(r), _fd1(f, r), n, k, _fd2(f, r), func=f)

    @classmethod
    def from_spec(cls, spec: AnalyticFunctionSpec, r_mesh, k: int) -> "RadialProfile":
        r = np.asarray(r_mesh, dtype=float)
        f, d1, d2 = spec.radial(r)
        return cls(r, f, d1, spec.n, k, d2, func=lambda s: spec.radial(s)[0])

    def __call__(self, r):
        """Cubic Hermite interpolant of ``u`` (exact derivatives at nodes)."""
        return CubicHermiteSpline(self.r, self.u, self.du)(r)

    def derivative(self, r):
        return CubicHermiteSpline(self.r, self.u, self.du)(r, 1)


def _fd_step(r):
    return 3e-3 * np.maximum(np.abs(r), 1e-3)  # balances rounding against h^4 truncation


def _fd1(f, r):
    h = _fd_step(r)
    return (-f(r + 2 * h) + 8 * f(r + h) - 8 * f(r - h) + f(r - 2 * h)) / (12 * h)


def _fd1_flux(f, r):
    """Sixth-order difference with a wider step, for the flux which is itself a difference."""
    h = 5e-3 * np.maximum(np.abs(r), 1e-3)
    return (f(r + 3 * h) - 9 * f(r + 2 * h) + 45 * f(r + h)
            - 45 * f(r - h) + 9 * f(r - 2 * h) - f(r - 3 * h)) / (60 * h)


def _fd2(f, r):
    h = _fd_step(r)
    return (-f(r + 2 * h) + 16 * f(r + h) - 30 * f(r) + 16 * f(r - h) - f(r - 2 * h)) / (12 * h * h)


def radial_eigen_fk(d1, d2, r, n, k):
    """``S_k(u'', u'/r, ..., u'/r)``."""
    d1, d2, r = np.broadcast_arrays(*(np.asarray(a, dtype=float) for a in (d1, d2, r)))
    lam = np.concatenate([d2[..., None], np.repeat((d1 / r)[..., None], n - 1, axis=-1)], axis=-1)
    return elem_sym_all(lam)[..., k]


def radial_fk(profile: RadialProfile, r=None, form: str = "eigen"):
    """k-Hessian of a radial profile.

    ``form="eigen"`` evaluates ``S_k`` of the radial eigenvalue tuple;
    ``form="flux"`` differentiates ``r^(n-k) (u')^k`` instead.  Profiles built
    from a function use fourth-order differences of that function; mesh
    profiles use the nodal derivatives (eigen) or nonuniform three-point
    differences of the flux (flux), which are second-order accurate.  With ``r=None`` the values on all
    interior mesh nodes are returned.
    """
    n, k = profile.n, profile.k
    c = binom(n - 1, k - 1) / k
    if form not in ("eigen", "flux"):
        raise DomainError("form must be 'eigen' or 'flux'")
    mesh = profile.r
    if r is not None:
        r = np.asarray(r, dtype=float)
        if np.any(r <= mesh[0]) or np.any(r >= mesh[-1]):
            raise DomainError("r must lie strictly inside the radial mesh")
    if profile.func is not None:
        rr = mesh[1:-1] if r is None else r
        f = profile.func
        if form == "eigen":
            return radial_eigen_fk(_fd1(f, rr), _fd2(f, rr), rr, n, k)
        flux = lambda s: s ** (n - k) * _fd1(f, s) ** k
        return c * rr ** (1 - n) * _fd1_flux(flux, rr)
    if form == "eigen":
        d2 = profile.d2u if profile.d2u is not None else _mesh_derivative(mesh, profile.du)
        vals = radial_eigen_fk(profile.du, d2, mesh, n, k)
    else:
        G = mesh ** (n - k) * profile.du ** k
        vals = c * mesh ** (1 - n) * _mesh_derivative(mesh, G)
    inner = vals[1:-1]
    if r is None:
        return inner
    return np.interp(r, mesh[1:-1], inner)


def _mesh_derivative(x, y):
    """Second-order derivative on a nonuniform mesh (one-sided at the ends)."""
    return np.gradient(y, x, edge_order=2)


# ---------------------------------------------------------------- radial Dirichlet solver

_GL_X, _GL_W = np.polynomial.legendre.leggauss(8)


def radial_mesh(R: float, ratio: float = 1.05, r0_rel: float = 1e-6, uniform: int = 4000):
    """Geometric mesh from ``r0_rel * R`` (ratio ``ratio``) merging into a uniform one."""
    if not R > 0:
        raise DomainError("R must be positive")
    h = R / uniform
    pts = [r0_rel * R]
    while pts[-1] * (ratio - 1) < h and pts[-1] < R:
        pts.append(pts[-1] * ratio)
    start = pts[-1]
    m = max(1, int(math.ceil((R - start) / h)))
    pts.extend(np.linspace(start, R, m + 1)[1:])
    return np.array(pts)


def _cumulative_moment(psi, mesh, n):
    """``integral_0^r s^(n-1) psi(s) ds`` at every mesh node (Gauss-Legendre)."""
    a = np.concatenate([[0.0], mesh[:-1]])
    b = mesh
    mid, half = 0.5 * (a + b), 0.5 * (b - a)
    s = mid[:, None] + half[:, None] * _GL_X[None, :]
    vals = s ** (n - 1) * np.asarray(psi(s), dtype=float)
    return np.cumsum((vals * _GL_W).sum(axis=1) * half)


def _as_radial_density(psi):
    if callable(psi):
        return psi
    c = float(psi)
    return lambda s: np.full_like(np.asarray(s, dtype=float), c)


def radial_dirichlet_solve(n: int, k: int, psi, atom_mass: float = 0.0, R: float = 1.0,
                           boundary_value: float = 0.0, mesh=None) -> RadialProfile:
    """Radial solution of ``F_k[u] = psi + atom_mass * delta_0`` on ``B_R``.

    The flux ``G = r^(n-k) (u')^k`` equals
    ``k/C(n-1,k-1) * (atom_mass/sigma_{n-1} + integral_0^r s^(n-1) psi)``,
    which gives ``u' >= 0`` by a k-th root; ``u`` is then integrated inward
    from ``u(R) = boundary_value`` with the end-corrected trapezoid rule.
    """
    k = _check_order(k, 1, n)
    if atom_mass < 0:
        raise DomainError("atom mass must be nonnegative")
    psi = _as_radial_density(psi)
    r = radial_mesh(R) if mesh is None else np.asarray(mesh, dtype=float)
    if not np.isclose(r[-1], R):
        raise DomainError("mesh must end at R")
    c = k / binom(n - 1, k - 1)
    G = c * (atom_mass / sphere_area(n) + _cumulative_moment(psi, r, n))
    if np.any(G < -1e-14 * max(1.0, np.abs(G).max())):
        raise DomainError("negative flux: data is not compatible with a k-convex solution")
    G = np.maximum(G, 0.0)
    dG = c * r ** (n - 1) * np.asarray(psi(r), dtype=float)
    q = G * r ** (k - n)
    du = q ** (1.0 / k)
    with np.errstate(divide="ignore", invalid="ignore"):
        dq = dG * r ** (k - n) + (k - n) * G * r ** (k - n - 1)
        d2u = np.where(q > 0, du * dq / (k * q), dq if k == 1 else 0.0)
    d = np.diff(r)
    inc = 0.5 * d * (du[:-1] + du[1:]) - d * d / 12.0 * (d2u[1:] - d2u[:-1])
    u = boundary_value - np.concatenate([np.cumsum(inc[::-1])[::-1], [0.0]])
    return RadialProfile(r, u, du, n, k, d2u)


# ---------------------------------------------------------------- families

def kconvexity_probe(spec: AnalyticFunctionSpec, k: int, box=None, resolution: int = 24,
                     tol: float = 1e-10) -> KConvexityReport:
    """k-convexity margins from the exact Hessians on a probe grid.

    Margins are scaled by ``|H|^j`` so that k-harmonic regions, where the
    margin vanishes identically, are not judged on rounding noise.  Nodes at
    singular points and on the kink sets of composites are skipped (the
    probe is an almost-everywhere check).
    """
    n = spec.n
    k = _check_order(k, 1, n)
    box = box or [(-1.0, 1.0)] * n
    resolution = min(resolution, int(2e5 ** (1.0 / n)))
    axes = [np.linspace(a, b, resolution) for a, b in box]
    pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, n)
    _, _, H = spec.evaluate(pts, derivatives=True)
    H = np.asarray(H)
    ok = np.all(np.isfinite(H), axis=(-2, -1))
    H = H[ok]
    if H.shape[0] == 0:
        return KConvexityReport(1.0, math.inf, 0)
    lam = np.linalg.eigvalsh(H)
    top = np.abs(lam).max(axis=-1, keepdims=True)
    lam = lam / np.where(top > 0, top, 1.0)  # a zero Hessian stays zero and passes
    margin = elem_sym_all(lam)[..., 1:k + 1].min(axis=-1)
    return KConvexityReport(float(np.mean(margin >= -tol)), float(margin.min()), int(margin.size))


def family_generate(spec_list: Sequence, k: int | None = None, probe_box=None,
                    probe_resolution: int = 24) -> list:
    """Expand family descriptions into concrete function specs.

    Each entry is an :class:`AnalyticFunctionSpec`, a spec dict, or a family
    dict with key ``family``:

    ``truncation``   ``base`` spec, ``levels``: ``max(base, -m)`` per level
    ``translation``  ``base`` (radial), ``offsets``: base re-centred at each offset
    ``combination``  ``members``, ``weights``: nonnegative weighted sums

    When ``k`` is given, every member is probed with
    :func:`kconvexity_probe`; failures raise :class:`DomainError`.
    """
    out = []
    for item in spec_list:
        if isinstance(item, AnalyticFunctionSpec):
            out.append(item)
            continue
        item = dict(item)
        fam = item.get("family")
        if fam is None:
            out.append(AnalyticFunctionSpec.from_dict(item))
            continue
        base = item.get("base")
        if isinstance(base, dict):
            base = AnalyticFunctionSpec.from_dict(base)
        if fam == "truncation":
            out.extend(AnalyticFunctionSpec.truncate(base, m) for m in item["levels"])
        elif fam == "translation":
            if base.kind not in RADIAL_KINDS:
                raise DomainError("translation families need a radial base")
            for off in item["offsets"]:
                params = dict(base.params)
                params["center"] = tuple(np.asarray(base.params["center"]) + np.asarray(off, float))
                out.append(AnalyticFunctionSpec(base.kind, params))
        elif fam == "combination":
            members = [m if isinstance(m, AnalyticFunctionSpec) else AnalyticFunctionSpec.from_dict(m)
                       for m in item["members"]]
            for w in item["weights"]:
                w = np.asarray(w, dtype=float)
                if np.any(w < 0) or w.size != len(members):
                    raise DomainError("combination weights must be nonnegative, one per member")
                out.append(AnalyticFunctionSpec.total(*[_scaled(m, wi) for m, wi in zip(members, w)]))
        else:
            raise DomainError(f"unknown family {fam!r}")
    if k is not None:
        for i, spec in enumerate(out):
            rep = kconvexity_probe(spec, k, probe_box, probe_resolution)
            if rep.fraction < 1.0:
                raise DomainError(f"family member {i} ({spec.kind}) is not {k}-convex on the probe "
                                  f"grid: fraction {rep.fraction:.4f}, worst scaled margin "
                                  f"{rep.worst_margin:.3e}")
    return out


def _scaled(spec: AnalyticFunctionSpec, w: float) -> AnalyticFunctionSpec:
    p = spec.params
    if spec.kind == "quadratic":
        return AnalyticFunctionSpec.quadratic(w * p["A"], w * p["b"], w * p["c"])
    if spec.kind in ("radial_power", "regularized_radial"):
        if spec.kind == "regularized_radial" and p["exponent"] == 0:
            raise DomainError("cannot scale the logarithmic kind")
        q = dict(p)
        q["sign"] = p["sign"] * w
        return AnalyticFunctionSpec(spec.kind, q)
    if spec.kind == "sum_composite":
        return AnalyticFunctionSpec.total(*[_scaled(m, w) for m in p["members"]])
    raise DomainError(f"cannot scale kind {spec.kind!r}")
