"""Uniform-grid scalar fields and the operators evaluated on them.

A :class:`ScalarField` holds samples of a function on a uniform tensor grid
over an axis-aligned box.  Derivatives use centered second-order stencils, and
the boundary ring is never evaluated.  Operator outputs mark it absent with
NaN.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field as dc_field
from functools import cached_property
from typing import Callable

import numpy as np
from scipy.integrate import quad
from scipy.optimize import minimize_scalar
from scipy.signal import fftconvolve

from . import cones
from .errors import DomainError, PreconditionError
from .symmetric import _check_order, elem_sym_all, minor_sum

DEFAULT_CLAMP = -1e6
SINGULAR_EXCLUSION_CELLS = 2


# ---------------------------------------------------------------- domains

@dataclass(frozen=True)
class Box:
    bounds: tuple  # ((a_1, b_1), ..., (a_n, b_n))

    @property
    def n(self) -> int:
        return len(self.bounds)

    def distance(self, x: np.ndarray) -> np.ndarray:
        """Signed distance to the boundary, positive inside."""
        lo = np.array([b[0] for b in self.bounds])
        hi = np.array([b[1] for b in self.bounds])
        return np.minimum(x - lo, hi - x).min(axis=-1)

    def diameter(self) -> float:
        return float(np.sqrt(sum((b - a) ** 2 for a, b in self.bounds)))

    def volume(self) -> float:
        return float(np.prod([b - a for a, b in self.bounds]))


@dataclass(frozen=True)
class Ball:
    center: tuple
    radius: float

    @property
    def n(self) -> int:
        return len(self.center)

    def distance(self, x: np.ndarray) -> np.ndarray:
        return self.radius - np.linalg.norm(x - np.asarray(self.center, float), axis=-1)

    def diameter(self) -> float:
        return 2.0 * self.radius

    def volume(self) -> float:
        n = self.n
        return math.pi ** (n / 2) / math.gamma(n / 2 + 1) * self.radius ** n


def _normalize_box(box) -> tuple:
    box = tuple((float(a), float(b)) for a, b in box)
    for a, b in box:
        if not b > a:
            raise DomainError(f"degenerate box side [{a}, {b}]")
    return box


# ---------------------------------------------------------------- fields

@dataclass(frozen=True, eq=False)
class ScalarField:
    """Samples of ``u`` on the uniform grid over ``box``.

    ``values`` has one axis per dimension (row-major, first axis = x_1).
    ``singular_points`` lists declared points where ``u = -inf``; grid nodes
    hitting them hold ``clamp`` instead.
    """

    box: tuple
    values: np.ndarray
    singular_points: tuple = ()
    clamp: float = DEFAULT_CLAMP

    def __post_init__(self):
        object.__setattr__(self, "box", _normalize_box(self.box))
        values = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", values)
        if values.ndim != len(self.box):
            raise DomainError("values must have one axis per box dimension")
        if min(values.shape) < 5:
            raise DomainError("need at least 5 points per axis")
        object.__setattr__(self, "singular_points",
                           tuple(tuple(float(c) for c in p) for p in self.singular_points))

    @classmethod
    def from_function(cls, f: Callable, box, resolution, singular_points=(),
                      clamp: float = DEFAULT_CLAMP) -> "ScalarField":
        """Sample ``f`` (points of shape ``(..., n)`` -> values) on a grid."""
        box = _normalize_box(box)
        if np.isscalar(resolution):
            resolution = (int(resolution),) * len(box)
        axes = [np.linspace(a, b, r) for (a, b), r in zip(box, resolution)]
        pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
        with np.errstate(divide="ignore", invalid="ignore"):
            vals = np.asarray(f(pts), dtype=float)
        vals = np.where(np.isneginf(vals) | np.isnan(vals), clamp, vals)
        return cls(box, vals, singular_points, clamp)

    @property
    def n(self) -> int:
        return self.values.ndim

    @property
    def resolution(self) -> tuple:
        return self.values.shape

    @property
    def spacing(self) -> np.ndarray:
        return np.array([(b - a) / (r - 1) for (a, b), r in zip(self.box, self.resolution)])

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    @property
    def domain(self) -> Box:
        return Box(self.box)

    def axes(self) -> list:
        return [np.linspace(a, b, r) for (a, b), r in zip(self.box, self.resolution)]

    @cached_property
    def points(self) -> np.ndarray:
        return np.stack(np.meshgrid(*self.axes(), indexing="ij"), axis=-1)

    def with_values(self, values, singular_points=None) -> "ScalarField":
        sp = self.singular_points if singular_points is None else singular_points
        return ScalarField(self.box, values, sp, self.clamp)

    def interior_mask(self, ring: int = 1) -> np.ndarray:
        mask = np.zeros(self.resolution, dtype=bool)
        mask[tuple(slice(ring, r - ring) for r in self.resolution)] = True
        return mask

    def singular_mask(self, cells: float = SINGULAR_EXCLUSION_CELLS) -> np.ndarray:
        """Nodes within ``cells`` grid steps of a declared singular point."""
        mask = np.zeros(self.resolution, dtype=bool)
        h = self.spacing.max()
        for p in self.singular_points:
            mask |= np.linalg.norm(self.points - np.asarray(p), axis=-1) <= cells * h + 1e-12
        return mask

    def integrate(self, domain=None, absolute: bool = False) -> float:
        """Quadrature of the field (or of ``|u|``).

        Without ``domain`` this is the tensor trapezoid rule on the box; with a
        domain, nodes inside it are summed with weight ``cell_volume``.
        Clamped singular nodes get zero weight in both cases.
        """
        v = np.abs(self.values) if absolute else self.values
        w = np.ones(self.resolution)
        if domain is None:
            for ax in range(self.n):
                sl = [slice(None)] * self.n
                for end in (0, -1):
                    sl[ax] = end
                    w[tuple(sl)] *= 0.5
        else:
            w = (domain.distance(self.points) > 0).astype(float)
        w = np.where(self.values <= self.clamp, 0.0, w)
        return float(np.sum(np.where(w > 0, v, 0.0) * w) * self.cell_volume)


# ---------------------------------------------------------------- stencils

@dataclass(frozen=True)
class StencilDerivatives:
    gradient: np.ndarray
    hessian: np.ndarray
    eigenvalues: np.ndarray


def jacobi_eigenvalues(H, tol: float = 1e-13, max_sweeps: int = 100) -> np.ndarray:
    """Eigenvalues of symmetric matrices by cyclic Jacobi rotations, ascending.

    Batched over leading axes; every matrix in the batch is rotated in
    lock-step and the sweep loop stops once all off-diagonal parts are below
    ``tol`` relative to the matrix norm.
    """
    A = np.array(H, dtype=float, copy=True)
    n = A.shape[-1]
    batch = A.shape[:-2]
    A = A.reshape((-1, n, n))
    scale = np.maximum(np.linalg.norm(A, axis=(1, 2)), np.finfo(float).tiny)
    offmask = ~np.eye(n, dtype=bool)
    for _ in range(max_sweeps):
        off = np.sqrt((A[:, offmask] ** 2).sum(axis=1))
        if np.all(off <= tol * scale):
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = A[:, p, q]
                nz = np.abs(apq) > 1e-300
                if not np.any(nz):
                    continue
                safe = np.where(nz, apq, 1.0)
                tau = (A[:, q, q] - A[:, p, p]) / (2.0 * safe)
                # for |tau| > 1e150 the small-angle limit 1/(2 tau) avoids overflow
                big = np.abs(tau) > 1e150
                tt = np.where(big, 1.0, tau)
                t = np.where(tt >= 0, 1.0, -1.0) / (np.abs(tt) + np.sqrt(1.0 + tt * tt))
                t = np.where(big, 0.5 / np.where(big, tau, 1.0), t)
                t = np.where(nz, t, 0.0)
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = t * c
                Ap, Aq = A[:, :, p].copy(), A[:, :, q].copy()
                A[:, :, p] = c[:, None] * Ap - s[:, None] * Aq
                A[:, :, q] = s[:, None] * Ap + c[:, None] * Aq
                Ap, Aq = A[:, p, :].copy(), A[:, q, :].copy()
                A[:, p, :] = c[:, None] * Ap - s[:, None] * Aq
                A[:, q, :] = s[:, None] * Ap + c[:, None] * Aq
    ev = np.sort(np.diagonal(A, axis1=1, axis2=2), axis=1)
    return ev.reshape(batch + (n,))


def _flat_offsets(shape):
    strides = np.cumprod((1,) + shape[::-1][:-1])[::-1]
    return strides


def _stencils(values: np.ndarray, spacing: np.ndarray, flat_idx: np.ndarray):
    """Gradient and Hessian at the given flat node indices (all interior)."""
    n = values.ndim
    v = values.ravel()
    st = _flat_offsets(values.shape)
    c = v[flat_idx]
    grad = np.empty(flat_idx.shape + (n,))
    hess = np.empty(flat_idx.shape + (n, n))
    for i in range(n):
        fp, fm = v[flat_idx + st[i]], v[flat_idx - st[i]]
        grad[..., i] = (fp - fm) / (2 * spacing[i])
        hess[..., i, i] = (fp - 2 * c + fm) / spacing[i] ** 2
        for j in range(i + 1, n):
            d = (v[flat_idx + st[i] + st[j]] - v[flat_idx + st[i] - st[j]]
                 - v[flat_idx - st[i] + st[j]] + v[flat_idx - st[i] - st[j]])
            hess[..., i, j] = hess[..., j, i] = d / (4 * spacing[i] * spacing[j])
    return grad, hess


def derivatives_at(u: ScalarField, p) -> StencilDerivatives:
    """Stencil gradient, Hessian and eigenvalues at grid index ``p``."""
    p = tuple(int(i) for i in p)
    if len(p) != u.n or any(not 1 <= i <= r - 2 for i, r in zip(p, u.resolution)):
        raise DomainError(f"grid point {p} is not interior")
    flat = np.ravel_multi_index(p, u.resolution)
    g, H = _stencils(u.values, u.spacing, np.array(flat))
    return StencilDerivatives(g, H, jacobi_eigenvalues(H))


def _eval_mask(u: ScalarField, where=None, exclude_singular=True) -> np.ndarray:
    mask = u.interior_mask()
    if where is not None:
        mask &= np.asarray(where, dtype=bool)
    if exclude_singular and u.singular_points:
        mask &= ~u.singular_mask()
    return mask


def stencil_fields(u: ScalarField, where=None, exclude_singular=True):
    """Gradients, Hessians and the evaluation mask over the interior."""
    mask = _eval_mask(u, where, exclude_singular)
    flat = np.flatnonzero(mask)
    g, H = _stencils(u.values, u.spacing, flat)
    return mask, g, H


def hessian_eigenvalues(u: ScalarField, where=None, exclude_singular=True):
    mask, _, H = stencil_fields(u, where, exclude_singular)
    return mask, jacobi_eigenvalues(H)


def hessian_operator(u: ScalarField, k: int, where=None, exclude_singular=True,
                     method: str = "eigen") -> ScalarField:
    """Field of ``F_k[u] = S_k(eigenvalues of D^2 u)``.

    The boundary ring, nodes outside ``where`` and nodes within two cells of
    a declared singular point are NaN.  ``method="minors"`` sums the k x k
    principal minors of the stencil Hessian instead of diagonalizing it; the
    two agree for symmetric matrices and the minor sums are several times
    cheaper on large grids.
    """
    k = _check_order(k, 1, u.n)
    out = np.full(u.resolution, np.nan)
    if method == "eigen":
        mask, lam = hessian_eigenvalues(u, where, exclude_singular)
        out[mask] = elem_sym_all(lam)[..., k]
    elif method == "minors":
        mask, _, H = stencil_fields(u, where, exclude_singular)
        out[mask] = np.trace(H, axis1=-2, axis2=-1) if k == 1 else minor_sum(H, k)
    else:
        raise DomainError(f"unknown method {method!r}")
    return u.with_values(out, singular_points=())


def pk_hessian_pointwise(g, H, l: int, p: float):
    """``[M]_l`` with ``M = |g|^{p-2} (I + (p-2) g g^T / |g|^2) H``.

    Batched over leading axes of ``g`` (``(..., n)``) and ``H``
    (``(..., n, n)``).  Where ``g = 0`` and ``p > 2`` the value is 0, the
    limit of the vanishing prefactor.
    """
    g = np.asarray(g, dtype=float)
    H = np.asarray(H, dtype=float)
    n = g.shape[-1]
    l = _check_order(l, 1, n)
    if p < 2:
        raise DomainError("p must be >= 2")
    ng = np.linalg.norm(g, axis=-1)
    zero = ng == 0
    safe = np.where(zero, 1.0, ng)
    ghat = g / safe[..., None]
    P = np.eye(n) + (p - 2) * ghat[..., :, None] * ghat[..., None, :]
    if p == 2:
        pref = np.ones_like(ng)
    else:
        pref = np.where(zero, 0.0, safe ** (p - 2))
    M = pref[..., None, None] * (P @ H)
    out = np.asarray(minor_sum(M, l))
    if p > 2:
        out = np.where(zero, 0.0, out)
    return float(out) if out.ndim == 0 else out


def pk_hessian_operator(u: ScalarField, l: int, p: float, where=None) -> ScalarField:
    """Field of ``F_{l,p}[u] = [D(|Du|^{p-2} Du)]_l``."""
    mask, g, H = stencil_fields(u, where)
    out = np.full(u.resolution, np.nan)
    out[mask] = pk_hessian_pointwise(g, H, l, p)
    return u.with_values(out, singular_points=())


# ---------------------------------------------------------------- mollifier

def _bump(t):
    """``exp(-1/(1-t))`` for ``t = |x|^2 < 1``, zero otherwise."""
    t = np.asarray(t, dtype=float)
    inside = t < 1
    out = np.zeros_like(t)
    out[inside] = np.exp(-1.0 / (1.0 - t[inside]))
    return out


@dataclass(frozen=True)
class MollifierKernel:
    """Spherically symmetric bump ``rho_h(x) = h^-n c exp(-1/(1-|x/h|^2))``."""

    h: float
    n: int
    norm: float = dc_field(init=False)

    def __post_init__(self):
        if not self.h > 0:
            raise DomainError("mollifier radius must be positive")
        area = 2 * math.pi ** (self.n / 2) / math.gamma(self.n / 2)
        integral, _ = quad(lambda s: float(_bump(s * s)) * s ** (self.n - 1), 0, 1,
                           epsabs=1e-14, epsrel=1e-12)
        object.__setattr__(self, "norm", 1.0 / (area * integral))

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        t = (x ** 2).sum(axis=-1) / self.h ** 2
        return self.norm * _bump(t) / self.h ** self.n

    def stencil(self, spacing) -> tuple:
        """Discrete weights on the grid offsets inside the support.

        Returns ``(weights, half_widths)``.  Weights are renormalized to sum to
        one so that constants and linear functions are reproduced exactly.
        """
        spacing = np.asarray(spacing, dtype=float)
        m = tuple(int(math.ceil(self.h / d - 1e-9)) for d in spacing)
        offs = [np.arange(-mi, mi + 1) * d for mi, d in zip(m, spacing)]
        pts = np.stack(np.meshgrid(*offs, indexing="ij"), axis=-1)
        w = self(pts)
        return w / w.sum(), m


def mollify(u: ScalarField, kernel: MollifierKernel) -> ScalarField:
    """Convolve with the kernel; the result lives on the h-shrunken box."""
    if kernel.n != u.n:
        raise DomainError("kernel dimension does not match the field")
    widths = [b - a for a, b in u.box]
    if not kernel.h < 0.5 * min(widths):
        raise DomainError("mollifier radius must be less than half the domain width")
    w, m = kernel.stencil(u.spacing)
    if any(r - 2 * mi < 5 for r, mi in zip(u.resolution, m)):
        raise DomainError("mollifier radius leaves fewer than 5 points per axis")
    vals = fftconvolve(u.values, w, mode="valid")
    sp = u.spacing
    box = tuple((a + mi * d, b - mi * d) for (a, b), mi, d in zip(u.box, m, sp))
    return ScalarField(box, vals, (), u.clamp)


# ---------------------------------------------------------------- sup-convolution

class SupConvolutionWarning(UserWarning):
    """The maximizer was found on the edge of the search box."""


def sup_convolution(sampler: Callable, eps: float, x, search_box, resolution: int = 201,
                    polish_rounds: int = 3) -> float:
    """``sup_y u(y) - |x - y|^2 / (2 eps)`` over ``search_box``.

    Grid search followed by coordinate-wise golden-section polishing in the
    cell around the best node.  Emits :class:`SupConvolutionWarning` when the
    best node lies on the edge of the search box.
    """
    if not eps > 0:
        raise DomainError("eps must be positive")
    x = np.atleast_1d(np.asarray(x, dtype=float))
    box = _normalize_box(search_box)
    if any(not a <= xi <= b for xi, (a, b) in zip(x, box)):
        raise DomainError("search box must contain x")
    n = len(box)
    res = resolution if n == 1 else max(9, int(round(resolution ** (1 / n) * 4)))
    axes = [np.linspace(a, b, res) for a, b in box]
    pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)

    def objective(y):
        return np.asarray(sampler(y), dtype=float) - ((y - x) ** 2).sum(axis=-1) / (2 * eps)

    vals = objective(pts)
    i = np.unravel_index(np.nanargmax(vals), vals.shape)
    if any(ii in (0, res - 1) for ii in i):
        warnings.warn("sup-convolution maximum on the search-box boundary; enlarge the box",
                      SupConvolutionWarning, stacklevel=2)
    y = pts[i].copy()
    best = float(vals[i])
    step = np.array([(b - a) / (res - 1) for a, b in box])
    for _ in range(polish_rounds):
        for d in range(n):
            lo = max(box[d][0], y[d] - step[d])
            hi = min(box[d][1], y[d] + step[d])

            def f1(t, d=d):
                z = y.copy()
                z[d] = t
                return -float(objective(z))

            r = minimize_scalar(f1, bounds=(lo, hi), method="bounded",
                                options={"xatol": 1e-13})
            if -r.fun > best:
                best = -r.fun
                y[d] = r.x
    return best


# ---------------------------------------------------------------- weighted norms

@dataclass(frozen=True)
class WeightedNormReport:
    sup_norm: float
    holder_seminorm: float
    sigma: float
    alpha: float

    @property
    def norm(self) -> float:
        return self.sup_norm + self.holder_seminorm


def _pairs_axis_dyadic(shape):
    """Index pairs ``(x, x + 2^j e_i)`` for every axis and dyadic shift."""
    idx = np.arange(int(np.prod(shape))).reshape(shape)
    out = []
    for ax, r in enumerate(shape):
        s = 1
        while s < r:
            a = np.take(idx, np.arange(0, r - s), axis=ax).ravel()
            b = np.take(idx, np.arange(s, r), axis=ax).ravel()
            out.append((s, a, b))
            s *= 2
    return out


def weighted_norms(u: ScalarField, sigma: float, alpha: float, pair_budget: int = 400_000,
                   domain=None, seed: int = 0, bins: int = 32) -> WeightedNormReport:
    """Weighted interior sup norm and Hölder seminorm of a sampled field.

    ``d_x`` is the distance to the boundary of ``domain`` (default: the box);
    nodes outside the domain are ignored.  The seminorm is the maximum of
    ``d_{x,y}^{sigma+alpha} |u(x)-u(y)| / |x-y|^alpha`` over a deterministic
    stratified sample of pairs: axis pairs at every dyadic shift, random
    pairs in each of ``bins`` dyadic distance bins, and all pairs through the
    nodes nearest to declared singular points.  Each stratum is capped at
    ``pair_budget / bins`` pairs.
    """
    if not 0 < alpha <= 1:
        raise DomainError("alpha must lie in (0, 1]")
    if sigma < 0:
        raise DomainError("sigma must be nonnegative")
    domain = domain or u.domain
    rng = np.random.default_rng(seed)
    pts = u.points.reshape(-1, u.n)
    vals = u.values.ravel()
    d = domain.distance(pts)
    valid = (d > 0) & (vals > u.clamp)
    sup_norm = float(np.max(np.where(valid, d ** sigma * np.abs(vals), 0.0), initial=0.0))

    cap = max(1, pair_budget // bins)
    best = 0.0

    def score(a, b):
        nonlocal best
        ok = valid[a] & valid[b]
        a, b = a[ok], b[ok]
        if a.size == 0:
            return
        dist = np.linalg.norm(pts[a] - pts[b], axis=-1)
        dxy = np.minimum(d[a], d[b])
        q = dxy ** (sigma + alpha) * np.abs(vals[a] - vals[b]) / dist ** alpha
        best = max(best, float(q.max()))

    def capped(a, b):
        if a.size > cap:
            sel = rng.choice(a.size, size=cap, replace=False)
            a, b = a[sel], b[sel]
        return a, b

    for _, a, b in _pairs_axis_dyadic(u.resolution):
        score(*capped(a, b))

    diam = domain.diameter()
    inside = np.flatnonzero(valid)
    sp = u.spacing
    if inside.size:
        for j in range(bins):
            lo_r, hi_r = diam * 2.0 ** (-j - 1), diam * 2.0 ** (-j)
            if hi_r < sp.min():
                break
            a = inside[rng.integers(0, inside.size, size=cap)]
            direction = rng.standard_normal((cap, u.n))
            direction /= np.linalg.norm(direction, axis=1, keepdims=True)
            length = rng.uniform(lo_r, hi_r, size=cap)
            target = pts[a] + direction * length[:, None]
            lo = np.array([bx[0] for bx in u.box])
            gi = np.rint((target - lo) / sp).astype(np.intp)
            okb = np.all((gi >= 0) & (gi < np.array(u.resolution)), axis=1)
            a, gi = a[okb], gi[okb]
            if a.size == 0:
                continue
            b = np.ravel_multi_index(tuple(gi.T), u.resolution)
            keep = a != b
            score(a[keep], b[keep])

    for p in u.singular_points:
        near = np.argmin(np.linalg.norm(pts - np.asarray(p), axis=1))
        # the clamped node itself is invalid; use its valid neighbours as anchors
        ring = np.flatnonzero(np.linalg.norm(pts - pts[near], axis=1) <= 1.5 * sp.max())
        for a0 in ring:
            b = inside[inside != a0]
            score(*capped(np.full(b.size, a0), b))

    return WeightedNormReport(sup_norm, best, float(sigma), float(alpha))


# ---------------------------------------------------------------- k-convexity

@dataclass(frozen=True)
class KConvexityReport:
    fraction: float
    worst_margin: float
    evaluated: int


def kconvexity_report(u: ScalarField, k: int, tol: float = 1e-8, where=None) -> KConvexityReport:
    """Fraction of evaluated nodes whose stencil eigenvalues lie in Gamma_k.

    This grid test stands in for the viscosity inequality ``F_j[u] >= 0``,
    ``j <= k``, which cannot be certified from samples alone.
    """
    k = _check_order(k, 1, u.n)
    mask, lam = hessian_eigenvalues(u, where)
    if lam.shape[0] == 0:
        return KConvexityReport(1.0, math.inf, 0)
    margin = cones.gamma_margin(lam, k)
    margin = np.atleast_1d(margin)
    frac = float(np.mean(margin >= -tol))
    return KConvexityReport(frac, float(margin.min()), int(margin.size))


# ---------------------------------------------------------------- distributional test

def dual_operator_test(u: ScalarField, A, eta: ScalarField, k: int | None = None,
                       dual_tol: float = 1e-8) -> float:
    """Quadrature of ``integral u * (a^ij D_ij eta)``.

    ``eta`` must be nonnegative and vanish within two cells of the box
    boundary.  When ``k`` is given, the eigenvalues of ``A`` are first checked
    against the dual cone Gamma_k*.  Clamped singular nodes of ``u`` carry
    zero weight (the singularities are integrable).
    """
    A = np.asarray(A, dtype=float)
    A = 0.5 * (A + A.T)
    if eta.resolution != u.resolution or eta.box != u.box:
        raise DomainError("eta must be sampled on the same grid as u")
    if np.any(eta.values < -1e-14):
        raise PreconditionError("eta must be nonnegative")
    if np.any(eta.values[~eta.interior_mask(ring=SINGULAR_EXCLUSION_CELLS + 1)] != 0):
        raise DomainError("support of eta touches the boundary")
    if k is not None:
        rep = cones.dual_membership(np.linalg.eigvalsh(A), k, tol=dual_tol)
        if rep.status != "in":
            raise PreconditionError(f"eigenvalues of A not in the dual cone (status {rep.status})")
    mask = eta.interior_mask()
    flat = np.flatnonzero(mask)
    _, H = _stencils(eta.values, eta.spacing, flat)
    L = np.einsum("ij,...ij->...", A, H)
    uv = u.values.ravel()[flat]
    w = np.where(uv <= u.clamp, 0.0, 1.0)
    return float(np.sum(w * np.where(w > 0, uv, 0.0) * L) * u.cell_volume)


# ---------------------------------------------------------------- grid files

GRID_MAGIC = "# khessian-grid 1"


def write_grid(u: ScalarField, path, header: dict | None = None) -> None:
    """Write a field in the plain-text grid format.

    Header lines ``n``, ``box a_1 b_1 ... a_n b_n``, ``resolution r_1 ... r_n``,
    optional ``clamp c`` and ``singular x_1 ... x_n`` lines, then ``values``
    followed by one value per line in row-major order (last axis fastest),
    all numbers with 17 significant digits.  ``header`` adds ``key value``
    lines (single-token values) that readers ignore.
    """
    f17 = lambda x: format(float(x), ".17g")
    lines = [GRID_MAGIC, f"n {u.n}",
             "box " + " ".join(f17(x) for ab in u.box for x in ab),
             "resolution " + " ".join(str(r) for r in u.resolution),
             "clamp " + f17(u.clamp)]
    lines += ["singular " + " ".join(f17(x) for x in p) for p in u.singular_points]
    lines += [f"{key} {value}" for key, value in (header or {}).items()]
    lines.append("values")
    lines += [f17(v) for v in u.values.ravel()]
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_grid(path) -> ScalarField:
    """Inverse of :func:`write_grid`."""
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0].strip() != GRID_MAGIC:
        raise DomainError(f"{path}: not a grid file")
    meta, singular = {}, []
    i = 1
    while i < len(lines) and lines[i].strip() != "values":
        key, *rest = lines[i].split()
        if key == "singular":
            singular.append(tuple(float(x) for x in rest))
        else:
            meta[key] = rest
        i += 1
    try:
        n = int(meta["n"][0])
        b = [float(x) for x in meta["box"]]
        res = tuple(int(x) for x in meta["resolution"])
        clamp = float(meta.get("clamp", [DEFAULT_CLAMP])[0])
    except (KeyError, ValueError, IndexError) as exc:
        raise DomainError(f"{path}: malformed header ({exc})") from None
    vals = np.array([float(x) for x in lines[i + 1:] if x.strip()])
    if vals.size != int(np.prod(res)) or len(res) != n or len(b) != 2 * n:
        raise DomainError(f"{path}: header and data disagree")
    box = tuple(zip(b[0::2], b[1::2]))
    return ScalarField(box, vals.reshape(res), tuple(singular), clamp)


def slice_rows(u: ScalarField, fixed: dict | None = None) -> list:
    """Rows ``(x_1, ..., x_n, value)`` on the 2-D (or 1-D) slice through fixed axes.

    ``fixed`` maps axis index to a coordinate; the nearest grid plane is used.
    By default every axis beyond the second is fixed at its middle.
    """
    fixed = dict(fixed or {i: 0.5 * (a + b) for i, (a, b) in enumerate(u.box) if i >= 2})
    index = []
    for i, ax in enumerate(u.axes()):
        index.append(int(np.argmin(np.abs(ax - fixed[i]))) if i in fixed else slice(None))
    pts = u.points[tuple(index)].reshape(-1, u.n)
    vals = u.values[tuple(index)].ravel()
    return [tuple(p) + (v,) for p, v in zip(pts, vals)]
