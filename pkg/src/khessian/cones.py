"""Membership, projection and duality tests for the cones Gamma_k.

``Gamma_k = {lam : S_j(lam) >= 0 for j = 1..k}`` is a closed convex cone
containing the positive orthant; ``Gamma_k*`` is its dual under the Euclidean
pairing.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from itertools import permutations

import numpy as np
from scipy.optimize import minimize

from .errors import DomainError
from .symmetric import _as_tuple, _check_order, elem_sym, elem_sym_all

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ConeMembershipReport:
    """Outcome of a (dual) cone membership test.

    ``status`` is ``"in"``, ``"out"`` or ``"inconclusive"``; the last only
    occurs for the numerical dual-cone test.
    """

    in_cone: bool
    margin: float
    witness: np.ndarray | None = None
    boundary: bool = False
    status: str = "in"


def gamma_margin(lam, k: int):
    """``min_{1<=j<=k} S_j(lam)``; batched over leading axes."""
    lam = _as_tuple(lam)
    k = _check_order(k, 1, lam.shape[-1])
    out = elem_sym_all(lam)[..., 1:k + 1].min(axis=-1)
    return float(out) if out.ndim == 0 else out


def gamma_membership(lam, k: int, tol: float = 0.0) -> ConeMembershipReport:
    """Test ``lam`` against Gamma_k; margins in ``[-tol, tol]`` are boundary."""
    if tol < 0:
        raise DomainError("tol must be nonnegative")
    margin = gamma_margin(lam, k)
    inside = margin >= -tol
    return ConeMembershipReport(
        in_cone=bool(inside),
        margin=margin,
        boundary=bool(abs(margin) <= tol),
        status="in" if inside else "out",
    )


def cone_monotonicity_check(lam, eta, k: int) -> bool:
    """Probe ``0 <= S_k(lam) <= S_k(lam + eta)`` for ``lam`` in Gamma_k, ``eta >= 0``.

    Invalid inputs are logged as precondition violations and still evaluated.
    """
    lam = _as_tuple(lam)
    eta = _as_tuple(eta)
    if gamma_margin(lam, k) < 0 or np.any(eta < 0):
        log.warning("cone_monotonicity_check: precondition violated (lam not in Gamma_%d or eta < 0)", k)
    s0 = elem_sym(lam, k)
    s1 = elem_sym(lam + eta, k)
    return bool(0 <= s0 <= s1)


def project_to_cone(lam, k: int, max_iter: int = 200):
    """Shift ``lam`` along the diagonal into Gamma_k.

    Returns ``(lam + t*1, t)`` with the smallest ``t >= 0`` that puts the result
    in Gamma_k.  The set of admissible ``t`` is a half-line because Gamma_k
    is a convex cone containing ``(1, ..., 1)``, so bisection on membership is
    exact up to rounding.  Batched over leading axes.
    """
    lam = _as_tuple(lam)
    n = lam.shape[-1]
    k = _check_order(k, 1, n)
    lo = np.zeros(lam.shape[:-1])
    # lam + hi*1 lies in the closed positive orthant, hence in Gamma_k
    hi = np.maximum(0.0, -lam.min(axis=-1))
    if k == n:
        t = hi
    elif k == 1:
        t = np.maximum(0.0, -lam.sum(axis=-1) / n)
    else:
        inside = gamma_margin(lam, k) >= 0
        hi = np.where(inside, 0.0, hi)
        for _ in range(max_iter):
            active = hi - lo > 1e-15 * np.maximum(1.0, hi)
            if not np.any(active):
                break
            mid = 0.5 * (lo + hi)
            ok = gamma_margin(lam + mid[..., None], k) >= 0
            hi = np.where(active & ok, mid, hi)
            lo = np.where(active & ~ok, mid, lo)
        t = hi
    # rounding can leave the closed-form shifts a few ulps short
    for _ in range(64):
        short = gamma_margin(lam + t[..., None], k) < 0
        if not np.any(short):
            break
        t = np.where(short, np.nextafter(t, np.inf) + 4 * np.finfo(float).eps * np.abs(t), t)
    out = lam + t[..., None]
    if out.ndim == 1:
        return out, float(t)
    return out, t


def sample_gamma(n: int, k: int, size: int, rng: np.random.Generator, spread: float = 1.0):
    """Random points of Gamma_k (interior with probability one).

    Gaussian draws are shifted onto the cone along the diagonal and then
    pushed inside by a further random amount, so the sample covers both the
    neighbourhood of the boundary and the bulk.
    """
    g = rng.standard_normal((size, n))
    base, _ = project_to_cone(g, k)
    extra = spread * rng.exponential(size=size) * rng.choice([1e-3, 0.1, 1.0], size=size)
    return base + extra[:, None]


def boundary_family(n: int, k: int) -> np.ndarray:
    """Distinct permutations of ``(1, ..., 1, -(n-k)/k)``, all on the boundary of Gamma_k."""
    base = np.ones(n)
    base[-1] = -(n - k) / k
    return np.array(sorted(set(permutations(base))))


def _dual_local_search(mu, k, start):
    n = len(mu)

    def sj_con(j):
        def fun(x):
            return elem_sym(x, j)

        def jac(x):
            # d S_j / d x_i = S_{j-1} with x_i removed
            return np.array([elem_sym(np.delete(x, i), j - 1) for i in range(n)])

        return {"type": "ineq", "fun": fun, "jac": jac}

    cons = [sj_con(j) for j in range(1, k + 1)]
    cons.append({"type": "ineq", "fun": lambda x: 1.0 - x @ x, "jac": lambda x: -2 * x})
    return minimize(lambda x: x @ mu, start, jac=lambda x: mu, constraints=cons,
                    method="SLSQP", options={"maxiter": 300, "ftol": 1e-14})


def dual_membership(mu, k: int, tol: float = 1e-8, starts: int = 64,
                    seed: int = 0) -> ConeMembershipReport:
    """Numerical test of ``mu`` against the dual cone Gamma_k*.

    Estimates ``m* = min <lam, mu>`` over unit ``lam`` in Gamma_k from
    ``starts`` local searches (SLSQP over the unit ball, started at random
    feasible points) plus the explicit boundary family and the coordinate
    vectors.  Each search result is normalized and shifted into the cone
    before pairing, so a value below ``-tol`` is an exact certificate of
    non-membership (returned as ``witness``).  Otherwise the result is
    ``"in"`` if at least one search converged and ``"inconclusive"`` if none
    did; ``margin`` is the estimate of ``m*``.
    """
    mu = _as_tuple(mu)
    n = len(mu)
    k = _check_order(k, 1, n)
    rng = np.random.default_rng(seed)

    candidates = list(boundary_family(n, k)) + list(np.eye(n))
    best_val, best_x = np.inf, None
    for x in candidates:
        x = x / np.linalg.norm(x)
        val = float(x @ mu)
        if val < best_val:
            best_val, best_x = val, x

    g = rng.standard_normal((starts, n))
    feas, _ = project_to_cone(g, k)
    converged = 0
    for x0 in feas:
        x0 = x0 / max(np.linalg.norm(x0), 1e-300)
        res = _dual_local_search(mu, k, x0)
        if res.success:
            converged += 1
        nx = np.linalg.norm(res.x)
        if nx <= 1e-12:
            continue  # collapsed onto the apex, pairing 0
        # certificates must be exactly feasible: shift the unit direction into the cone
        x, _ = project_to_cone(res.x / nx, k)
        x = x / np.linalg.norm(x)
        val = float(x @ mu)
        if val < best_val:
            best_val, best_x = val, x

    if best_val < -tol:
        w = best_x / np.linalg.norm(best_x)
        return ConeMembershipReport(False, best_val, witness=w, status="out")
    if converged == 0:
        return ConeMembershipReport(False, best_val, status="inconclusive")
    return ConeMembershipReport(True, best_val, boundary=abs(best_val) <= tol, status="in")
