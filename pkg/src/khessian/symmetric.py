"""Elementary symmetric functions, principal minor sums and their derivatives.

All functions accept a single tuple/matrix or a stack of them (leading batch
axes), and are pure.  Dimensions are limited to ``n <= 8``.
"""

from __future__ import annotations

from functools import lru_cache
from itertools import combinations
from math import comb

import numpy as np

from .errors import DomainError, PreconditionError

MAX_DIM = 8


def _as_tuple(lam) -> np.ndarray:
    lam = np.asarray(lam, dtype=float)
    if lam.ndim == 0 or lam.shape[-1] < 1:
        raise DomainError("eigenvalue tuple must have length n >= 1")
    if lam.shape[-1] > MAX_DIM:
        raise DomainError(f"n = {lam.shape[-1]} exceeds the supported maximum {MAX_DIM}")
    if not np.all(np.isfinite(lam)):
        raise DomainError("eigenvalue tuple has non-finite entries")
    return lam


def _as_square(A) -> np.ndarray:
    A = np.asarray(A, dtype=float)
    if A.ndim < 2 or A.shape[-1] != A.shape[-2]:
        raise DomainError("expected a square matrix (or a stack of them)")
    if A.shape[-1] > MAX_DIM:
        raise DomainError(f"n = {A.shape[-1]} exceeds the supported maximum {MAX_DIM}")
    if not np.all(np.isfinite(A)):
        raise DomainError("matrix has non-finite entries")
    return A


def _check_order(k, lo, hi):
    if int(k) != k or not lo <= k <= hi:
        raise DomainError(f"order k = {k} outside [{lo}, {hi}]")
    return int(k)


def elem_sym_all(lam) -> np.ndarray:
    """Return ``[S_0, S_1, ..., S_n]`` along a new last axis.

    Uses the coefficient recurrence for ``prod_i (1 + t*lam_i)``, which costs
    O(n^2) and avoids subset enumeration.
    """
    lam = _as_tuple(lam)
    n = lam.shape[-1]
    e = np.zeros(lam.shape[:-1] + (n + 1,))
    e[..., 0] = 1.0
    for i in range(n):
        e[..., 1:i + 2] = e[..., 1:i + 2] + lam[..., i, None] * e[..., :i + 1]
    return e


def elem_sym(lam, k: int):
    """k-th elementary symmetric function of ``lam`` (``S_0 = 1``)."""
    lam = _as_tuple(lam)
    k = _check_order(k, 0, lam.shape[-1])
    out = elem_sym_all(lam)[..., k]
    return float(out) if out.ndim == 0 else out


def elem_sym_brute(lam, k: int) -> float:
    """Subset-enumeration oracle for :func:`elem_sym` (single tuple only)."""
    lam = [float(x) for x in lam]
    if not 0 <= k <= len(lam):
        raise DomainError(f"order k = {k} outside [0, {len(lam)}]")
    return float(sum(np.prod(c) for c in combinations(lam, k))) if k else 1.0


def _normalize_excluded(excluded, n):
    if np.isscalar(excluded):
        excluded = (excluded,)
    excluded = tuple(int(i) for i in excluded)
    if len(set(excluded)) != len(excluded):
        raise DomainError("excluded indices must be distinct")
    for i in excluded:
        if not 0 <= i < n:
            raise DomainError(f"excluded index {i} outside [0, {n})")
    return excluded


def elem_sym_restricted(lam, k: int, excluded):
    """``S_k`` of ``lam`` with the entries at ``excluded`` (0-based) removed.

    Equivalently ``S_k`` evaluated with those entries set to zero.
    """
    lam = _as_tuple(lam)
    n = lam.shape[-1]
    excluded = _normalize_excluded(excluded, n)
    keep = [i for i in range(n) if i not in excluded]
    k = _check_order(k, 0, len(keep))
    if not keep:
        return 1.0 if lam.ndim == 1 else np.ones(lam.shape[:-1])
    return elem_sym(lam[..., keep], k)


@lru_cache(maxsize=None)
def _subsets(n: int, k: int) -> np.ndarray:
    return np.array(list(combinations(range(n), k)), dtype=np.intp)


def minor_sum(A, k: int):
    """Sum of all k x k principal minors of ``A`` (``[A]_k``).

    ``A`` need not be symmetric.  ``k = 0`` returns 1 by convention.
    """
    A = _as_square(A)
    n = A.shape[-1]
    k = _check_order(k, 0, n)
    if k == 0:
        out = np.ones(A.shape[:-2])
    else:
        idx = _subsets(n, k)
        sub = A[..., idx[:, :, None], idx[:, None, :]]
        out = np.linalg.det(sub).sum(axis=-1)
    return float(out) if out.ndim == 0 else out


def minor_sum_derivative(A, k: int) -> np.ndarray:
    """Matrix of partials ``d[A]_k / d a_ij``.

    Uses ``d sigma_k / dA = sum_m (-1)^m sigma_{k-1-m}(A) (A^T)^m``, the
    derivative of the characteristic-polynomial coefficients; ``sigma_j`` are
    themselves the minor sums.
    """
    A = _as_square(A)
    n = A.shape[-1]
    k = _check_order(k, 1, n)
    At = np.swapaxes(A, -1, -2)
    power = np.broadcast_to(np.eye(n), A.shape).copy()
    out = np.zeros_like(A)
    for m in range(k):
        coef = np.asarray(minor_sum(A, k - 1 - m))
        out += (-1) ** m * coef[..., None, None] * power
        power = power @ At
    return out


def newton_check(lam, k: int, l: int, excluded: int = 0, tol: float = 1e-300):
    """Both sides of the restricted Newton inequality.

    Returns ``(lhs, rhs)`` with::

        lhs = S_{k;i} / S_{k-1;i}
        rhs = l (n - k) / (k (n - l)) * S_{l;i} / S_{l-1;i}

    where ``;i`` means the ``excluded`` entry is dropped.  The caller decides
    whether ``lhs <= rhs``; for ``lam`` in the cone Gamma_k it always holds.
    """
    lam = _as_tuple(lam)
    n = lam.shape[-1]
    k = _check_order(k, 2, n)
    l = _check_order(l, 1, k - 1)
    e = elem_sym_all(np.delete(lam, _normalize_excluded(excluded, n), axis=-1))
    den_k, den_l = e[..., k - 1], e[..., l - 1]
    if np.any(den_k <= tol) or np.any(den_l <= tol):
        raise PreconditionError("S_{k-1;i} and S_{l-1;i} must be positive")
    # S_{k;i} is zero when k = n (only n - 1 entries remain)
    num_k = e[..., k] if k <= n - 1 else np.zeros_like(den_k)
    lhs = num_k / den_k
    rhs = l * (n - k) / (k * (n - l)) * e[..., l] / den_l
    if lhs.ndim == 0:
        return float(lhs), float(rhs)
    return lhs, rhs


def binom(n: int, k: int) -> int:
    return comb(n, k)
