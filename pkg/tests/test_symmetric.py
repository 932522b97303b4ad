import itertools
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import brute_elem_sym, char_poly_minor_sums
from khessian import DomainError, PreconditionError
from khessian.symmetric import (binom, elem_sym, elem_sym_all, elem_sym_brute,
                                elem_sym_restricted, minor_sum, minor_sum_derivative,
                                newton_check)

entries = st.floats(-10, 10, allow_nan=False)
tuples = st.lists(entries, min_size=1, max_size=8)


@pytest.mark.parametrize("lam, k, expected", [
    ((1, 1, 1), 2, 3.0),
    ((1, 2, 3), 3, 6.0),
    ((2, -1, 0, 4), 2, brute_elem_sym((2, -1, 0, 4), 2)),
])
def test_elem_sym_examples(lam, k, expected):
    assert elem_sym(lam, k) == pytest.approx(expected, abs=1e-12)


def test_elem_sym_pair_sum_by_hand():
    # pairs of (2, -1, 0, 4): -2 + 0 + 8 + 0 - 4 + 0
    assert brute_elem_sym((2, -1, 0, 4), 2) == 2.0
    assert elem_sym((2, -1, 0, 4), 2) == pytest.approx(2.0, abs=1e-12)


def test_s0_is_one_and_order_checked():
    assert elem_sym((5.0, 7.0), 0) == 1.0
    for k in (-1, 3):
        with pytest.raises(DomainError):
            elem_sym((1.0, 2.0), k)


def test_dimension_limit():
    with pytest.raises(DomainError):
        elem_sym(np.ones(9), 2)


@given(tuples)
def test_recurrence_matches_enumeration(lam):
    n = len(lam)
    S = elem_sym_all(lam)
    absS = elem_sym_all(np.abs(lam))
    for k in range(n + 1):
        ref = brute_elem_sym(lam, k)
        assert abs(S[k] - ref) <= 1e-10 * absS[k] + 1e-12
        assert elem_sym_brute(lam, k) == pytest.approx(ref, rel=1e-12, abs=1e-12)


@given(tuples, st.randoms(use_true_random=False))
def test_permutation_symmetry(lam, rnd):
    perm = list(lam)
    rnd.shuffle(perm)
    absS = elem_sym_all(np.abs(lam))
    assert np.all(np.abs(elem_sym_all(perm) - elem_sym_all(lam)) <= 1e-10 * absS + 1e-12)


def test_restricted_examples():
    assert elem_sym_restricted((1, 2, 3), 1, {1}) == pytest.approx(4.0)  # 0-based: drops 2
    assert elem_sym_restricted((1, 2, 3), 1, {0}) == pytest.approx(5.0)
    assert elem_sym_restricted((1, 2, 3, 4), 2, {0, 1}) == pytest.approx(12.0)
    total = sum(elem_sym_restricted((1, 2, 3), 1, i) for i in range(3))
    assert total == pytest.approx(12.0)
    assert total == pytest.approx((3 - 2 + 1) * elem_sym((1, 2, 3), 1))


def test_restricted_errors():
    with pytest.raises(DomainError):
        elem_sym_restricted((1, 2, 3), 1, {3})
    with pytest.raises(DomainError):
        elem_sym_restricted((1, 2, 3), 3, {0})


@given(tuples, st.floats(-5, 5), st.data())
def test_linear_in_each_entry(lam, t, data):
    i = data.draw(st.integers(0, len(lam) - 1))
    n = len(lam)
    bumped = np.array(lam, dtype=float)
    bumped[i] += t
    scale = elem_sym_all(np.abs(bumped)) + elem_sym_all(np.abs(lam))
    for k in range(1, n + 1):
        lhs = elem_sym(bumped, k) - elem_sym(lam, k)
        rhs = t * elem_sym_restricted(lam, k - 1, i)
        assert abs(lhs - rhs) <= 1e-10 * (scale[k] + abs(t) * scale[k - 1]) + 1e-12


@given(tuples)
def test_sum_rule(lam):
    n = len(lam)
    absS = elem_sym_all(np.abs(lam))
    for k in range(1, n + 1):
        total = sum(elem_sym_restricted(lam, k - 1, i) for i in range(n))
        ref = (n - k + 1) * elem_sym(lam, k - 1)
        assert abs(total - ref) <= 1e-10 * (n - k + 1) * absS[k - 1] + 1e-12


def test_minor_sum_examples():
    assert minor_sum(np.eye(3), 2) == pytest.approx(3.0)
    assert minor_sum(np.diag([1.0, 2.0, 3.0]), 2) == pytest.approx(1 * 2 + 1 * 3 + 2 * 3)
    assert minor_sum([[0.0, 1.0], [-1.0, 0.0]], 2) == pytest.approx(1.0)
    with pytest.raises(DomainError):
        minor_sum(np.eye(3), 4)


def test_minor_sum_against_characteristic_polynomial(rng):
    for n in range(1, 9):
        A = rng.standard_normal((n, n))
        ref = char_poly_minor_sums(A)
        for k in range(1, n + 1):
            assert minor_sum(A, k) == pytest.approx(ref[k], rel=1e-9, abs=1e-9)


@given(tuples)
def test_minor_sum_of_diagonal(lam):
    D = np.diag(lam)
    absS = elem_sym_all(np.abs(lam))
    for k in range(1, len(lam) + 1):
        assert abs(minor_sum(D, k) - elem_sym(lam, k)) <= 1e-10 * absS[k] + 1e-12


def test_orthogonal_invariance(rng):
    for n in range(2, 9):
        S = rng.standard_normal((n, n))
        S = S + S.T
        Q, _ = np.linalg.qr(rng.standard_normal((n, n)))
        scale = np.abs(np.linalg.eigvalsh(S)).max()
        for k in range(1, n + 1):
            err = abs(minor_sum(Q.T @ S @ Q, k) - minor_sum(S, k))
            assert err <= 1e-10 * binom(n, k) * scale ** k


def test_derivative_examples(rng):
    A = rng.standard_normal((4, 4))
    assert np.allclose(minor_sum_derivative(A, 1), np.eye(4))
    assert np.allclose(minor_sum_derivative(np.diag([1.0, 2.0, 3.0]), 2), np.diag([5.0, 4.0, 3.0]))


def test_derivative_by_finite_differences(rng):
    A = rng.standard_normal((4, 4))
    D = minor_sum_derivative(A, 3)
    h = 1e-6
    for i, j in itertools.product(range(4), repeat=2):
        E = np.zeros((4, 4))
        E[i, j] = h
        fd = (minor_sum(A + E, 3) - minor_sum(A - E, 3)) / (2 * h)
        assert D[i, j] == pytest.approx(fd, rel=1e-6, abs=1e-6)
    contraction = float(np.sum(D * A))
    assert contraction == pytest.approx(3 * minor_sum(A, 3), rel=1e-10)


@given(st.integers(1, 8), st.integers(0, 2 ** 32 - 1))
def test_contraction_identity(n, seed):
    A = np.random.default_rng(seed).standard_normal((n, n))
    row = np.linalg.norm(A, axis=1).max()
    for k in range(1, n + 1):
        lhs = float(np.sum(minor_sum_derivative(A, k) * A))
        assert abs(lhs - k * minor_sum(A, k)) <= 1e-10 * k * binom(n, k) * row ** k


@pytest.mark.parametrize("n", [3, 4, 6])
def test_newton_equality_on_ones(n):
    for k in range(2, n + 1):
        for l in range(1, k):
            lhs, rhs = newton_check(np.ones(n), k, l)
            assert lhs == pytest.approx((n - k) / k, abs=1e-12)
            assert rhs == pytest.approx((n - k) / k, abs=1e-12)


def test_newton_zero_tuple_fails_precondition():
    with pytest.raises(PreconditionError):
        newton_check(np.zeros(4), 3, 2)


def test_newton_on_cone_samples(rng):
    from khessian.cones import sample_gamma
    lam = sample_gamma(4, 3, 10_000, rng)
    lhs, rhs = newton_check(lam, 3, 2, excluded=0)
    assert np.all(lhs <= rhs + 1e-12 * (np.abs(lhs) + np.abs(rhs) + 1))


def test_binom():
    assert [binom(5, k) for k in range(6)] == [math.comb(5, k) for k in range(6)]
