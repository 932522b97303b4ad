import itertools
import math

import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile("default")


def brute_elem_sym(lam, k):
    """Subset enumeration, written independently of the package."""
    return float(sum(math.prod(c) for c in itertools.combinations(list(lam), k)))


def char_poly_minor_sums(A):
    """[A]_k from det(tI - A) = sum_k (-1)^k [A]_k t^(n-k)."""
    c = np.poly(np.asarray(A, dtype=float))
    return [(-1) ** k * c[k] for k in range(len(c))]


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
