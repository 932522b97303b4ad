import math
import warnings

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.integrate import dblquad

from conftest import brute_elem_sym
from khessian import DomainError, PreconditionError
from khessian.analytic import AnalyticFunctionSpec as Spec
from khessian.cones import sample_gamma
from khessian.field import (Ball, MollifierKernel, ScalarField, SupConvolutionWarning,
                            derivatives_at, dual_operator_test, hessian_operator,
                            jacobi_eigenvalues, kconvexity_report, mollify, pk_hessian_operator,
                            pk_hessian_pointwise, read_grid, slice_rows, sup_convolution,
                            weighted_norms, write_grid)
from khessian.symmetric import elem_sym


def grid(f, n, N=17, half=1.0):
    return ScalarField.from_function(f, [(-half, half)] * n, N)


def test_field_invariants():
    u = grid(lambda p: p[..., 0], 2, 9)
    assert np.allclose(u.spacing, 0.25)
    with pytest.raises(DomainError):
        ScalarField(((0, 1), (0, 1)), np.zeros((4, 6)))
    with pytest.raises(DomainError):
        ScalarField(((0, 1),), np.zeros((6, 6)))
    with pytest.raises(DomainError):
        ScalarField(((1, 0),), np.zeros(6))


def test_derivative_examples():
    u = grid(lambda p: 0.5 * (p ** 2).sum(-1), 3, 9)
    d = derivatives_at(u, (4, 4, 4))
    assert np.allclose(d.hessian, np.eye(3), atol=1e-12)
    assert np.allclose(d.eigenvalues, 1.0, atol=1e-12)
    a = np.array([0.3, -1.2])
    d = derivatives_at(grid(lambda p: p @ a, 2, 9), (2, 5))
    assert np.allclose(d.gradient, a, atol=1e-12) and np.allclose(d.hessian, 0, atol=1e-12)
    d = derivatives_at(grid(lambda p: p[..., 0] * p[..., 1], 2, 9), (3, 3))
    assert np.allclose(d.hessian, [[0, 1], [1, 0]], atol=1e-12)
    assert np.allclose(d.eigenvalues, [-1, 1], atol=1e-12)
    with pytest.raises(DomainError):
        derivatives_at(u, (0, 4, 4))


def test_stencil_hessian_symmetric_and_trace(rng):
    u = grid(lambda p: np.sin(p[..., 0] * p[..., 1]) + p[..., 2] ** 3, 3, 11)
    for idx in rng.integers(1, 10, size=(20, 3)):
        d = derivatives_at(u, idx)
        assert np.abs(d.hessian - d.hessian.T).max() <= 1e-14 * max(1, np.abs(d.hessian).max())
        assert np.all(np.diff(d.eigenvalues) >= 0)
        assert abs(d.eigenvalues.sum() - np.trace(d.hessian)) <= 1e-10 * max(1, np.abs(d.hessian).sum())


@given(st.integers(1, 8), st.integers(0, 2 ** 32 - 1))
def test_jacobi_against_lapack(n, seed):
    A = np.random.default_rng(seed).standard_normal((n, n))
    A = A + A.T
    ref = np.linalg.eigvalsh(A)
    assert np.allclose(jacobi_eigenvalues(A), ref, atol=1e-10 * max(1, np.abs(ref).max()))


def test_jacobi_batched_and_extreme():
    H = np.array([[[1e-200, 1.0], [1.0, 1e-200]], [[2.0, 0.0], [0.0, -3.0]]])
    assert np.allclose(jacobi_eigenvalues(H), [[-1, 1], [-3, 2]])
    tiny = np.array([[1.0, 1e-160], [1e-160, 1.0 + 1e-170]])
    assert np.allclose(jacobi_eigenvalues(tiny), [1.0, 1.0])


@pytest.mark.parametrize("n,k,a", [(3, 2, 1.0), (3, 3, 2.0), (4, 2, 0.5), (2, 1, -1.5)])
def test_hessian_operator_scaled_quadratic(n, k, a):
    u = grid(lambda p: 0.5 * a * (p ** 2).sum(-1), n, 9)
    F = hessian_operator(u, k).values
    inner = F[np.isfinite(F)]
    assert inner.size == 7 ** n  # boundary ring absent
    assert np.allclose(inner, a ** k * math.comb(n, k), rtol=1e-12)
    assert np.all(np.isnan(F[0]))


def test_hessian_operator_general_quadratic(rng):
    for n in (2, 3):
        M = rng.standard_normal((n, n))
        A = M @ M.T - 0.5 * np.eye(n)
        u = grid(lambda p: 0.5 * np.einsum("...i,ij,...j->...", p, A, p), n, 9)
        lam = np.linalg.eigvalsh(A)
        for k in range(1, n + 1):
            for method in ("eigen", "minors"):
                F = hessian_operator(u, k, method=method).values
                ref = brute_elem_sym(lam, k)
                scale = math.comb(n, k) * np.abs(lam).max() ** k
                assert np.nanmax(np.abs(F - ref)) <= 1e-12 * scale


def test_fundamental_solution_annulus_second_order():
    errs = []
    for N in (33, 65, 129):
        u = ScalarField.from_function(Spec.wk(2, 1), [(-1, 1)] * 2, N, singular_points=[(0, 0)])
        r = np.linalg.norm(u.points, axis=-1)
        F = hessian_operator(u, 1, where=(r >= 0.3) & (r <= 0.8)).values
        errs.append(np.nanmax(np.abs(F)))
    assert errs[0] / errs[1] > 3.4 and errs[1] / errs[2] > 3.4


def test_operator_monotone_in_hessian(rng):
    n, k = 4, 3
    lam = sample_gamma(n, k, 500, rng)
    for l_, s in zip(lam, rng.standard_normal((500, n, n))):
        Q, _ = np.linalg.qr(s)
        H = Q @ np.diag(l_) @ Q.T
        R = rng.standard_normal((n, n))
        P = R @ R.T
        before = elem_sym(np.linalg.eigvalsh(H), k)
        after = elem_sym(np.linalg.eigvalsh(H + P), k)
        assert after >= before - 1e-10 * (1 + np.abs(np.linalg.eigvalsh(H + P)).max()) ** k


@pytest.mark.parametrize("p", [2.0, 3.0, 4.5])
def test_pk_pointwise_examples(p):
    g, H = np.array([1.0, 0.0]), np.eye(2)
    assert pk_hessian_pointwise(g, H, 1, p) == pytest.approx(p)
    assert pk_hessian_pointwise(g, H, 2, p) == pytest.approx(p - 1)


def test_pk_pointwise_p2_and_determinant(rng):
    for _ in range(50):
        n = int(rng.integers(2, 5))
        g = rng.standard_normal(n)
        M = rng.standard_normal((n, n))
        H = M + M.T
        lam = np.linalg.eigvalsh(H)
        for l in range(1, n + 1):
            ref = brute_elem_sym(lam, l)
            assert pk_hessian_pointwise(g, H, l, 2.0) == pytest.approx(ref, abs=1e-12 * (1 + np.abs(lam).max()) ** l)
        p = float(rng.uniform(2, 5))
        ref = (p - 1) * np.linalg.norm(g) ** (n * (p - 2)) * np.linalg.det(H)
        assert pk_hessian_pointwise(g, H, n, p) == pytest.approx(ref, rel=1e-9, abs=1e-12)


def test_pk_pointwise_zero_gradient_and_domain():
    assert pk_hessian_pointwise(np.zeros(3), np.eye(3), 2, 3.0) == 0.0
    with pytest.raises(DomainError):
        pk_hessian_pointwise(np.ones(3), np.eye(3), 2, 1.5)


def test_pk_operator_field_on_quadratic():
    u = grid(lambda p: 0.5 * (p ** 2).sum(-1), 2, 9)
    F = pk_hessian_operator(u, 2, 2.0).values
    assert np.allclose(F[np.isfinite(F)], 1.0)


def test_kernel_unit_mass_2d():
    ker = MollifierKernel(0.7, 2)
    mass, _ = dblquad(lambda y, x: float(ker(np.array([x, y]))), -0.7, 0.7,
                      lambda x: -math.sqrt(max(0.49 - x * x, 0)), lambda x: math.sqrt(max(0.49 - x * x, 0)),
                      epsabs=1e-12, epsrel=1e-11)
    assert mass == pytest.approx(1.0, abs=1e-8)
    assert float(ker(np.array([0.7, 0.0]))) == 0.0
    with pytest.raises(DomainError):
        MollifierKernel(0.0, 2)


def test_mollify_constant_and_linear():
    ker = MollifierKernel(0.3, 2)
    c = mollify(grid(lambda p: np.full(p.shape[:-1], 2.5), 2, 33), ker)
    assert np.allclose(c.values, 2.5, atol=1e-13)
    a = np.array([1.5, -0.5])
    lin = mollify(grid(lambda p: p @ a + 1, 2, 33), ker)
    assert np.allclose(lin.values, lin.points @ a + 1, atol=1e-12)
    assert lin.box[0][0] > -1 and lin.box[0][1] < 1
    with pytest.raises(DomainError):
        mollify(grid(lambda p: p[..., 0], 2, 33), MollifierKernel(1.2, 2))


def test_mollified_fundamental_solution_decreases_with_h():
    u = ScalarField.from_function(Spec.wk(3, 1), [(-1, 1)] * 3, 40, singular_points=[(0, 0, 0)])
    dx = u.spacing[0]
    big, small = mollify(u, MollifierKernel(6 * dx, 3)), mollify(u, MollifierKernel(3 * dx, 3))
    assert np.all(np.isfinite(big.values)) and big.values.min() > -100
    shift = (small.resolution[0] - big.resolution[0]) // 2
    crop = small.values[shift:-shift, shift:-shift, shift:-shift]
    assert crop.shape == big.values.shape
    # equal where u is harmonic up to quadrature error, which peaks (~1e-3 of |u_h| ~ 5)
    # where the wider kernel first reaches the steep region around the pole
    assert np.all(big.values >= crop - 2e-3)
    far = np.linalg.norm(big.points, axis=-1) > 0.45
    assert np.all(big.values[far] >= crop[far] - 1e-4)
    near = np.linalg.norm(big.points, axis=-1) < 3 * dx
    assert np.all(big.values[near] > crop[near] + 1e-3)


def test_mollify_preserves_k_convexity():
    q1 = Spec.quadratic(np.diag([2.0, 1.0, -0.5]), b=[0.2, 0, 0])
    q2 = Spec.quadratic(np.diag([-0.5, 1.0, 2.0]), b=[-0.2, 0, 0])
    u = Spec.maximum(q1, q2).sample([(-1, 1)] * 3, 33)
    v = mollify(u, MollifierKernel(0.25, 3))
    assert kconvexity_report(v, 2).fraction == 1.0


def test_sup_convolution_examples():
    const = sup_convolution(lambda y: np.full(y.shape[:-1], 3.0), 0.1, [0.2], [(-1, 1)])
    assert const == pytest.approx(3.0)
    a, eps, x = np.array([0.5, -0.25]), 0.2, np.array([0.1, 0.3])
    val = sup_convolution(lambda y: y @ a, eps, x, [(-1, 1), (-1, 1)])
    assert val == pytest.approx(x @ a + eps * (a @ a) / 2, abs=1e-10)
    with pytest.raises(DomainError):
        sup_convolution(lambda y: y[..., 0], 0.0, [0.0], [(-1, 1)])


def test_sup_convolution_warns_on_small_box():
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        sup_convolution(lambda y: 10 * y[..., 0], 1.0, [0.0], [(-0.5, 0.5)])
    assert any(issubclass(w.category, SupConvolutionWarning) for w in caught)


def test_sup_convolution_semiconvex():
    eps = 0.1
    xs = np.linspace(-0.5, 0.5, 41)
    f = np.array([sup_convolution(lambda y: -np.abs(y[..., 0]), eps, [x], [(-2, 2)]) for x in xs])
    g = f + xs ** 2 / (2 * eps)
    assert np.all(g[1:-1] <= 0.5 * (g[:-2] + g[2:]) + 1e-9)


def test_weighted_norm_examples():
    one = grid(lambda p: np.ones(p.shape[:-1]), 3, 21)
    rep = weighted_norms(one, sigma=3, alpha=0.5, domain=Ball((0, 0, 0), 1.0))
    assert rep.sup_norm == pytest.approx(1.0)
    assert rep.holder_seminorm == 0.0
    r = grid(lambda p: np.linalg.norm(p, axis=-1), 2, 33)
    rep = weighted_norms(r, sigma=0, alpha=1.0)
    # the weight d_xy^alpha tends to 1 only at the centre, so the grid value is 1 - dx
    assert rep.holder_seminorm == pytest.approx(1.0 - r.spacing[0], abs=1e-12)
    fine = grid(lambda p: np.linalg.norm(p, axis=-1), 2, 129)
    assert weighted_norms(fine, sigma=0, alpha=1.0).holder_seminorm == pytest.approx(1.0, abs=0.02)
    assert min(rep.sup_norm, rep.holder_seminorm, rep.sigma, rep.alpha) >= 0
    with pytest.raises(DomainError):
        weighted_norms(r, 0.0, 0.0)


def test_weighted_norms_deterministic():
    u = grid(lambda p: np.sin(3 * p[..., 0]) * p[..., 1], 2, 33)
    assert weighted_norms(u, 1.0, 0.5, seed=3) == weighted_norms(u, 1.0, 0.5, seed=3)


def test_kconvexity_report_examples():
    up = grid(lambda p: 0.5 * (p ** 2).sum(-1), 3, 9)
    assert kconvexity_report(up, 3).fraction == 1.0
    down = grid(lambda p: -0.5 * (p ** 2).sum(-1), 3, 9)
    rep = kconvexity_report(down, 1)
    assert rep.fraction == 0.0 and rep.worst_margin == pytest.approx(-3.0)


def _bump_field(n, N=33, radius=0.6):
    def eta(p):
        s = (p ** 2).sum(-1) / radius ** 2
        return np.where(s < 1, np.exp(-1 / (1 - np.minimum(s, 1 - 1e-12))), 0.0)
    return grid(eta, n, N)


def test_dual_operator_examples():
    eta = _bump_field(2, 65)
    mass = eta.integrate()
    up = grid(lambda p: 0.5 * (p ** 2).sum(-1), 2, 65)
    assert dual_operator_test(up, np.eye(2), eta) == pytest.approx(2 * mass, rel=1e-3)
    down = up.with_values(-up.values)
    assert dual_operator_test(down, np.eye(2), eta) == pytest.approx(-2 * mass, rel=1e-3)
    w = ScalarField.from_function(Spec.wk(3, 1), [(-1, 1)] * 3, 32, singular_points=[(0, 0, 0)])
    assert dual_operator_test(w, np.eye(3), _bump_field(3, 32), k=1) >= 0


def test_dual_operator_checks():
    eta = _bump_field(2, 33)
    up = grid(lambda p: 0.5 * (p ** 2).sum(-1), 2, 33)
    with pytest.raises(PreconditionError):
        dual_operator_test(up, np.diag([1.0, -2.0]), eta, k=2)
    wide = grid(lambda p: np.ones(p.shape[:-1]), 2, 33)
    with pytest.raises(DomainError):
        dual_operator_test(up, np.eye(2), wide)


def test_grid_roundtrip(tmp_path):
    u = ScalarField.from_function(Spec.wk(3, 1), [(-1, 1), (-0.5, 0.5), (0, 2)], (9, 7, 5),
                                  singular_points=[(0, 0, 1)])
    path = tmp_path / "u.grid"
    write_grid(u, path, header={"config_sha256": "abc"})
    v = read_grid(path)
    assert v.box == u.box and v.resolution == u.resolution
    assert np.array_equal(v.values, u.values)
    assert v.singular_points == u.singular_points and v.clamp == u.clamp


def test_grid_read_errors(tmp_path):
    bad = tmp_path / "bad.grid"
    bad.write_text("not a grid\n")
    with pytest.raises(DomainError):
        read_grid(bad)
    u = grid(lambda p: p[..., 0], 2, 5)
    write_grid(u, bad)
    bad.write_text(bad.read_text() + "1.0\n")
    with pytest.raises(DomainError):
        read_grid(bad)


def test_slice_rows():
    u = grid(lambda p: p[..., 0] + 10 * p[..., 1] + 100 * p[..., 2], 3, 5)
    rows = slice_rows(u)
    assert len(rows) == 25
    for x, y, z, v in rows:
        assert z == 0.0 and v == pytest.approx(x + 10 * y)
