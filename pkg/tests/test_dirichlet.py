import math

import numpy as np
import pytest

from khessian.analytic import radial_mesh
from khessian.errors import DomainError, PreconditionError
from khessian.field import ScalarField
from khessian.dirichlet import (
    DirichletProblemSpec as D, atom_density, comparison_check, harmonic_extension,
    radial_comparison_check, solve_grid, solve_measure_data, solve_radial,
)

BOX = ((-1.0, 1.0), (-1.0, 1.0))
ORIGIN3 = (0.0, 0.0, 0.0)
# curved boundary data; flat data on the square admits no convex k=2 solution
_BOWL = lambda p: 0.75 * (p ** 2).sum(-1)


def _sup(field, f):
    return float(np.abs(field.values - f(field.points)).max())


# -- problem specs

def test_spec_validation():
    with pytest.raises(DomainError):
        D("sphere", 2, 1)
    with pytest.raises(DomainError):
        D("box", 3, 1)
    with pytest.raises(DomainError):
        D("box", 2, 1, atoms=[((0.0, 0.0), -1.0)])
    with pytest.raises(DomainError):
        D("box", 2, 1, atoms=[((0.0, 0.0, 0.0), 1.0)])
    with pytest.raises(DomainError):
        D("radial", 3, 1, atoms=[((0.1, 0.0, 0.0), 1.0)])
    with pytest.raises(DomainError):
        D("radial", 3, 1, atoms=[(ORIGIN3, 1.0), (ORIGIN3, 2.0)])
    with pytest.raises(DomainError):
        D("radial", 3, 4)


# -- radial

@pytest.mark.parametrize("n,k,psi", [(3, 1, 3.0), (5, 2, 10.0), (4, 4, 1.0)])
def test_radial_quadratic_solutions(n, k, psi):
    rep = solve_radial(D("radial", n, k, psi))
    prof = rep.solution
    assert np.allclose(prof.u, (prof.r ** 2 - 1) / 2, atol=1e-10)
    assert rep.residual < 1e-9
    assert rep.convexity_fraction == 1.0


def test_radial_newtonian_atom():
    rep = solve_radial(D("radial", 3, 1, 0.0, atoms=[(ORIGIN3, 4 * math.pi)]))
    prof = rep.solution
    m = prof.r >= 0.1
    assert np.allclose(prof.u[m], 1 - 1 / prof.r[m], rtol=1e-6, atol=1e-8)
    assert rep.residual < 1e-9


def test_radial_boundary_value_shift():
    a = solve_radial(D("radial", 3, 2, 1.0)).solution
    b = solve_radial(D("radial", 3, 2, 1.0, phi=2.5)).solution
    assert np.allclose(b.u - a.u, 2.5)


def test_radial_solve_needs_radial_geometry():
    with pytest.raises(DomainError):
        solve_radial(D("box", 2, 1))
    with pytest.raises(DomainError):
        solve_grid(D("radial", 2, 1))


# -- grid

def test_grid_laplacian_manufactured_is_exact():
    half_square = lambda p: 0.5 * (p ** 2).sum(-1)
    rep = solve_grid(D("box", 2, 1, 2.0, half_square, resolution=33), u0=np.zeros((33, 33)))
    assert rep.status == "converged"
    assert _sup(rep.solution, half_square) < 1e-8


@pytest.mark.parametrize("a", [0.5, 1.5])
def test_grid_determinant_manufactured(a):
    u = lambda p: 0.5 * a * (p ** 2).sum(-1)
    rep = solve_grid(D("box", 2, 2, a * a, u, resolution=33), u0=np.zeros((33, 33)))
    assert rep.status == "converged"
    assert _sup(rep.solution, u) < 1e-8
    assert rep.convexity_fraction >= 0.999


def test_grid_explicit_method_decreases_residual():
    half_square = lambda p: 0.5 * (p ** 2).sum(-1)
    rep = solve_grid(D("box", 2, 1, 2.0, half_square, resolution=17, method="explicit",
                       max_iter=50), u0=np.zeros((17, 17)))
    assert rep.history[-1] < rep.history[0]
    assert rep.iterations == 50 and rep.status == "nonconvergent"
    with pytest.raises(DomainError):
        solve_grid(D("box", 2, 1, 2.0, 0.0, resolution=17, method="newton"), u0=np.zeros((17, 17)))


def test_flat_boundary_determinant_problem_reports_nonconvergence():
    rep = solve_grid(D("box", 2, 2, 1.0, 0.0, resolution=17, max_iter=300))
    assert rep.status == "nonconvergent"
    assert len(rep.history) == rep.iterations + 1  # includes the starting residual


def test_grid_rejects_negative_density():
    with pytest.raises(DomainError):
        solve_grid(D("box", 2, 1, -1.0))


def test_grid_matches_radial_at_second_order():
    gauss = lambda r: np.exp(-np.asarray(r) ** 2)
    rad = solve_radial(D("radial", 2, 2, gauss, R=math.sqrt(2.0))).solution
    ru = lambda p: rad(np.linalg.norm(p, axis=-1))
    errs = []
    for N in (17, 33, 65):
        rep = solve_grid(D("box", 2, 2, lambda p: gauss(np.linalg.norm(p, axis=-1)), ru,
                           resolution=N, tol=1e-11))
        assert rep.status == "converged"
        errs.append(_sup(rep.solution, ru))
    orders = [math.log2(errs[i] / errs[i + 1]) for i in range(2)]
    assert min(orders) >= 1.8


def test_grid_solutions_ordered_by_density():
    big = solve_grid(D("box", 2, 2, lambda p: 2.0 + p[..., 0] ** 2, _BOWL, resolution=33)).solution
    small = solve_grid(D("box", 2, 2, lambda p: 1.0 + 0.5 * p[..., 0] ** 2, _BOWL, resolution=33)).solution
    assert np.all(big.values <= small.values + 1e-8)


# -- atoms and measure data

def test_atom_density_carries_mass_exactly():
    g = ScalarField.from_function(lambda p: p[..., 0], BOX, 65)
    dens = atom_density([((0.1, -0.2), 3.0), ((0.5, 0.5), 0.0)], g.points, 0.25, g.cell_volume)
    assert dens.sum() * g.cell_volume == pytest.approx(3.0, rel=1e-12)
    with pytest.raises(DomainError):
        atom_density([((0.01, 0.01), 1.0)], g.points, 1e-6, g.cell_volume)


def test_radial_measure_data_converges_to_newtonian_solution():
    md = solve_measure_data(D("radial", 3, 1, 0.0, 0.0, [(ORIGIN3, 4 * math.pi)]),
                            reference=lambda r: 1.0 - 1.0 / r)
    ref = md.convergence.pairings[0]
    assert all(b < a for a, b in zip(ref, ref[1:]))
    # within 1 % of the integral of |1 - 1/r| over the unit ball
    assert ref[-1] / (4 * math.pi * (0.5 - 1 / 3)) < 0.01
    assert md.convergence.verdict == "converged"
    assert len(md.rows()) == 4 and md.to_dict()["verdict"] == "converged"


def test_planar_measure_data_approaches_logarithm():
    log_r = lambda p: np.log(np.linalg.norm(p, axis=-1))
    spec = D("box", 2, 1, 0.0, log_r, [((0.0, 0.0), 2 * math.pi)], resolution=64)
    md = solve_measure_data(spec, levels=3, reference=log_r)
    ref = md.convergence.pairings[0]
    assert all(b < a for a, b in zip(ref, ref[1:]))
    assert md.convergence.verdict == "converged"
    assert all(s.status == "converged" for s in md.solutions)


def test_massless_atoms_reduce_to_plain_solve():
    quad = lambda p: 0.5 * (p ** 2).sum(-1)
    plain = solve_grid(D("box", 2, 1, 2.0, quad, resolution=33))
    md = solve_measure_data(D("box", 2, 1, 2.0, quad, [((0.0, 0.0), 0.0)], resolution=33))
    assert np.array_equal(md.solve.solution.values, plain.solution.values)
    assert md.convergence.notes == ["no atoms: single solve"]


# -- comparison

def _grid(f, N=33):
    return ScalarField.from_function(f, BOX, N)


def test_comparison_identical_fields():
    u = _grid(lambda p: (p ** 2).sum(-1))
    res = comparison_check(u, u, k=2, check_preconditions=False)
    assert res.passed and res.boundary_ordered and res.violations.size == 0


def test_comparison_against_concave_barrier():
    u = _grid(lambda p: 0.5 * (p ** 2).sum(-1))
    v = _grid(lambda p: 1.0 - 0.1 * (p ** 2).sum(-1) + 0.2)
    res = comparison_check(u, v, k=1)
    assert res.boundary_ordered and res.passed
    assert res.max_excess < 0


def test_comparison_finds_exactly_the_bump():
    v = _grid(lambda p: np.zeros(p.shape[:-1]))
    bump = lambda p: np.maximum(0.0, 0.09 - ((p - 0.3) ** 2).sum(-1))
    u = v.with_values(v.values + bump(v.points))
    res = comparison_check(u, v, check_preconditions=False)
    assert not res.passed
    support = {tuple(i) for i in np.argwhere(bump(v.points) > 1e-8)}
    assert {tuple(i) for i in res.violations} == support


def test_comparison_preconditions():
    u = _grid(lambda p: 0.5 * (p ** 2).sum(-1))
    convex_v = _grid(lambda p: (p ** 2).sum(-1) + 5.0)
    with pytest.raises(PreconditionError, match="F_k"):
        comparison_check(u, convex_v, k=1)
    concave_u = _grid(lambda p: -(p ** 2).sum(-1))
    with pytest.raises(PreconditionError, match="k-convex"):
        comparison_check(concave_u, _grid(lambda p: 5.0 - (p ** 2).sum(-1)), k=1)
    with pytest.raises(DomainError):
        comparison_check(u, _grid(lambda p: p[..., 0], N=17))


def test_comparison_on_solver_outputs():
    rep = solve_grid(D("box", 2, 2, 1.0, _BOWL, resolution=33))
    assert rep.status == "converged"
    u = rep.solution
    assert comparison_check(u, harmonic_extension(u), k=2).passed
    rad = solve_radial(D("radial", 3, 2, 1.0, mesh=radial_mesh(1.0, uniform=500)))
    res = radial_comparison_check(rad, 3, 0.5, N=17)
    assert res.passed and res.boundary_ordered


def test_harmonic_extension_reproduces_harmonic_functions():
    h = lambda p: p[..., 0] ** 2 - p[..., 1] ** 2 + 3 * p[..., 0] * p[..., 1] - p[..., 1]
    u = _grid(h)
    assert _sup(harmonic_extension(u), h) < 1e-12
    with pytest.raises(DomainError):
        harmonic_extension(ScalarField.from_function(lambda p: p[..., 0], [(-1, 1)] * 3, 9))
