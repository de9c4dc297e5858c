import math

import numpy as np
import pytest

from src.api.models import ConvergenceTable, ErrorRecord, NewtonTrace
from src.core.exceptions import NonConvergenceError, UnknownProblemError, ValidationError
from src.services import analysis
from src.services.analysis import (
    constant_curvature_problem,
    eoc,
    eoc_rates,
    error_h1_semi,
    error_hessian,
    error_l2,
    interpolation_errors,
    linear_case,
    manufactured_problem,
    run_convergence_study,
    run_curvature_sweep,
)
from src.services.assembly import assemble_mass_matrix
from src.services.function_space import FEFunction, build_dofmap, interpolate
from src.services.hessian import fe_hessian
from src.services.ma_newton import determinant_2x2, residual_density
from src.services.mesh import generate_square_mesh, refine_uniform


def test_curvature_values():
    assert manufactured_problem("quartic").curvature_at(np.array(0.5), np.array(0.5)) == pytest.approx(4 / 3)
    assert manufactured_problem("exponential").curvature_at(np.array(0.0), np.array(0.0)) == pytest.approx(1.0)
    assert manufactured_problem("sphere").curvature_at(np.array(0.3), np.array(-0.2)) == pytest.approx(0.5)


@pytest.mark.parametrize("name", ["quartic", "exponential", "sphere"])
def test_exact_solutions_satisfy_the_equation(name, rng):
    problem = manufactured_problem(name)
    x, y = rng.uniform(-0.5, 0.5, size=(2, 100))
    H = problem.exact_hessian(x, y)
    p = problem.exact_gradient(x, y)
    K = problem.curvature_at(x, y)
    scale = np.maximum(1.0, np.abs(determinant_2x2(H)))
    assert np.all(np.abs(residual_density(H, p, K)) <= 1e-12 * scale)


@pytest.mark.parametrize("name", ["quartic", "exponential", "sphere"])
def test_exact_derivatives_match_finite_differences(name, rng):
    problem = manufactured_problem(name)
    x, y = rng.uniform(-0.45, 0.45, size=(2, 20))
    d = 1e-5
    u, grad, hess = problem.exact_solution, problem.exact_gradient, problem.exact_hessian
    fd_grad = np.stack([(u(x + d, y) - u(x - d, y)) / (2 * d), (u(x, y + d) - u(x, y - d)) / (2 * d)], axis=-1)
    assert np.allclose(fd_grad, grad(x, y), atol=1e-7)
    fd_hess = np.stack([(grad(x + d, y) - grad(x - d, y)) / (2 * d), (grad(x, y + d) - grad(x, y - d)) / (2 * d)], axis=-1)
    assert np.allclose(fd_hess, hess(x, y), atol=1e-7)


def test_exact_solutions_are_convex(rng):
    for name in ("quartic", "exponential", "sphere"):
        x, y = rng.uniform(-0.5, 0.5, size=(2, 100))
        assert np.all(np.linalg.eigvalsh(manufactured_problem(name).exact_hessian(x, y)) >= 0)


def test_unknown_problem():
    with pytest.raises(UnknownProblemError):
        manufactured_problem("cubic")
    with pytest.raises(UnknownProblemError):
        linear_case("laplace")


def test_constant_curvature_problem():
    problem = constant_curvature_problem(0.25)
    assert problem.name == "K=0.25"
    assert problem.boundary_data == 0.0
    assert (problem.xmin, problem.xmax) == (-0.57, 0.57)
    assert not problem.has_exact_solution


def test_eoc_examples():
    assert eoc_rates([1.0, 1 / 8], [1.0, 0.5]) == pytest.approx([3.0])
    assert eoc_rates([1.0, 0.25, 1 / 16], [1.0, 0.5, 0.25]) == pytest.approx([2.0, 2.0])
    assert eoc_rates([1.0, 2 ** -1.5], [1.0, 0.5]) == pytest.approx([1.5])


def test_eoc_exact_hit():
    assert eoc_rates([1e-3, 0.0], [0.5, 0.25]) == [math.inf]


@pytest.mark.parametrize("errors,sizes", [([1.0], [1.0]), ([1.0, 0.5], [1.0])])
def test_eoc_needs_matching_pairs(errors, sizes):
    with pytest.raises(ValidationError):
        eoc_rates(errors, sizes)


def test_eoc_fills_table():
    records = [
        ErrorRecord(level=k, h=2.0 ** -k, ndof=13, err_l2=8.0 ** -k, err_h1=4.0 ** -k, err_h2=2.0 ** -k)
        for k in range(3)
    ]
    table = ConvergenceTable(problem="test", records=records)
    rates = eoc(table)
    assert rates["l2"] == pytest.approx([3.0, 3.0])
    assert rates["h1"] == pytest.approx([2.0, 2.0])
    assert table.rates["h2"] == pytest.approx([1.0, 1.0])


def test_errors_vanish_for_reproduced_quadratic(perturbed_mesh):
    case = linear_case("constant-spd")
    U = interpolate(case.exact_solution, build_dofmap(perturbed_mesh))
    assert error_l2(U, case.exact_solution) <= 1e-10
    assert error_h1_semi(U, case.exact_gradient) <= 1e-10
    assert error_hessian(fe_hessian(U), case.exact_hessian) <= 1e-10


def test_l2_error_is_mass_norm(mesh_2x2, rng):
    dm = build_dofmap(mesh_2x2)
    U = FEFunction(dm, rng.standard_normal(dm.num_dofs))
    M = assemble_mass_matrix(dm)
    expected = np.sqrt(U.coefficients @ (M @ U.coefficients))
    zero = lambda x, y: np.zeros_like(x)
    assert error_l2(U, zero) == pytest.approx(expected, rel=1e-12)


def test_interpolation_baseline_is_third_order():
    problem = manufactured_problem("exponential")
    mesh = generate_square_mesh(-0.5, 0.5, 2)
    records = []
    for level in range(3):
        records.append(interpolation_errors(problem, mesh, level))
        mesh = refine_uniform(mesh)
    rates = eoc_rates([r.err_l2 for r in records], [r.h for r in records])
    assert 2.6 <= rates[-1] <= 3.4


def test_study_needs_two_levels(mesh_2x2):
    with pytest.raises(ValidationError):
        run_convergence_study(manufactured_problem("sphere"), mesh_2x2, 1)


def test_study_needs_exact_solution(mesh_2x2):
    with pytest.raises(ValidationError):
        run_convergence_study(constant_curvature_problem(0.1), mesh_2x2, 2)


def test_failed_level_keeps_partial_table(mesh_2x2, mocker):
    real_solve = analysis.newton_solve
    calls = {"n": 0}

    def flaky(problem, mesh, config=None):
        calls["n"] += 1
        if calls["n"] == 3:
            raise NonConvergenceError("stalled")
        return real_solve(problem, mesh, config)

    mocker.patch("src.services.analysis.newton_solve", side_effect=flaky)
    with pytest.raises(NonConvergenceError) as exc:
        run_convergence_study(manufactured_problem("sphere"), mesh_2x2, 3)

    table = exc.value.table
    assert [r.level for r in table.records] == [0, 1]
    assert len(table.rates["l2"]) == 1


def test_level_callback(mocker):
    callback = mocker.Mock()
    table = run_convergence_study(manufactured_problem("sphere"), generate_square_mesh(-0.5, 0.5, 2), 2, on_level=callback)
    assert callback.call_count == 2
    assert [r.newton_iters > 0 for r in table.records] == [True, True]
    assert table.records[1].err_l2 < table.records[0].err_l2


@pytest.mark.slow
@pytest.mark.parametrize(
    "name,l2,h1,h2",
    [("quartic", (2.6, 3.4), (1.7, 2.3), (1.2, 1.8)), ("exponential", (2.6, 3.4), (1.7, 2.3), (1.2, 1.8))],
)
def test_manufactured_convergence_rates(name, l2, h1, h2):
    table = run_convergence_study(manufactured_problem(name), generate_square_mesh(-0.5, 0.5, 4), 4)
    assert l2[0] <= table.rates["l2"][-1] <= l2[1]
    assert h1[0] <= table.rates["h1"][-1] <= h1[1]
    assert h2[0] <= table.rates["h2"][-1] <= h2[1]


def test_sweep_seeds_each_curvature_from_the_last_solution(mesh_2x2, mocker):
    U = interpolate(lambda x, y: x ** 2 + y ** 2 - 0.5, build_dofmap(mesh_2x2))
    H = fe_hessian(U)
    trace = NewtonTrace(converged=True)
    solve = mocker.patch(
        "src.services.analysis.newton_solve",
        side_effect=[(U, H, trace), NonConvergenceError("diverged", trace=trace), (U, H, trace)],
    )
    callback = mocker.Mock()

    records = run_curvature_sweep([1.0, 0.1, 2.0], mesh_2x2, 0.5, on_converged=callback)

    assert [r.K for r in records] == [0.1, 1.0, 2.0]
    assert [r.converged for r in records] == [True, False, True]
    assert records[0].min_u == pytest.approx(-0.5)
    assert records[1].message == "diverged"
    starts = [c.args[3] for c in solve.call_args_list]
    assert starts[0] is None
    assert starts[1] == (U, H)
    assert starts[2] == (U, H)
    assert callback.call_count == 2


def test_sweep_without_continuation_starts_fresh(mesh_2x2, mocker):
    U = interpolate(lambda x, y: x ** 2 + y ** 2 - 0.5, build_dofmap(mesh_2x2))
    solve = mocker.patch(
        "src.services.analysis.newton_solve",
        return_value=(U, fe_hessian(U), NewtonTrace(converged=True)),
    )
    run_curvature_sweep([0.1, 0.5], mesh_2x2, 0.5, continuation=False)
    assert [c.args[3] for c in solve.call_args_list] == [None, None]
