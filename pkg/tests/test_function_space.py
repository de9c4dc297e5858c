import numpy as np
import pytest

from src.core.exceptions import DimensionMismatchError
from src.services.function_space import (
    FEFunction,
    SpaceKind,
    build_dofmap,
    evaluate,
    evaluate_gradient,
    interpolate,
    map_to_physical,
)
from src.services.mesh import generate_square_mesh


def test_single_square_dof_counts(single_square):
    V = build_dofmap(single_square, SpaceKind.V)
    W = build_dofmap(single_square, SpaceKind.W)
    assert W.num_dofs == 13
    assert len(V.boundary_dofs) == 8
    assert len(V.free_dofs) == 5
    assert len(W.free_dofs) == 13


def test_boundary_dofs_lie_on_boundary(perturbed_mesh):
    dm = build_dofmap(perturbed_mesh)
    on_box = np.isclose(np.abs(dm.coordinates), 0.5, atol=1e-14).any(axis=1)
    assert np.all(on_box[dm.boundary_dofs])
    assert not np.any(on_box[dm.interior_dofs])


def test_kind_accepts_strings(mesh_2x2):
    assert build_dofmap(mesh_2x2, "V").kind is SpaceKind.V


def test_interpolate_constant(W):
    u = interpolate(1.0, W)
    assert np.all(u.coefficients == 1.0)


def test_quadratics_are_reproduced(perturbed_mesh, rng):
    dm = build_dofmap(perturbed_mesh)
    f = lambda x, y: x ** 2 + y - 0.3 * x * y
    u = interpolate(f, dm)
    for cell in rng.integers(0, perturbed_mesh.num_cells, size=20):
        point = rng.dirichlet(np.ones(3))[1:]
        x, y = map_to_physical(perturbed_mesh, cell, point)
        assert evaluate(u, cell, point) == pytest.approx(f(x, y), abs=1e-13)


def test_quartic_is_not_reproduced(mesh_2x2):
    u = interpolate(lambda x, y: x ** 4, build_dofmap(mesh_2x2))
    centroid = np.array([1.0, 1.0]) / 3
    x, _ = map_to_physical(mesh_2x2, 0, centroid)
    assert abs(evaluate(u, 0, centroid) - x ** 4) > 1e-6


def test_gradient_of_linear_function(perturbed_mesh):
    u = interpolate(lambda x, y: x, build_dofmap(perturbed_mesh))
    grads = u.gradients_at()
    assert np.allclose(grads[..., 0], 1.0, atol=1e-12)
    assert np.allclose(grads[..., 1], 0.0, atol=1e-12)


def test_gradient_of_square(mesh_2x2):
    u = interpolate(lambda x, y: x ** 2, build_dofmap(mesh_2x2))
    point = np.array([0.2, 0.3])
    x, _ = map_to_physical(mesh_2x2, 5, point)
    assert evaluate_gradient(u, 5, point) == pytest.approx([2 * x, 0.0], abs=1e-12)


def test_gradient_matches_finite_differences(perturbed_mesh, rng):
    dm = build_dofmap(perturbed_mesh)
    u = FEFunction(dm, rng.standard_normal(dm.num_dofs))
    delta = 1e-5
    for cell in range(0, perturbed_mesh.num_cells, 7):
        point = np.array([0.25, 0.4])
        grad = evaluate_gradient(u, cell, point)
        for k in range(2):
            step = perturbed_mesh.inverse_jacobians[cell] @ (delta * np.eye(2)[k])
            fd = (evaluate(u, cell, point + step) - evaluate(u, cell, point - step)) / (2 * delta)
            assert fd == pytest.approx(grad[k], abs=1e-6)


def test_values_at_matches_evaluate(mesh_2x2, rng):
    from src.services.quadrature import triangle_rule

    dm = build_dofmap(mesh_2x2)
    u = FEFunction(dm, rng.standard_normal(dm.num_dofs))
    rule = triangle_rule()
    table = u.values_at(rule)
    assert table.shape == (mesh_2x2.num_cells, rule.num_points)
    assert table[3, 4] == pytest.approx(evaluate(u, 3, rule.reference_points[4]), abs=1e-13)


def test_wrong_coefficient_length(W):
    with pytest.raises(DimensionMismatchError):
        FEFunction(W, np.zeros(W.num_dofs + 1))


def test_arithmetic(W):
    u = interpolate(lambda x, y: x, W)
    v = interpolate(lambda x, y: y, W)
    assert np.allclose((u + v).coefficients, W.coordinates.sum(axis=1))
    assert np.allclose((2 * u - v).coefficients, 2 * W.coordinates[:, 0] - W.coordinates[:, 1])


def test_arithmetic_across_meshes(W):
    other = build_dofmap(generate_square_mesh(-1.0, 1.0, 2))
    with pytest.raises(DimensionMismatchError):
        interpolate(0.0, W) + interpolate(0.0, other)
