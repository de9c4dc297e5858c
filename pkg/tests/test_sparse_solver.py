import numpy as np
import pytest
from scipy.sparse import csr_matrix, identity

from src.core.exceptions import DimensionMismatchError, SingularMatrixError
from src.services.assembly import assemble_mass_matrix
from src.services.function_space import build_dofmap
from src.services.sparse_solver import SparseLU, factorize, solve_sparse


def test_identity():
    b = np.arange(5.0)
    assert np.array_equal(solve_sparse(identity(5, format="csr"), b), b)


def test_two_by_two():
    A = csr_matrix(np.array([[2.0, 1.0], [1.0, 2.0]]))
    assert solve_sparse(A, np.array([3.0, 3.0])) == pytest.approx([1.0, 1.0], abs=1e-15)


def test_mass_matrix_solve(perturbed_mesh, rng):
    M = assemble_mass_matrix(build_dofmap(perturbed_mesh))
    x = rng.standard_normal(M.shape[0])
    assert np.allclose(solve_sparse(M, M @ x), x, atol=1e-10)


def test_multiple_right_hand_sides(rng):
    A = csr_matrix(np.array([[4.0, 1.0, 0.0], [1.0, 3.0, 1.0], [0.0, 1.0, 2.0]]))
    X = rng.standard_normal((3, 4))
    lu = factorize(A)
    assert np.allclose(lu.solve(A @ X), X, atol=1e-13)


@pytest.mark.parametrize("dense", [[[1.0, 1.0], [1.0, 1.0]], [[1.0, 0.0], [0.0, 1e-20]], [[0.0, 0.0], [0.0, 0.0]]])
def test_singular_matrix(dense):
    with pytest.raises(SingularMatrixError):
        SparseLU(csr_matrix(np.array(dense)))


def test_non_square():
    with pytest.raises(DimensionMismatchError):
        solve_sparse(csr_matrix(np.ones((2, 3))), np.ones(2))


def test_wrong_rhs_length():
    with pytest.raises(DimensionMismatchError):
        solve_sparse(identity(3, format="csr"), np.ones(4))


def test_empty_system():
    assert solve_sparse(csr_matrix((0, 0)), np.zeros(0)).shape == (0,)
