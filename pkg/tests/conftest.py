"""Shared fixtures for the solver tests."""

import numpy as np
import pytest

from src.services.function_space import SpaceKind, build_dofmap
from src.services.mesh import generate_square_mesh


@pytest.fixture
def single_square():
    """n = 1 criss-cross mesh of [-0.5, 0.5]^2: 5 vertices, 4 cells."""
    return generate_square_mesh(-0.5, 0.5, 1)


@pytest.fixture
def mesh_2x2():
    return generate_square_mesh(-0.5, 0.5, 2)


@pytest.fixture
def perturbed_mesh():
    return generate_square_mesh(-0.5, 0.5, 4, perturb=0.2, seed=7)


@pytest.fixture(params=["single", "2x2", "perturbed"])
def any_mesh(request):
    if request.param == "single":
        return generate_square_mesh(-0.5, 0.5, 1)
    if request.param == "2x2":
        return generate_square_mesh(-0.5, 0.5, 2)
    return generate_square_mesh(-0.5, 0.5, 4, perturb=0.2, seed=7)


@pytest.fixture
def W(mesh_2x2):
    return build_dofmap(mesh_2x2, SpaceKind.W)


@pytest.fixture
def rng():
    return np.random.default_rng(20240517)
