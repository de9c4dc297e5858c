import numpy as np
import pytest

from src.core.exceptions import OutputError
from src.services.field_writer import emit_field, linear_triangles, read_field, render_field
from src.services.function_space import FEFunction, build_dofmap, interpolate


def test_constant_field(W):
    text = render_field(interpolate(1.0, W))
    lines = text.splitlines()
    assert lines[0] == "# x y value"
    rows = lines[1:1 + W.num_dofs]
    assert all(row.split()[2] == "1" for row in rows)
    assert lines[1 + W.num_dofs] == ""
    assert lines[2 + W.num_dofs] == "# triangles"


def test_round_trip(W, rng, tmp_path):
    u = FEFunction(W, rng.standard_normal(W.num_dofs))
    data = read_field(emit_field(u, tmp_path / "field_test.dat"))
    assert data.values.shape == (W.num_dofs,)
    assert np.array_equal(data.values, u.coefficients)
    assert np.array_equal(data.coordinates, W.coordinates)
    assert np.array_equal(data.triangles, linear_triangles(u))


def test_four_linear_triangles_per_cell(W):
    triangles = linear_triangles(interpolate(0.0, W))
    assert triangles.shape == (4 * W.mesh.num_cells, 3)
    assert triangles.max() < W.num_dofs


def test_not_a_field_file(tmp_path):
    path = tmp_path / "other.dat"
    path.write_text("1 2 3\n")
    with pytest.raises(OutputError):
        read_field(path)


def test_unwritable_path(W, tmp_path):
    blocker = tmp_path / "blocker"
    blocker.write_text("")
    with pytest.raises(OutputError):
        emit_field(interpolate(0.0, W), blocker / "field.dat")
