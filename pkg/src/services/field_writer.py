"""Plot-ready point clouds of P2 fields, readable by gnuplot and pandas."""

import logging
from dataclasses import dataclass
from io import StringIO
from pathlib import Path
from typing import Union

import numpy as np
import pandas as pd

from src.core.exceptions import OutputError
from src.services.elements import P2
from src.services.function_space import FEFunction
from src.utils.file_operations import read_text_file, write_text_file

logger = logging.getLogger(__name__)

VALUES_HEADER = "# x y value"
TRIANGLES_HEADER = "# triangles"


@dataclass(frozen=True, eq=False)
class FieldData:
    """Parsed field file."""

    coordinates: np.ndarray
    values: np.ndarray
    triangles: np.ndarray


def linear_triangles(u: FEFunction) -> np.ndarray:
    """Each P2 cell split into four linear triangles over its six nodes, (4 NC, 3)."""
    return u.dofmap.cell_dofs[:, P2.sub_triangles].reshape(-1, 3)


def render_field(u: FEFunction) -> str:
    """Text of a field file: nodal values, a blank line, then the triangle block."""
    dm = u.dofmap
    points = pd.DataFrame({
        "x": dm.coordinates[:, 0],
        "y": dm.coordinates[:, 1],
        "value": u.coefficients,
    })
    triangles = pd.DataFrame(linear_triangles(u))

    options = {"sep": " ", "header": False, "index": False, "lineterminator": "\n"}
    body = points.to_csv(float_format="%.17g", **options)
    connectivity = triangles.to_csv(**options)
    return f"{VALUES_HEADER}\n{body}\n{TRIANGLES_HEADER}\n{connectivity}"


def emit_field(u: FEFunction, path: Union[str, Path]) -> Path:
    """
    Write ``u`` as a field file.

    Raises:
        OutputError: If the file cannot be written
    """
    path = write_text_file(path, render_field(u))
    logger.debug(f"Wrote field {path} ({u.dofmap.num_dofs} nodes)")
    return path


def read_field(path: Union[str, Path]) -> FieldData:
    """
    Parse a field file written by ``emit_field``.

    Raises:
        OutputError: If the file does not have the two expected blocks
    """
    text = read_text_file(path)
    head, sep, tail = text.partition(f"\n{TRIANGLES_HEADER}\n")
    if not sep or not head.startswith(VALUES_HEADER):
        raise OutputError(f"{path} is not a field file")

    points = pd.read_csv(StringIO(head), sep=" ", comment="#", header=None, dtype=float, float_precision="round_trip")
    triangles = pd.read_csv(StringIO(tail), sep=" ", header=None, dtype=np.int64)
    if points.shape[1] != 3 or triangles.shape[1] != 3:
        raise OutputError(f"{path} has malformed blocks")

    values = points.to_numpy()
    return FieldData(coordinates=values[:, :2], values=values[:, 2], triangles=triangles.to_numpy())
