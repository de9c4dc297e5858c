"""Conforming triangulations of axis-aligned squares: generation, refinement and text IO."""

import logging
from dataclasses import dataclass
from functools import cached_property
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from src.core.config import settings
from src.core.exceptions import MeshInvariantError, MeshParseError, ValidationError

logger = logging.getLogger(__name__)

# Local edge l of a cell joins local vertices LOCAL_EDGES[l]
LOCAL_EDGES = np.array([[0, 1], [1, 2], [2, 0]])

SHAPE_RATIO_BOUND = 20.0
AREA_RTOL = 1e-12
MAX_PERTURB = 0.3


@dataclass(frozen=True, eq=False)
class Mesh:
    """
    Immutable triangulation with the topology needed by P2 spaces.

    Attributes:
        vertices: (NV, 2) coordinates
        cells: (NC, 3) vertex indices, counterclockwise
        edges: (NE, 2) unique vertex pairs, sorted within each row
        cell_edges: (NC, 3) index into ``edges`` of local edge l
        boundary_edges: (NB, 2) endpoints, oriented as in the parent cell
        boundary_normals: (NB, 2) unit outward normals
        boundary_cells: (NB,) parent cell of each boundary edge
        boundary_local_edges: (NB,) local edge index within the parent cell
    """

    vertices: np.ndarray
    cells: np.ndarray
    edges: np.ndarray
    cell_edges: np.ndarray
    boundary_edges: np.ndarray
    boundary_normals: np.ndarray
    boundary_cells: np.ndarray
    boundary_local_edges: np.ndarray

    @property
    def num_vertices(self) -> int:
        return int(self.vertices.shape[0])

    @property
    def num_cells(self) -> int:
        return int(self.cells.shape[0])

    @property
    def num_edges(self) -> int:
        return int(self.edges.shape[0])

    @property
    def num_boundary_edges(self) -> int:
        return int(self.boundary_edges.shape[0])

    @cached_property
    def bounds(self) -> Tuple[float, float, float, float]:
        """Bounding box (xmin, xmax, ymin, ymax) of the vertices."""
        lo = self.vertices.min(axis=0)
        hi = self.vertices.max(axis=0)
        return float(lo[0]), float(hi[0]), float(lo[1]), float(hi[1])

    @cached_property
    def jacobians(self) -> np.ndarray:
        """(NC, 2, 2) affine maps from the reference triangle, columns x1 - x0 and x2 - x0."""
        v = self.vertices[self.cells]
        return np.stack([v[:, 1] - v[:, 0], v[:, 2] - v[:, 0]], axis=-1)

    @cached_property
    def jacobian_determinants(self) -> np.ndarray:
        return np.linalg.det(self.jacobians)

    @cached_property
    def inverse_jacobians(self) -> np.ndarray:
        return np.linalg.inv(self.jacobians)

    @cached_property
    def edge_counts(self) -> np.ndarray:
        """Number of cells sharing each edge."""
        return np.bincount(self.cell_edges.ravel(), minlength=self.num_edges)

    @cached_property
    def boundary_edge_lengths(self) -> np.ndarray:
        d = self.vertices[self.boundary_edges[:, 1]] - self.vertices[self.boundary_edges[:, 0]]
        return np.linalg.norm(d, axis=1)

    @cached_property
    def boundary_edge_indices(self) -> np.ndarray:
        """Index into ``edges`` of each boundary edge."""
        return self.cell_edges[self.boundary_cells, self.boundary_local_edges]

    def equals(self, other: "Mesh") -> bool:
        """Structural equality: identical coordinates and connectivity."""
        return (
            np.array_equal(self.vertices, other.vertices)
            and np.array_equal(self.cells, other.cells)
            and np.array_equal(self.boundary_edges, other.boundary_edges)
        )


def build_mesh(vertices: np.ndarray, cells: np.ndarray, validate: bool = True) -> Mesh:
    """
    Derive edges, boundary edges and outward normals from vertices and cells.

    Args:
        vertices: (NV, 2) coordinates
        cells: (NC, 3) counterclockwise vertex triples
        validate: Whether to check every mesh invariant

    Returns:
        Mesh: The assembled triangulation

    Raises:
        MeshInvariantError: If an edge is shared by more than two cells or, when
            validating, any other invariant fails
    """
    vertices = np.ascontiguousarray(vertices, dtype=float)
    cells = np.ascontiguousarray(cells, dtype=np.int64)

    if vertices.ndim != 2 or vertices.shape[1] != 2:
        raise MeshInvariantError(f"Vertices must have shape (NV, 2), got {vertices.shape}")
    if cells.ndim != 2 or cells.shape[1] != 3 or cells.shape[0] == 0:
        raise MeshInvariantError(f"Cells must have shape (NC, 3) with NC >= 1, got {cells.shape}")
    if cells.min() < 0 or cells.max() >= vertices.shape[0]:
        raise MeshInvariantError("Cell references a vertex index out of range")

    local = cells[:, LOCAL_EDGES]
    pairs = np.sort(local.reshape(-1, 2), axis=1)
    edges, inverse, counts = np.unique(pairs, axis=0, return_inverse=True, return_counts=True)
    cell_edges = np.asarray(inverse).reshape(cells.shape[0], 3)

    if counts.max() > 2:
        raise MeshInvariantError(
            f"Nonconforming mesh: {int(np.sum(counts > 2))} edges shared by more than two cells"
        )

    boundary_cells, boundary_local = np.nonzero(counts[cell_edges] == 1)
    boundary_edges = local[boundary_cells, boundary_local]
    d = vertices[boundary_edges[:, 1]] - vertices[boundary_edges[:, 0]]
    lengths = np.linalg.norm(d, axis=1)
    if np.any(lengths == 0):
        raise MeshInvariantError("Degenerate boundary edge of zero length")
    normals = np.column_stack([d[:, 1], -d[:, 0]]) / lengths[:, None]

    mesh = Mesh(
        vertices=vertices,
        cells=cells,
        edges=edges,
        cell_edges=cell_edges,
        boundary_edges=boundary_edges,
        boundary_normals=normals,
        boundary_cells=boundary_cells,
        boundary_local_edges=boundary_local,
    )

    if validate:
        validate_mesh(mesh)
    return mesh


def validate_mesh(mesh: Mesh) -> None:
    """
    Assert orientation, conformity, coverage, normals and shape regularity.

    Raises:
        MeshInvariantError: On the first violated invariant
    """
    areas = cell_areas(mesh)
    if np.any(areas <= 0):
        raise MeshInvariantError(f"{int(np.sum(areas <= 0))} cells are not counterclockwise")

    if np.unique(np.sort(mesh.cells, axis=1), axis=0).shape[0] != mesh.num_cells:
        raise MeshInvariantError("Mesh contains repeated cells")

    if np.unique(mesh.cells).shape[0] != mesh.num_vertices:
        raise MeshInvariantError("Mesh contains vertices not used by any cell")

    xmin, xmax, ymin, ymax = mesh.bounds
    scale = max(xmax - xmin, ymax - ymin)
    domain_area = (xmax - xmin) * (ymax - ymin)
    if abs(areas.sum() - domain_area) > AREA_RTOL * domain_area:
        raise MeshInvariantError(
            f"Cells cover area {areas.sum():.17g}, domain area is {domain_area:.17g}"
        )

    # A boundary edge off the box boundary means a hanging node or a hole
    ends = mesh.vertices[mesh.boundary_edges]
    tol = 1e-12 * scale
    on_side = (
        np.all(np.abs(ends[:, :, 0] - xmin) <= tol, axis=1)
        | np.all(np.abs(ends[:, :, 0] - xmax) <= tol, axis=1)
        | np.all(np.abs(ends[:, :, 1] - ymin) <= tol, axis=1)
        | np.all(np.abs(ends[:, :, 1] - ymax) <= tol, axis=1)
    )
    if not np.all(on_side):
        raise MeshInvariantError(
            f"{int(np.sum(~on_side))} edges with a single cell lie inside the domain (hanging nodes)"
        )

    if not np.allclose(np.linalg.norm(mesh.boundary_normals, axis=1), 1.0, rtol=0, atol=1e-12):
        raise MeshInvariantError("Boundary normals are not unit length")

    centroids = mesh.vertices[mesh.cells[mesh.boundary_cells]].mean(axis=1)
    midpoints = ends.mean(axis=1)
    if np.any(np.einsum("ij,ij->i", midpoints - centroids, mesh.boundary_normals) <= 0):
        raise MeshInvariantError("Boundary normal points into its parent cell")

    ratios = shape_ratios(mesh)
    if ratios.max() > SHAPE_RATIO_BOUND:
        raise MeshInvariantError(
            f"Shape regularity violated: ratio {ratios.max():.3f} exceeds {SHAPE_RATIO_BOUND}"
        )


def generate_square_mesh(
    xmin: float,
    xmax: float,
    n: int,
    perturb: float = 0.0,
    seed: Optional[int] = None,
) -> Mesh:
    """
    Criss-cross triangulation of [xmin, xmax]^2.

    Each of the n x n squares is split into four triangles about its centre.
    With ``perturb > 0`` every interior vertex is moved by at most
    ``perturb * w / 2`` (w the square side, w / 2 the height of a criss-cross
    triangle) using a generator seeded with ``seed``.

    Args:
        xmin: Lower coordinate of the square in both directions
        xmax: Upper coordinate of the square in both directions
        n: Number of squares per side
        perturb: Relative displacement in [0, 0.3)
        seed: Random seed, defaults to ``settings.MESH_SEED``

    Returns:
        Mesh: Validated triangulation

    Raises:
        ValidationError: If the parameters are out of range
    """
    if not np.isfinite(xmin) or not np.isfinite(xmax) or xmax <= xmin:
        raise ValidationError(f"Need xmax > xmin, got xmin={xmin}, xmax={xmax}")
    if isinstance(n, bool) or int(n) != n or n < 1:
        raise ValidationError(f"Resolution n must be a positive integer, got {n}")
    if not 0.0 <= perturb < MAX_PERTURB:
        raise ValidationError(f"Perturbation must lie in [0, {MAX_PERTURB}), got {perturb}")
    n = int(n)

    width = (xmax - xmin) / n
    ticks = np.linspace(xmin, xmax, n + 1)
    gx, gy = np.meshgrid(ticks, ticks)
    centres = xmin + (np.arange(n) + 0.5) * width
    cx, cy = np.meshgrid(centres, centres)
    vertices = np.vstack([
        np.column_stack([gx.ravel(), gy.ravel()]),
        np.column_stack([cx.ravel(), cy.ravel()]),
    ])

    i, j = np.meshgrid(np.arange(n), np.arange(n))
    i, j = i.ravel(), j.ravel()
    a = j * (n + 1) + i
    b = a + 1
    c = a + (n + 1) + 1
    d = a + (n + 1)
    m = (n + 1) ** 2 + j * n + i
    cells = np.stack([
        np.column_stack([a, b, m]),
        np.column_stack([b, c, m]),
        np.column_stack([c, d, m]),
        np.column_stack([d, a, m]),
    ], axis=1).reshape(-1, 3)

    if perturb > 0:
        rng = np.random.default_rng(settings.MESH_SEED if seed is None else seed)
        gi, gj = np.meshgrid(np.arange(n + 1), np.arange(n + 1))
        interior = ((gi > 0) & (gi < n) & (gj > 0) & (gj < n)).ravel()
        movable = np.concatenate([np.nonzero(interior)[0], np.arange((n + 1) ** 2, vertices.shape[0])])
        step = perturb * width / 2
        vertices[movable] += rng.uniform(-1.0, 1.0, size=(movable.size, 2)) * (step / np.sqrt(2.0))

    mesh = build_mesh(vertices, cells)
    logger.debug(
        f"Generated criss-cross mesh on [{xmin}, {xmax}]^2: n={n}, perturb={perturb}, "
        f"{mesh.num_vertices} vertices, {mesh.num_cells} cells"
    )
    return mesh


def refine_uniform(mesh: Mesh) -> Mesh:
    """
    Split every cell into four by its edge midpoints.

    Children of cell c are cells 4c .. 4c+3 of the result; the first three sit
    at the parent's vertices and the last is the midpoint triangle.
    """
    nv = mesh.num_vertices
    midpoints = 0.5 * (mesh.vertices[mesh.edges[:, 0]] + mesh.vertices[mesh.edges[:, 1]])
    vertices = np.vstack([mesh.vertices, midpoints])

    v0, v1, v2 = mesh.cells.T
    e01, e12, e20 = (nv + mesh.cell_edges).T
    cells = np.stack([
        np.column_stack([v0, e01, e20]),
        np.column_stack([e01, v1, e12]),
        np.column_stack([e20, e12, v2]),
        np.column_stack([e01, e12, e20]),
    ], axis=1).reshape(-1, 3)

    return build_mesh(vertices, cells)


def refine(mesh: Mesh, times: int) -> Mesh:
    """Apply ``refine_uniform`` repeatedly."""
    for _ in range(times):
        mesh = refine_uniform(mesh)
    return mesh


def cell_areas(mesh: Mesh) -> np.ndarray:
    return 0.5 * mesh.jacobian_determinants


def _cell_edge_lengths(mesh: Mesh) -> np.ndarray:
    v = mesh.vertices[mesh.cells]
    return np.linalg.norm(v[:, [1, 2, 0]] - v, axis=2)


def cell_diameters(mesh: Mesh) -> np.ndarray:
    """Per-cell diameter h_K, the longest edge."""
    return _cell_edge_lengths(mesh).max(axis=1)


def mesh_size(mesh: Mesh) -> float:
    """Global maximum of the meshsize function."""
    return float(cell_diameters(mesh).max())


def vertex_meshsize(mesh: Mesh) -> np.ndarray:
    """Meshsize function h(x) = max of h_K over cells whose closure contains x, at vertices."""
    h = np.zeros(mesh.num_vertices)
    np.maximum.at(h, mesh.cells, cell_diameters(mesh)[:, None])
    return h


def shape_ratios(mesh: Mesh) -> np.ndarray:
    """Circumradius over inradius per cell (2 for equilateral triangles)."""
    lengths = _cell_edge_lengths(mesh)
    area = np.abs(cell_areas(mesh))
    semi = 0.5 * lengths.sum(axis=1)
    return np.prod(lengths, axis=1) * semi / (4.0 * area ** 2)


def interior_edges(mesh: Mesh) -> np.ndarray:
    """The skeleton: edges shared by two cells."""
    return mesh.edges[mesh.edge_counts == 2]


def interior_cells(mesh: Mesh) -> np.ndarray:
    """
    Indices of cells away from the boundary.

    Prefers cells without a boundary vertex; on meshes too coarse to have any,
    falls back to cells without a boundary edge, then to all cells.
    """
    on_boundary = np.zeros(mesh.num_vertices, dtype=bool)
    on_boundary[mesh.boundary_edges.ravel()] = True
    cells = np.nonzero(~on_boundary[mesh.cells].any(axis=1))[0]
    if cells.size == 0:
        cells = np.setdiff1d(np.arange(mesh.num_cells), mesh.boundary_cells)
    if cells.size == 0:
        cells = np.arange(mesh.num_cells)
    return cells


def mesh_info(mesh: Mesh) -> Dict[str, Any]:
    """Summary statistics for reporting."""
    areas = cell_areas(mesh)
    return {
        "vertices": mesh.num_vertices,
        "cells": mesh.num_cells,
        "edges": mesh.num_edges,
        "boundary_edges": mesh.num_boundary_edges,
        "p2_dofs": mesh.num_vertices + mesh.num_edges,
        "h_max": mesh_size(mesh),
        "h_min": float(cell_diameters(mesh).min()),
        "min_area": float(areas.min()),
        "total_area": float(areas.sum()),
        "max_shape_ratio": float(shape_ratios(mesh).max()),
    }


def save_mesh(mesh: Mesh) -> str:
    """Serialize to the ``NV NC NB`` / vertices / cells / boundary edges text format."""
    lines: List[str] = [f"{mesh.num_vertices} {mesh.num_cells} {mesh.num_boundary_edges}"]
    lines.extend(f"{x:.17g} {y:.17g}" for x, y in mesh.vertices)
    lines.extend(f"{i} {j} {k}" for i, j, k in mesh.cells)
    lines.extend(f"{i} {j}" for i, j in mesh.boundary_edges)
    return "\n".join(lines) + "\n"


def load_mesh(text: str) -> Mesh:
    """
    Parse the text format written by ``save_mesh``.

    Blank lines are ignored; reported line numbers refer to the original text.
    Normals are recomputed and the listed boundary edges must match the
    boundary derived from the cells.

    Raises:
        MeshParseError: On malformed content
        MeshInvariantError: If the parsed mesh is nonconforming
    """
    numbered = [(k + 1, line.split()) for k, line in enumerate(text.splitlines())]
    numbered = [(k, tokens) for k, tokens in numbered if tokens]
    if not numbered:
        raise MeshParseError("empty mesh file", line=1)

    header_line, header = numbered[0]
    counts = _parse_ints(header, 3, header_line, "header 'NV NC NB'")
    nv, nc, nb = counts
    if nv < 3 or nc < 1 or nb < 3:
        raise MeshParseError(f"header counts too small: NV={nv} NC={nc} NB={nb}", line=header_line)

    body = numbered[1:]
    if len(body) < nv + nc + nb:
        last = body[-1][0] if body else header_line
        raise MeshParseError(
            f"expected {nv + nc + nb} data lines after the header, found {len(body)}", line=last + 1
        )
    if len(body) > nv + nc + nb:
        raise MeshParseError("unexpected trailing content", line=body[nv + nc + nb][0])

    vertices = np.empty((nv, 2))
    for row, (line_no, tokens) in enumerate(body[:nv]):
        if len(tokens) != 2:
            raise MeshParseError(f"expected 'x y', got {len(tokens)} fields", line=line_no)
        try:
            vertices[row] = [float(t) for t in tokens]
        except ValueError:
            raise MeshParseError(f"invalid coordinate {' '.join(tokens)!r}", line=line_no)
        if not np.all(np.isfinite(vertices[row])):
            raise MeshParseError("non-finite coordinate", line=line_no)

    cells = np.empty((nc, 3), dtype=np.int64)
    for row, (line_no, tokens) in enumerate(body[nv:nv + nc]):
        cells[row] = _parse_indices(tokens, 3, nv, line_no, "cell 'i j k'")

    listed = np.empty((nb, 2), dtype=np.int64)
    for row, (line_no, tokens) in enumerate(body[nv + nc:]):
        listed[row] = _parse_indices(tokens, 2, nv, line_no, "boundary edge 'i j'")

    mesh = build_mesh(vertices, cells)

    derived = {tuple(sorted(e)) for e in mesh.boundary_edges.tolist()}
    given = {tuple(sorted(e)) for e in listed.tolist()}
    if derived != given or len(given) != nb:
        raise MeshInvariantError("Listed boundary edges do not match the boundary of the cells")
    return mesh


def _parse_ints(tokens: List[str], count: int, line: int, what: str) -> List[int]:
    if len(tokens) != count:
        raise MeshParseError(f"expected {what}, got {len(tokens)} fields", line=line)
    try:
        return [int(t) for t in tokens]
    except ValueError:
        raise MeshParseError(f"expected integers in {what}, got {' '.join(tokens)!r}", line=line)


def _parse_indices(tokens: List[str], count: int, nv: int, line: int, what: str) -> List[int]:
    values = _parse_ints(tokens, count, line, what)
    if min(values) < 0 or max(values) >= nv:
        raise MeshParseError(f"vertex index out of range [0, {nv})", line=line)
    return values
