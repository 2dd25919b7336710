"""Structured simplicial triangulations of the unit square.

Only uniform n-by-n grids with a fixed diagonal split are provided: the
convergence studies need a shape-regular family with exact mesh-size
halving, and the structured family delivers that with known constants
(aspect ratio 1 + sqrt(2) on every cell).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

__all__ = ["Mesh", "build_structured", "shape_metrics", "patch", "dump"]

#: declared shape-regularity bound; the structured family realizes 1+sqrt(2)
SIGMA0 = 3.0


class ShapeMetrics(NamedTuple):
    h: float          # max cell diameter
    max_ratio: float  # max h_T / rho_T, rho_T = inball diameter
    min_area: float


@dataclass(frozen=True)
class Mesh:
    """Immutable conforming triangulation.

    vertices: (V, 2) coordinates; cells: (C, 3) vertex indices, positively
    oriented; boundary_vertices: sorted index array; cell_neighbors: per
    cell, the indices of all cells sharing at least one vertex (the patch,
    including the cell itself).
    """

    vertices: np.ndarray
    cells: np.ndarray
    boundary_vertices: np.ndarray
    cell_neighbors: tuple = field(repr=False)

    @property
    def n_vertices(self) -> int:
        return self.vertices.shape[0]

    @property
    def n_cells(self) -> int:
        return self.cells.shape[0]

    def cell_coords(self):
        """(C, 3, 2) vertex coordinates per cell."""
        return self.vertices[self.cells]

    def areas(self):
        xy = self.cell_coords()
        e1 = xy[:, 1] - xy[:, 0]
        e2 = xy[:, 2] - xy[:, 0]
        return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])

    def vertex_cells(self):
        """List of cell-index arrays adjacent to each vertex."""
        return self._vertex_cells

    def __post_init__(self):
        self.vertices.setflags(write=False)
        self.cells.setflags(write=False)
        self.boundary_vertices.setflags(write=False)
        adj = [[] for _ in range(self.n_vertices)]
        for c, tri in enumerate(self.cells):
            for v in tri:
                adj[v].append(c)
        object.__setattr__(
            self, "_vertex_cells", [np.array(a, dtype=int) for a in adj]
        )


def build_structured(n: int) -> Mesh:
    """n-by-n grid of the unit square, every square split along the same
    diagonal: (n+1)^2 vertices, 2 n^2 cells, h = sqrt(2)/n."""
    if n < 1:
        raise ValueError(f"mesh subdivision must be >= 1, got {n}")
    side = np.linspace(0.0, 1.0, n + 1)
    xx, yy = np.meshgrid(side, side, indexing="xy")
    vertices = np.column_stack([xx.ravel(), yy.ravel()])

    def vid(i, j):
        return j * (n + 1) + i

    cells = np.empty((2 * n * n, 3), dtype=int)
    k = 0
    for j in range(n):
        for i in range(n):
            v00, v10 = vid(i, j), vid(i + 1, j)
            v01, v11 = vid(i, j + 1), vid(i + 1, j + 1)
            cells[k] = (v00, v10, v11)      # lower-right triangle
            cells[k + 1] = (v00, v11, v01)  # upper-left triangle
            k += 2

    on_boundary = (
        (vertices[:, 0] == 0.0) | (vertices[:, 0] == 1.0)
        | (vertices[:, 1] == 0.0) | (vertices[:, 1] == 1.0)
    )
    boundary = np.flatnonzero(on_boundary)

    neighbors = _vertex_patches(vertices.shape[0], cells)
    return Mesh(vertices, cells, boundary, neighbors)


def _vertex_patches(n_vertices, cells):
    by_vertex = [[] for _ in range(n_vertices)]
    for c, tri in enumerate(cells):
        for v in tri:
            by_vertex[v].append(c)
    out = []
    for tri in cells:
        members = set()
        for v in tri:
            members.update(by_vertex[v])
        out.append(np.array(sorted(members), dtype=int))
    return tuple(out)


def shape_metrics(mesh: Mesh) -> ShapeMetrics:
    """h = max diameter, max h_T/rho_T with rho_T twice the inradius, and
    the minimum cell area."""
    xy = mesh.cell_coords()
    a = np.linalg.norm(xy[:, 1] - xy[:, 0], axis=1)
    b = np.linalg.norm(xy[:, 2] - xy[:, 1], axis=1)
    c = np.linalg.norm(xy[:, 0] - xy[:, 2], axis=1)
    diam = np.maximum(a, np.maximum(b, c))
    area = mesh.areas()
    rho = 4.0 * area / (a + b + c)  # 2 * inradius, inradius = area/s
    return ShapeMetrics(float(diam.max()), float((diam / rho).max()), float(area.min()))


def patch(mesh: Mesh, cell: int):
    """Indices of all cells sharing at least one vertex with `cell`
    (itself included)."""
    if not 0 <= cell < mesh.n_cells:
        raise IndexError(f"cell index {cell} out of range 0..{mesh.n_cells - 1}")
    return set(int(c) for c in mesh.cell_neighbors[cell])


def dump(mesh: Mesh) -> str:
    """Plain-text dump: `V C`, then V lines `x y`, then C lines `i j k`."""
    lines = [f"{mesh.n_vertices} {mesh.n_cells}"]
    lines += [f"{x:.17g} {y:.17g}" for x, y in mesh.vertices]
    lines += [f"{i} {j} {k}" for i, j, k in mesh.cells]
    return "\n".join(lines) + "\n"
