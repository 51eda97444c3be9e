"""Triangulation and nodal field models."""
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional

import numpy as np

from app.core.exceptions import MeshInvariantError, MeshMismatchError

# Points closer than this (relative) to the arc radius are treated as arc vertices
ARC_TOL = 1e-12


def _readonly(array: np.ndarray) -> np.ndarray:
    array = np.array(array, copy=True, order="C")
    array.setflags(write=False)
    return array


def _same_radius(a: Optional[float], b: Optional[float]) -> bool:
    if a is None or b is None:
        return a is b
    return math.isclose(a, b, rel_tol=ARC_TOL)


def _edge_keys(edges: np.ndarray) -> np.ndarray:
    """Undirected edge keys (smaller index first)."""
    return np.sort(edges, axis=1)


@dataclass(frozen=True, eq=False)
class Mesh:
    """
    Conforming P1 triangulation of a planar domain.

    vertices: (N_h, 2) coordinates
    triangles: (N_T, 3) vertex indices, counterclockwise
    boundary_edges: (N_B, 2) vertex pairs forming one counterclockwise loop along the boundary
    arc_radius: radius of the circular arc the boundary approximates (set by the
        quarter-disk generator; refinement projects arc midpoints back onto it)
    """
    vertices: np.ndarray
    triangles: np.ndarray
    boundary_edges: np.ndarray
    arc_radius: Optional[float] = None
    label: str = field(default="mesh", compare=False)

    def __post_init__(self):
        vertices = np.asarray(self.vertices, dtype=float)
        triangles = np.asarray(self.triangles, dtype=np.int64)
        boundary_edges = np.asarray(self.boundary_edges, dtype=np.int64)

        if vertices.ndim != 2 or vertices.shape[1] != 2:
            raise MeshInvariantError(f"vertices must have shape (N, 2), got {vertices.shape}")
        if triangles.ndim != 2 or triangles.shape[1] != 3:
            raise MeshInvariantError(f"triangles must have shape (T, 3), got {triangles.shape}")
        if boundary_edges.ndim != 2 or boundary_edges.shape[1] != 2:
            raise MeshInvariantError(f"boundary edges must have shape (B, 2), got {boundary_edges.shape}")

        object.__setattr__(self, "vertices", _readonly(vertices))
        object.__setattr__(self, "triangles", _readonly(triangles))
        object.__setattr__(self, "boundary_edges", _readonly(boundary_edges))
        validate_mesh(self)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Mesh):
            return NotImplemented
        return (
            np.array_equal(self.vertices, other.vertices)
            and np.array_equal(self.triangles, other.triangles)
            and np.array_equal(self.boundary_edges, other.boundary_edges)
            and _same_radius(self.arc_radius, other.arc_radius)
        )

    __hash__ = None

    def __str__(self):
        return (f"{self.label}: {self.num_vertices} vertices, {self.num_triangles} triangles, "
                f"{self.num_boundary_nodes} boundary nodes")

    @property
    def num_vertices(self) -> int:
        return int(self.vertices.shape[0])

    @property
    def num_triangles(self) -> int:
        return int(self.triangles.shape[0])

    @property
    def num_boundary_nodes(self) -> int:
        return int(self.boundary_nodes.shape[0])

    @cached_property
    def boundary_nodes(self) -> np.ndarray:
        return _readonly(np.unique(self.boundary_edges))

    @cached_property
    def interior_nodes(self) -> np.ndarray:
        mask = np.ones(self.num_vertices, dtype=bool)
        mask[self.boundary_nodes] = False
        return _readonly(np.flatnonzero(mask))

    @cached_property
    def signed_areas(self) -> np.ndarray:
        return _readonly(signed_triangle_areas(self.vertices, self.triangles))

    @property
    def area(self) -> float:
        return float(self.signed_areas.sum())

    @cached_property
    def boundary_edge_lengths(self) -> np.ndarray:
        p = self.vertices[self.boundary_edges]
        return _readonly(np.hypot(*(p[:, 1] - p[:, 0]).T))

    @property
    def perimeter(self) -> float:
        return float(self.boundary_edge_lengths.sum())

    def boundary_polygon_area(self) -> float:
        """Shoelace area of the boundary loop (positive when counterclockwise)."""
        p = self.vertices[self.boundary_edges[:, 0]]
        q = self.vertices[self.boundary_edges[:, 1]]
        return float(0.5 * np.sum(p[:, 0] * q[:, 1] - q[:, 0] * p[:, 1]))

    def unique_edges(self) -> np.ndarray:
        """Undirected edges, sorted lexicographically."""
        local = self.triangles[:, [[0, 1], [1, 2], [2, 0]]].reshape(-1, 2)
        return np.unique(_edge_keys(local), axis=0)


def on_arc(points: np.ndarray, radius: float) -> np.ndarray:
    return np.abs(np.hypot(points[:, 0], points[:, 1]) - radius) <= ARC_TOL * radius


def infer_arc_radius(vertices: np.ndarray, boundary_edges: np.ndarray) -> Optional[float]:
    """
    Radius of the circular arc through the boundary vertices that lie off both axes.

    None unless there are at least two such vertices and they share one radius
    (straight-sided polygons, single off-axis corners).
    """
    points = np.asarray(vertices, dtype=float)[np.unique(boundary_edges)]
    off_axes = points[(points[:, 0] != 0.0) & (points[:, 1] != 0.0)]
    if off_axes.shape[0] < 2:
        return None
    radius = float(np.hypot(off_axes[:, 0], off_axes[:, 1]).mean())
    if not np.all(on_arc(off_axes, radius)):
        return None
    # Recover the generator radius exactly; arc vertices only carry it to rounding
    return float(f"{radius:.12g}")


def signed_triangle_areas(vertices: np.ndarray, triangles: np.ndarray) -> np.ndarray:
    p0 = vertices[triangles[:, 0]]
    p1 = vertices[triangles[:, 1]]
    p2 = vertices[triangles[:, 2]]
    return 0.5 * ((p1[:, 0] - p0[:, 0]) * (p2[:, 1] - p0[:, 1])
                  - (p2[:, 0] - p0[:, 0]) * (p1[:, 1] - p0[:, 1]))


def validate_mesh(mesh: Mesh) -> None:
    """Check every structural invariant of a triangulation; raise MeshInvariantError on the first violation."""
    n = mesh.vertices.shape[0]
    tri = mesh.triangles
    bnd = mesh.boundary_edges

    if n < 3 or tri.shape[0] == 0:
        raise MeshInvariantError("mesh needs at least 3 vertices and 1 triangle")
    if not np.all(np.isfinite(mesh.vertices)):
        raise MeshInvariantError("non-finite vertex coordinates")
    if tri.min() < 0 or tri.max() >= n:
        raise MeshInvariantError(f"triangle references a vertex outside [0, {n})")
    if bnd.shape[0] < 3:
        raise MeshInvariantError("boundary loop needs at least 3 edges")
    if bnd.min() < 0 or bnd.max() >= n:
        raise MeshInvariantError(f"boundary edge references a vertex outside [0, {n})")
    if np.unique(tri).shape[0] != n:
        raise MeshInvariantError("vertex indices are not dense: some vertex belongs to no triangle")

    areas = signed_triangle_areas(mesh.vertices, tri)
    bad = np.flatnonzero(areas <= 0.0)
    if bad.size:
        raise MeshInvariantError(f"triangle {int(bad[0])} has non-positive signed area {areas[bad[0]]:.3e}")

    # Edge multiplicities: 1 on the boundary, 2 inside
    directed = tri[:, [[0, 1], [1, 2], [2, 0]]].reshape(-1, 2)
    keys, counts = np.unique(_edge_keys(directed), axis=0, return_counts=True)
    if np.any(counts > 2):
        raise MeshInvariantError("an edge is shared by more than two triangles")
    single = keys[counts == 1]

    bnd_keys = _edge_keys(bnd)
    if np.unique(bnd_keys, axis=0).shape[0] != bnd_keys.shape[0]:
        raise MeshInvariantError("duplicate boundary edge")
    if single.shape[0] != bnd_keys.shape[0] or not np.array_equal(
            single, np.unique(bnd_keys, axis=0)):
        raise MeshInvariantError("boundary edges do not match the edges owned by exactly one triangle")

    # Boundary edges must run in the same direction as in their triangle
    directed_set = set(map(tuple, directed.tolist()))
    for i, j in bnd.tolist():
        if (i, j) not in directed_set:
            raise MeshInvariantError(f"boundary edge ({i}, {j}) is not counterclockwise")

    # One closed simple loop
    if not np.array_equal(bnd[1:, 0], bnd[:-1, 1]) or bnd[0, 0] != bnd[-1, 1]:
        raise MeshInvariantError("boundary edges do not form a closed ordered loop")
    if np.unique(bnd[:, 0]).shape[0] != bnd.shape[0]:
        raise MeshInvariantError("boundary loop is not simple")

    p = mesh.vertices[bnd[:, 0]]
    q = mesh.vertices[bnd[:, 1]]
    if 0.5 * np.sum(p[:, 0] * q[:, 1] - q[:, 0] * p[:, 1]) <= 0.0:
        raise MeshInvariantError("boundary loop is not counterclockwise")


@dataclass(frozen=True, eq=False)
class NodalField:
    """Per-vertex values of a P1 function on a mesh."""
    values: np.ndarray
    mesh: Mesh
    name: str = "u"

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float).reshape(-1)
        if values.shape[0] != self.mesh.num_vertices:
            raise MeshMismatchError(
                f"field '{self.name}' has {values.shape[0]} values, mesh has {self.mesh.num_vertices} vertices"
            )
        object.__setattr__(self, "values", _readonly(values))

    @property
    def trace(self) -> np.ndarray:
        return self.values[self.mesh.boundary_nodes]

    def min(self) -> float:
        return float(self.values.min())

    def max(self) -> float:
        return float(self.values.max())
