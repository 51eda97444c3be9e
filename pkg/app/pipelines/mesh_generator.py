"""Quarter-disk triangulations: polar fan generator and uniform refinement."""
import math
from functools import lru_cache
from typing import Optional

import numpy as np
import structlog

from app.core.config_loader import get_grid_config
from app.core.exceptions import InvalidParameterError
from app.models.enums import GridLevel
from app.models.mesh import Mesh, on_arc

logger = structlog.get_logger()


def _ring_angles(ring: int, arc_segments: int) -> np.ndarray:
    count = ring * arc_segments
    return np.linspace(0.0, 0.5 * math.pi, count + 1)


def generate_quarter_disk(n: int, arc_segments: int = 2, radius: float = 1.0) -> Mesh:
    """
    Triangulate {x ≥ 0, y ≥ 0, x² + y² ≤ radius²} on a polar grid.

    Ring i (i = 1..n) sits at radius i·radius/n and carries i·arc_segments
    segments; ring 0 is the origin, so the innermost layer is a fan.
    Consecutive rings are stitched by merging their angle sequences, which
    keeps every triangle counterclockwise.

    Vertex order: origin, then ring by ring with increasing angle.
    Boundary loop: origin → (radius, 0) along the x axis → arc → (0, radius) → origin.
    """
    if n < 2:
        raise InvalidParameterError(f"ring count must be at least 2, got {n}")
    if arc_segments < 1:
        raise InvalidParameterError(f"arc_segments must be at least 1, got {arc_segments}")
    if radius <= 0:
        raise InvalidParameterError(f"radius must be positive, got {radius}")

    vertices = [(0.0, 0.0)]
    rings = [[0]]
    ring_angles = [np.array([0.0])]

    for i in range(1, n + 1):
        angles = _ring_angles(i, arc_segments)
        r = radius * i / n
        start = len(vertices)
        for theta in angles:
            vertices.append((r * math.cos(theta), r * math.sin(theta)))
        # Exact endpoints on the axes and the arc
        vertices[start] = (r, 0.0)
        vertices[start + len(angles) - 1] = (0.0, r)
        rings.append(list(range(start, start + len(angles))))
        ring_angles.append(angles)

    triangles = []
    for i in range(1, n + 1):
        inner, outer = rings[i - 1], rings[i]
        inner_ang, outer_ang = ring_angles[i - 1], ring_angles[i]
        a, b = 0, 0
        while a < len(inner) - 1 or b < len(outer) - 1:
            advance_outer = (
                a == len(inner) - 1
                or (b < len(outer) - 1 and outer_ang[b + 1] <= inner_ang[a + 1])
            )
            if advance_outer:
                triangles.append((inner[a], outer[b], outer[b + 1]))
                b += 1
            else:
                triangles.append((inner[a], outer[b], inner[a + 1]))
                a += 1

    # Boundary: x axis outwards, arc counterclockwise, y axis inwards
    x_axis = [0] + [rings[i][0] for i in range(1, n + 1)]
    arc = rings[n]
    y_axis = [rings[i][-1] for i in range(n, 0, -1)] + [0]
    loop = x_axis[:-1] + arc[:-1] + y_axis
    boundary_edges = list(zip(loop[:-1], loop[1:]))

    mesh = Mesh(
        vertices=np.array(vertices),
        triangles=np.array(triangles),
        boundary_edges=np.array(boundary_edges),
        arc_radius=radius,
        label=f"quarter_disk_n{n}",
    )
    logger.debug("quarter_disk_generated", rings=n, vertices=mesh.num_vertices,
                 triangles=mesh.num_triangles, boundary_nodes=mesh.num_boundary_nodes)
    return mesh


def refine_uniform(mesh: Mesh, label: Optional[str] = None) -> Mesh:
    """
    Split every triangle into four through its edge midpoints.

    Midpoints of boundary edges whose endpoints both lie on the arc are pushed
    radially back onto it when the mesh carries an arc radius. Parent vertex
    indices are preserved; new vertices are appended in sorted edge order.
    """
    n_old = mesh.num_vertices
    edges = mesh.unique_edges()
    n_edges = edges.shape[0]

    # Edge key -> midpoint vertex index
    edge_index = {(int(i), int(j)): n_old + e for e, (i, j) in enumerate(edges.tolist())}

    midpoints = 0.5 * (mesh.vertices[edges[:, 0]] + mesh.vertices[edges[:, 1]])

    if mesh.arc_radius is not None:
        bnd_keys = np.sort(mesh.boundary_edges, axis=1)
        ends_on_arc = (on_arc(mesh.vertices[bnd_keys[:, 0]], mesh.arc_radius)
                       & on_arc(mesh.vertices[bnd_keys[:, 1]], mesh.arc_radius))
        for i, j in bnd_keys[ends_on_arc].tolist():
            m = edge_index[(i, j)] - n_old
            midpoints[m] *= mesh.arc_radius / np.hypot(*midpoints[m])

    def mid(i: int, j: int) -> int:
        return edge_index[(i, j) if i < j else (j, i)]

    triangles = np.empty((4 * mesh.num_triangles, 3), dtype=np.int64)
    for t, (a, b, c) in enumerate(mesh.triangles.tolist()):
        ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
        triangles[4 * t:4 * t + 4] = (
            (a, ab, ca),
            (ab, b, bc),
            (ca, bc, c),
            (ab, bc, ca),
        )

    boundary_edges = []
    for i, j in mesh.boundary_edges.tolist():
        m = mid(i, j)
        boundary_edges.append((i, m))
        boundary_edges.append((m, j))

    refined = Mesh(
        vertices=np.vstack([mesh.vertices, midpoints]),
        triangles=triangles,
        boundary_edges=np.array(boundary_edges),
        arc_radius=mesh.arc_radius,
        label=label or f"{mesh.label}_r",
    )
    logger.debug("mesh_refined", parent_triangles=mesh.num_triangles, new_edges=n_edges,
                 vertices=refined.num_vertices, triangles=refined.num_triangles)
    return refined


@lru_cache(maxsize=8)
def named_grid(name: str) -> Mesh:
    """Coarse generator output and its uniform refinements, by name (coarse/medium/fine)."""
    level_name = GridLevel(name).value
    grids = get_grid_config()
    mesh = generate_quarter_disk(grids["rings"], arc_segments=grids["arc_segments"])
    for _ in range(grids["levels"][level_name]):
        mesh = refine_uniform(mesh)
    return Mesh(mesh.vertices, mesh.triangles, mesh.boundary_edges,
                arc_radius=mesh.arc_radius, label=level_name)
