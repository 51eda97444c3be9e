"""Plain-text mesh and nodal-value files."""
from pathlib import Path
from typing import List, Optional, Union

import numpy as np
import structlog

from app.core.exceptions import MeshParseError
from app.models.mesh import Mesh, NodalField, infer_arc_radius

logger = structlog.get_logger()

PathLike = Union[str, Path]


def _fmt(value: float) -> str:
    # 17 significant digits round-trip every double exactly
    return "%.17g" % value


def export_mesh(mesh: Mesh, path: PathLike) -> None:
    """
    Write `NV NT NB`, then NV lines `x y`, NT lines `i j k` and NB lines `i j`
    (0-based, boundary edges in loop order).
    """
    lines: List[str] = [f"{mesh.num_vertices} {mesh.num_triangles} {mesh.boundary_edges.shape[0]}"]
    lines += [f"{_fmt(x)} {_fmt(y)}" for x, y in mesh.vertices]
    lines += [f"{i} {j} {k}" for i, j, k in mesh.triangles]
    lines += [f"{i} {j}" for i, j in mesh.boundary_edges]
    with open(path, "w", newline="\n") as f:
        f.write("\n".join(lines) + "\n")
    logger.debug("mesh_exported", path=str(path), vertices=mesh.num_vertices)


def _parse_row(tokens: List[str], count: int, cast, line_no: int, what: str):
    if len(tokens) != count:
        raise MeshParseError(f"expected {count} values for {what}, got {len(tokens)}", line=line_no)
    try:
        return [cast(t) for t in tokens]
    except ValueError:
        raise MeshParseError(f"malformed {what}: {' '.join(tokens)}", line=line_no) from None


def import_mesh(path: PathLike, label: str = None, arc_radius: Optional[float] = None) -> Mesh:
    """
    Read a mesh written by export_mesh.

    The file carries no arc flag: unless `arc_radius` is given, it is inferred
    from the boundary vertices off the axes, so a re-imported quarter disk
    refines onto its circle again.

    Syntax and index-range problems raise MeshParseError with the line
    number; a well-formed file describing a non-conforming mesh raises
    MeshInvariantError from Mesh construction.
    """
    with open(path) as f:
        rows = [(no, line.split()) for no, line in enumerate(f, start=1)]
    rows = [(no, tokens) for no, tokens in rows if tokens]
    if not rows:
        raise MeshParseError("empty mesh file", line=1)

    header_no, header = rows[0]
    nv, nt, nb = _parse_row(header, 3, int, header_no, "header NV NT NB")
    if min(nv, nt, nb) < 0:
        raise MeshParseError("negative count in header", line=header_no)
    body = rows[1:]
    if len(body) < nv + nt + nb:
        last = body[-1][0] if body else header_no
        raise MeshParseError(f"file ends early: expected {nv + nt + nb} data lines, got {len(body)}", line=last + 1)
    if len(body) > nv + nt + nb:
        raise MeshParseError("unexpected trailing data", line=body[nv + nt + nb][0])

    vertices = [_parse_row(t, 2, float, no, "vertex") for no, t in body[:nv]]

    def indices(chunk, width, what):
        out = []
        for no, tokens in chunk:
            row = _parse_row(tokens, width, int, no, what)
            bad = [i for i in row if not 0 <= i < nv]
            if bad:
                raise MeshParseError(f"{what} references vertex {bad[0]}, valid range is [0, {nv})", line=no)
            out.append(row)
        return out

    triangles = indices(body[nv:nv + nt], 3, "triangle")
    edges = indices(body[nv + nt:], 2, "boundary edge")

    vertex_array = np.array(vertices, dtype=float).reshape(nv, 2)
    edge_array = np.array(edges, dtype=np.int64).reshape(nb, 2)
    if arc_radius is None and nb:
        arc_radius = infer_arc_radius(vertex_array, edge_array)

    mesh = Mesh(
        vertices=vertex_array,
        triangles=np.array(triangles, dtype=np.int64).reshape(nt, 3),
        boundary_edges=edge_array,
        arc_radius=arc_radius,
        label=label or Path(path).stem,
    )
    logger.debug("mesh_imported", path=str(path), vertices=mesh.num_vertices, triangles=mesh.num_triangles,
                 arc_radius=mesh.arc_radius)
    return mesh


def write_nodal_values(field: Union[NodalField, np.ndarray], path: PathLike) -> None:
    """One value per line, 17 significant digits."""
    values = field.values if isinstance(field, NodalField) else np.asarray(field, dtype=float)
    with open(path, "w", newline="\n") as f:
        f.write("\n".join(_fmt(v) for v in values) + "\n")


def read_nodal_values(path: PathLike, mesh: Mesh = None, name: str = "u") -> Union[NodalField, np.ndarray]:
    """Values of a nodal file; wrapped as a NodalField on `mesh` when given."""
    values = []
    with open(path) as f:
        for line_no, raw in enumerate(f, start=1):
            text = raw.strip()
            if not text:
                continue
            try:
                values.append(float(text))
            except ValueError:
                raise MeshParseError(f"malformed nodal value '{text}'", line=line_no) from None
    array = np.array(values, dtype=float)
    return NodalField(array, mesh, name=name) if mesh is not None else array
