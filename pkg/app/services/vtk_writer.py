"""VTK legacy ASCII output of P1 fields on triangle meshes."""
from pathlib import Path
from typing import Dict, Mapping, Sequence, Union

import numpy as np
import structlog

from app.core.exceptions import InvalidParameterError, MeshMismatchError
from app.models.mesh import Mesh, NodalField

logger = structlog.get_logger()

VTK_TRIANGLE = 5


def _g9(value: float) -> str:
    return "%.9g" % value


def _field_items(mesh: Mesh, fields) -> Dict[str, np.ndarray]:
    if isinstance(fields, NodalField):
        fields = [fields]
    if isinstance(fields, Mapping):
        items = [(name, f) for name, f in fields.items()]
    else:
        items = [(f.name, f) for f in fields]

    out: Dict[str, np.ndarray] = {}
    for name, f in items:
        if isinstance(f, NodalField):
            if f.mesh is not mesh and f.mesh != mesh:
                raise MeshMismatchError(f"field '{name}' lives on a different mesh")
            values = f.values
        else:
            values = np.asarray(f, dtype=float).reshape(-1)
            if values.shape[0] != mesh.num_vertices:
                raise MeshMismatchError(f"field '{name}' has {values.shape[0]} values, mesh has {mesh.num_vertices}")
        if not name or any(c.isspace() for c in name):
            raise InvalidParameterError(f"VTK field names must be non-empty without whitespace, got '{name}'")
        out[name] = values
    return out


def write_vtk(mesh: Mesh, fields: Union[NodalField, Sequence[NodalField], Mapping[str, object]],
              path: Union[str, Path], title: str = "steklov solution") -> None:
    """
    DATASET UNSTRUCTURED_GRID with POINTS (z = 0), triangle CELLS (type 5)
    and one POINT_DATA scalar block per field. Floats carry 9 significant digits.
    """
    named = _field_items(mesh, fields)
    nv, nt = mesh.num_vertices, mesh.num_triangles

    lines = [
        "# vtk DataFile Version 3.0",
        title.replace("\n", " ")[:255],
        "ASCII",
        "DATASET UNSTRUCTURED_GRID",
        f"POINTS {nv} double",
    ]
    lines += [f"{_g9(x)} {_g9(y)} 0" for x, y in mesh.vertices]
    lines.append(f"CELLS {nt} {4 * nt}")
    lines += [f"3 {i} {j} {k}" for i, j, k in mesh.triangles]
    lines.append(f"CELL_TYPES {nt}")
    lines += [str(VTK_TRIANGLE)] * nt

    if named:
        lines.append(f"POINT_DATA {nv}")
        for name, values in named.items():
            lines.append(f"SCALARS {name} double 1")
            lines.append("LOOKUP_TABLE default")
            lines += [_g9(v) for v in values]

    with open(path, "w", newline="\n") as f:
        f.write("\n".join(lines) + "\n")
    logger.debug("vtk_written", path=str(path), fields=list(named))
