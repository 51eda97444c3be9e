"""P1 finite element assembly: a(u, v), boundary mass ⟨u, v⟩_Γ, boundary load ⟨g, v⟩_Γ."""
from typing import Union

import numpy as np
import scipy.sparse as sp
import structlog

from app.core.exceptions import AssemblyError, MeshMismatchError
from app.models.mesh import Mesh, NodalField
from app.models.problem import Coefficients, ScalarField, evaluate_field

logger = structlog.get_logger()

# 2-point Gauss rule on the reference edge [0, 1]
GAUSS_POINTS = np.array([0.5 - 0.5 / np.sqrt(3.0), 0.5 + 0.5 / np.sqrt(3.0)])
GAUSS_WEIGHTS = np.array([0.5, 0.5])

# P1 element mass pattern |T|/12 * (1 + δ_ij)
_P1_MASS = (np.ones((3, 3)) + np.eye(3)) / 12.0
# 1-D P1 edge mass pattern h/6 * (1 + δ_ij)
_EDGE_MASS = (np.ones((2, 2)) + np.eye(2)) / 6.0


def _coo_to_csr(rows: np.ndarray, cols: np.ndarray, vals: np.ndarray, n: int) -> sp.csr_matrix:
    """Sum duplicates in a fixed order and return canonical CSR."""
    matrix = sp.coo_matrix((vals.ravel(), (rows.ravel(), cols.ravel())), shape=(n, n)).tocsr()
    matrix.sum_duplicates()
    matrix.sort_indices()
    return matrix


def _gradients(p: np.ndarray):
    """Areas and barycentric gradients (b_i, c_i)/(2|T|) for (T, 3, 2) corner coordinates."""
    x, y = p[:, :, 0], p[:, :, 1]
    # b_i = y_{i+1} - y_{i+2}, c_i = x_{i+2} - x_{i+1}
    b = np.roll(y, -1, axis=1) - np.roll(y, -2, axis=1)
    c = np.roll(x, -2, axis=1) - np.roll(x, -1, axis=1)
    area = 0.5 * (b[:, 0] * c[:, 1] - b[:, 1] * c[:, 0])
    return area, b, c


def _element_geometry(mesh: Mesh):
    area, b, c = _gradients(mesh.vertices[mesh.triangles])
    bad = np.flatnonzero(area <= 0.0)
    if bad.size:
        raise AssemblyError(f"degenerate triangle {int(bad[0])} (area {area[bad[0]]:.3e})")
    return area, b, c


def element_stiffness(vertices: np.ndarray, k: float = 1.0) -> np.ndarray:
    """3×3 P1 stiffness matrix k ∫ ∇χ_j·∇χ_i of one triangle."""
    area, b, c = _gradients(np.asarray(vertices, dtype=float).reshape(1, 3, 2))
    if area[0] <= 0.0:
        raise AssemblyError(f"degenerate triangle (area {area[0]:.3e})")
    return (k * (b[0][:, None] * b[0][None, :] + c[0][:, None] * c[0][None, :]) / (4.0 * area[0]))


def assemble_bilinear(mesh: Mesh, coeff: Coefficients) -> sp.csr_matrix:
    """
    Matrix A of a(u, v) = Σ_T k_T ∫ ∇u·∇v + c_T ∫ u v with k, c evaluated at centroids.

    Gradients are exact for P1; the mass term uses |T|/6 on the diagonal and
    |T|/12 off it. c ≡ 0 is accepted here (pure stiffness); problems that
    need A positive definite check coercivity themselves.
    """
    area, b, c = _element_geometry(mesh)
    centroids = mesh.vertices[mesh.triangles].mean(axis=1)
    k_t = evaluate_field(coeff.k, centroids)
    c_t = evaluate_field(coeff.c, centroids)

    if np.any(k_t <= 0.0):
        raise AssemblyError("diffusion coefficient must be positive on every triangle")
    if np.any(c_t < 0.0):
        raise AssemblyError("reaction coefficient must be nonnegative on every triangle")

    stiff = (b[:, :, None] * b[:, None, :] + c[:, :, None] * c[:, None, :]) / (4.0 * area)[:, None, None]
    local = k_t[:, None, None] * stiff + (c_t * area)[:, None, None] * _P1_MASS[None, :, :]

    tri = mesh.triangles
    rows = np.repeat(tri[:, :, None], 3, axis=2)
    cols = np.repeat(tri[:, None, :], 3, axis=1)
    A = _coo_to_csr(rows, cols, local, mesh.num_vertices)

    logger.debug("bilinear_assembled", n=mesh.num_vertices, nnz=A.nnz)
    return A


def assemble_mass(mesh: Mesh) -> sp.csr_matrix:
    """Domain mass matrix ∫_Ω u v (the k = 0, c = 1 form)."""
    area, _, _ = _element_geometry(mesh)
    local = area[:, None, None] * _P1_MASS[None, :, :]
    tri = mesh.triangles
    rows = np.repeat(tri[:, :, None], 3, axis=2)
    cols = np.repeat(tri[:, None, :], 3, axis=1)
    return _coo_to_csr(rows, cols, local, mesh.num_vertices)


def assemble_boundary_mass(mesh: Mesh) -> sp.csr_matrix:
    """M_Γ: per boundary edge of length h, h/3 on the diagonal and h/6 off it; interior rows are zero."""
    h = mesh.boundary_edge_lengths
    local = h[:, None, None] * _EDGE_MASS[None, :, :]
    edges = mesh.boundary_edges
    rows = np.repeat(edges[:, :, None], 2, axis=2)
    cols = np.repeat(edges[:, None, :], 2, axis=1)
    return _coo_to_csr(rows, cols, local, mesh.num_vertices)


def assemble_boundary_load(mesh: Mesh, g: Union[ScalarField, np.ndarray, NodalField]) -> np.ndarray:
    """
    b_g[i] = Σ_{edges e ∋ i} ∫_e g χ_i ds, zero at interior nodes.

    g may be a constant, a vectorized f(x, y) (2-point Gauss per edge) or
    per-vertex values (integrated exactly as a P1 function: b_g = M_Γ g).
    """
    if isinstance(g, NodalField):
        if g.mesh is not mesh and g.mesh != mesh:
            raise MeshMismatchError("boundary datum lives on a different mesh")
        g = g.values
    if isinstance(g, np.ndarray) and g.ndim == 1 and g.shape[0] == mesh.num_vertices:
        return assemble_boundary_mass(mesh) @ g

    edges = mesh.boundary_edges
    p0 = mesh.vertices[edges[:, 0]]
    p1 = mesh.vertices[edges[:, 1]]
    h = mesh.boundary_edge_lengths

    load = np.zeros(mesh.num_vertices)
    contrib = np.zeros((edges.shape[0], 2))
    for xi, w in zip(GAUSS_POINTS, GAUSS_WEIGHTS):
        points = (1.0 - xi) * p0 + xi * p1
        gv = evaluate_field(g, points)
        contrib[:, 0] += w * h * gv * (1.0 - xi)
        contrib[:, 1] += w * h * gv * xi
    np.add.at(load, edges[:, 0], contrib[:, 0])
    np.add.at(load, edges[:, 1], contrib[:, 1])
    return load
