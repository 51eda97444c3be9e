"""Test mesh generation, refinement, invariants and the mesh file format."""
import math

import numpy as np
import pytest

from app.core.exceptions import InvalidParameterError, MeshInvariantError, MeshParseError
from app.models.mesh import Mesh, NodalField
from app.pipelines.mesh_generator import generate_quarter_disk, named_grid, refine_uniform
from app.services.mesh_io import export_mesh, import_mesh, read_nodal_values, write_nodal_values


class TestQuarterDiskGenerator:
    """Test the polar fan generator."""

    def test_smallest_mesh_is_valid(self):
        """Test n=2 gives a closed boundary loop and positive areas."""
        mesh = generate_quarter_disk(2)
        assert np.all(mesh.signed_areas > 0)
        assert mesh.boundary_edges[0, 0] == mesh.boundary_edges[-1, 1]
        assert mesh.boundary_polygon_area() > 0

    def test_rejects_single_ring(self):
        """Test n < 2 is an invalid parameter."""
        with pytest.raises(InvalidParameterError):
            generate_quarter_disk(1)

    def test_coarse_counts(self):
        """Test the default coarse grid size (close to 123 vertices / 208 triangles)."""
        mesh = generate_quarter_disk(10, arc_segments=2)
        assert mesh.num_vertices == 121
        assert mesh.num_triangles == 200
        assert mesh.num_boundary_nodes == 40

    def test_area_close_to_quarter_disk(self):
        """Test n=8 area is the inscribed polygon area, within 1% of π/4."""
        mesh = generate_quarter_disk(8)
        arc_segments = 16
        polygon = 0.5 * arc_segments * math.sin(0.5 * math.pi / arc_segments)
        assert mesh.area == pytest.approx(polygon, rel=1e-12)
        assert mesh.area == pytest.approx(math.pi / 4, rel=0.01)

    def test_arc_vertices_on_unit_circle(self):
        """Test every arc vertex lies on the circle."""
        mesh = generate_quarter_disk(6)
        radii = np.hypot(*mesh.vertices[mesh.boundary_nodes].T)
        on_arc = radii > 0.999
        assert on_arc.sum() == 6 * 2 + 1
        assert np.allclose(radii[on_arc], 1.0, atol=1e-15)

    def test_boundary_nodes_sorted_and_match_loop(self, coarse_mesh):
        """Test boundary_nodes is the sorted vertex set of the loop."""
        assert np.array_equal(coarse_mesh.boundary_nodes, np.unique(coarse_mesh.boundary_edges[:, 0]))
        assert np.all(np.diff(coarse_mesh.boundary_nodes) > 0)


class TestRefinement:
    """Test uniform refinement."""

    def test_triangle_count_quadruples(self, coarse_mesh):
        """Test 4x triangle count."""
        refined = refine_uniform(coarse_mesh)
        assert refined.num_triangles == 4 * coarse_mesh.num_triangles

    def test_named_grids(self, coarse_mesh, medium_mesh):
        """Test coarse/medium sizes and labels."""
        assert coarse_mesh.label == "coarse"
        assert medium_mesh.label == "medium"
        assert medium_mesh.num_vertices == 441
        assert medium_mesh.num_triangles == 800
        assert medium_mesh.num_boundary_nodes == 80

    def test_unknown_grid_name(self):
        """Test unknown names are rejected."""
        with pytest.raises(ValueError):
            named_grid("huge")

    def test_area_does_not_decrease(self, coarse_mesh):
        """Test arc projection only adds area."""
        refined = refine_uniform(coarse_mesh)
        assert refined.area > coarse_mesh.area
        assert refined.area < math.pi / 4

    def test_parent_boundary_nodes_preserved(self, coarse_mesh):
        """Test parent boundary nodes stay boundary nodes with the same coordinates."""
        refined = refine_uniform(coarse_mesh)
        assert set(coarse_mesh.boundary_nodes.tolist()) <= set(refined.boundary_nodes.tolist())
        assert np.array_equal(refined.vertices[:coarse_mesh.num_vertices], coarse_mesh.vertices)

    def test_arc_midpoints_projected(self, coarse_mesh):
        """Test new arc vertices lie on the unit circle."""
        refined = refine_uniform(coarse_mesh)
        new_boundary = refined.boundary_nodes[refined.boundary_nodes >= coarse_mesh.num_vertices]
        radii = np.hypot(*refined.vertices[new_boundary].T)
        axis = np.isclose(refined.vertices[new_boundary], 0.0).any(axis=1)
        assert np.allclose(radii[~axis], 1.0, atol=1e-14)

    def test_square_refinement_without_arc(self, unit_square):
        """Test straight-sided meshes refine without projection."""
        refined = refine_uniform(unit_square)
        assert refined.num_triangles == 8
        assert refined.area == pytest.approx(1.0)
        assert refined.num_boundary_nodes == 8


class TestMeshInvariants:
    """Test invariant checks on construction."""

    def test_clockwise_triangle_rejected(self):
        """Test a clockwise triangle fails."""
        with pytest.raises(MeshInvariantError):
            Mesh(
                vertices=np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]),
                triangles=np.array([[0, 2, 1]]),
                boundary_edges=np.array([[0, 2], [2, 1], [1, 0]]),
            )

    def test_boundary_mismatch_rejected(self, unit_square):
        """Test a missing boundary edge fails."""
        with pytest.raises(MeshInvariantError):
            Mesh(unit_square.vertices, unit_square.triangles, unit_square.boundary_edges[:3])

    def test_arrays_are_read_only(self, unit_square):
        """Test meshes are immutable."""
        with pytest.raises(ValueError):
            unit_square.vertices[0, 0] = 5.0

    def test_nodal_field_length_checked(self, unit_square):
        """Test field length must match vertex count."""
        from app.core.exceptions import MeshMismatchError
        with pytest.raises(MeshMismatchError):
            NodalField(np.zeros(3), unit_square)


class TestMeshFiles:
    """Test export/import."""

    def test_round_trip_is_exact(self, medium_mesh, tmp_path):
        """Test export then import gives an identical mesh."""
        path = tmp_path / "medium.mesh"
        export_mesh(medium_mesh, path)
        loaded = import_mesh(path)
        assert loaded == medium_mesh
        assert np.array_equal(loaded.vertices, medium_mesh.vertices)

    def test_reimported_quarter_disk_refines_onto_arc(self, tmp_path):
        """Test export → import → refine equals refine, arc midpoints included."""
        mesh = generate_quarter_disk(4)
        path = tmp_path / "q.mesh"
        export_mesh(mesh, path)
        loaded = import_mesh(path)
        assert loaded.arc_radius == pytest.approx(1.0, rel=1e-12)
        refined = refine_uniform(loaded)
        direct = refine_uniform(mesh)
        assert refined == direct
        assert refined.area == pytest.approx(direct.area, rel=1e-12)

    def test_straight_sided_mesh_has_no_arc(self, unit_square, tmp_path):
        """Test a polygon with one off-axis corner imports without an arc."""
        path = tmp_path / "square.mesh"
        export_mesh(refine_uniform(unit_square), path)
        assert import_mesh(path).arc_radius is None
        export_mesh(unit_square, path)
        assert import_mesh(path).arc_radius is None

    def test_explicit_arc_radius(self, unit_square, tmp_path):
        """Test a given radius overrides inference."""
        path = tmp_path / "square.mesh"
        export_mesh(unit_square, path)
        assert import_mesh(path, arc_radius=2.0).arc_radius == 2.0

    def test_arc_radius_compared(self, coarse_mesh):
        """Test meshes differing only in the arc flag are not equal."""
        flat = Mesh(coarse_mesh.vertices, coarse_mesh.triangles, coarse_mesh.boundary_edges)
        assert flat != coarse_mesh

    def test_header_line(self, coarse_mesh, tmp_path):
        """Test the NV NT NB header."""
        path = tmp_path / "coarse.mesh"
        export_mesh(coarse_mesh, path)
        assert path.read_text().splitlines()[0] == "121 200 40"

    def test_hand_written_square(self, tmp_path):
        """Test a 4-vertex, 2-triangle square imports with 4 boundary nodes."""
        path = tmp_path / "square.mesh"
        path.write_text("4 2 4\n0 0\n1 0\n1 1\n0 1\n0 1 2\n0 2 3\n0 1\n1 2\n2 3\n3 0\n")
        mesh = import_mesh(path)
        assert mesh.num_boundary_nodes == 4
        assert mesh.label == "square"

    def test_out_of_range_vertex(self, tmp_path):
        """Test a triangle referencing vertex NV is a parse error with its line number."""
        path = tmp_path / "bad.mesh"
        path.write_text("4 2 4\n0 0\n1 0\n1 1\n0 1\n0 1 2\n0 2 4\n0 1\n1 2\n2 3\n3 0\n")
        with pytest.raises(MeshParseError) as exc:
            import_mesh(path)
        assert exc.value.line == 7

    def test_malformed_coordinate(self, tmp_path):
        """Test a non-numeric coordinate is reported with its line."""
        path = tmp_path / "bad.mesh"
        path.write_text("3 1 3\n0 0\n1 x\n0 1\n0 1 2\n0 1\n1 2\n2 0\n")
        with pytest.raises(MeshParseError) as exc:
            import_mesh(path)
        assert exc.value.line == 3

    def test_truncated_file(self, tmp_path):
        """Test a short file is a parse error."""
        path = tmp_path / "short.mesh"
        path.write_text("3 1 3\n0 0\n1 0\n0 1\n0 1 2\n")
        with pytest.raises(MeshParseError):
            import_mesh(path)

    def test_non_conforming_mesh(self, tmp_path):
        """Test a well-formed file with a clockwise triangle is an invariant error."""
        path = tmp_path / "cw.mesh"
        path.write_text("3 1 3\n0 0\n1 0\n0 1\n0 2 1\n0 2\n2 1\n1 0\n")
        with pytest.raises(MeshInvariantError):
            import_mesh(path)

    def test_nodal_values_round_trip(self, coarse_mesh, tmp_path):
        """Test nodal files keep every digit."""
        values = np.sin(np.arange(coarse_mesh.num_vertices) * 0.37) / 3.0
        path = tmp_path / "u.txt"
        write_nodal_values(NodalField(values, coarse_mesh), path)
        loaded = read_nodal_values(path, coarse_mesh)
        assert np.array_equal(loaded.values, values)
