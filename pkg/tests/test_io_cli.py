"""Test run configuration, output files and the command-line interface."""
import json

import numpy as np
import pytest

from app.cli import cli_dispatch
from app.core import config_loader
from app.core.config_loader import (
    dump_config,
    get_grid_config,
    get_method_defaults,
    get_problem_defaults,
    get_sweep_config,
    get_table_config,
    parse_config,
)
from app.core.exceptions import InvalidParameterError, ParseError
from app.models.enums import GridLevel, MethodTag
from app.models.mesh import NodalField
from app.models.report import ErrorRecord
from app.services.mesh_io import write_nodal_values
from app.services.results_storage import CSV_COLUMNS, read_csv, write_csv
from app.services.vtk_writer import write_vtk


class TestParseConfig:
    """Test key=value run files and overrides."""

    def test_defaults(self):
        """Test an empty configuration is valid."""
        config = parse_config()
        assert config.method.name == MethodTag.METHOD1
        assert config.mesh.grid == GridLevel.COARSE
        assert config.output.formats == ["vtk", "summary"]

    def test_defaults_follow_solver_yaml(self, monkeypatch):
        """Test unset keys come from the problem and method sections of solver.yml."""
        config = parse_config()
        assert config.method.M == get_method_defaults("method1")["M"]
        assert config.method.N == get_method_defaults("method2")["N"]
        assert config.problem.alpha == get_problem_defaults()["alpha"]
        assert config.problem.c0 == get_problem_defaults()["c0"]

        sections = {"method1": {"M": 12}, "method2": {"N": 7, "sigma": 1.0}}
        monkeypatch.setattr(config_loader, "get_method_defaults", lambda method: sections.get(method, {}))
        config = parse_config(overrides={"N": 9})
        assert (config.method.M, config.method.N, config.method.sigma) == (12, 9, 1.0)

    def test_file_with_override(self, tmp_path):
        """Test file values load and overrides win."""
        path = tmp_path / "run.cfg"
        path.write_text("# method 2 run\nalpha = 0.25\nmethod=method2\nN=20\n\nformats=vtk,nodal\n")
        config = parse_config(path, {"alpha": 0.75, "sigma": None})
        assert config.problem.alpha == 0.75
        assert config.method.name == MethodTag.METHOD2
        assert config.method.N == 20
        assert config.method.sigma == 0.5
        assert config.output.formats == ["vtk", "nodal"]

    def test_alpha_out_of_range(self):
        """Test the error names the offending key."""
        with pytest.raises(InvalidParameterError, match="'alpha'"):
            parse_config(overrides={"alpha": 1.5})

    def test_limit_alpha_needs_limiting_method(self):
        """Test α = 1 is only valid for the neumann solver."""
        with pytest.raises(InvalidParameterError):
            parse_config(overrides={"alpha": 1.0, "method": "method1"})
        assert parse_config(overrides={"alpha": 1.0, "method": "neumann"}).problem.alpha == 1.0

    def test_low_sigma_accepted(self):
        """Test σ below 0.5 is a warning, not an error."""
        assert parse_config(overrides={"sigma": 0.3}).method.sigma == 0.3

    def test_unknown_key(self):
        """Test misspelled keys are rejected by name."""
        with pytest.raises(InvalidParameterError, match="sigmaa"):
            parse_config(overrides={"sigmaa": 0.5})

    def test_malformed_line(self, tmp_path):
        """Test a line without '=' reports its number."""
        path = tmp_path / "bad.cfg"
        path.write_text("alpha=0.5\nthis is not a pair\n")
        with pytest.raises(ParseError) as exc:
            parse_config(path)
        assert exc.value.line == 2

    def test_dump_and_parse_back(self, tmp_path):
        """Test a dumped configuration reads back equal."""
        config = parse_config(overrides={"alpha": 0.3, "method": "method2", "N": 80, "delta": 0.5,
                                         "formats": "summary,nodal", "rings": 6})
        path = tmp_path / "dump.cfg"
        dump_config(config, path)
        assert parse_config(path) == config


class TestSolverYaml:
    """Test the experiment defaults file."""

    def test_grid_and_methods(self):
        """Test the coarse generator settings and method defaults."""
        grids = get_grid_config()
        assert grids["rings"] == 10
        assert grids["arc_segments"] == 2
        assert get_method_defaults("method1")["M"] == 40
        assert get_method_defaults("unknown") == {}

    def test_tables(self):
        """Test both tables and the parameter list."""
        assert get_table_config(1)["vary"] == "alpha"
        assert get_table_config("2")["c0"] == [1.0, 5.0, 25.0]
        assert get_sweep_config()["params"] == [5, 10, 20, 40, 80, 160]
        with pytest.raises(KeyError):
            get_table_config(3)


class TestOutputFiles:
    """Test VTK and CSV writers."""

    def test_vtk_single_triangle(self, reference_triangle, tmp_path):
        """Test the legacy layout for one triangle and one field."""
        path = tmp_path / "tri.vtk"
        field = NodalField(np.array([1.0 / 3.0, 0.5, 2.0]), reference_triangle, name="y")
        write_vtk(reference_triangle, field, path)
        lines = path.read_text().splitlines()
        assert lines[0] == "# vtk DataFile Version 3.0"
        assert lines[3] == "DATASET UNSTRUCTURED_GRID"
        assert lines[4] == "POINTS 3 double"
        assert [float(v) for v in lines[6].split()] == [1.0, 0.0, 0.0]
        cells = lines.index("CELLS 1 4")
        assert lines[cells + 1] == "3 0 1 2"
        assert lines[cells + 2:cells + 4] == ["CELL_TYPES 1", "5"]
        assert "SCALARS y double 1" in lines
        assert "0.333333333" in lines

    def test_vtk_field_length(self, reference_triangle, tmp_path):
        """Test a field of the wrong length."""
        from app.core.exceptions import MeshMismatchError
        with pytest.raises(MeshMismatchError):
            write_vtk(reference_triangle, {"y": np.zeros(4)}, tmp_path / "bad.vtk")

    def test_csv_layout(self, tmp_path):
        """Test header, one row and reading it back."""
        record = ErrorRecord(method="method1", alpha=0.5, c0=5.0, param=40,
                             e_inf=1.23456e-3, e2_gamma=2.5e-4, e2_omega=3.0e-4, ref="spectral:coarse")
        path = tmp_path / "errors.csv"
        write_csv([record], path)
        lines = path.read_text().splitlines()
        assert len(lines) == 2
        assert lines[0] == ",".join(CSV_COLUMNS)
        assert lines[1] == "method1,0.5,5.0,40,1.2346e-03,2.5000e-04,3.0000e-04,spectral:coarse"
        (loaded,) = read_csv(path)
        assert loaded.param == 40
        assert loaded.e_inf == pytest.approx(1.2346e-3)

    def test_failed_row_reads_back_as_failure(self, tmp_path):
        """Test a sweep point without errors stays failed after a CSV round trip."""
        ok = ErrorRecord(method="method2", alpha=0.5, c0=5.0, param=10, sigma=0.5, mesh_id="coarse",
                         e_inf=1e-3, e2_gamma=1e-3, e2_omega=1e-3, ref="spectral:coarse:c0=5:alpha=0.5")
        failed = ErrorRecord(method="method2", alpha=0.5, c0=5.0, param=20, sigma=0.5, mesh_id="coarse",
                             ref="spectral:coarse:c0=5:alpha=0.5", failure="NonConvergenceError: budget")
        path = tmp_path / "errors.csv"
        write_csv([ok, failed], path)
        assert path.read_text().splitlines()[2] == "method2,0.5,5.0,20,,,,spectral:coarse:c0=5:alpha=0.5"
        loaded_ok, loaded_failed = read_csv(path)
        assert not loaded_ok.failed
        assert loaded_failed.failed
        assert loaded_failed.e2_gamma is None
        assert {loaded_ok.mesh_id, loaded_failed.mesh_id} == {"coarse"}

    def test_csv_needs_records(self, tmp_path):
        """Test an empty record list."""
        with pytest.raises(InvalidParameterError):
            write_csv([], tmp_path / "empty.csv")


class TestCommandLine:
    """Test subcommands end to end on the coarse grid."""

    def test_unknown_command(self, capsys):
        """Test usage errors exit with 2."""
        assert cli_dispatch(["bogus"]) == 2
        assert cli_dispatch(["mesh", "--bogus"]) == 2

    def test_mesh(self, capsys, tmp_path):
        """Test mesh summary and export."""
        out = tmp_path / "coarse.mesh"
        assert cli_dispatch(["mesh", "--output", str(out), "--vtk", str(tmp_path / "coarse.vtk")]) == 0
        assert "121 vertices" in capsys.readouterr().out
        assert out.read_text().splitlines()[0] == "121 200 40"

    def test_eig(self, capsys):
        """Test the eigenvalue report."""
        assert cli_dispatch(["eig", "--c0", "5"]) == 0
        out = capsys.readouterr().out
        assert "lambda1 =" in out
        assert "dense oracle" in out

    def test_solve_method2(self, capsys, tmp_path):
        """Test a method II run writes VTK and a summary."""
        stem = tmp_path / "run"
        code = cli_dispatch(["solve", "--method", "method2", "--N", "10", "--alpha", "0.5",
                             "--output", str(stem)])
        assert code == 0
        assert (tmp_path / "run.vtk").exists()
        summary = json.loads((tmp_path / "run.summary.json").read_text())
        assert summary["monotone"] is True
        assert summary["delta"] < summary["lambda1"]
        assert 0.0 < summary["min"] < summary["max"]
        out = capsys.readouterr().out
        assert "norm monotone: True" in out
        assert "reported min 0.7668" in out

    def test_solve_rejects_alpha(self, capsys, tmp_path):
        """Test an invalid α exits with 1 and names the key."""
        code = cli_dispatch(["solve", "--alpha", "1.5", "--output", str(tmp_path / "x")])
        assert code == 1
        assert "alpha" in capsys.readouterr().err

    def test_converge(self, capsys, tmp_path, monkeypatch):
        """Test a short table sweep writes one CSV row per point."""
        monkeypatch.setenv("STEKLOV_THREADS", "2")
        out = tmp_path / "table1.csv"
        code = cli_dispatch(["--threads", "2", "converge", "--table", "1", "--methods", "method1",
                             "--params", "5,10", "--output", str(out)])
        assert code == 0
        assert len(out.read_text().splitlines()) == 1 + 3 * 2
        assert "observed orders" in capsys.readouterr().out

    def test_compare(self, capsys, tmp_path, coarse_setup):
        """Test errors between two nodal files."""
        values = np.linspace(1.0, 2.0, coarse_setup.mesh.num_vertices)
        write_nodal_values(values * 1.1, tmp_path / "y.txt")
        write_nodal_values(values, tmp_path / "ref.txt")
        out = tmp_path / "cmp.csv"
        code = cli_dispatch(["compare", str(tmp_path / "y.txt"), str(tmp_path / "ref.txt"),
                             "--output", str(out)])
        assert code == 0
        assert "e_inf    1.0000e-01" in capsys.readouterr().out
        assert read_csv(out)[0].ref == "ref.txt"
