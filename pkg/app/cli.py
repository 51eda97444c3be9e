"""
Command-line interface.

    steklov mesh      generate / refine / import a mesh, export text or VTK
    steklov eig       smallest Steklov eigenvalue (and optionally the spectrum)
    steklov solve     solve S^α y = g with one method, write VTK + summary
    steklov converge  convergence sweep of a configured table, write CSV
    steklov compare   errors between two nodal solution files
"""
import argparse
import os
import sys
from pathlib import Path
from typing import List, Optional

import structlog
from dotenv import load_dotenv
from pydantic import ValidationError

from app.config import get_settings
from app.core.config_loader import (
    get_grid_config,
    get_inverse_iteration_config,
    get_method_defaults,
    get_problem_defaults,
    get_reference_extrema,
    get_reference_lambda1,
    get_table_config,
    parse_config,
)
from app.core.exceptions import OracleSizeError, SolverError
from app.core.logging_config import configure_logging
from app.models.enums import FRACTIONAL_METHODS, GridLevel, MethodTag
from app.models.mesh import Mesh
from app.models.run_config import RunConfig
from app.pipelines.assembly import assemble_boundary_mass, assemble_mass
from app.pipelines.experiments import (
    ProblemSetup,
    SweepGrid,
    compute_errors,
    convergence_sweep,
    field_extrema,
    observed_orders,
    run_method,
    solve_problem,
    tabulate,
)
from app.pipelines.mesh_generator import generate_quarter_disk, named_grid, refine_uniform
from app.pipelines.steklov import smallest_eig_inverse_iteration, steklov_eigs_for
from app.services.mesh_io import export_mesh, import_mesh, read_nodal_values, write_nodal_values
from app.services.results_storage import write_csv, write_summary, write_table
from app.services.vtk_writer import write_vtk

logger = structlog.get_logger()


# ============================================================
# Shared helpers
# ============================================================

def resolve_mesh(grid: Optional[str] = None, rings: Optional[int] = None, refine: int = 0,
                 mesh_file: Optional[str] = None) -> Mesh:
    """Mesh from a file, from an explicit ring count, or from a named grid, refined `refine` more times."""
    if mesh_file:
        mesh = import_mesh(mesh_file)
    elif rings:
        mesh = generate_quarter_disk(rings, arc_segments=int(get_grid_config()['arc_segments']))
    else:
        mesh = named_grid(grid or GridLevel.COARSE.value)
    for _ in range(refine or 0):
        mesh = refine_uniform(mesh)
    return mesh


def _add_mesh_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument('--grid', choices=[g.value for g in GridLevel], default=None,
                        help='Named quarter-disk grid (default: coarse)')
    parser.add_argument('--rings', type=int, default=None, help='Generate with this many rings instead')
    parser.add_argument('--refine', type=int, default=None, help='Extra uniform refinements')
    parser.add_argument('--mesh-file', default=None, help='Import a mesh text file instead')


def _extrema_key(method: MethodTag, alpha: float, c0: float) -> str:
    if method == MethodTag.NEUMANN:
        return f"neumann_c{c0:g}"
    return f"alpha_{alpha:g}_c{c0:g}"


def _boundary_datum(config: RunConfig, mesh: Mesh):
    if config.problem.g_file:
        return read_nodal_values(config.problem.g_file, mesh, name="g")
    return config.problem.g


# ============================================================
# Subcommands
# ============================================================

def cmd_mesh(args) -> int:
    mesh = resolve_mesh(args.grid, args.rings, args.refine, args.mesh_file)
    print(mesh)
    print(f"  area {mesh.area:.10f}, perimeter {mesh.perimeter:.10f}")
    if args.output:
        export_mesh(mesh, args.output)
        print(f"  mesh written to {args.output}")
    if args.vtk:
        write_vtk(mesh, {}, args.vtk, title=str(mesh))
        print(f"  VTK written to {args.vtk}")
    return 0


def cmd_eig(args) -> int:
    mesh = resolve_mesh(args.grid, args.rings, args.refine, args.mesh_file)
    setup = ProblemSetup.build(mesh, args.c0, k=args.k)
    iteration = get_inverse_iteration_config()
    lambda1 = smallest_eig_inverse_iteration(setup.op, tol=float(iteration['tol']),
                                             max_iter=int(iteration['max_iter']))
    print(f"{mesh}")
    print(f"lambda1 = {lambda1:.6f}  (inverse iteration)")

    try:
        eigs = steklov_eigs_for(setup.op)
    except OracleSizeError as e:
        print(f"dense oracle skipped: {e}")
        eigs = None
    if eigs is not None:
        agreement = abs(eigs.lambda1 - lambda1) / eigs.lambda1
        print(f"lambda1 = {eigs.lambda1:.6f}  (dense oracle, relative difference {agreement:.2e})")
        if args.all:
            for j, value in enumerate(eigs.eigenvalues, start=1):
                print(f"{j:5d} {value:.10e}")

    reported = get_reference_lambda1().get(float(args.c0))
    if reported is not None:
        print(f"reported value for c0={args.c0:g}: {reported:.6f}")
    return 0


def cmd_solve(args) -> int:
    overrides = {key: getattr(args, key) for key in (
        'alpha', 'c0', 'k', 'g', 'g_file', 'grid', 'rings', 'refine', 'mesh_file', 'method',
        'M', 'eta', 'N', 'sigma', 'delta', 'tol', 'max_iter', 'output', 'formats',
    )}
    config = parse_config(args.config, overrides)
    mesh = resolve_mesh(config.mesh.grid.value, config.mesh.rings, config.mesh.refine, config.mesh.file)
    method = config.method
    g = _boundary_datum(config, mesh)
    options = dict(M=method.M, N=method.N, sigma=method.sigma, eta=method.eta,
                   tol=config.solver.tol, max_iter=config.solver.max_iter)

    if method.name in FRACTIONAL_METHODS:
        problem = config.fractional_problem()
        setup = ProblemSetup.from_problem(mesh, problem, g=g)
        field, report = solve_problem(setup, problem, method.name, **options)
    else:
        setup = ProblemSetup.build(mesh, config.problem.c0, k=config.problem.k, g=g)
        field, report = run_method(setup, method.name, config.problem.alpha, **options)
    y_min, y_max = field_extrema(field)
    lambda1 = report.parameters.get("lambda1")
    if lambda1 is None:
        iteration = get_inverse_iteration_config()
        lambda1 = smallest_eig_inverse_iteration(setup.op, tol=float(iteration['tol']),
                                                 max_iter=int(iteration['max_iter']))

    stem = Path(config.output.path)
    stem.parent.mkdir(parents=True, exist_ok=True)
    written = []
    if "vtk" in config.output.formats:
        write_vtk(mesh, [field], f"{stem}.vtk", title=f"{method.name.value} alpha={config.problem.alpha:g}")
        written.append(f"{stem}.vtk")
    if "nodal" in config.output.formats:
        write_nodal_values(field, f"{stem}.nodal.txt")
        written.append(f"{stem}.nodal.txt")
    if "summary" in config.output.formats:
        write_summary({
            "config": config.to_flat(),
            "mesh": {"label": mesh.label, "vertices": mesh.num_vertices,
                     "triangles": mesh.num_triangles, "boundary_nodes": mesh.num_boundary_nodes},
            "min": y_min,
            "max": y_max,
            "lambda1": lambda1,
            "delta": report.parameters.get("delta"),
            "iterations": report.iterations,
            "wall_time": report.wall_time,
            "monotone": report.monotone,
            "stability_violations": report.stability_violations,
        }, f"{stem}.summary.json")
        written.append(f"{stem}.summary.json")

    print(f"{mesh}")
    print(f"method {method.name.value}, alpha {config.problem.alpha:g}, c0 {config.problem.c0:g}")
    print(f"min {y_min:.6f}  max {y_max:.6f}")
    reported = get_reference_extrema().get(_extrema_key(method.name, config.problem.alpha, config.problem.c0))
    if reported is not None and mesh.label in [g.value for g in GridLevel]:
        print(f"reported min {reported[0]:.4f}  max {reported[1]:.4f}")
    print(f"lambda1 {lambda1:.6f}" + (f"  delta {report.parameters['delta']:.6f}" if "delta" in report.parameters else ""))
    print(f"iterations {report.iterations}  wall time {report.wall_time:.3f}s")
    if report.monotone is not None:
        print(f"norm monotone: {report.monotone}")
    for path in written:
        print(f"  wrote {path}")
    return 0


def cmd_converge(args) -> int:
    methods = [MethodTag(m) for m in args.methods.split(',')] if args.methods else None
    params = [int(p) for p in args.params.split(',')] if args.params else None
    grid = SweepGrid.from_table(args.table, methods=methods, params=params, sigma=args.sigma,
                                grid=args.grid, threads=args.threads)
    records = convergence_sweep(grid)

    output = Path(args.output or Path(get_settings().output.directory) / f"table{args.table}.csv")
    output.parent.mkdir(parents=True, exist_ok=True)
    write_csv(records, output)

    table = tabulate(records, vary=get_table_config(args.table)["vary"])
    if args.table_output:
        write_table(table, args.table_output)
    print(table.to_string(float_format=lambda v: "%.4e" % v))
    orders = observed_orders(records)
    if not orders.empty:
        print("\nobserved orders log2(e(p)/e(2p)):")
        print(orders.to_string(index=False, float_format=lambda v: "%.3f" % v))
    failed = [r for r in records if r.failed]
    for record in failed:
        print(f"FAILED {record.method} alpha={record.alpha:g} c0={record.c0:g} param={record.param}: {record.failure}",
              file=sys.stderr)
    print(f"\n{len(records)} records written to {output}")
    return 0


def cmd_compare(args) -> int:
    mesh = resolve_mesh(args.grid, args.rings, args.refine, args.mesh_file)
    y = read_nodal_values(args.solution, mesh, name="solution")
    y_ref = read_nodal_values(args.reference, mesh, name="reference")
    record = compute_errors(y, y_ref, assemble_boundary_mass(mesh), assemble_mass(mesh), method=args.label,
                            ref=Path(args.reference).name)
    print(f"e_inf    {record.e_inf:.4e}")
    print(f"e2_gamma {record.e2_gamma:.4e}")
    print(f"e2_omega {record.e2_omega:.4e}")
    if args.output:
        write_csv([record], args.output)
    return 0


# ============================================================
# Parser
# ============================================================

def build_parser() -> argparse.ArgumentParser:
    problem = get_problem_defaults()
    parser = argparse.ArgumentParser(prog='steklov', description='Fractional Steklov problem solver')
    parser.add_argument('--log-level', default=None, help='structlog level (default: STEKLOV_LOG_LEVEL or INFO)')
    parser.add_argument('--threads', type=int, default=None, help='Worker threads (default: available parallelism)')
    sub = parser.add_subparsers(dest='command', required=True)

    p = sub.add_parser('mesh', help='Generate, refine or import a mesh')
    _add_mesh_args(p)
    p.add_argument('--output', default=None, help='Mesh text file to write')
    p.add_argument('--vtk', default=None, help='VTK file to write')
    p.set_defaults(func=cmd_mesh)

    p = sub.add_parser('eig', help='Smallest Steklov eigenvalue')
    _add_mesh_args(p)
    p.add_argument('--c0', type=float, default=float(problem['c0']))
    p.add_argument('--k', type=float, default=float(problem['k']))
    p.add_argument('--all', action='store_true', help='Print the full discrete spectrum')
    p.set_defaults(func=cmd_eig)

    p = sub.add_parser('solve', help='Solve S^alpha y = g')
    p.add_argument('--config', default=None, help='key=value run configuration file')
    _add_mesh_args(p)
    p.add_argument('--alpha', type=float, default=None)
    p.add_argument('--c0', type=float, default=None)
    p.add_argument('--k', type=float, default=None)
    p.add_argument('--g', type=float, default=None, help='Constant boundary datum')
    p.add_argument('--g-file', default=None, help='Per-node boundary datum file')
    p.add_argument('--method', choices=[m.value for m in MethodTag], default=None)
    p.add_argument('--M', type=int, default=None, help='Quadrature half-width (method1)')
    p.add_argument('--eta', type=float, default=None, help='Quadrature step override (method1)')
    p.add_argument('--N', type=int, default=None, help='Time steps (method2)')
    p.add_argument('--sigma', type=float, default=None, help='Scheme weight (method2)')
    p.add_argument('--delta', type=float, default=None, help='Spectral shift (method2)')
    p.add_argument('--tol', type=float, default=None)
    p.add_argument('--max-iter', type=int, default=None)
    p.add_argument('--output', default=None, help='Output path stem')
    p.add_argument('--formats', default=None, help='Comma-separated: vtk,summary,nodal')
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser('converge', help='Convergence sweep')
    p.add_argument('--table', choices=['1', '2'], default='1', help='1: vary alpha, 2: vary c0')
    p.add_argument('--grid', choices=[g.value for g in GridLevel], default=None)
    p.add_argument('--methods', default=None, help='Comma-separated subset of method1,method2')
    p.add_argument('--params', default=None, help='Comma-separated M/N values')
    p.add_argument('--sigma', type=float, default=float(get_method_defaults('method2').get('sigma', 0.5)))
    p.add_argument('--output', default=None, help='CSV path (default: <output dir>/table<k>.csv)')
    p.add_argument('--table-output', default=None, help='Also write the pivoted table')
    p.set_defaults(func=cmd_converge)

    p = sub.add_parser('compare', help='Errors between two nodal solution files')
    p.add_argument('solution')
    p.add_argument('reference')
    _add_mesh_args(p)
    p.add_argument('--label', default='solution', help='Method label of the record')
    p.add_argument('--output', default=None, help='CSV path for the record')
    p.set_defaults(func=cmd_compare)

    return parser


def cli_dispatch(argv: Optional[List[str]] = None) -> int:
    """Run one subcommand; 0 on success, 1 on solver errors, 2 on usage errors."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code) if isinstance(e.code, int) else 2

    if args.threads is not None:
        if args.threads < 1:
            parser.print_usage(sys.stderr)
            print("steklov: error: --threads must be >= 1", file=sys.stderr)
            return 2
        os.environ['STEKLOV_THREADS'] = str(args.threads)
    configure_logging(args.log_level or get_settings().solver.log_level)

    try:
        return args.func(args)
    except (SolverError, ValidationError, ValueError, OSError) as e:
        logger.debug("command_failed", command=args.command, error_type=type(e).__name__)
        print(f"error: {e}", file=sys.stderr)
        return 1


def main() -> None:
    load_dotenv()
    sys.exit(cli_dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()
