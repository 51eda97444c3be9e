"""Configuration loaders: YAML experiment defaults and flat key=value run files."""
import yaml
from pathlib import Path
from functools import lru_cache
from typing import Dict, List, Mapping, Optional, Union

from pydantic import ValidationError

from app.core.exceptions import InvalidParameterError, ParseError
from app.models.run_config import RunConfig, FLAT_KEYS, flat_key_for


@lru_cache()
def load_solver_config() -> dict:
    """Load config/solver.yml (cached)."""
    config_path = Path(__file__).parent.parent.parent / "config" / "solver.yml"

    if not config_path.exists():
        raise FileNotFoundError(f"Solver config not found: {config_path}")

    with open(config_path) as f:
        return yaml.safe_load(f)


def get_grid_config() -> dict:
    return load_solver_config()['grids']


def get_problem_defaults() -> dict:
    return load_solver_config()['problem']


def get_method_defaults(method: str) -> dict:
    return load_solver_config().get(method, {})


def get_run_defaults() -> Dict[str, object]:
    """Flat run keys seeded from the problem, method1 and method2 sections."""
    sections = (
        (get_problem_defaults(), ("alpha", "c0", "k", "g")),
        (get_method_defaults("method1"), ("M", "eta")),
        (get_method_defaults("method2"), ("N", "sigma", "delta")),
    )
    return {key: values[key] for values, keys in sections for key in keys if values.get(key) is not None}


def get_inverse_iteration_config() -> dict:
    return load_solver_config()['inverse_iteration']


def get_sweep_config() -> dict:
    return load_solver_config()['sweep']


def get_table_config(table: Union[int, str]) -> dict:
    tables = get_sweep_config()['tables']
    key = str(table)
    if key not in tables:
        raise KeyError(f"Unknown table '{table}', expected one of {sorted(tables)}")
    return tables[key]


def get_reference_lambda1() -> Dict[float, float]:
    values = load_solver_config()['reference_values']['lambda1']
    return {float(c0): float(lam) for c0, lam in values.items()}


def get_reference_extrema() -> Dict[str, List[float]]:
    return load_solver_config()['reference_values']['extrema']


# ============================================================
# Flat key=value run configuration
# ============================================================

def read_flat_config(path: Union[str, Path]) -> Dict[str, str]:
    """Read `key=value` lines; blank lines and `#` comments are skipped."""
    values: Dict[str, str] = {}
    with open(path) as f:
        for line_no, raw in enumerate(f, start=1):
            line = raw.split('#', 1)[0].strip()
            if not line:
                continue
            if '=' not in line:
                raise ParseError(f"expected key=value, got '{line}'", line=line_no)
            key, value = (part.strip() for part in line.split('=', 1))
            if not key:
                raise ParseError("empty key", line=line_no)
            values[key] = value
    return values


def parse_config(path: Optional[Union[str, Path]] = None,
                 overrides: Optional[Mapping[str, object]] = None) -> RunConfig:
    """
    Build a validated RunConfig from a key=value file and/or CLI overrides.

    Precedence: CLI overrides, then file values, then config/solver.yml.
    None-valued overrides are ignored. Unknown keys raise
    InvalidParameterError naming the key.
    """
    flat: Dict[str, object] = dict(get_run_defaults())
    if path is not None:
        flat.update(read_flat_config(path))
    if overrides:
        flat.update({k: v for k, v in overrides.items() if v is not None})

    unknown = sorted(set(flat) - set(FLAT_KEYS))
    if unknown:
        raise InvalidParameterError(f"unknown configuration key(s): {', '.join(unknown)}")

    try:
        return RunConfig.from_flat(flat)
    except ValidationError as e:
        first = e.errors()[0]
        key = flat_key_for(tuple(first.get("loc", ())))
        raise InvalidParameterError(f"invalid value for '{key}': {first.get('msg')}") from e


def dump_config(config: RunConfig, path: Union[str, Path]) -> None:
    """Write a RunConfig as key=value lines (parse_config reads it back unchanged)."""
    with open(path, 'w') as f:
        for key, value in config.to_flat().items():
            f.write(f"{key}={value}\n")
