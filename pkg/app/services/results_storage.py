"""Error tables (CSV) and run summaries (JSON)."""
import json
from pathlib import Path
from typing import List, Optional, Sequence, Union

import pandas as pd
import structlog

from app.core.exceptions import InvalidParameterError
from app.models.report import ErrorRecord

logger = structlog.get_logger()

CSV_COLUMNS = ["method", "alpha", "c0", "param", "e_inf", "e2_gamma", "e2_omega", "ref"]
ERROR_COLUMNS = ["e_inf", "e2_gamma", "e2_omega"]


def _sci(value) -> str:
    return "" if value is None or pd.isna(value) else "%.4e" % value


def records_frame(records: Sequence[ErrorRecord]) -> pd.DataFrame:
    """Records in CSV column order; error columns rendered as 5-significant-digit strings."""
    df = pd.DataFrame([r.model_dump() for r in records])
    df = df.reindex(columns=CSV_COLUMNS)
    for column in ERROR_COLUMNS:
        df[column] = df[column].map(_sci)
    df["param"] = df["param"].map(lambda p: "" if p is None or pd.isna(p) else str(int(p)))
    df["alpha"] = df["alpha"].map(repr)
    df["c0"] = df["c0"].map(repr)
    return df


def write_csv(records: Sequence[ErrorRecord], path: Union[str, Path]) -> None:
    """Header method,alpha,c0,param,e_inf,e2_gamma,e2_omega,ref and one row per record."""
    if not records:
        raise InvalidParameterError("no error records to write")
    records_frame(records).to_csv(path, index=False, lineterminator="\n")
    logger.info("csv_written", path=str(path), rows=len(records))


def read_csv(path: Union[str, Path]) -> List[ErrorRecord]:
    """
    Records of an error table written by write_csv.

    The file holds the fixed table columns only, so sigma, monotone and the
    failure message do not survive. A row without errors comes back as a
    failed record; mesh_id is recovered from reference ids of the form
    `kind:mesh:...`.
    """
    df = pd.read_csv(path, dtype={"method": str, "ref": str}, keep_default_na=False)
    missing = set(CSV_COLUMNS) - set(df.columns)
    if missing:
        raise InvalidParameterError(f"CSV is missing column(s): {sorted(missing)}")

    def number(value, cast=float):
        return None if value == "" else cast(value)

    def mesh_id(ref: str) -> str:
        parts = ref.split(":")
        return parts[1] if len(parts) > 1 and parts[1] else "mesh"

    def failure(row) -> Optional[str]:
        if all(row[column] == "" for column in ERROR_COLUMNS):
            return "no errors recorded"
        return None

    return [
        ErrorRecord(
            method=row["method"],
            alpha=float(row["alpha"]),
            c0=float(row["c0"]),
            param=number(row["param"], int),
            e_inf=number(row["e_inf"]),
            e2_gamma=number(row["e2_gamma"]),
            e2_omega=number(row["e2_omega"]),
            ref=row["ref"],
            mesh_id=mesh_id(row["ref"]),
            failure=failure(row),
        )
        for row in df.to_dict(orient="records")
    ]


def write_table(table: pd.DataFrame, path: Union[str, Path]) -> None:
    """Pivoted error table, errors with 5 significant digits."""
    table.to_csv(path, float_format="%.4e", lineterminator="\n")


def write_summary(summary: dict, path: Union[str, Path]) -> None:
    with open(path, "w") as f:
        json.dump(summary, f, indent=2, sort_keys=True, default=str)
        f.write("\n")
    logger.debug("summary_written", path=str(path))
