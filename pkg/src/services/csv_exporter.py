"""CSV export service for convergence tables and curvature sweeps."""

import logging
from io import StringIO
from pathlib import Path
from typing import List, Union

import numpy as np
import pandas as pd

from src.api.models import NORMS, ConvergenceTable, SweepRecord
from src.core.exceptions import ValidationError
from src.utils.file_operations import write_text_file

logger = logging.getLogger(__name__)

CONVERGENCE_COLUMNS = [
    "level", "h", "ndof",
    "err_l2", "eoc_l2", "err_h1", "eoc_h1", "err_h2", "eoc_h2",
    "newton_iters",
]

SWEEP_COLUMNS = ["K", "converged", "iterations", "min_u", "min_eig_H"]


class CSVExporter:
    """Service for exporting result tables to CSV format."""

    def __init__(self) -> None:
        """Initialize CSVExporter with a fixed, locale-free number format."""
        self.csv_options = {
            'index': False,
            'float_format': '%.17g',
            'lineterminator': '\n',
            'na_rep': '',
        }

    def convergence_frame(self, table: ConvergenceTable) -> pd.DataFrame:
        """
        One row per level; EOC cells stay empty on the first row.

        Raises:
            ValidationError: If the table has no records
        """
        if not table.records:
            raise ValidationError(f"Convergence table for '{table.problem}' has no records")

        df = pd.DataFrame([r.model_dump() for r in table.records])
        for norm in NORMS:
            rates = table.rates.get(norm, [])
            df[f"eoc_{norm}"] = [np.nan] + list(rates) + [np.nan] * (len(df) - 1 - len(rates))
        return df[CONVERGENCE_COLUMNS]

    def sweep_frame(self, records: List[SweepRecord]) -> pd.DataFrame:
        """Sweep rows ordered by K, with lowercase booleans."""
        if not records:
            raise ValidationError("Sweep produced no records")

        df = pd.DataFrame([r.model_dump(include=set(SWEEP_COLUMNS)) for r in records])
        df = df.sort_values("K", kind="stable").reset_index(drop=True)
        df["converged"] = df["converged"].map({True: "true", False: "false"})
        df["min_u"] = df["min_u"].astype(float)
        df["min_eig_H"] = df["min_eig_H"].astype(float)
        return df[SWEEP_COLUMNS]

    def to_csv(self, df: pd.DataFrame) -> str:
        """
        Render a DataFrame with 17 significant digits and LF line endings.

        Raises:
            ValidationError: If the rendered content is empty or does not parse back
        """
        csv_buffer = StringIO()
        df.to_csv(csv_buffer, **self.csv_options)
        csv_content = csv_buffer.getvalue()
        csv_buffer.close()

        if not csv_content.strip():
            raise ValidationError("Generated CSV content is empty")
        if not self.validate_csv_compatibility(csv_content):
            raise ValidationError("Generated CSV content does not parse back into a table")
        return csv_content

    def export_convergence(self, table: ConvergenceTable) -> str:
        return self.to_csv(self.convergence_frame(table))

    def export_sweep(self, records: List[SweepRecord]) -> str:
        return self.to_csv(self.sweep_frame(records))

    def write(self, csv_content: str, path: Union[str, Path]) -> Path:
        """
        Write CSV content to ``path``.

        Raises:
            OutputError: If the file cannot be written
        """
        path = write_text_file(path, csv_content)
        logger.info(f"Wrote {path}")
        return path

    def validate_csv_compatibility(self, csv_content: str) -> bool:
        """Check that the CSV parses back with pandas and has the expected shape."""
        try:
            test_df = pd.read_csv(StringIO(csv_content))
        except (pd.errors.ParserError, pd.errors.EmptyDataError):
            return False
        return not test_df.empty and len(test_df.columns) > 0

