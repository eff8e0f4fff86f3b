"""Deterministic CSV/JSON artifact writers."""

import csv
import json
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
from loguru import logger

from config.settings import settings
from core.types import OutputFormat


def format_float(value: float, digits: Optional[int] = None) -> str:
    return format(float(value), f".{digits or settings.float_digits}g")


def _cell(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        return format_float(value)
    return str(value)


def _plain(value: Any) -> Any:
    """JSON-ready copy with numpy scalars/arrays and complex numbers unpacked."""
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, np.ndarray):
        return _plain(value.tolist())
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (complex, np.complexfloating)):
        return [float(value.real), float(value.imag)]
    if isinstance(value, (float, np.floating)):
        return float(format_float(value))
    if isinstance(value, np.integer):
        return int(value)
    return value


class ArtifactWriter:
    """Writes every artifact of one run under a single output directory."""

    def __init__(self, out_dir: Path, fmt: OutputFormat = OutputFormat.CSV):
        self.out_dir = Path(out_dir)
        self.fmt = fmt
        self.written: List[Path] = []
        self.out_dir.mkdir(parents=True, exist_ok=True)

    def table(self, stem: str, header: Sequence[str], rows: Sequence[Sequence[Any]]) -> Path:
        """One table; CSV rows, or a JSON list of header-keyed records."""
        if self.fmt == OutputFormat.JSON:
            records = [dict(zip(header, row)) for row in rows]
            return self.document(stem, records)

        path = self.out_dir / f"{stem}.csv"
        with open(path, "w", newline="") as f:
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow(header)
            for row in rows:
                writer.writerow([_cell(v) for v in row])
        return self._record(path)

    def document(self, stem: str, payload: Any) -> Path:
        """Structured JSON with sorted keys, whatever the table format."""
        path = self.out_dir / f"{stem}.json"
        with open(path, "w") as f:
            json.dump(_plain(payload), f, indent=2, sort_keys=True)
            f.write("\n")
        return self._record(path)

    def summary(self, stem: str, values: Dict[str, Any]) -> Path:
        """Key/value report: a two-column table in CSV mode."""
        if self.fmt == OutputFormat.JSON:
            return self.document(stem, values)
        return self.table(stem, ["key", "value"], [[k, _flatten(v)] for k, v in values.items()])

    def _record(self, path: Path) -> Path:
        self.written.append(path)
        logger.debug(f"Wrote {path}")
        return path


def _flatten(value: Any) -> Any:
    if isinstance(value, (list, tuple, dict, np.ndarray)):
        return json.dumps(_plain(value), sort_keys=True)
    return value
