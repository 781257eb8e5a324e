"""Column tables written as CSV (or JSON) with a metadata header.

CSV layout::

    # key: value          <- metadata lines, always present
    col_a,col_b,...       <- header
    ...                   <- rows

Floats are written with 9 significant digits, booleans as ``true``/``false``.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np


@dataclass
class ResultTable:
    name: str
    columns: dict[str, list]
    metadata: dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        lengths = {len(v) for v in self.columns.values()}
        if len(lengths) > 1:
            raise ValueError(f"table {self.name!r} has ragged columns")
        self.columns = {k: [_plain(x) for x in v] for k, v in self.columns.items()}

    @classmethod
    def from_rows(cls, name: str, rows: list[dict[str, Any]], metadata=None) -> ResultTable:
        keys = list(rows[0]) if rows else []
        return cls(name, {k: [row[k] for row in rows] for k in keys}, dict(metadata or {}))

    @property
    def n_rows(self) -> int:
        return len(next(iter(self.columns.values()), []))

    def rows(self) -> list[dict[str, Any]]:
        return [{k: v[i] for k, v in self.columns.items()} for i in range(self.n_rows)]


def _plain(x):
    if isinstance(x, (np.bool_, bool)):
        return bool(x)
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, np.floating):
        return float(x)
    return x


def format_cell(x) -> str:
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, int):
        return str(x)
    if isinstance(x, float):
        if math.isnan(x):
            return "nan"
        text = format(x, ".9g")
        return "0" if text == "-0" else text
    return str(x)


def parse_cell(text: str):
    if text in ("true", "false"):
        return text == "true"
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        return text


def table_to_csv(table: ResultTable) -> str:
    buf = io.StringIO()
    for key, value in table.metadata.items():
        buf.write(f"# {key}: {value}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(list(table.columns))
    for row in table.rows():
        writer.writerow([format_cell(v) for v in row.values()])
    return buf.getvalue()


def write_table(table: ResultTable, out_dir: str | Path, fmt: str = "csv") -> Path:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if fmt == "json":
        path = out_dir / f"{table.name}.json"
        payload = {"metadata": table.metadata, "columns": table.columns}
        path.write_text(json.dumps(payload, indent=2) + "\n")
    else:
        path = out_dir / f"{table.name}.csv"
        path.write_text(table_to_csv(table))
    return path


def read_table(path: str | Path) -> ResultTable:
    path = Path(path)
    if path.suffix == ".json":
        payload = json.loads(path.read_text())
        return ResultTable(path.stem, payload["columns"], payload["metadata"])
    metadata = {}
    body = []
    for line in path.read_text().splitlines():
        if line.startswith("# ") and not body:
            key, _, value = line[2:].partition(": ")
            metadata[key] = value
        else:
            body.append(line)
    reader = csv.reader(body)
    header = next(reader)
    columns: dict[str, list] = {h: [] for h in header}
    for row in reader:
        for h, cell in zip(header, row):
            columns[h].append(parse_cell(cell))
    return ResultTable(path.stem, columns, metadata)
