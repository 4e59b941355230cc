"""Tables, number formatting and atomic file output.

Floats are written with 17 significant digits (``%.17g``), which round-trips
every ``float64`` exactly.  Non-finite values become ``nan``/``inf`` in CSV and
``null`` in JSON.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import os
import tempfile
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np

__all__ = ["Table", "format_number", "dumps_json", "config_hash", "atomic_write", "write_table", "write_json"]


def format_number(v: Any) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.17g}"
    return str(v)


def _json_value(v: Any) -> str:
    if v is None or isinstance(v, (bool, np.bool_)):
        return json.dumps(None if v is None else bool(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.17g}" if math.isfinite(v) else "null"
    if isinstance(v, str):
        return json.dumps(v)
    if isinstance(v, dict):
        items = (f"{json.dumps(str(k))}: {_json_value(x)}" for k, x in sorted(v.items()))
        return "{" + ", ".join(items) + "}"
    if isinstance(v, (list, tuple, np.ndarray)):
        return "[" + ", ".join(_json_value(x) for x in v) + "]"
    raise TypeError(f"cannot serialise {type(v).__name__}")


def dumps_json(obj: Any) -> str:
    """Canonical JSON: sorted keys, ``%.17g`` floats, NaN as ``null``."""
    return _json_value(obj)


def config_hash(config: dict) -> str:
    """First 12 hex digits of the SHA-256 of the canonical JSON form."""
    return hashlib.sha256(dumps_json(config).encode("utf-8")).hexdigest()[:12]


@dataclass(frozen=True)
class Table:
    """Column names plus row tuples, kept in canonical order by the producer."""

    columns: tuple[str, ...]
    rows: tuple[tuple, ...]

    def __post_init__(self) -> None:
        for row in self.rows:
            if len(row) != len(self.columns):
                raise ValueError(f"row {row!r} does not match columns {self.columns}")

    def __len__(self) -> int:
        return len(self.rows)

    def column(self, name: str) -> list:
        j = self.columns.index(name)
        return [r[j] for r in self.rows]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.columns)
        for row in self.rows:
            w.writerow([format_number(v) for v in row])
        return buf.getvalue()

    def to_jsonl(self) -> str:
        return "".join(dumps_json(dict(zip(self.columns, row))) + "\n" for row in self.rows)

    def render(self, fmt: str) -> str:
        if fmt == "csv":
            return self.to_csv()
        if fmt == "jsonl":
            return self.to_jsonl()
        raise ValueError(f"unknown format {fmt!r}")

    @classmethod
    def from_records(cls, columns: Sequence[str], records: Iterable[Sequence]) -> Table:
        return cls(tuple(columns), tuple(tuple(r) for r in records))


def atomic_write(path: str | os.PathLike, data: bytes | str) -> Path:
    """Write to a temporary file in the target directory, then rename over ``path``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if isinstance(data, str):
        data = data.encode("utf-8")
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def write_table(table: Table, path: str | os.PathLike, fmt: str = "csv") -> Path:
    return atomic_write(path, table.render(fmt))


def write_json(obj: Any, path: str | os.PathLike) -> Path:
    return atomic_write(path, dumps_json(obj) + "\n")
