"""Append-only result tables written as CSV with a versioned header line."""

from __future__ import annotations

import csv
import hashlib
import io
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

SCHEMA_VERSION = 1
MAGIC = "# ndesim-table"

# columns every NDE-CS style row carries
NDECS_COLUMNS = ("seed", "M_C", "M_P", "n", "N_or_D", "value", "truth", "eps_abs", "eps_rel", "device_calls", "wall_seconds")
PROVENANCE_COLUMNS = ("manifest_hash", "root_seed")
# columns that legitimately differ between otherwise identical runs
NONDETERMINISTIC = ("wall_seconds",)


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        if math.isnan(v):
            return "nan"
        return repr(v)
    return str(v)


@dataclass
class ResultTable:
    """Rows of one experiment; columns are fixed at construction."""

    name: str
    columns: tuple[str, ...]
    manifest_hash: str = ""
    root_seed: int = 0
    rows: list[dict] = field(default_factory=list)

    def __post_init__(self):
        self.columns = tuple(self.columns)
        if len(set(self.columns)) != len(self.columns):
            raise ValueError("duplicate column names")
        missing = [c for c in PROVENANCE_COLUMNS if c not in self.columns]
        self.columns = self.columns + tuple(missing)

    def append(self, row: dict) -> None:
        row = {"manifest_hash": self.manifest_hash, "root_seed": self.root_seed, **row}
        unknown = set(row) - set(self.columns)
        if unknown:
            raise KeyError(f"unknown columns {sorted(unknown)}")
        self.rows.append({c: row.get(c) for c in self.columns})

    def extend(self, rows: Iterable[dict]) -> None:
        for r in rows:
            self.append(r)

    def __len__(self) -> int:
        return len(self.rows)

    def column(self, name: str) -> list:
        return [r[name] for r in self.rows]

    def to_csv(self, exclude: Sequence[str] = ()) -> str:
        cols = [c for c in self.columns if c not in exclude]
        buf = io.StringIO()
        buf.write(f"{MAGIC} v{SCHEMA_VERSION} name={self.name}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(cols)
        for r in self.rows:
            w.writerow([_fmt(r[c]) for c in cols])
        return buf.getvalue()

    def digest(self, exclude: Sequence[str] = NONDETERMINISTIC) -> str:
        """Hash of the table without timing columns, for reproducibility checks."""
        return hashlib.sha256(self.to_csv(exclude).encode()).hexdigest()

    def write(self, path: str | Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.to_csv())
        return path

    @classmethod
    def read(cls, path: str | Path) -> "ResultTable":
        """Load a table written by ``write``; values stay strings."""
        lines = Path(path).read_text().splitlines()
        if not lines or not lines[0].startswith(MAGIC):
            raise ValueError(f"{path}: missing table header")
        version = lines[0].split()[2]
        if version != f"v{SCHEMA_VERSION}":
            raise ValueError(f"{path}: unsupported table version {version}")
        name = lines[0].split("name=", 1)[1]
        reader = csv.reader(lines[1:])
        cols = next(reader)
        t = cls(name, tuple(cols))
        for rec in reader:
            t.rows.append(dict(zip(cols, rec)))
        return t
