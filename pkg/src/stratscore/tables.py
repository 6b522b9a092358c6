from __future__ import annotations

import io
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence


def fmt(x: float) -> str:
    """Nine significant digits, the precision used for every emitted number."""
    return "%.9g" % x


def write_csv(path: str | Path | io.TextIOBase, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(v if isinstance(v, str) else fmt(float(v)) for v in row))
    text = "\n".join(lines) + "\n"
    if isinstance(path, (str, Path)):
        with open(path, "w", newline="\n") as fh:
            fh.write(text)
    else:
        path.write(text)


@dataclass
class SweepTable:
    """Rows of a parameter sweep: one row per grid point, columns named in ``columns``."""

    columns: tuple[str, ...]
    rows: list[tuple[float, ...]] = field(default_factory=list)

    def append(self, row: Sequence[float]) -> None:
        if len(row) != len(self.columns):
            raise ValueError(f"row has {len(row)} entries, table has {len(self.columns)} columns")
        self.rows.append(tuple(float(x) for x in row))

    def column(self, name: str) -> list[float]:
        j = self.columns.index(name)
        return [r[j] for r in self.rows]

    def __len__(self) -> int:
        return len(self.rows)

    def to_csv(self, path: str | Path | io.TextIOBase) -> None:
        write_csv(path, self.columns, self.rows)

    def to_csv_string(self) -> str:
        buf = io.StringIO()
        self.to_csv(buf)
        return buf.getvalue()
