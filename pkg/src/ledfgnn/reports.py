"""Report bundles: named CSV tables plus optional figures on disk.

CSV is the source of truth. Figures redraw table values and nothing
else. Numeric cells are formatted with %.6g so repeated runs with the
same seeds produce byte-identical tables; wall-time and memory columns
are exempt from that stability by nature.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import plots
from .training import config_hash


@dataclass(frozen=True)
class Table:
    name: str
    header: tuple[str, ...]
    rows: list[tuple]

    def __post_init__(self):
        for row in self.rows:
            if len(row) != len(self.header):
                raise ValueError(
                    f"table {self.name!r}: row width {len(row)} != "
                    f"header width {len(self.header)}")

    def column(self, name: str) -> list:
        idx = self.header.index(name)
        return [row[idx] for row in self.rows]


@dataclass(frozen=True)
class Figure:
    """Declarative chart; rendered by write_bundle via plots."""

    name: str
    kind: str  # "line" or "bars"
    data: dict

    def __post_init__(self):
        if self.kind not in ("line", "bars"):
            raise ValueError(f"unknown figure kind {self.kind!r}")


@dataclass
class ReportBundle:
    experiment: str
    config: dict
    environment: dict
    tables: list[Table] = field(default_factory=list)
    figures: list[Figure] = field(default_factory=list)

    @property
    def hash(self) -> str:
        return config_hash(self.config)

    def table(self, name: str) -> Table:
        for table in self.tables:
            if table.name == name:
                return table
        raise KeyError(f"no table named {name!r}")


def format_cell(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return format(float(value), ".6g")
    return str(value)


def write_bundle(bundle: ReportBundle, out_root) -> dict[str, Path]:
    """Write config.json, one CSV per table, one SVG per figure.

    Returns the paths keyed by artifact name.
    """
    out = Path(out_root) / bundle.experiment
    out.mkdir(parents=True, exist_ok=True)
    written = {}

    config_path = out / "config.json"
    config_path.write_text(json.dumps({
        "experiment": bundle.experiment,
        "config": bundle.config,
        "config_hash": bundle.hash,
        "environment": bundle.environment,
    }, sort_keys=True, indent=2) + "\n")
    written["config"] = config_path

    for table in bundle.tables:
        path = out / f"{table.name}.csv"
        with path.open("w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(table.header)
            for row in table.rows:
                writer.writerow([format_cell(v) for v in row])
        written[path.name] = path

    for figure in bundle.figures:
        path = out / f"{figure.name}.svg"
        if figure.kind == "line":
            plots.save_line(path, **figure.data)
        else:
            plots.save_bars(path, **figure.data)
        written[path.name] = path
    return written
