"""Comma-delimited data files with a self-describing comment header.

Layout::

    # schema_version: 1
    # config_hash: <16 hex digits>
    # <key>: <value>            (zero or more metadata lines)
    # config| <toml line>       (the full config that produced the file)
    # columns: a,b,c
    <rows, every number at 17 significant digits>

Wall-clock timings never go into data files; they live in a JSON sidecar
so that identical configs give byte-identical data.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np

SCHEMA_VERSION = 1
FMT = "%.17g"


@dataclass
class Table:
    columns: list
    data: np.ndarray
    meta: dict = field(default_factory=dict)
    config_text: str = ""

    def column(self, name) -> np.ndarray:
        return self.data[:, self.columns.index(name)]


def format_header(columns, config_text: str, config_hash: str, meta: dict | None = None) -> str:
    lines = [f"# schema_version: {SCHEMA_VERSION}", f"# config_hash: {config_hash}"]
    for key, value in (meta or {}).items():
        if isinstance(value, float):
            value = FMT % value
        lines.append(f"# {key}: {value}")
    lines += [f"# config| {line}" for line in config_text.splitlines()]
    lines.append("# columns: " + ",".join(columns))
    return "\n".join(lines) + "\n"


def format_rows(rows) -> str:
    rows = np.atleast_2d(np.asarray(rows, dtype=float))
    if rows.size == 0:
        return ""
    return "\n".join(",".join(FMT % v for v in row) for row in rows) + "\n"


def write_table(path, columns, rows, *, config_text="", config_hash="", meta=None) -> None:
    rows = np.asarray(rows, dtype=float).reshape(-1, len(columns))
    with open(path, "w") as fh:
        fh.write(format_header(columns, config_text, config_hash, meta))
        fh.write(format_rows(rows))


def append_rows(path, rows) -> None:
    with open(path, "a") as fh:
        fh.write(format_rows(rows))
        fh.flush()
        os.fsync(fh.fileno())


def read_table(path) -> Table:
    meta, config_lines, columns, rows = {}, [], None, []
    with open(path) as fh:
        for line in fh:
            line = line.rstrip("\n")
            if line.startswith("# config| "):
                config_lines.append(line[len("# config| "):])
            elif line.startswith("# config|"):
                config_lines.append("")
            elif line.startswith("# columns: "):
                columns = line[len("# columns: "):].split(",")
            elif line.startswith("# "):
                key, _, value = line[2:].partition(": ")
                meta[key] = value
            elif line.strip():
                rows.append([float(v) for v in line.split(",")])
    if columns is None:
        raise ValueError(f"{path}: no columns header")
    data = np.array(rows, dtype=float).reshape(-1, len(columns))
    text = "\n".join(config_lines) + ("\n" if config_lines else "")
    return Table(columns, data, meta, text)


def write_sidecar(path, **info) -> None:
    with open(str(path) + ".timing.json", "w") as fh:
        json.dump(info, fh, indent=2, sort_keys=True)
