"""Deterministic report files: CSV tables and key/value structured text, 12 significant digits."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

DIGITS = 12


class ReportError(OSError):
    """The output directory cannot be created or written."""


def fmt(x):
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        if x == 0:
            return "0"  # no "-0"
        return f"{x:.{DIGITS}g}"
    if isinstance(x, (list, tuple, np.ndarray)):
        return " ".join(fmt(v) for v in x)
    return str(x)


@dataclass
class Table:
    columns: list
    rows: list = field(default_factory=list)

    def add(self, *values):
        if len(values) != len(self.columns):
            raise ValueError(f"row has {len(values)} values for {len(self.columns)} columns")
        self.rows.append(values)

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.columns)
        for r in self.rows:
            w.writerow([fmt(v) for v in r])
        return buf.getvalue()


def structured_text(sections):
    """``[section]`` headers followed by ``key: value`` lines, in insertion order."""
    lines = []
    for name, items in sections.items():
        if lines:
            lines.append("")
        lines.append(f"[{name}]")
        for k, v in items.items():
            lines.append(f"{k}: {fmt(v)}")
    return "\n".join(lines) + "\n"


@dataclass
class Report:
    """Everything one run writes: tables as CSV, sections as structured text, extra files verbatim."""

    seed: int
    tables: dict = field(default_factory=dict)
    text: dict = field(default_factory=dict)  # file name -> {section: {key: value}}
    files: dict = field(default_factory=dict)  # relative path -> str
    failures: list = field(default_factory=list)

    def table(self, name, columns):
        t = Table(list(columns) + ["seed"])
        self.tables[name] = t
        return t

    def row(self, name, *values):
        self.tables[name].add(*values, self.seed)


def emit_report(report, out_dir):
    """Write every artifact of ``report`` under ``out_dir``; returns the written paths."""
    out = Path(out_dir)
    payload = {f"{name}.csv": t.to_csv() for name, t in report.tables.items()}
    for name, sections in report.text.items():
        payload[f"{name}.txt"] = structured_text(sections)
    payload.update(report.files)
    written = []
    try:
        out.mkdir(parents=True, exist_ok=True)
        for rel, content in sorted(payload.items()):
            path = out / rel
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_text(content)
            written.append(path)
    except OSError as err:
        raise ReportError(f"cannot write to {out}: {err}") from err
    return written
