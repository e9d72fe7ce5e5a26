"""Report container with human-readable and machine-readable renderings.

The machine format is line-delimited JSON: a header line carrying the schema
version, the command, and the configuration echo, followed by one line per
row tagged with its section.  It round-trips through `parse_report`.  The
human format is a fixed-width table rendering of the same rows with numbers
shown to six significant digits.  Both renderings are deterministic: key
order is fixed and floats use repr-based JSON encoding.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

SCHEMA = "ceasurv/1"

__all__ = ["Report", "emit_report", "parse_report", "SCHEMA"]


@dataclass
class Report:
    command: str
    config: dict
    sections: list[tuple[str, list[dict]]] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)

    def add(self, name: str, rows: list[dict]) -> None:
        self.sections.append((name, rows))


def _fmt(value) -> str:
    if isinstance(value, float):
        return format(value, ".6g")
    if value is None:
        return "-"
    return str(value)


def _human(report: Report) -> str:
    out = [f"# ceasurv report ({report.command})"]
    if report.config:
        out.append("config: " + json.dumps(report.config, sort_keys=True))
    for name, rows in report.sections:
        out.append("")
        out.append(f"== {name} ==")
        if not rows:
            out.append("(empty)")
            continue
        cols = list(rows[0].keys())
        table = [[_fmt(r.get(c)) for c in cols] for r in rows]
        widths = [max(len(c), *(len(t[i]) for t in table))
                  for i, c in enumerate(cols)]
        out.append("  ".join(c.ljust(w) for c, w in zip(cols, widths)))
        for t in table:
            out.append("  ".join(v.ljust(w) for v, w in zip(t, widths)))
    if report.warnings:
        out.append("")
        out.append("== warnings ==")
        out.extend(f"- {w}" for w in report.warnings)
    return "\n".join(out) + "\n"


def _jsonl(report: Report) -> str:
    lines = [json.dumps({"schema": SCHEMA, "command": report.command,
                         "config": report.config}, sort_keys=True)]
    for name, rows in report.sections:
        for row in rows:
            lines.append(json.dumps({"section": name, **row}, sort_keys=True))
    for w in report.warnings:
        lines.append(json.dumps({"section": "warnings", "message": w},
                                sort_keys=True))
    return "\n".join(lines) + "\n"


def emit_report(report: Report, fmt: str = "table") -> str:
    if fmt == "table":
        return _human(report)
    if fmt == "jsonl":
        return _jsonl(report)
    raise ValueError(f"unknown report format {fmt!r}")


def parse_report(text: str) -> Report:
    """Parse the machine-readable rendering back into a Report."""
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise ValueError("empty report")
    header = json.loads(lines[0])
    if header.get("schema") != SCHEMA:
        raise ValueError(f"unsupported schema {header.get('schema')!r}")
    report = Report(command=header["command"], config=header["config"])
    current: dict[str, list[dict]] = {}
    order: list[str] = []
    for ln in lines[1:]:
        row = json.loads(ln)
        section = row.pop("section")
        if section == "warnings":
            report.warnings.append(row["message"])
            continue
        if section not in current:
            current[section] = []
            order.append(section)
        current[section].append(row)
    for name in order:
        report.add(name, current[name])
    return report
