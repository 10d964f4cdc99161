"""Deterministic report documents emitted as JSON, CSV or Markdown."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field

FORMATS = ("json", "csv", "markdown")


def _fmt(value) -> str:
    if isinstance(value, bool):
        return str(value).lower()
    if isinstance(value, float):
        return format(value, ".4g")
    return str(value)


@dataclass
class Section:
    title: str
    kind: str  # "table" | "key_values"
    columns: list[str] = field(default_factory=list)
    rows: list[list] = field(default_factory=list)
    items: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in ("table", "key_values"):
            raise ValueError(f"unknown section kind {self.kind!r}")
        if self.kind == "table":
            for row in self.rows:
                if len(row) != len(self.columns):
                    raise ValueError(f"ragged row in section {self.title!r}")


@dataclass
class ReportDocument:
    sections: list[Section] = field(default_factory=list)

    def add_table(self, title: str, columns: list[str], rows: list[list]) -> None:
        self.sections.append(Section(title=title, kind="table", columns=columns, rows=rows))

    def add_key_values(self, title: str, items: dict) -> None:
        self.sections.append(Section(title=title, kind="key_values", items=items))

    def to_obj(self) -> dict:
        out = []
        for s in self.sections:
            if s.kind == "table":
                out.append(
                    {"title": s.title, "kind": s.kind, "columns": s.columns, "rows": s.rows}
                )
            else:
                out.append({"title": s.title, "kind": s.kind, "items": s.items})
        return {"sections": out}

    @classmethod
    def from_obj(cls, obj: dict) -> "ReportDocument":
        doc = cls()
        for s in obj["sections"]:
            if s["kind"] == "table":
                doc.add_table(s["title"], s["columns"], s["rows"])
            else:
                doc.add_key_values(s["title"], s["items"])
        return doc

    def render(self, fmt: str) -> str:
        if fmt == "json":
            return json.dumps(self.to_obj(), ensure_ascii=False, sort_keys=True, indent=1) + "\n"
        if fmt == "csv":
            return self._render_csv()
        if fmt == "markdown":
            return self._render_markdown()
        raise ValueError(f"unknown format {fmt!r}")

    def _render_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\r\n")
        for s in self.sections:
            writer.writerow([s.title])
            if s.kind == "table":
                writer.writerow(s.columns)
                for row in s.rows:
                    writer.writerow([_fmt(v) for v in row])
            else:
                for key in sorted(s.items):
                    writer.writerow([key, _fmt(s.items[key])])
            writer.writerow([])
        return buf.getvalue()

    def _render_markdown(self) -> str:
        lines = []
        for s in self.sections:
            lines.append(f"## {s.title}")
            lines.append("")
            if s.kind == "table":
                lines.append("| " + " | ".join(s.columns) + " |")
                lines.append("|" + "|".join([" --- "] * len(s.columns)) + "|")
                for row in s.rows:
                    lines.append("| " + " | ".join(_fmt(v) for v in row) + " |")
            else:
                lines.append("| key | value |")
                lines.append("| --- | --- |")
                for key in sorted(s.items):
                    lines.append(f"| {key} | {_fmt(s.items[key])} |")
            lines.append("")
        return "\n".join(lines)


def emit_report(doc: ReportDocument, path: str, fmt: str) -> None:
    if fmt not in FORMATS:
        raise ValueError(f"unknown format {fmt!r}")
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(doc.render(fmt))
