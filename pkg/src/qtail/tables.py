"""Delimiter-separated table emission shared by reports and the CLI.

Tables are tab-separated with one header row; optional metadata rides in
leading ``# key = value`` comment lines so a table stays a single text file.
"""

from __future__ import annotations

from pathlib import Path


def format_cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_table(path, header, rows, metadata: dict | None = None,
                append: bool = False) -> None:
    path = Path(path)
    mode = "a" if append and path.exists() else "w"
    with open(path, mode, encoding="utf-8") as fh:
        if mode == "w":
            for key, value in (metadata or {}).items():
                fh.write(f"# {key} = {format_cell(value)}\n")
            fh.write("\t".join(header) + "\n")
        for row in rows:
            fh.write("\t".join(format_cell(v) for v in row) + "\n")


def read_table(path):
    """Returns (header, rows-of-strings, metadata)."""
    metadata, header, rows = {}, None, []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.rstrip("\n")
            if not line:
                continue
            if line.startswith("#"):
                key, _, value = line[1:].partition("=")
                metadata[key.strip()] = value.strip()
            elif header is None:
                header = line.split("\t")
            else:
                rows.append(line.split("\t"))
    return header, rows, metadata
