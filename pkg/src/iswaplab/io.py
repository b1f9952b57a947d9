"""Deterministic data-file writers: CSV with 9-significant-digit floats,
sorted-key JSON, and gnuplot-style sidecar legends."""

from __future__ import annotations

import json
import os


def format_value(v) -> str:
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, int):
        return str(v)
    if isinstance(v, float):
        return f"{v:.9g}"
    return str(v)


def write_csv(path, header, rows) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(format_value(v) for v in row) + "\n")


def write_meta(path, description: str, columns) -> None:
    """Sidecar legend: one `# column N: name -- meaning` line per column."""
    with open(path, "w", newline="\n") as fh:
        fh.write(f"# {description}\n")
        for i, (name, meaning) in enumerate(columns, start=1):
            fh.write(f"# column {i}: {name} -- {meaning}\n")


def write_json(path, obj) -> None:
    with open(path, "w", newline="\n") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def ensure_dir(path) -> str:
    os.makedirs(path, exist_ok=True)
    return path
