"""CSV and aligned-text table emission.

CSV is the canonical, stable format; the aligned text rendering is for
humans and carries no stability guarantee.
"""

from __future__ import annotations

import csv
from pathlib import Path


def write_csv(path, header: list[str], rows: list[list]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow(row)


def format_aligned(header: list[str], rows: list[list]) -> str:
    cells = [[str(c) for c in row] for row in [header, *rows]]
    widths = [max(len(row[i]) for row in cells) for i in range(len(header))]
    lines = []
    for j, row in enumerate(cells):
        lines.append("  ".join(c.ljust(w) for c, w in zip(row, widths)).rstrip())
        if j == 0:
            lines.append("  ".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"


def write_table(path_stem, header: list[str], rows: list[list]) -> None:
    """Emit both <stem>.csv and <stem>.txt."""
    stem = Path(path_stem)
    write_csv(stem.with_suffix(".csv"), header, rows)
    stem.parent.mkdir(parents=True, exist_ok=True)
    stem.with_suffix(".txt").write_text(format_aligned(header, rows))
