"""Comparison charts rendered next to delimited reports.

Row-access totals span orders of magnitude across kinds, so the rows
chart uses a symlog axis (zero stays plottable: the replica-backed kinds
report zero source rows).
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

from .costs import ComparisonTable  # noqa: E402

BAR_WIDTH = 0.38


def render_comparison_figures(table: ComparisonTable, out_prefix: Path) -> list[Path]:
    """Write ``<prefix>_rows.png`` and ``<prefix>_space.png``; returns the
    paths written."""
    out_prefix = Path(out_prefix)
    kinds = [report.kind.value for report in table.reports]
    positions = range(len(kinds))
    written = []

    fig, ax = plt.subplots(figsize=(7, 4))
    ax.bar([p - BAR_WIDTH / 2 for p in positions],
           [r.rows_warehouse for r in table.reports],
           width=BAR_WIDTH, label="warehouse", color="#4472a8")
    ax.bar([p + BAR_WIDTH / 2 for p in positions],
           [r.rows_source for r in table.reports],
           width=BAR_WIDTH, label="source", color="#d08642")
    ax.set_xticks(list(positions))
    ax.set_xticklabels(kinds)
    ax.set_ylabel("rows accessed")
    ax.set_yscale("symlog", linthresh=1)
    ax.set_title("Rows accessed per maintenance strategy")
    ax.legend()
    ax.grid(axis="y", alpha=0.3)
    fig.tight_layout()
    rows_path = out_prefix.parent / f"{out_prefix.name}_rows.png"
    fig.savefig(rows_path, dpi=120)
    plt.close(fig)
    written.append(rows_path)

    fig, ax = plt.subplots(figsize=(7, 4))
    ax.bar(list(positions), [r.space_bytes for r in table.reports],
           width=0.55, color="#5b8a5b")
    ax.set_xticks(list(positions))
    ax.set_xticklabels(kinds)
    ax.set_ylabel("warehouse bytes")
    ax.set_title("Warehouse space per maintenance strategy")
    ax.grid(axis="y", alpha=0.3)
    fig.tight_layout()
    space_path = out_prefix.parent / f"{out_prefix.name}_space.png"
    fig.savefig(space_path, dpi=120)
    plt.close(fig)
    written.append(space_path)
    return written
