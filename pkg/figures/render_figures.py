#!/usr/bin/env python3
"""Render the publication figures from a completed simulation run directory.

Reads the harness CSV outputs (training log and sweep tables) and produces
one image per manifest entry. Inputs are never modified; output filenames
are fixed by the manifest, so reruns are deterministic.

Usage:
    python3 figures/render_figures.py --run-dir runs/desk --out figures/out
    python3 figures/render_figures.py --only cost_vs_bandwidth ...
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import dataclass
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

DEFAULT_MANIFEST = Path(__file__).parent / "manifest.json"


class FigureError(Exception):
    """Input file or column problems; reported cleanly, exit code 2."""


@dataclass
class FigureSpec:
    name: str
    input: str          # CSV filename inside the run directory
    x: str
    y: list             # one or more value columns
    group_by: str | None = None
    xlabel: str = ""
    ylabel: str = ""
    title: str = ""
    out: str = ""       # output filename; defaults to <name>.png

    @classmethod
    def from_dict(cls, doc: dict) -> "FigureSpec":
        y = doc["y"] if isinstance(doc["y"], list) else [doc["y"]]
        return cls(name=doc["name"], input=doc["input"], x=doc["x"], y=y,
                   group_by=doc.get("group_by"), xlabel=doc.get("xlabel", doc["x"]),
                   ylabel=doc.get("ylabel", y[0]), title=doc.get("title", ""),
                   out=doc.get("out", doc["name"] + ".png"))


def read_table(path: Path):
    """Parse a harness CSV: '#' provenance comments, then header, then rows."""
    if not path.exists():
        raise FigureError(f"input file not found: {path}")
    with open(path, newline="") as f:
        plain = (line for line in f if not line.startswith("#"))
        reader = csv.reader(plain)
        try:
            header = next(reader)
        except StopIteration:
            raise FigureError(f"{path} has no header row") from None
        rows = [dict(zip(header, row)) for row in reader]
    return header, rows


def require_columns(header, needed, path):
    missing = [c for c in needed if c not in header]
    if missing:
        raise FigureError(f"{path} is missing column(s) {missing}; has {header}")


def series_from_rows(rows, spec: FigureSpec):
    """Build {label: (xs, ys)} per y column and group, averaging repeats."""
    series = {}
    for ycol in spec.y:
        groups = {}
        for row in rows:
            key = row[spec.group_by] if spec.group_by else ""
            groups.setdefault(key, {}).setdefault(float(row[spec.x]), []).append(
                float(row[ycol]))
        for key, bucket in groups.items():
            label = " ".join(part for part in (key, ycol if len(spec.y) > 1 else "")
                             if part) or ycol
            xs = sorted(bucket)
            ys = [sum(bucket[x]) / len(bucket[x]) for x in xs]
            series[label] = (xs, ys)
    return series


def render(spec: FigureSpec, run_dir: Path, out_dir: Path) -> Path:
    path = run_dir / spec.input
    header, rows = read_table(path)
    needed = [spec.x, *spec.y] + ([spec.group_by] if spec.group_by else [])
    require_columns(header, needed, path)
    if not rows:
        raise FigureError(f"{path} has a header but no data rows")

    series = series_from_rows(rows, spec)
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    for label, (xs, ys) in sorted(series.items()):
        marker = "o" if len(xs) <= 30 else None
        ax.plot(xs, ys, marker=marker, markersize=4, label=label)
    ax.set_xlabel(spec.xlabel)
    ax.set_ylabel(spec.ylabel)
    if spec.title:
        ax.set_title(spec.title)
    if len(series) > 1:
        ax.legend()
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    out_dir.mkdir(parents=True, exist_ok=True)
    out_path = out_dir / spec.out
    fig.savefig(out_path, dpi=150)
    plt.close(fig)
    return out_path


def load_manifest(path: Path):
    docs = json.loads(path.read_text())
    return [FigureSpec.from_dict(d) for d in docs]


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--run-dir", required=True, type=Path,
                        help="directory holding the harness CSV outputs")
    parser.add_argument("--out", required=True, type=Path,
                        help="directory for the rendered images")
    parser.add_argument("--manifest", type=Path, default=DEFAULT_MANIFEST)
    parser.add_argument("--only", default=None,
                        help="render just the named figure")
    args = parser.parse_args(argv)

    specs = load_manifest(args.manifest)
    if args.only is not None:
        specs = [s for s in specs if s.name == args.only]
        if not specs:
            print(f"error: no manifest entry named {args.only!r}", file=sys.stderr)
            return 2

    failures = 0
    for spec in specs:
        try:
            out_path = render(spec, args.run_dir, args.out)
            print(f"wrote {out_path}")
        except FigureError as exc:
            print(f"error: {spec.name}: {exc}", file=sys.stderr)
            failures += 1
    return 2 if failures else 0


if __name__ == "__main__":
    sys.exit(main())
