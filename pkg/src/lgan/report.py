"""Report files: per-slice TSV with an aggregate footer, per-scan 3D Dice, text tables."""
from __future__ import annotations

import os
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import LganError
from .metrics import MetricReport, Summary, fmt

REPORT_NAME = "report.tsv"
DICE_NAME = "dice3d.tsv"
TABLE_NAME = "table.txt"

_HEADER = ("scan_id", "slice_index", "iou", "dice", "hausdorff")


def _num(x: float | None) -> str:
    return "n/a" if x is None else repr(float(x))


def _parse(s: str) -> float | None:
    return None if s in ("n/a", "flagged") else float(s)


def write_report(path: str | os.PathLike, report: MetricReport) -> None:
    lines = ["\t".join(_HEADER)]
    for r in report.per_slice:
        hd = "flagged" if r.hausdorff is None else repr(r.hausdorff)
        lines.append(f"{r.scan_id}\t{r.slice_index}\t{r.iou!r}\t{r.dice!r}\t{hd}")
    a = report.aggregates
    for stat in ("mean", "median"):
        vals = [getattr(a[m], stat) for m in ("iou", "dice", "hausdorff")]
        lines.append("#\t" + stat + "\t" + "\t".join(_num(v) for v in vals))
    lines.append(f"#\tcount\t{a['iou'].count}\t{a['dice'].count}\t{a['hausdorff'].count}")
    lines.append(f"#\thausdorff_flagged\t{report.hausdorff_flagged}")
    Path(path).write_text("\n".join(lines) + "\n")


def read_aggregates(path: str | os.PathLike) -> dict[str, Summary]:
    """Recover mean/median per metric from a report footer."""
    stats: dict[str, list] = {}
    for line in Path(path).read_text().splitlines():
        fields = line.split("\t")
        if fields[0] == "#" and fields[1] in ("mean", "median", "count"):
            stats[fields[1]] = fields[2:5]
    if set(stats) != {"mean", "median", "count"}:
        raise LganError(f"{path}: missing aggregate footer")
    return {
        m: Summary(_parse(stats["mean"][i]), _parse(stats["median"][i]), int(stats["count"][i]))
        for i, m in enumerate(("iou", "dice", "hausdorff"))
    }


def write_dice3d(path: str | os.PathLike, report: MetricReport) -> None:
    lines = ["scan_id\tdice_3d"]
    lines += [f"{s}\t{d!r}" for s, d in report.per_scan_dice_3d]
    vals = np.array([d for _, d in report.per_scan_dice_3d])
    if vals.size:
        lines.append(f"#\tmean\t{vals.mean()!r}")
        lines.append(f"#\tstd\t{vals.std()!r}")
        lines.append(f"#\tmedian\t{float(np.median(vals))!r}")
    Path(path).write_text("\n".join(lines) + "\n")


def format_table(rows: Sequence[tuple[str, dict[str, Summary]]]) -> str:
    """Model x {Mean, Median} x {IOU, Hausdorff}."""
    name_w = max([len("Model")] + [len(n) for n, _ in rows])
    cell = 9
    sep = "+" + "-" * (name_w + 2) + ("+" + "-" * (cell + 2)) * 4 + "+"
    group = f"| {'':<{name_w}} | {'Mean':^{2 * cell + 3}} | {'Median':^{2 * cell + 3}} |"
    head = f"| {'Model':<{name_w}} |" + "".join(f" {h:>{cell}} |" for h in ("IOU", "Hausdorff") * 2)
    out = [sep, group, head, sep]
    for name, a in rows:
        vals = (a["iou"].mean, a["hausdorff"].mean, a["iou"].median, a["hausdorff"].median)
        out.append(f"| {name:<{name_w}} |" + "".join(f" {fmt(v):>{cell}} |" for v in vals))
    out.append(sep)
    return "\n".join(out) + "\n"


def format_dice_table(rows: Sequence[tuple[str, Sequence[float]]]) -> str:
    """Model x {Mean (+/- std), Median} of per-scan 3D Dice."""
    name_w = max([len("Model")] + [len(n) for n, _ in rows])
    out = [f"{'Model':<{name_w}}  {'Mean':>16}  {'Median':>8}"]
    for name, vals in rows:
        v = np.asarray(vals, dtype=np.float64)
        mean = f"{v.mean():.4f}+/-{v.std():.4f}" if v.size else "n/a"
        med = f"{np.median(v):.4f}" if v.size else "n/a"
        out.append(f"{name:<{name_w}}  {mean:>16}  {med:>8}")
    return "\n".join(out) + "\n"


def write_eval_outputs(out_dir: str | os.PathLike, report: MetricReport, model: str) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_report(out / REPORT_NAME, report)
    write_dice3d(out / DICE_NAME, report)
    table = format_table([(model, report.aggregates)])
    table += "\n" + format_dice_table([(model, [d for _, d in report.per_scan_dice_3d])])
    (out / TABLE_NAME).write_text(table)
