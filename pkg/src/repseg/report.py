"""Report emission: SVG timeline, per-repetition IoU table and matplotlib figures."""

from __future__ import annotations

import csv
from pathlib import Path
from typing import Optional, Sequence
from xml.sax.saxutils import escape

import numpy as np

from .evaluation import match_and_score, per_repetition_iou
from .io import fmt
from .types import Parsing

LANE_HEIGHT = 24
LANE_GAP = 8
LABEL_WIDTH = 120
PLOT_WIDTH = 800
COLORS = ("#4c72b0", "#dd8452", "#55a868", "#c44e52", "#8172b3", "#937860")


def timeline_svg(lanes: Sequence[tuple[str, Parsing]]) -> str:
    """One fixed-height lane per parsing, one rect per segment.

    Box height is constant; only horizontal extent carries information.
    """
    if not lanes:
        raise ValueError("need at least one lane")
    n_frames = max(p.n_frames for _, p in lanes)
    scale = PLOT_WIDTH / max(n_frames, 1)
    height = len(lanes) * (LANE_HEIGHT + LANE_GAP) + LANE_GAP + 20
    width = LABEL_WIDTH + PLOT_WIDTH + 10
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
           f'viewBox="0 0 {width} {height}">']
    for k, (name, parsing) in enumerate(lanes):
        y = LANE_GAP + k * (LANE_HEIGHT + LANE_GAP)
        color = COLORS[k % len(COLORS)]
        out.append(f'<g class="lane" data-source="{escape(name, {chr(34): "&quot;"})}">')
        out.append(f'<text x="4" y="{y + LANE_HEIGHT * 0.7:g}" font-size="12">{escape(name)}</text>')
        for seg in parsing.segments:
            x = LABEL_WIDTH + seg.start * scale
            w = len(seg) * scale
            out.append(f'<rect x="{fmt(x)}" y="{y}" width="{fmt(w)}" height="{LANE_HEIGHT}" '
                       f'fill="{color}" fill-opacity="0.6" stroke="black" stroke-width="0.5" '
                       f'data-start="{seg.start}" data-end="{seg.end}"/>')
        out.append("</g>")
    axis_y = height - 14
    out.append(f'<line x1="{LABEL_WIDTH}" y1="{axis_y}" x2="{LABEL_WIDTH + PLOT_WIDTH}" '
               f'y2="{axis_y}" stroke="black"/>')
    out.append(f'<text x="{LABEL_WIDTH}" y="{height - 2}" font-size="10">0</text>')
    out.append(f'<text x="{LABEL_WIDTH + PLOT_WIDTH - 40}" y="{height - 2}" '
               f'font-size="10">{n_frames} frames</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def write_per_repetition_csv(rows, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["source", "repetition", "mean_iou", "ci95", "count"])
        for source, k, mean, ci, count in rows:
            w.writerow([source, k, fmt(mean), fmt(ci), count])


def _figures(out_dir: Path, gt: Parsing, preds, rep_rows, fps: Optional[float]) -> list[Path]:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    written = []
    lanes = [("ground truth", gt)] + list(preds)
    fig, ax = plt.subplots(figsize=(10, 0.6 * len(lanes) + 1))
    for k, (name, parsing) in enumerate(lanes):
        ax.broken_barh([(s.start, len(s)) for s in parsing.segments], (k - 0.4, 0.8),
                       facecolors=COLORS[k % len(COLORS)], edgecolors="black", alpha=0.6)
    ax.set_yticks(range(len(lanes)), [name for name, _ in lanes])
    ax.set_xlim(0, gt.n_frames)
    ax.set_xlabel("frame")
    ax.invert_yaxis()
    fig.tight_layout()
    written.append(out_dir / "timeline.png")
    fig.savefig(written[-1], dpi=100)
    plt.close(fig)

    fig, ax = plt.subplots(figsize=(7, 4))
    for k, (name, _) in enumerate(preds):
        sel = [r for r in rep_rows if r[0] == name]
        if sel:
            idx = np.array([r[1] for r in sel]) + 0.1 * (k - (len(preds) - 1) / 2)
            ax.errorbar(idx, [r[2] for r in sel], yerr=[r[3] for r in sel], fmt="o",
                        capsize=3, label=name, color=COLORS[(k + 1) % len(COLORS)])
    ax.set_xlabel("repetition")
    ax.set_ylabel("IoU")
    ax.set_ylim(0, 1.05)
    ax.legend()
    fig.tight_layout()
    written.append(out_dir / "per_repetition_iou.png")
    fig.savefig(written[-1], dpi=100)
    plt.close(fig)

    if fps:
        fig, ax = plt.subplots(figsize=(7, 4))
        data = [p.durations(fps) for _, p in lanes]
        ax.boxplot(data)
        ax.set_xticks(range(1, len(lanes) + 1), [name for name, _ in lanes])
        ax.set_ylabel("duration (s)")
        fig.tight_layout()
        written.append(out_dir / "durations.png")
        fig.savefig(written[-1], dpi=100)
        plt.close(fig)
    return written


def write_report(out_dir, gt: Parsing, preds: Sequence[tuple[str, Parsing]],
                 fps: Optional[float] = None, figures: bool = True) -> dict:
    """Write timeline.svg, per_repetition.csv and (optionally) PNG figures.

    Returns a map from output kind to path.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    lanes = [("ground truth", gt)] + list(preds)
    svg_path = out_dir / "timeline.svg"
    svg_path.write_text(timeline_svg(lanes))
    rows = []
    for name, pred in preds:
        for k, mean, ci, count in per_repetition_iou([match_and_score(pred, gt)]):
            rows.append((name, k, mean, ci, count))
    csv_path = out_dir / "per_repetition.csv"
    write_per_repetition_csv(rows, csv_path)
    outputs = {"svg": str(svg_path), "per_repetition_csv": str(csv_path)}
    if figures:
        for path in _figures(out_dir, gt, list(preds), rows, fps):
            outputs[path.stem + "_png"] = str(path)
    return outputs
