"""CSV readers and writers for landmark series, scalar signals and segment lists.

Formats (UTF-8, ``.`` decimal point, 0-based frames):

* landmarks: ``frame,x0,y0,x1,y1,...`` one row per frame
* signal:    ``frame,value``
* segments:  ``start_frame,end_frame`` half-open intervals
"""

from __future__ import annotations

import csv
import math
from pathlib import Path
from typing import Optional, Union

import numpy as np

from .errors import EmptyInputError, ParseError, ValidationError
from .types import FeatureSignal, FrameSeries, Parsing

PathLike = Union[str, Path]

SEGMENTS_HEADER = ["start_frame", "end_frame"]
SIGNAL_HEADER = ["frame", "value"]


def fmt(x: float) -> str:
    """Fixed 9-significant-digit formatting used by every numeric writer."""
    if float(x).is_integer() and abs(x) < 1e15:
        return str(int(x))
    return f"{x:.9g}"


def _rows(path: PathLike):
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        rows = [(n, row) for n, row in enumerate(csv.reader(fh), start=1)
                if row and not row[0].startswith("#")]
    if not rows:
        raise EmptyInputError(f"{path}: file is empty")
    return path, rows


def _number(cell: str, path, line: int) -> float:
    try:
        v = float(cell)
    except ValueError:
        raise ParseError(f"non-numeric value {cell!r}", line, path) from None
    if not math.isfinite(v):
        raise ParseError(f"non-finite value {cell!r}", line, path)
    return v


def sniff_kind(path: PathLike) -> str:
    """Return ``"landmarks"`` or ``"signal"`` from the CSV header."""
    path, rows = _rows(path)
    header = [h.strip() for h in rows[0][1]]
    if header == SIGNAL_HEADER:
        return "signal"
    if len(header) >= 5 and header[0] == "frame" and header[1:3] == ["x0", "y0"]:
        return "landmarks"
    raise ParseError(f"unrecognized header {','.join(header)!r}", rows[0][0], path)


def load_frame_series(path: PathLike, fps: float) -> FrameSeries:
    path, rows = _rows(path)
    header_line, header = rows[0]
    header = [h.strip() for h in header]
    ncol = len(header)
    if header[0] != "frame" or ncol < 5 or ncol % 2 != 1:
        raise ParseError("header must be frame,x0,y0,...,x{L-1},y{L-1}", header_line, path)
    n_lm = (ncol - 1) // 2
    expected = ["frame"] + [f"{c}{k}" for k in range(n_lm) for c in "xy"]
    if header != expected:
        raise ParseError("header must be frame,x0,y0,...,x{L-1},y{L-1}", header_line, path)
    if len(rows) == 1:
        raise EmptyInputError(f"{path}: no frames")
    coords = np.empty((len(rows) - 1, n_lm, 2))
    for k, (line, row) in enumerate(rows[1:]):
        if len(row) != ncol:
            raise ParseError(f"expected {ncol} columns ({n_lm} landmark pairs), got {len(row)}", line, path)
        _number(row[0], path, line)
        coords[k] = np.array([_number(c, path, line) for c in row[1:]]).reshape(n_lm, 2)
    return FrameSeries(fps, coords)


def write_frame_series(series: FrameSeries, path: PathLike) -> None:
    n_lm = series.n_landmarks
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["frame"] + [f"{c}{k}" for k in range(n_lm) for c in "xy"])
        for i, lm in enumerate(series.coords):
            # repr() round-trips float64 exactly
            w.writerow([i] + [repr(float(v)) for v in lm.ravel()])


def load_signal(path: PathLike, fps: float, label: str = "signal") -> FeatureSignal:
    path, rows = _rows(path)
    header_line, header = rows[0]
    if [h.strip() for h in header] != SIGNAL_HEADER:
        raise ParseError("header must be frame,value", header_line, path)
    if len(rows) == 1:
        raise EmptyInputError(f"{path}: no samples")
    values = []
    for line, row in rows[1:]:
        if len(row) != 2:
            raise ParseError(f"expected 2 columns, got {len(row)}", line, path)
        _number(row[0], path, line)
        values.append(_number(row[1], path, line))
    return FeatureSignal(fps, np.array(values), label)


def write_signal(signal: FeatureSignal, path: PathLike) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SIGNAL_HEADER)
        for i, v in enumerate(signal.values):
            w.writerow([i, fmt(v)])


def load_parsing(path: PathLike, n_frames: Optional[int] = None, source: str = "manual") -> Parsing:
    """Read a segments CSV; rows may be in any order.

    Without ``n_frames`` the parsing is sized to the last segment end.
    Reversed or overlapping rows raise a ValidationError naming the rows.
    """
    path, rows = _rows(path)
    header_line, header = rows[0]
    if [h.strip() for h in header] != SEGMENTS_HEADER:
        raise ParseError("header must be start_frame,end_frame", header_line, path)
    pairs = []
    bad = []
    for line, row in rows[1:]:
        if len(row) != 2:
            raise ParseError(f"expected 2 columns, got {len(row)}", line, path)
        a, b = (_number(c, path, line) for c in row)
        if a != int(a) or b != int(b):
            raise ParseError("segment bounds must be integers", line, path)
        a, b = int(a), int(b)
        if not 0 <= a < b:
            bad.append(f"line {line}: reversed or empty segment ({a}, {b})")
        pairs.append((a, b, line))
    pairs.sort()
    for (a0, b0, l0), (a1, b1, l1) in zip(pairs, pairs[1:]):
        if a1 < b0:
            bad.append(f"lines {l0} and {l1}: overlapping segments ({a0}, {b0}) and ({a1}, {b1})")
    if bad:
        raise ValidationError(f"{path}: " + "; ".join(bad))
    last = max((b for _, b, _ in pairs), default=0)
    if n_frames is None:
        n_frames = last
    elif last > n_frames:
        raise ValidationError(f"{path}: segment end {last} exceeds frame count {n_frames}")
    return Parsing.from_pairs([(a, b) for a, b, _ in pairs], n_frames, source)


def write_parsing(parsing: Parsing, path: PathLike) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SEGMENTS_HEADER)
        for seg in parsing.segments:
            w.writerow([seg.start, seg.end])
