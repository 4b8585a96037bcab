import csv
import xml.etree.ElementTree as ET

import pytest

from repseg.report import LANE_HEIGHT, timeline_svg, write_report
from repseg.types import Parsing

SVG = "{http://www.w3.org/2000/svg}"


def lanes_of(svg_text):
    root = ET.fromstring(svg_text)
    return [(g.get("data-source"), g.findall(f"{SVG}rect")) for g in root.iter(f"{SVG}g")]


def test_one_lane_per_source_and_one_box_per_segment():
    gt = Parsing.from_pairs([(0, 10), (10, 30), (40, 55)], 60)
    pred = Parsing.from_pairs([(2, 12), (12, 28)], 60)
    lanes = lanes_of(timeline_svg([("gt", gt), ("tsm", pred), ("empty", Parsing((), 60))]))
    assert [name for name, _ in lanes] == ["gt", "tsm", "empty"]
    assert [len(rects) for _, rects in lanes] == [3, 2, 0]
    heights = {r.get("height") for _, rects in lanes for r in rects}
    assert heights == {str(LANE_HEIGHT)}
    first = lanes[0][1][1]
    assert (first.get("data-start"), first.get("data-end")) == ("10", "30")


def test_identical_parsings_give_identical_lanes():
    p = Parsing.from_pairs([(5, 20), (20, 33)], 40)
    (_, a), (_, b) = lanes_of(timeline_svg([("x", p), ("y", p)]))
    strip = lambda rects: [(r.get("x"), r.get("width")) for r in rects]
    assert strip(a) == strip(b)


def test_names_are_escaped():
    p = Parsing.from_pairs([(0, 5)], 10)
    lanes = lanes_of(timeline_svg([('a<b&"c"', p)]))
    assert lanes[0][0] == 'a<b&"c"'


def test_write_report(tmp_path):
    gt = Parsing.from_pairs([(0, 10), (10, 20), (20, 30)], 30)
    pred = Parsing.from_pairs([(0, 10), (10, 20)], 30)
    out = write_report(tmp_path, gt, [("a", pred), ("b", gt)], fps=10.0)
    with open(out["per_repetition_csv"]) as fh:
        rows = list(csv.DictReader(fh))
    assert [(r["source"], r["repetition"], r["mean_iou"]) for r in rows] == [
        ("a", "1", "1"), ("a", "2", "1"), ("a", "3", "0"),
        ("b", "1", "1"), ("b", "2", "1"), ("b", "3", "1")]
    assert len(lanes_of(open(out["svg"]).read())) == 3
    assert {"timeline_png", "per_repetition_iou_png", "durations_png"} <= set(out)
    out2 = write_report(tmp_path / "nofig", gt, [("a", pred)], figures=False)
    assert set(out2) == {"svg", "per_repetition_csv"}


def test_timeline_needs_lanes():
    with pytest.raises(ValueError):
        timeline_svg([])
