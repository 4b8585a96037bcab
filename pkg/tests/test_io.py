import numpy as np
import pytest

from repseg.errors import EmptyInputError, ParseError, ValidationError
from repseg.io import (fmt, load_frame_series, load_parsing, load_signal, sniff_kind,
                       write_frame_series, write_parsing, write_signal)
from repseg.types import FeatureSignal, FrameSeries, Parsing

from conftest import make_series


def test_frame_series_round_trip_is_exact(tmp_path):
    series = make_series(n=17, n_lm=5)
    path = tmp_path / "lm.csv"
    write_frame_series(series, path)
    back = load_frame_series(path, series.fps)
    assert np.array_equal(back.coords, series.coords)
    assert sniff_kind(path) == "landmarks"


def test_signal_round_trip(tmp_path):
    sig = FeatureSignal(30.0, np.array([0.0, 1.5, -2.25, 1e-7]))
    path = tmp_path / "s.csv"
    write_signal(sig, path)
    assert sniff_kind(path) == "signal"
    assert np.allclose(load_signal(path, 30.0).values, sig.values, rtol=1e-8)


def test_parsing_round_trip(tmp_path):
    p = Parsing.from_pairs([(0, 10), (10, 25), (30, 40)], 50)
    write_parsing(p, tmp_path / "seg.csv")
    back = load_parsing(tmp_path / "seg.csv", 50)
    assert back.segments == p.segments and back.n_frames == 50


def test_column_mismatch_reports_line(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("frame,x0,y0,x1,y1\n0,1,2,3,4\n1,1,2,3\n")
    with pytest.raises(ParseError) as exc:
        load_frame_series(path, 25)
    assert exc.value.line == 3
    assert ":3:" in str(exc.value)


def test_non_finite_coordinates_rejected(tmp_path):
    path = tmp_path / "nan.csv"
    path.write_text("frame,x0,y0,x1,y1\n0,1,2,3,4\n1,1,nan,3,4\n")
    with pytest.raises(ParseError):
        load_frame_series(path, 25)


def test_bad_header_and_empty_file(tmp_path):
    (tmp_path / "h.csv").write_text("frame,x,y\n0,1,2\n")
    with pytest.raises(ParseError):
        load_frame_series(tmp_path / "h.csv", 25)
    (tmp_path / "e.csv").write_text("")
    with pytest.raises(EmptyInputError):
        load_frame_series(tmp_path / "e.csv", 25)
    (tmp_path / "only.csv").write_text("frame,value\n")
    with pytest.raises(EmptyInputError):
        load_signal(tmp_path / "only.csv", 25)


def test_segments_sorted_and_validated(tmp_path):
    path = tmp_path / "seg.csv"
    path.write_text("start_frame,end_frame\n20,30\n0,10\n")
    assert [(s.start, s.end) for s in load_parsing(path)] == [(0, 10), (20, 30)]
    path.write_text("start_frame,end_frame\n0,10\n5,12\n15,14\n")
    with pytest.raises(ValidationError) as exc:
        load_parsing(path)
    msg = str(exc.value)
    assert "line 4" in msg and "lines 2 and 3" in msg
    path.write_text("start_frame,end_frame\n0,60\n")
    with pytest.raises(ValidationError):
        load_parsing(path, n_frames=50)


def test_fmt_nine_significant_digits():
    assert fmt(3) == "3"
    assert fmt(2.0) == "2"
    assert fmt(1 / 3) == "0.333333333"
    assert fmt(1.83e-4) == "0.000183"
