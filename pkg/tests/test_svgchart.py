"""Tests for the deterministic SVG line-chart emitter."""

import xml.etree.ElementTree as ET

import pytest

from uavfl.svgchart import emit_svg_chart


def test_chart_is_wellformed_and_carries_labels(tmp_path):
    path = tmp_path / "c.svg"
    text = emit_svg_chart(
        [
            ("alpha", [1.0, 2.0, 3.0], [0.1, 0.5, 0.9]),
            ("beta", [1.0, 2.0, 3.0], [0.3, 0.2, 0.4]),
        ],
        "round",
        "accuracy",
        path,
        title="demo",
    )
    assert path.read_text(encoding="utf-8") == text
    root = ET.fromstring(text)
    assert root.tag.endswith("svg")
    assert "alpha" in text and "beta" in text
    assert "round" in text and "accuracy" in text and "demo" in text
    assert text.count("<polyline") == 2


def test_chart_bytes_are_deterministic(tmp_path):
    series = [("s", [0.0, 1.0], [2.0, 3.0])]
    a = emit_svg_chart(series, "x", "y", tmp_path / "a.svg")
    b = emit_svg_chart(series, "x", "y", tmp_path / "b.svg")
    assert a == b
    assert (tmp_path / "a.svg").read_bytes() == (tmp_path / "b.svg").read_bytes()


def test_chart_handles_flat_series(tmp_path):
    # constant y values force the tick logic through its degenerate range path
    text = emit_svg_chart([("flat", [0.0, 1.0, 2.0], [5.0, 5.0, 5.0])], "x", "y", tmp_path / "f.svg")
    ET.fromstring(text)


def test_chart_rejects_empty_input(tmp_path):
    with pytest.raises(ValueError):
        emit_svg_chart([], "x", "y", tmp_path / "x.svg")
    with pytest.raises(ValueError):
        emit_svg_chart([("s", [], [])], "x", "y", tmp_path / "y.svg")
    with pytest.raises(ValueError):
        emit_svg_chart([("s", [1.0, 2.0], [1.0])], "x", "y", tmp_path / "z.svg")
